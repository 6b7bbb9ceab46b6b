import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lengthctl.backend import SimulatorProfile, TokenLedger
from lengthctl.cost_model import (
    CostParams,
    breakdown,
    compare_measured,
    cost_binary,
    cost_bound,
    cost_multi,
    cost_single,
    envelope_check,
)


def multi_by_rounds(p):
    """Oracle: round i pays the input plus k times the i sentences so far."""
    n = int(round(p.l_request / p.l_sentence))
    return sum(p.l_input + p.k * i * p.l_sentence for i in range(1, n + 1))


def binary_term_by_term(p):
    """Oracle: expanded per-round form, valid when n is a power of two."""
    log_n = int(round(math.log2(p.l_request / p.l_sentence)))
    inputs = p.l_input + sum(p.c * p.l_input for _ in range(log_n - 1))
    carried = sum(p.c * p.l_request * (1 - 0.5**i) for i in range(1, log_n))
    return inputs + p.k * (p.l_request + carried)


@pytest.mark.parametrize(
    "l_input, l_request, k, expected",
    [(1000, 250, 2, 1500), (0, 100, 1, 100), (1000, 10000, 1, 11000)],
)
def test_cost_single(l_input, l_request, k, expected):
    assert cost_single(CostParams(l_input, l_request, 1, k)) == expected


def test_cost_multi_examples():
    assert cost_multi(CostParams(100, 50, 10, 1)) == pytest.approx(650)
    p = CostParams(100, 40, 40, 1)
    assert cost_multi(p) == cost_single(p) == 140
    p = CostParams(1000, 10000, 20, 1)
    assert multi_by_rounds(p) == 3_005_000
    assert cost_multi(p) == pytest.approx(3_005_000, rel=1e-12)


@pytest.mark.parametrize("k", [0.5, 1, 2, 3.7])
@pytest.mark.parametrize("n", [1, 3, 8, 50])
def test_cost_multi_matches_round_sum(k, n):
    p = CostParams(321, 17 * n, 17, k)
    assert cost_multi(p) == pytest.approx(multi_by_rounds(p), rel=1e-12)


def test_cost_binary_examples():
    p = CostParams(100, 256, 16, 1, 0.5)
    assert binary_term_by_term(p) == pytest.approx(778)
    assert cost_binary(p) == pytest.approx(778, rel=1e-12)

    p = CostParams(100, 64, 32, 1.5, 0.3)  # n = 2, empty halving sum
    assert cost_binary(p) == pytest.approx(cost_single(p))


def test_cost_binary_degenerate_below_two_rounds():
    p = CostParams(100, 30, 20, 1, 0.5)
    assert cost_binary(p) == cost_single(p)


def test_cost_binary_non_power_of_two_is_continuous():
    base = dict(l_input=500, l_sentence=20, k=1.0, c=0.2)
    below = cost_binary(CostParams(l_request=20 * 16 * (1 - 1e-12), **base))
    at = cost_binary(CostParams(l_request=20 * 16, **base))
    assert below == pytest.approx(at, rel=1e-6)


def test_envelope_reference_point():
    env = envelope_check(CostParams(1000, 10000, 20, 1, 0.1))
    assert 0.886 <= env.c_log_n <= 0.906
    assert env.under_two


def test_envelope_two_sentences():
    assert envelope_check(CostParams(1000, 40, 20, 1, 0.1)).c_log_n == pytest.approx(0.1)


def test_envelope_large_c():
    p = CostParams(1000, 10000, 20, 1, 0.99)
    env = envelope_check(p)
    assert env.c_log_n == pytest.approx(0.99 * math.log2(500))
    assert env.c_log_n == pytest.approx(8.876, abs=1e-3)
    # direct evaluation of the factored expression with an independent sum
    log_n = math.log2(500)
    single = 1000 + 10000
    direct = (1 + 0.99 * (log_n - 1)) * single - 10000 * 0.99 * sum(0.5**i for i in range(1, 8))
    assert env.under_two == (direct < 2 * single)
    assert env.under_two is False


@pytest.mark.parametrize(
    "kwargs",
    [dict(c=1.0), dict(c=0.0), dict(c=1.5), dict(k=0), dict(l_sentence=0.5), dict(l_request=5), dict(l_input=-1)],
)
def test_invalid_params(kwargs):
    base = dict(l_input=100, l_request=100, l_sentence=10, k=1, c=0.1)
    with pytest.raises(ValueError):
        CostParams(**{**base, **kwargs})


valid_params = st.builds(
    CostParams,
    l_input=st.floats(0, 1e5),
    l_request=st.floats(10, 1e5),
    l_sentence=st.floats(1, 10),
    k=st.floats(0.01, 10),
    c=st.floats(0.001, 0.999),
)


@given(valid_params, st.floats(1.01, 3))
def test_costs_increase_with_request_and_input(p, factor):
    more_request = CostParams(p.l_input, p.l_request * factor, p.l_sentence, p.k, p.c)
    more_input = CostParams(p.l_input * factor + 1, p.l_request, p.l_sentence, p.k, p.c)
    for fn in (cost_single, cost_multi, cost_binary):
        assert fn(more_request) > fn(p)
        assert fn(more_input) > fn(p)


@given(valid_params)
def test_binary_below_bound(p):
    if p.log_n >= 1:
        assert cost_binary(p) < cost_bound(p)


def test_bound_and_identity_on_random_draws():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        l_sentence = int(rng.integers(5, 51))
        p = CostParams(
            float(rng.uniform(10, 1e4)), l_sentence * 2 ** int(rng.integers(1, 13)), l_sentence,
            float(rng.uniform(1e-6, 4)), float(rng.uniform(1e-6, 1 - 1e-6)),
        )
        assert cost_binary(p) < cost_bound(p)
        assert cost_binary(p) == pytest.approx(binary_term_by_term(p), rel=1e-9)


def test_breakdown_fields():
    b = breakdown(CostParams(1000, 10000, 20, 1, 0.1))
    assert b.single_round == 11000
    assert b.binary_search < b.bound < 2 * b.single_round


def test_compare_measured_exact_match_and_mismatch():
    p = CostParams(1000, 250, 25, 2, 0.1)
    single = TokenLedger(payload_fresh_input_words=1000, payload_output_words=250)
    [row] = compare_measured({"single_round": single}, p, SimulatorProfile(sentence_words=25))
    assert row.measured == 1500 and row.relative_error == 0

    rows = compare_measured({"single_round": single}, p, SimulatorProfile(compliance="noisy", sentence_words=20))
    assert rows[0].measured is None and rows[0].relative_error is None
    assert "noisy" in rows[0].mismatch and "sentence_words" in rows[0].mismatch
