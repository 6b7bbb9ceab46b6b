"""Closed-form token cost of the three generation regimes.

All quantities are word-equivalents in units of one fresh input word. With
input length ``l_input``, requested length ``l_request``, average sentence
length ``l_sentence``, output/input price ratio ``k`` and cached/fresh price
ratio ``c``, and ``n = l_request / l_sentence``::

    single  = l_input + k * l_request
    multi   = n * (l_input + k/2 * (l_sentence + l_request))
    binary  = (1 + c*(log2 n - 1)) * single - k * l_request * c * H(log2 n - 1)
    bound   = (1 + c*log2 n) * single

with the halving sum ``H(m) = sum_{i=1}^{m} 2**-i = 1 - 2**-m``. The closed form
of ``H`` is used for real ``m`` too, so costs stay continuous and increasing
when ``n`` is not a power of two.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

from .backend import TokenLedger, billed_cost, uncached_cost
from .backend.simulator import SimulatorProfile


@dataclass(frozen=True)
class CostParams:
    l_input: float
    l_request: float
    l_sentence: float
    k: float = 1.0
    c: float = 0.1

    def __post_init__(self) -> None:
        if self.l_input < 0:
            raise ValueError("l_input must be non-negative")
        if self.l_sentence < 1:
            raise ValueError("l_sentence must be >= 1")
        if self.l_request < self.l_sentence:
            raise ValueError("l_request must be >= l_sentence")
        if self.k <= 0:
            raise ValueError("k must be positive")
        if not 0 < self.c < 1:
            raise ValueError("c must lie in (0, 1)")

    @property
    def n(self) -> float:
        return self.l_request / self.l_sentence

    @property
    def log_n(self) -> float:
        return math.log2(self.n)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CostBreakdown:
    single_round: float
    multi_round: float
    binary_search: float
    bound: float


def cost_single(p: CostParams) -> float:
    return p.l_input + p.k * p.l_request


def cost_multi(p: CostParams) -> float:
    return p.n * (p.l_input + p.k / 2 * (p.l_sentence + p.l_request))


def halving_sum(m: float) -> float:
    """``sum_{i=1}^{m} 2**-i`` in closed form, extended to real ``m >= 0``."""
    return 1.0 - 2.0 ** -m


def cost_binary(p: CostParams) -> float:
    log_n = p.log_n
    if log_n < 1:
        return cost_single(p)
    return (1 + p.c * (log_n - 1)) * cost_single(p) - p.k * p.l_request * p.c * halving_sum(log_n - 1)


def cost_bound(p: CostParams) -> float:
    """Upper bound on the binary-search cost: ``(1 + c log2 n) * single``."""
    return (1 + p.c * p.log_n) * cost_single(p)


def breakdown(p: CostParams) -> CostBreakdown:
    return CostBreakdown(cost_single(p), cost_multi(p), cost_binary(p), cost_bound(p))


@dataclass(frozen=True)
class Envelope:
    c_log_n: float
    under_two: bool


def envelope_check(p: CostParams) -> Envelope:
    """``c * log2 n`` and whether binary search costs under twice single-round."""
    return Envelope(p.c * p.log_n, cost_binary(p) < 2 * cost_single(p))


# -- measured vs closed form ---------------------------------------------------

CLOSED_FORMS = {
    "single_round": cost_single,
    "multi_round": cost_multi,
    "binary_search": cost_binary,
}


@dataclass(frozen=True)
class CostComparison:
    strategy: str
    closed_form: float
    measured: float | None
    relative_error: float | None
    mismatch: str | None = None


def measured_cost(strategy: str, ledger: TokenLedger, p: CostParams) -> float:
    """Bill a session ledger the way the closed form for ``strategy`` does.

    Only task words count. Single- and multi-round pay full price for every
    input word; binary search bills cache hits at ``c``.
    """
    view = ledger.payload()
    if strategy == "binary_search":
        return billed_cost(view, p.k, p.c)
    if strategy in ("single_round", "multi_round"):
        return uncached_cost(view, p.k)
    raise ValueError(f"unknown strategy {strategy!r}")


def compare_measured(
    ledgers: Mapping[str, TokenLedger],
    params: CostParams,
    profile: SimulatorProfile | None = None,
) -> list[CostComparison]:
    """Relative error of measured session costs against the closed forms.

    A simulator profile that does not match the closed-form assumptions
    (exact compliance, sentence length ``l_sentence``) is reported as a
    mismatch instead of being compared.
    """
    mismatch = None
    if profile is not None:
        problems = []
        if profile.compliance != "exact":
            problems.append(f"compliance={profile.compliance}")
        if profile.sentence_words != params.l_sentence:
            problems.append(f"sentence_words={profile.sentence_words} != l_sentence={params.l_sentence:g}")
        mismatch = "; ".join(problems) or None

    rows = []
    for strategy, ledger in ledgers.items():
        closed = CLOSED_FORMS[strategy](params)
        if mismatch:
            rows.append(CostComparison(strategy, closed, None, None, mismatch))
            continue
        measured = measured_cost(strategy, ledger, params)
        rows.append(CostComparison(strategy, closed, measured, abs(measured - closed) / closed))
    return rows
