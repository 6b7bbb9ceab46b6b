"""
What binary search costs
========================

Closed-form costs of single-round, trivial multi-round and binary-search
generation, then a check of the closed forms against token ledgers recorded
from simulated sessions.
"""

import numpy as np

from lengthctl.bench import measure_regimes
from lengthctl.cost_model import CostParams, breakdown, compare_measured, envelope_check

# a 1000-word input, a 10000-word request, 20-word sentences, cache at 10%
params = CostParams(l_input=1000, l_request=10000, l_sentence=20, k=1, c=0.1)
costs = breakdown(params)
print(f"n = {params.n:.0f}, log2 n = {params.log_n:.2f}")
for name, value in vars(costs).items():
    print(f"  {name:14s} {value:12.1f}  ({value / costs.single_round:6.2f}x single)")

# binary search stays under twice the single-round cost while c*log2 n < 1
env = envelope_check(params)
print(f"c*log2 n = {env.c_log_n:.3f}, under two = {env.under_two}")

# sweep the cache discount: where does the envelope break?
for c in np.linspace(0.05, 0.3, 6):
    env = envelope_check(CostParams(1000, 10000, 20, k=1, c=float(c)))
    print(f"  c={c:.2f}  c*log2 n={env.c_log_n:.3f}  under two={env.under_two}")

# the output/input price ratio weighs the carried output in binary search
for k in (0.5, 1, 2, 4):
    p = CostParams(1000, 10000, 20, k=k, c=0.1)
    b = breakdown(p)
    print(f"  k={k:<4} binary/single = {b.binary_search / b.single_round:.3f}")

# measured: one simulated session per regime, billed from its ledger (~2 s)
ledgers, profile = measure_regimes(params)
for row in compare_measured(ledgers, params, profile):
    print(f"  {row.strategy:14s} closed {row.closed_form:12.1f} measured {row.measured:12.1f} "
          f"error {row.relative_error:.3%}")
