"""
Rounds versus word constraint
=============================

A small benchmark sweep on a synthetic corpus. Trivial multi-round needs one
round per sentence, so its round count grows linearly with the constraint;
binary search grows roughly with its logarithm.
"""

import json
import tempfile
from pathlib import Path

from lengthctl.backend import SimulatedBackend, SimulatorProfile, synthetic_corpus
from lengthctl.bench import BenchConfig, run_bench

workdir = Path(tempfile.mkdtemp(prefix="lengthctl-demo-"))
corpus = workdir / "corpus.jsonl"
corpus.write_text("".join(json.dumps(d) + "\n" for d in synthetic_corpus(32, (1500, 2500), seed=2)))

config = BenchConfig(
    corpus_path=str(corpus),
    length_range=(1500, 2500),
    sample_size=16,
    word_constraints=(200, 400, 600, 800, 1000),
    strategies=("multi", "binary"),
    seed=3,
    deviation_fraction=0.05,
)
backend = SimulatedBackend(SimulatorProfile(compliance="noisy", noise_fraction=0.15, seed=1))
report = run_bench(config, backend)

print(f"{'constraint':>10} {'multi rounds':>13} {'binary rounds':>14} {'binary |delta|':>15} {'ratio':>7}")
for constraint in config.word_constraints:
    multi = report.cell("multi", constraint)
    binary = report.cell("binary", constraint)
    print(f"{constraint:>10} {multi.mean_rounds:>13.1f} {binary.mean_rounds:>14.1f} "
          f"{binary.abs_delta:>15.1f} {binary.ratio:>7.3f}")

paths = report.write(workdir / "report")
print("wrote", ", ".join(str(p) for p in paths.values()))
