"""Benchmark harness: corpus sampling, batch sessions, length statistics.

Per (strategy, word constraint) cell the report gives the mean output length
(AVG), ``|AVG - constraint|``, the population standard deviation (STD),
``STD / AVG`` and the mean number of backend calls. Reports are deterministic
for fixed seeds: sessions may run concurrently but are folded in
(strategy, constraint, document id) order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .backend import ChatBackend, SimulatedBackend, SimulatorProfile, TokenLedger, filler_text
from .core import ControlConfig, Strategy, count_words
from .cost_model import CostParams
from .reflector import run_session

log = logging.getLogger(__name__)

Scorer = Callable[[str, str], float]


class CorpusError(ValueError):
    pass


class InsufficientDocuments(ValueError):
    def __init__(self, available: int, requested: int, length_range: tuple[int, int]) -> None:
        super().__init__(
            f"only {available} documents with {length_range[0]}-{length_range[1]} words, "
            f"{requested} requested"
        )
        self.available = available
        self.requested = requested


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    source_words: int

    @classmethod
    def from_text(cls, doc_id: str, text: str) -> "Document":
        return cls(str(doc_id), text, count_words(text))


@dataclass
class Corpus:
    documents: list[Document]
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.documents)


def ingest(corpus_path: str | Path) -> Corpus:
    """Read a JSON-lines corpus of ``{"id": ..., "text": ...}`` records.

    Lines that are not JSON objects with a string ``text`` and an ``id`` are
    skipped and counted in ``Corpus.skipped``.
    """
    docs: list[Document] = []
    skipped = 0
    with open(corpus_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError:
                row = None
            if not isinstance(row, dict) or not isinstance(row.get("text"), str) or row.get("id") is None:
                skipped += 1
                log.warning("%s:%d: skipping malformed corpus line", corpus_path, lineno)
                continue
            docs.append(Document.from_text(row["id"], row["text"]))
    if not docs:
        raise CorpusError(f"{corpus_path}: no valid corpus lines")
    return Corpus(docs, skipped)


def write_corpus(rows: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps({"id": row["id"], "text": row["text"]}, ensure_ascii=False) + "\n")


def sample(
    corpus: Corpus,
    length_range: tuple[int, int],
    sample_size: int,
    seed: int,
) -> list[Document]:
    """Seeded uniform sample without replacement among in-range documents."""
    lo, hi = length_range
    if lo > hi:
        raise ValueError("length_range minimum exceeds maximum")
    eligible = [d for d in corpus.documents if lo <= d.source_words <= hi]
    if len(eligible) < sample_size:
        raise InsufficientDocuments(len(eligible), sample_size, (lo, hi))
    return random.Random(seed).sample(eligible, sample_size)


@dataclass(frozen=True)
class BenchConfig:
    corpus_path: str
    length_range: tuple[int, int]
    sample_size: int
    word_constraints: tuple[int, ...]
    strategies: tuple[Strategy, ...] = (Strategy.MULTI_ROUND, Strategy.BINARY_SEARCH)
    seed: int = 0
    deviation_fraction: float | None = None
    fallback_threshold: int = 30
    max_rounds: int = 64
    prompt_template_id: str = "v1"
    retries: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "length_range", tuple(self.length_range))
        object.__setattr__(self, "word_constraints", tuple(int(w) for w in self.word_constraints))
        object.__setattr__(self, "strategies", tuple(Strategy.parse(s) for s in self.strategies))
        if self.length_range[0] > self.length_range[1]:
            raise ValueError("length_range minimum exceeds maximum")
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        if not self.word_constraints or not self.strategies:
            raise ValueError("need at least one word constraint and one strategy")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        return cls(**data)

    def control(self, strategy: Strategy, constraint: int) -> ControlConfig:
        deviation = None
        if self.deviation_fraction is not None:
            deviation = int(self.deviation_fraction * constraint)
        return ControlConfig(
            strategy=strategy,
            requested_words=constraint,
            deviation=deviation,
            max_rounds=self.max_rounds,
            fallback_threshold=self.fallback_threshold,
            prompt_template_id=self.prompt_template_id,
            retries=self.retries,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["length_range"] = list(self.length_range)
        d["word_constraints"] = list(self.word_constraints)
        d["strategies"] = [s.value for s in self.strategies]
        return d


def load_bench_config(path: str | Path) -> BenchConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    cfg = BenchConfig.from_dict(data)
    corpus = Path(cfg.corpus_path)
    if not corpus.is_absolute():
        # corpus paths are relative to the config file
        cfg = BenchConfig.from_dict({**cfg.to_dict(), "corpus_path": str(Path(path).parent / corpus)})
    return cfg


@dataclass(frozen=True)
class SessionRow:
    strategy: str
    constraint: int
    doc_id: str
    final_words: int | None
    rounds: int | None
    terminated_by: str | None
    error: str | None = None
    score: float | None = None
    ledger: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CellStats:
    strategy: str
    constraint: int
    sessions: int
    failures: int
    avg: float | None
    abs_delta: float | None
    std: float | None
    ratio: float | None
    mean_rounds: float | None


@dataclass
class BenchReport:
    config: dict
    cells: list[CellStats]
    rows: list[SessionRow]

    @property
    def failures(self) -> list[SessionRow]:
        return [r for r in self.rows if r.error is not None]

    def cell(self, strategy: str | Strategy, constraint: int) -> CellStats:
        key = Strategy.parse(strategy).value
        for c in self.cells:
            if c.strategy == key and c.constraint == constraint:
                return c
        raise KeyError((key, constraint))

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "cells": [asdict(c) for c in self.cells],
            "sessions": [asdict(r) for r in self.rows if r.error is None],
            "failures": [asdict(r) for r in self.failures],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def cells_csv(self) -> str:
        buf = io.StringIO()
        names = list(CellStats.__dataclass_fields__)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for c in self.cells:
            writer.writerow(["" if getattr(c, n) is None else getattr(c, n) for n in names])
        return buf.getvalue()

    def rounds_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["constraint", "strategy", "mean_rounds"])
        for c in sorted(self.cells, key=lambda c: (c.constraint, c.strategy)):
            writer.writerow([c.constraint, c.strategy, "" if c.mean_rounds is None else c.mean_rounds])
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "report.csv": out / "report.csv",
            "report.json": out / "report.json",
            "rounds.csv": out / "rounds.csv",
        }
        paths["report.csv"].write_text(self.cells_csv(), encoding="utf-8")
        paths["report.json"].write_text(self.to_json(), encoding="utf-8")
        paths["rounds.csv"].write_text(self.rounds_csv(), encoding="utf-8")
        return paths


def cell_stats(strategy: str, constraint: int, rows: Sequence[SessionRow]) -> CellStats:
    ok = [r for r in rows if r.error is None]
    failures = len(rows) - len(ok)
    if not ok:
        return CellStats(strategy, constraint, 0, failures, None, None, None, None, None)
    lengths = np.array([r.final_words for r in ok], dtype=float)
    avg = float(lengths.mean())
    std = float(lengths.std())  # population STD
    return CellStats(
        strategy=strategy,
        constraint=constraint,
        sessions=len(ok),
        failures=failures,
        avg=avg,
        abs_delta=abs(avg - constraint),
        std=std,
        ratio=std / avg if avg else None,
        mean_rounds=float(np.mean([r.rounds for r in ok])),
    )


def _run_one(
    config: BenchConfig,
    backend: ChatBackend,
    strategy: Strategy,
    constraint: int,
    doc: Document,
    scorer: Scorer | None,
) -> SessionRow:
    try:
        outcome = run_session(config.control(strategy, constraint), doc.text, backend.spawn())
    except Exception as exc:  # collected into the report, never raised mid-run
        log.warning("session %s/%d/%s failed: %s", strategy.value, constraint, doc.id, exc)
        return SessionRow(strategy.value, constraint, doc.id, None, None, None, error=f"{type(exc).__name__}: {exc}")
    score = scorer(doc.text, outcome.final_text) if scorer and outcome.ok else None
    return SessionRow(
        strategy=strategy.value,
        constraint=constraint,
        doc_id=doc.id,
        final_words=outcome.final_words,
        rounds=outcome.rounds,
        terminated_by=outcome.terminated_by,
        error=outcome.error,
        score=score,
        ledger=outcome.ledger.to_dict(),
    )


def run_bench(
    config: BenchConfig,
    backend: ChatBackend,
    *,
    documents: Sequence[Document] | None = None,
    scorer: Scorer | None = None,
) -> BenchReport:
    """Run every (strategy, constraint, document) session and aggregate.

    ``documents`` bypasses corpus ingestion and sampling. ``scorer`` is an
    optional external quality metric ``(source, summary) -> float`` recorded
    per session; none ships with the package.
    """
    if documents is None:
        documents = sample(ingest(config.corpus_path), config.length_range, config.sample_size, config.seed)
    docs = sorted(documents, key=lambda d: d.id)
    constraints = sorted(set(config.word_constraints))
    tasks = [(s, w, d) for s in config.strategies for w in constraints for d in docs]

    workers = max(1, int(getattr(backend, "max_concurrent", 1)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda t: _run_one(config, backend, *t, scorer), tasks))

    cells = []
    for s in config.strategies:
        for w in constraints:
            cell_rows = [r for r in rows if r.strategy == s.value and r.constraint == w]
            cells.append(cell_stats(s.value, w, cell_rows))
    return BenchReport(config.to_dict(), cells, rows)


# -- cost measurement ----------------------------------------------------------


def measure_regimes(
    params: CostParams,
    seed: int = 0,
    strategies: Sequence[Strategy] = tuple(Strategy),
) -> tuple[dict[str, TokenLedger], SimulatorProfile]:
    """Run one simulated session per strategy at a cost-model parameter point.

    The source document has exactly ``l_input`` words and the simulator writes
    ``l_sentence``-word sentences, matching the closed-form assumptions.
    """
    for name in ("l_input", "l_request", "l_sentence"):
        if getattr(params, name) != int(getattr(params, name)):
            raise ValueError(f"{name} must be a whole number of words to simulate")
    profile = SimulatorProfile(compliance="exact", sentence_words=int(params.l_sentence), seed=seed)
    document = filler_text(int(params.l_input), random.Random(seed))
    request = int(params.l_request)
    max_rounds = math.ceil(params.n) + 16
    ledgers = {}
    for strategy in strategies:
        control = ControlConfig(Strategy.parse(strategy), request, max_rounds=max_rounds)
        outcome = run_session(control, document, SimulatedBackend(profile))
        ledgers[control.strategy.value] = outcome.ledger
    return ledgers, profile
