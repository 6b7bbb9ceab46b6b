"""Command-line entry point: ``lengthctl run | bench | cost``.

Exit codes: 0 success, 2 configuration error, 3 backend error, 4 session
aborted on malformed replies, 5 session stopped by the round cap.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Sequence

from .backend import BackendConfig, BackendError, SimulatorProfile, build_backend, load_backend_config
from .bench import CorpusError, InsufficientDocuments, load_bench_config, measure_regimes, run_bench
from .core import ControlConfig, Strategy
from .cost_model import CostParams, breakdown, compare_measured, envelope_check
from .reflector import run_session

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_MALFORMED = 4
EXIT_ROUND_CAP = 5

log = logging.getLogger("lengthctl")


class ConfigError(Exception):
    pass


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("backend")
    g.add_argument("--backend", choices=["sim", "remote"], default="sim")
    g.add_argument("--backend-config", help="JSON backend config file")
    g.add_argument("--seed", type=int, default=None, help="simulator seed (bench: also the sampling seed)")
    g.add_argument("--compliance", choices=["exact", "noisy"])
    g.add_argument("--noise", type=float, help="simulator noise fraction")
    g.add_argument("--sentence-words", type=int)
    g.add_argument("--done-policy", help="never | after_n_rounds(N) | on_source_exhausted")


def _backend_config(args: argparse.Namespace) -> BackendConfig:
    try:
        cfg = load_backend_config(args.backend_config) if args.backend_config else BackendConfig()
    except FileNotFoundError as exc:
        raise ConfigError(f"backend config not found: {exc.filename}") from exc
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad backend config: {exc}") from exc
    if args.backend == "remote" and cfg.kind != "openai":
        if not args.backend_config:
            raise ConfigError("--backend remote needs --backend-config with kind 'openai'")
        raise ConfigError(f"backend config kind is {cfg.kind!r}, expected 'openai'")
    if args.backend == "sim":
        overrides = {
            "seed": args.seed,
            "compliance": args.compliance,
            "noise_fraction": args.noise,
            "sentence_words": args.sentence_words,
            "done_policy": args.done_policy,
        }
        overrides = {k: v for k, v in overrides.items() if v is not None}
        try:
            profile = replace(cfg.simulator, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        cfg = replace(cfg, kind="simulator", simulator=profile)
    return cfg


def _write_json(path: Path, data: object) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def cmd_run(args: argparse.Namespace) -> int:
    src = Path(args.input_file)
    if not src.is_file():
        raise ConfigError(f"input file not found: {src}")
    text = src.read_text(encoding="utf-8")
    try:
        control = ControlConfig(
            strategy=Strategy.parse(args.strategy),
            requested_words=args.words,
            deviation=args.delta,
            max_rounds=args.max_rounds,
            fallback_threshold=args.fallback,
            prompt_template_id=args.template_id,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    backend = build_backend(_backend_config(args))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        outcome = run_session(control, text, backend)
    except BackendError as err:
        if err.transcript is not None:
            _write_json(out / "transcript.json", err.transcript.to_list())
        (out / "final.txt").write_text((err.partial_text or "") + "\n", encoding="utf-8")
        raise

    (out / "final.txt").write_text(outcome.final_text + "\n", encoding="utf-8")
    _write_json(out / "transcript.json", outcome.transcript.to_list())
    _write_json(out / "ledger.json", outcome.ledger.to_dict())
    control_dict = asdict(control)
    control_dict["strategy"] = control.strategy.value
    _write_json(out / "outcome.json", {**outcome.to_dict(), "requested_words": args.words, "control": control_dict})
    print(f"{outcome.terminated_by}: {outcome.final_words} words in {outcome.rounds} rounds -> {out}")

    if outcome.error == "malformed_reply":
        return EXIT_MALFORMED
    if outcome.terminated_by == "round_cap":
        return EXIT_ROUND_CAP
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        config = load_bench_config(args.bench_config)
    except FileNotFoundError as exc:
        raise ConfigError(f"bench config not found: {exc.filename}") from exc
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad bench config: {exc}") from exc
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    backend = build_backend(_backend_config(args))
    try:
        report = run_bench(config, backend)
    except (FileNotFoundError, CorpusError, InsufficientDocuments) as exc:
        raise ConfigError(str(exc)) from exc
    paths = report.write(args.out)
    for c in report.cells:
        avg = "n/a" if c.avg is None else f"{c.avg:.1f}"
        print(f"{c.strategy:>14} {c.constraint:>6}  avg={avg}  failures={c.failures}  mean_rounds={c.mean_rounds}")
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


COST_COLUMNS = ["strategy", "l_input", "l_request", "l_sentence", "k", "c",
                "closed_form", "measured", "relative_error", "c_log_n", "under_two"]


def cost_table(params: CostParams, measure: bool = True, seed: int = 0) -> str:
    """CSV comparing closed-form costs with simulated sessions."""
    env = envelope_check(params)
    costs = breakdown(params)
    measured = {}
    if measure:
        ledgers, profile = measure_regimes(params, seed=seed)
        measured = {r.strategy: r for r in compare_measured(ledgers, params, profile)}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COST_COLUMNS)
    base = [params.l_input, params.l_request, params.l_sentence, params.k, params.c]
    for strategy, closed in (("single_round", costs.single_round), ("multi_round", costs.multi_round),
                             ("binary_search", costs.binary_search), ("bound", costs.bound)):
        row = measured.get(strategy)
        writer.writerow([
            strategy, *(f"{v:g}" for v in base), f"{closed:.6f}",
            "" if row is None or row.measured is None else f"{row.measured:.6f}",
            "" if row is None or row.relative_error is None else f"{row.relative_error:.6f}",
            f"{env.c_log_n:.6f}", str(env.under_two).lower(),
        ])
    return buf.getvalue()


def cmd_cost(args: argparse.Namespace) -> int:
    try:
        params = CostParams(args.l_input, args.l_request, args.l_sentence, args.k, args.c)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    whole = all(float(v).is_integer() for v in (params.l_input, params.l_request, params.l_sentence))
    table = cost_table(params, measure=whole and not args.no_measure, seed=args.seed)
    sys.stdout.write(table)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lengthctl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one length-controlled session on a text file")
    run.add_argument("input_file")
    run.add_argument("--strategy", default="binary",
                     help="single | multi | binary (or single_round, multi_round, binary_search)")
    run.add_argument("--words", type=int, required=True, help="requested output length in words")
    run.add_argument("--delta", type=int, default=None, help="deviation tolerance in words")
    run.add_argument("--fallback", type=int, default=30, help="binary-to-trivial fallback threshold")
    run.add_argument("--max-rounds", type=int, default=64)
    run.add_argument("--template-id", default="v1")
    run.add_argument("--out", default="lengthctl-run")
    _add_backend_flags(run)
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="run the benchmark described by a JSON config")
    bench.add_argument("bench_config")
    bench.add_argument("--out", default="lengthctl-bench")
    _add_backend_flags(bench)
    bench.set_defaults(func=cmd_bench)

    cost = sub.add_parser("cost", help="closed-form vs simulated token cost table")
    cost.add_argument("--l-input", type=float, required=True)
    cost.add_argument("--l-request", type=float, required=True)
    cost.add_argument("--l-sentence", type=float, required=True)
    cost.add_argument("-k", "--k", dest="k", type=float, default=1.0)
    cost.add_argument("-c", "--c", dest="c", type=float, default=0.1)
    cost.add_argument("--no-measure", action="store_true", help="skip the simulated measurement")
    cost.add_argument("--seed", type=int, default=0)
    cost.add_argument("--out", help="also write the CSV here")
    cost.set_defaults(func=cmd_cost)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"lengthctl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"lengthctl: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
