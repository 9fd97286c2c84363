"""Command-line entry point.

Exit codes: 0 success, 1 user error (bad flags, bad input files), 2 internal
invariant failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .config import TrainConfig
from .pipeline.features import GROUP_NAMES

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2
CLEAN_NAME = "clean.csv"
RAW_NAME = "raw.csv"
META_NAME = "normalization.txt"
CHECKPOINT_NAME = "checkpoint.txt"
CONFIG_NAME = "config.txt"
LOG_NAME = "loss_log.csv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value config file (applied after defaults)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="config override applied after the file; repeatable")
    p.add_argument("--seed", type=int, help="seed for every random choice of the run")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", type=Path, default=Path("data"),
                   help=f"cleaned CSV, or a directory holding {CLEAN_NAME} (default: data)")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--folds", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hydranet", description="Tennis momentum model: data, training, evaluation.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="clean, impute, and normalize a raw point-by-point CSV")
    p.add_argument("--raw", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="cleaned CSV path")
    p.add_argument("--meta", type=Path, help=f"normalization metadata path (default: next to --out as {META_NAME})")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus (raw and cleaned)")
    p.add_argument("--matches", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("data"))
    p.add_argument("--carryover", type=float, default=0.8)
    p.add_argument("--point-signal", type=float, default=1.0)
    p.add_argument("--zero-group", action="append", default=[], choices=GROUP_NAMES)

    p = sub.add_parser("train", help="train on the training split; writes checkpoint and loss log")
    _add_config_flags(p)
    _add_data_flags(p)
    p.add_argument("--out", type=Path, default=Path("run"))

    p = sub.add_parser("eval", help="score a trained run on the test split, or cross-validate")
    _add_data_flags(p)
    p.add_argument("--run", type=Path, default=Path("run"), help=f"directory with {CHECKPOINT_NAME} and {CONFIG_NAME}")
    p.add_argument("--cv", action="store_true", help="retrain and score every fold instead")
    p.add_argument("--out", type=Path, help="metrics JSON path (default: RUN/metrics.json)")

    p = sub.add_parser("ablate", help="retrain every fold without one modality and compare")
    _add_config_flags(p)
    _add_data_flags(p)
    p.add_argument("--modality", required=True)
    p.add_argument("--out", type=Path, default=Path("ablation.json"))

    p = sub.add_parser("trace", help="export the Momentum Score trace of one match")
    _add_data_flags(p)
    p.add_argument("--run", type=Path, default=Path("run"))
    p.add_argument("--match", help="match_id (default: first test-split match)")
    p.add_argument("--out", type=Path, default=Path("trace.csv"))

    p = sub.add_parser("gradcheck", help="finite-difference check of every operation and the full loss")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("selftest", help="oracle-equivalence and state-space duality suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=100)
    return parser


# ------------------------------------------------------------------ helpers


def _load_config(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "config", None):
        cfg = TrainConfig.read(args.config, cfg)
    pairs = {}
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    cfg = TrainConfig.parse_overrides(pairs, cfg)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _load_matches(path: Path):
    from .pipeline import build_match_sequences, load_clean_csv

    csv_path = path / CLEAN_NAME if path.is_dir() else path
    if not csv_path.exists():
        raise FileNotFoundError(f"no cleaned data at {csv_path}")
    return build_match_sequences(load_clean_csv(csv_path))


def _split(matches, args, seed: int):
    from .pipeline import split_dataset

    return split_dataset(matches, args.test_fraction, args.folds, seed)


def _load_run(run: Path):
    from .model import HydraNet
    from .optim import load_checkpoint

    cfg = TrainConfig.read(run / CONFIG_NAME)
    template = HydraNet(cfg).params
    return HydraNet(cfg, load_checkpoint(run / CHECKPOINT_NAME, template))


# ---------------------------------------------------------------- commands


def cmd_ingest(args) -> int:
    from .pipeline import ingest

    meta = args.meta or args.out.parent / META_NAME
    args.out.parent.mkdir(parents=True, exist_ok=True)
    records, _ = ingest(args.raw, args.out, meta, args.seed)
    print(f"wrote {len(records)} points to {args.out} and metadata to {meta}")
    return EXIT_OK


def cmd_synth(args) -> int:
    import csv

    from .pipeline import COLUMNS, SignalConfig, generate_synthetic_rows, ingest

    plant = SignalConfig(point_signal=args.point_signal, carryover=args.carryover, zero_groups=tuple(args.zero_group))
    rows = generate_synthetic_rows(args.matches, args.seed, plant)
    args.out.mkdir(parents=True, exist_ok=True)
    raw = args.out / RAW_NAME
    with open(raw, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    records, _ = ingest(raw, args.out / CLEAN_NAME, args.out / META_NAME, args.seed)
    print(f"wrote {args.matches} matches ({len(records)} points) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .optim import save_checkpoint
    from .training import train

    cfg = _load_config(args)
    matches = _load_matches(args.data)
    split = _split(matches, args, cfg.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    result = train(matches, cfg, ids=split.train, log_path=args.out / LOG_NAME)
    save_checkpoint(result.params, args.out / CHECKPOINT_NAME)
    cfg.write(args.out / CONFIG_NAME)
    means = ", ".join(f"{v:.4f}" for v in result.epoch_means())
    print(f"trained on {len(split.train)} matches; epoch mean loss: [{means}]")
    print(f"checkpoint: {args.out / CHECKPOINT_NAME}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import MetricReport, cross_validate, evaluate_model

    matches = _load_matches(args.data)
    out = args.out or args.run / "metrics.json"
    if args.cv:
        cfg = TrainConfig.read(args.run / CONFIG_NAME) if (args.run / CONFIG_NAME).exists() else TrainConfig()
        report = cross_validate(matches, _split(matches, args, cfg.seed), cfg)
    else:
        model = _load_run(args.run)
        split = _split(matches, args, model.config.seed)
        by_id = {m.match_id: m for m in matches}
        report = MetricReport([evaluate_model(model, [by_id[i] for i in split.test])],
                              {"split": "test", "seed": model.config.seed})
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write(out)
    for g, metrics in report.summary().items():
        print(g, " ".join(f"{m}={v['mean']:.4f}" for m, v in metrics.items()))
    print(f"metrics: {out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .evaluation import run_mlmm_ablation

    if args.modality not in GROUP_NAMES:
        raise UsageError(f"unknown modality {args.modality!r}; choose from {', '.join(GROUP_NAMES)}")
    cfg = _load_config(args)
    matches = _load_matches(args.data)
    report = run_mlmm_ablation(matches, _split(matches, args, cfg.seed), cfg, args.modality)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(report.to_json(), encoding="utf-8")
    for g, r in report.combined.items():
        print(f"{g}: fisher statistic {r.statistic:.4f}, combined p {r.p_value:.4g}")
    print(f"report: {args.out}")
    return EXIT_OK


def cmd_trace(args) -> int:
    from .evaluation import export_ms_trace

    model = _load_run(args.run)
    matches = _load_matches(args.data)
    by_id = {m.match_id: m for m in matches}
    if args.match is None:
        match_id = _split(matches, args, model.config.seed).test[0]
    elif args.match in by_id:
        match_id = args.match
    else:
        raise UsageError(f"unknown match {args.match!r}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    trace = export_ms_trace(by_id[match_id], model, args.out)
    print(f"{match_id}: {len(trace.rows)} points, {len(trace.streaks)} streaks -> {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .checks import gradient_suite

    results = gradient_suite(args.seed)
    width = max(len(k) for k in results)
    for name, err in results.items():
        print(f"{name:<{width}}  {err:.3e}  {'ok' if err <= args.tol else 'FAIL'}")
    worst = max(results.values())
    print(f"max relative error {worst:.3e} (tolerance {args.tol:g})")
    return EXIT_OK if worst <= args.tol else EXIT_INTERNAL


def cmd_selftest(args) -> int:
    from .checks import duality_suite, oracle_suite

    oracle = oracle_suite(args.cases, args.seed)
    duality = duality_suite(max(1, args.cases // 2), args.seed)
    ok_o, ok_d = oracle < 1e-9, duality < 1e-8
    print(f"oracle equivalence: max |diff| {oracle:.3e} {'ok' if ok_o else 'FAIL'}")
    print(f"state-space duality: max |diff| {duality:.3e} {'ok' if ok_d else 'FAIL'}")
    return EXIT_OK if ok_o and ok_d else EXIT_INTERNAL


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "trace": cmd_trace,
    "gradcheck": cmd_gradcheck,
    "selftest": cmd_selftest,
}


def run_cli(argv: Sequence[str] | None = None) -> int:
    from .pipeline.schema import ConfigError, DataError, RowError, SchemaError
    from .tensor import ContractError, DegenerateRowError, DomainError, ShapeError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("hydranet: error: a subcommand is required", file=sys.stderr)
            return EXIT_USER
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USER
    except (ConfigError, SchemaError, RowError, DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"hydranet: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (ContractError, ShapeError, DomainError, DegenerateRowError, FloatingPointError, AssertionError) as exc:
        print(f"hydranet: internal invariant failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as exc:
        print(f"hydranet: error: {exc}", file=sys.stderr)
        return EXIT_USER


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
