"""Command line entry point: ``hapens generate|run|evaluate|pareto|sweep-beta``.

Exit codes: 0 ok, 2 config error, 3 data error, 4 evaluation error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as exp
from .library import LibraryError, SyntheticConfig, generate_synthetic, write_library

EXIT_CONFIG, EXIT_DATA, EXIT_EVAL = 2, 3, 4


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common(p: argparse.ArgumentParser, library=True):
    if library:
        p.add_argument("--library", help="library directory")
    p.add_argument("--out", default=None, help="output directory (default: results)")
    p.add_argument("--seeds", type=_seeds, default=None, help="comma-separated seeds, e.g. 1,2,3")
    p.add_argument(
        "--cost-mode", default=None, choices=("time", "memory", "disk", "size", "aggregate")
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hapens", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic model library")
    g.add_argument("--models", type=int, default=10)
    g.add_argument("--val-samples", type=int, default=200)
    g.add_argument("--test-samples", type=int, default=200)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--error-correlation", type=float, default=0.3)
    g.add_argument("--cost-spread", type=float, default=3.0)
    g.add_argument("--skill-range", type=_floats, default=None, help="min,max skill")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="run methods over seeds and write run records")
    _common(r)
    r.add_argument("--config", help="JSON experiment config")
    r.add_argument(
        "--method", action="append", default=None, help=f"one of {', '.join(exp.METHODS)} (repeatable)"
    )
    r.add_argument("--iterations", type=int)
    r.add_argument("--beta", type=float)
    r.add_argument("--cost-metric", choices=("time", "memory", "disk", "size"))
    r.add_argument("--offspring", type=int)
    r.add_argument("--init-pop", type=int)
    r.add_argument("--pmac", type=float)
    r.add_argument("--seed", type=int, help="single seed (alternative to --seeds)")

    for name, help_ in (
        ("evaluate", "HV and IGD+ per method and seed -> evaluation.json"),
        ("pareto", "total/unique/Pareto ensemble counts -> pareto.csv"),
    ):
        e = sub.add_parser(name, help=help_)
        _common(e, library=False)
        e.add_argument("--records", help="record directory (default: OUT/records)")

    s = sub.add_parser("sweep-beta", help="Multi-GES over a grid of time weights -> sweep.json")
    _common(s)
    s.add_argument("--config", help="JSON experiment config")
    s.add_argument("--betas", type=_floats, default=[0.0, 0.25, 0.5, 0.68, 0.75, 1.0])
    s.add_argument("--iterations", type=int)
    return parser


def _method_entries(args) -> list[dict]:
    given = {
        "iterations": args.iterations,
        "beta": args.beta,
        "cost_metric": args.cost_metric,
        "offspring": args.offspring,
        "init_pop": args.init_pop,
        "pmac": args.pmac,
    }
    entries = []
    for name in args.method:
        allowed = exp._PARAMS.get(name, {})
        entries.append({"name": name, **{k: v for k, v in given.items() if v is not None and k in allowed}})
    return entries


def _experiment_config(args, default_methods=()) -> exp.ExperimentConfig:
    raw = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise exp.ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if args.library:
        raw["library"] = args.library
        raw.pop("synthetic", None)
    if args.out is not None or "out" not in raw:
        raw["out"] = args.out or "results"
    seeds = args.seeds
    if seeds is None and getattr(args, "seed", None) is not None:
        seeds = [args.seed]
    if seeds is not None:
        raw["seeds"] = seeds
    raw.setdefault("seeds", [0])
    if args.cost_mode:
        raw["cost_mode"] = args.cost_mode
    if getattr(args, "method", None):
        raw["methods"] = _method_entries(args)
    elif not raw.get("methods"):
        raw["methods"] = [{"name": m} for m in default_methods]
    if "library" not in raw and "synthetic" not in raw:
        raise exp.ConfigError("no library given: pass --library DIR or a config with 'library'/'synthetic'")
    return exp.ExperimentConfig.from_dict(raw)


def _records_dir(args) -> Path:
    return Path(args.records) if args.records else Path(args.out or "results") / "records"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        if args.command == "generate":
            kwargs = {}
            if args.skill_range:
                if len(args.skill_range) != 2:
                    raise exp.ConfigError("--skill-range takes exactly two numbers")
                kwargs["skill_range"] = tuple(args.skill_range)
            cfg = SyntheticConfig(
                p=args.models,
                n_val=args.val_samples,
                n_test=args.test_samples,
                K=args.classes,
                error_correlation=args.error_correlation,
                cost_spread=args.cost_spread,
                seed=args.seed,
                **kwargs,
            )
            try:
                cfg.check()
            except LibraryError as exc:
                raise exp.ConfigError(str(exc)) from exc
            lib = generate_synthetic(cfg)
            write_library(lib, args.out)
            print(f"wrote {lib.p} models to {args.out} (fingerprint {lib.fingerprint})")

        elif args.command == "run":
            config = _experiment_config(args)
            paths = exp.cmd_run(config)
            print(f"wrote {len(paths)} run records to {Path(config.out) / 'records'}")

        elif args.command in ("evaluate", "pareto"):
            cost_mode = args.cost_mode or "aggregate"
            try:
                records = exp.load_records(_records_dir(args))
                if args.command == "evaluate":
                    text = exp.dumps(exp.cmd_evaluate(records, cost_mode))
                    target = Path(args.out or "results") / "evaluation.json"
                else:
                    text = exp.cmd_pareto(records, cost_mode)
                    target = Path(args.out or "results") / "pareto.csv"
            except (KeyError, json.JSONDecodeError) as exc:
                raise exp.EvaluationError(f"malformed run record: {exc}") from exc
            exp.atomic_write(target, text)
            print(f"wrote {target}")

        elif args.command == "sweep-beta":
            config = _experiment_config(args, default_methods=["multi-ges"])
            report = exp.cmd_sweep_beta(config, args.betas, args.iterations)
            target = Path(config.out) / "sweep.json"
            exp.atomic_write(target, exp.dumps(report))
            print(f"wrote {target}")
    except exp.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LibraryError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except exp.EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
