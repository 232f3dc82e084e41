"""Command-line entry point.

Exit codes: 0 success, 1 config error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import runner
from .config import ConfigError, ExperimentKind, resolve, tomli, validate
from .data import DataError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

DEMO_VARIANTS = {
    "single": {"experiment": "retrieve", "network": {"rule": "adaptive_single"}},
    "multilayer": {"experiment": "retrieve", "network": {"rule": "adaptive_multi", "hidden": 16}},
    "continuous": {"experiment": "continuous_demo"},
}

SHORTCUTS = {
    "capacity": ExperimentKind.CAPACITY,
    "scaling": ExperimentKind.SCALING,
    "faults": ExperimentKind.FAULTS,
    "cost": ExperimentKind.COST,
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memassoc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", type=Path, required=config_required, help="TOML experiment file")
        p.add_argument("--seed", type=int, help="override the global seed")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--threads", type=int, help="worker processes for sweeps")

    common(sub.add_parser("run", help="run the experiment a config file describes"), config_required=True)
    p = sub.add_parser("validate", help="check a config and print it fully resolved")
    p.add_argument("--config", type=Path, required=True)
    p = sub.add_parser("demo", help="store and retrieve a handful of digits")
    p.add_argument("--variant", choices=sorted(DEMO_VARIANTS), default="single")
    common(p)
    for name, kind in SHORTCUTS.items():
        common(sub.add_parser(name, help=f"{kind.value} experiment (defaults unless --config)"))
    return parser


def _read_config(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    validate(text)  # surfaces duplicate keys and syntax errors with names
    return tomli.loads(text)


def build_config(args) -> "runner.ExperimentConfig":
    raw: dict = {}
    if getattr(args, "config", None) is not None:
        raw = _read_config(args.config)
    if args.command == "demo":
        variant = DEMO_VARIANTS[args.variant]
        raw.setdefault("experiment", variant["experiment"])
        for section, table in variant.items():
            if isinstance(table, dict):
                for k, v in table.items():
                    raw.setdefault(section, {}).setdefault(k, v)
    elif args.command in SHORTCUTS:
        kind = SHORTCUTS[args.command].value
        if raw.get("experiment", kind) != kind:
            raise ConfigError([f"config describes a '{raw['experiment']}' experiment, not '{kind}'"])
        raw["experiment"] = kind
    raw.setdefault("dataset", {}).setdefault("source", "mnist")
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["output"] = str(args.out)
    if args.threads is not None:
        raw["threads"] = args.threads
    return resolve(raw)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            cfg = validate(args.config.read_text()) if args.config.exists() else None
            if cfg is None:
                raise ConfigError([f"cannot read {args.config}"])
            print(cfg.to_json())
            return EXIT_OK
        cfg = build_config(args)
        out = runner.run(cfg)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - reported, mapped to an exit code
        logging.getLogger(__name__).debug("failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for row in out.summary:
        print("  ".join(f"{k}={runner._fmt(v)}" for k, v in row.items()))
    print(f"wrote {', '.join(sorted(p.name for p in out.files.values()))} to {out.directory}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
