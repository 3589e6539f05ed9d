"""Command line entry point: ``lorentz-rings <kind> [--config PATH] [overrides]``.

Exit status: 0 when every check passes, 1 when any check fails, 2 on usage
or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import KINDS, ConfigError, ExperimentConfig, config_from_dict, load_config
from .ensemble import Report
from .experiments import run_experiment

log = logging.getLogger("lorentz_rings")


def _dims(text: str) -> tuple[int, int]:
    try:
        d, N = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected d,N, got {text!r}") from None
    return d, N


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lorentz-rings", description=__doc__.splitlines()[0])
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", type=Path, help="JSON file mirroring ExperimentConfig")
    p.add_argument("--dims", type=_dims, help="d,N")
    p.add_argument("--mu", type=float)
    p.add_argument("--rho-minus", type=float)
    p.add_argument("--rho-plus", type=float)
    p.add_argument("--rho-init", type=float)
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="output directory (default: print the report)")
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def report_document(report: Report, config: ExperimentConfig) -> dict:
    doc = report.to_record()
    doc["config"] = config.to_record()
    doc["code_version"] = __version__
    doc["master_seed"] = config.seed
    return doc


def _write_csv(path: Path, rows: list[dict]) -> None:
    fields: list[str] = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


def write_outputs(report: Report, config: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(report_document(report, config), indent=2, sort_keys=True)
    (out / "report.json").write_text(text + "\n")
    _write_csv(out / "series.csv", report.series)
    _write_csv(out / "census.csv", report.census)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = {
        "kind": args.kind, "mu": args.mu, "rho_minus": args.rho_minus, "rho_plus": args.rho_plus,
        "rho_init": args.rho_init, "replicas": args.replicas, "seed": args.seed, "threads": args.threads,
        "out": str(args.out) if args.out else None,
    }
    if args.dims:
        overrides["d"], overrides["N"] = args.dims
    try:
        if args.config:
            config = load_config(args.config, **overrides)
        else:
            config = config_from_dict({}, **overrides)
        report = run_experiment(config)
    except ConfigError as exc:
        print(f"lorentz-rings: error: {exc}", file=sys.stderr)
        return 2
    for c in report.checks:
        log.info("%s %s", "PASS" if c.passed else "FAIL", c.name)
    if config.out:
        write_outputs(report, config, Path(config.out))
    else:
        print(json.dumps(report_document(report, config), indent=2, sort_keys=True))
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
