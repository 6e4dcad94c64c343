"""Command-line entry point: ``qtube tunnel|grating|custom --config FILE``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import SCENARIOS, load_config
from .errors import ConfigurationError, NumericalError, QtubeError
from .experiments import run, write_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("qtube")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qtube", description=__doc__)
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--trajectories", type=int, metavar="N", help="ensemble size")
    p.add_argument("--export-snapshots", action="store_true", help="also write snapshots.csv")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _summary(report) -> list[str]:
    d = report.diagnostics
    lines = [f"scenario {report.scenario}: {d['n_snapshots']} snapshots, "
             f"norm drift {d['norm_drift']:.2e}, energy drift {d['energy_drift']:.2e}"]
    r = report.results
    lines.append(f"trajectories {r['ensemble']['count']}, crossings {r['ensemble']['crossings']}")
    if report.scenario == "tunnel":
        a = r["asymptotic"]
        lines.append(f"P_T {a['P_T']:.6f}  P_R {a['P_R']:.6f}  P_I {a['P_I']:.2e}")
        if r["separatrix"]:
            lines.append(f"separatrix x0 {r['separatrix']['x0']:.6f}, tube rel std {r['tube']['rel_std']:.2e}")
    elif report.scenario == "grating":
        for entry in r["analysis"]:
            for n, o in entry["orders"].items():
                lines.append(f"t={entry['t']:g} n={n}: domain {o['domain_estimate']:.5f}, "
                             f"far-field tube {o['far_field_tube']:.5f}, deviation {o['rel_deviation']:.2%}")
    return lines


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.scenario)
        if args.trajectories is not None:
            cfg = cfg.replace(trajectories=dataclasses.replace(cfg.trajectories, count=args.trajectories))
        out = args.out or cfg.output.dir
        export = args.export_snapshots or cfg.output.export_snapshots
    except (ConfigurationError, ValueError) as err:
        print(f"qtube: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run(cfg)
        paths = write_outputs(report, out, export)
    except ConfigurationError as err:
        print(f"qtube: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, QtubeError, ValueError) as err:
        print(f"qtube: numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    for line in _summary(report):
        print(line)
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
