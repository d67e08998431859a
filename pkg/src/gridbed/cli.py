"""``gridbed`` command line: validate, run and report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from .analytics import TraceError
from .experiment import Simulation
from .network import TopologyError
from .report import build_report, write_series_csv, write_wastage_csv
from .scenario import ScenarioError, load_scenario, validate
from .tracefile import decode, encode, read_trace, write_trace

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

log = logging.getLogger("gridbed")


def _out_dir(arg: Optional[str], default: str) -> Path:
    out = Path(os.environ.get("GRIDBED_OUT") or arg or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_outputs(report: dict, out: Path, figures: bool) -> List[Path]:
    paths = [out / "report.json"]
    paths[0].write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if report["series"]["rows"]:
        write_series_csv(report, out / "demand_series.csv")
        paths.append(out / "demand_series.csv")
    if report.get("wastage"):
        write_wastage_csv(report, out / "wastage.csv")
        paths.append(out / "wastage.csv")
    if figures:
        from .plotting import render_figures

        paths.extend(render_figures(report, out))
    return paths


def run_scenario(ref, overrides=None, seed=None, out=None, figures=None) -> dict:
    """Simulate a scenario, write trace + report files, and return the report."""
    spec, raw = load_scenario(ref, overrides, seed)
    try:
        sim = Simulation(spec)
    except TopologyError as exc:
        raise ScenarioError([f"topology: {exc}"]) from None
    summary = sim.run()
    data = encode(raw, spec.seed, sim.events, summary.final_time)
    out_dir = _out_dir(out, spec.output.dir)
    write_trace(out_dir / "trace.jsonl", data)
    report = build_report(decode(data))
    write_outputs(report, out_dir, spec.output.figures if figures is None else figures)
    return report


def cmd_validate(args) -> int:
    errors = validate(args.scenario)
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def cmd_run(args) -> int:
    report = run_scenario(
        args.scenario, args.set, args.seed, args.out, False if args.no_figures else None
    )
    print(f"trace sha256 {report['trace_sha256']}")
    return EXIT_OK


def cmd_report(args) -> int:
    trace = read_trace(args.trace)
    report = build_report(trace)
    out = _out_dir(args.out, str(Path(args.trace).parent))
    write_outputs(report, out, not args.no_figures)
    print(f"report written to {out / 'report.json'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridbed", description="Smart-grid demand response testbed simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("scenario", help="scenario JSON file or bundled scenario name")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="simulate a scenario and write trace and report")
    r.add_argument("scenario", help="scenario JSON file or bundled scenario name")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted-path override")
    r.add_argument("--out", default=None, help="output directory (GRIDBED_OUT wins)")
    r.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("report", help="recompute the report from a trace file")
    rp.add_argument("trace")
    rp.add_argument("--out", default=None)
    rp.add_argument("--no-figures", action="store_true")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (TraceError, OSError, ValueError, TopologyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
