"""
File: edgeswarm/cli.py
Command-line interface: simulate, report, compare, topology ingest,
scenario validate
"""

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple

from . import __version__
from .config import read_json_file
from .engine import EventLog
from .exceptions import EdgeSwarmError, ValidationError
from .metrics import collect, compare, report_text, trace_csv
from .models import ArchMode
from .network import emit_topology, ingest_topology
from .scenarios import builtin_scenarios, load_scenario
from .simulation import Simulation
from .utils import parse_seed_range

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)-8s] [%(name)s] %(message)s"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _read_log(path: str) -> EventLog:
    with open(path, "r", encoding="utf-8") as f:
        return EventLog.loads(f.read())


def simulate_one(job: Tuple[str, Optional[str], int, Optional[dict]]) -> Tuple[int, str]:
    """Run one seed; module-level so process pools can pickle it"""
    scenario_source, arch, seed, overrides = job
    scenario = load_scenario(scenario_source)
    arch_mode = ArchMode(arch) if arch else None
    log = Simulation(scenario, seed, arch_mode=arch_mode, overrides=overrides).run()
    return seed, log.dumps()


# ============================================
# Subcommands
# ============================================

def cmd_simulate(args: argparse.Namespace) -> int:
    seeds = [args.seed] if args.seeds is None else _seed_range(args.seeds)
    if len(seeds) > 1 and "{seed}" not in args.out:
        raise ValidationError("--out must contain {seed} when running several seeds")

    overrides = read_json_file(args.config) if args.config else None
    jobs = [(args.scenario, args.arch, seed, overrides) for seed in seeds]

    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(simulate_one, jobs))
    else:
        results = [simulate_one(job) for job in jobs]

    for seed, text in sorted(results):
        out = args.out.replace("{seed}", str(seed))
        _write(out, text)
        print(f"seed {seed}: {text.count(chr(10))} events -> {out}")
    return EXIT_OK


def _seed_range(text: str) -> List[int]:
    try:
        return parse_seed_range(text)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def cmd_report(args: argparse.Namespace) -> int:
    log = _read_log(args.log)
    report = collect(log)
    _write(args.out, report.to_json())
    if args.text:
        print(report_text(report))
    if args.trace_csv:
        _write(args.trace_csv, trace_csv(log))
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    comparison = compare(collect(_read_log(args.log_a)), collect(_read_log(args.log_b)))
    _write(args.out, comparison.to_json())
    if args.text:
        print(comparison.to_text())
    return EXIT_OK


def cmd_topology_ingest(args: argparse.Namespace) -> int:
    with open(args.csv, "r", encoding="utf-8", newline="") as f:
        result = ingest_topology(f)
    for error in result.row_errors:
        print(f"{args.csv}: {error}", file=sys.stderr)
    _write(args.out, emit_topology(result.towers))
    return EXIT_OK


def cmd_scenario_validate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    print(
        f"{scenario.scenario_id}: ok ({len(scenario.devices)} devices, "
        f"{len(scenario.towers)} towers, {len(scenario.workload)} workloads, "
        f"{scenario.duration_s:g}s, {scenario.arch_mode.value})"
    )
    return EXIT_OK


def cmd_scenario_list(args: argparse.Namespace) -> int:
    for name in builtin_scenarios():
        print(name)
    return EXIT_OK


# ============================================
# Parser
# ============================================

class _Parser(argparse.ArgumentParser):
    """Bad arguments exit with the validation code"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="edgeswarm",
        description="Remote inference vs. deployable edge agents over degraded cellular networks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Run a scenario and write its event log")
    sim.add_argument("--scenario", required=True, help="Scenario file or built-in name")
    sim.add_argument("--arch", choices=[m.value for m in ArchMode],
                     help="Architecture (default: the scenario's)")
    seeds = sim.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, default=0, help="Master seed")
    seeds.add_argument("--seeds", help="Inclusive seed range a..b")
    sim.add_argument("--workers", type=int, default=1, help="Parallel seeds")
    sim.add_argument("--config", help="JSON file of config overrides")
    sim.add_argument("--out", required=True, help="Event log path; may contain {seed}")
    sim.set_defaults(func=cmd_simulate)

    rep = sub.add_parser("report", help="Compute metrics from an event log")
    rep.add_argument("--log", required=True)
    rep.add_argument("--out", help="Report JSON path (default stdout)")
    rep.add_argument("--text", action="store_true", help="Also print a table")
    rep.add_argument("--trace-csv", help="Write the battery/memory trace CSV here")
    rep.set_defaults(func=cmd_report)

    cmp_ = sub.add_parser("compare", help="Compare two runs of one scenario and seed")
    cmp_.add_argument("--log-a", required=True)
    cmp_.add_argument("--log-b", required=True)
    cmp_.add_argument("--out", help="Comparison JSON path (default stdout)")
    cmp_.add_argument("--text", action="store_true", help="Also print a table")
    cmp_.set_defaults(func=cmd_compare)

    topo = sub.add_parser("topology", help="Tower topology tools")
    topo_sub = topo.add_subparsers(dest="topology_command", required=True)
    ingest = topo_sub.add_parser("ingest", help="Validate and normalize a towers CSV")
    ingest.add_argument("--csv", required=True)
    ingest.add_argument("--out", help="Normalized CSV path (default stdout)")
    ingest.set_defaults(func=cmd_topology_ingest)

    scen = sub.add_parser("scenario", help="Scenario tools")
    scen_sub = scen.add_subparsers(dest="scenario_command", required=True)
    validate = scen_sub.add_parser("validate", help="Load and validate a scenario")
    validate.add_argument("--scenario", required=True)
    validate.set_defaults(func=cmd_scenario_validate)
    listing = scen_sub.add_parser("list", help="List built-in scenarios")
    listing.set_defaults(func=cmd_scenario_list)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point

    Returns:
        0 on success, 1 on validation errors, 2 on runtime errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_OK

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format=LOG_FORMAT,
        stream=sys.stderr,
    )

    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EdgeSwarmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
