import argparse
import json
import sys
from typing import Dict, List, Optional, Sequence

from config.config import HARNESS, load_scenario
from lockutils.errors import LockLabError, SoundnessViolation
from lockutils.services.certify import Certifier, audit_all, bell_triple_certificate
from lockutils.services.partitions import parse_partition
from lockutils.services.protocols import (
    evaluate,
    generate_global_protocol,
    generate_odd_protocol,
    generate_pairing_protocol,
    generate_restricted_protocol,
    load_protocol,
    sample_run,
    save_protocol,
    dumps_protocol,
)
from lockutils.services.resources import (
    delta_e,
    insufficiency_check,
    min_bell_cost,
    plan_extraction,
    profile_s1,
    profile_s2,
)
from lockutils.services.sets import StateSet, build_locked_set, dumps_set, load_set, save_set
from lockutils.utils import get_logger, set_log_level
from workflow.netharness import LockingHarnessWorkflow
from workflow.tools.event_log import EventLog

logger = get_logger(__name__)


def _emit(rows: List[Dict], fmt: str, columns: Optional[Sequence[str]] = None) -> None:
    """records: one JSON object per line; table: aligned text over `columns`."""
    if fmt == "records":
        for row in rows:
            print(json.dumps(row, default=str))
        return
    columns = list(columns or (rows[0].keys() if rows else []))
    cells = [[_cell(row.get(c)) for c in columns] for row in rows]
    widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(columns)]
    print("  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip())
    for r in cells:
        print("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.9f}"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def _state_set(args) -> StateSet:
    if getattr(args, "set", None):
        return load_set(args.set)
    return build_locked_set(args.m)


# --- subcommands -------------------------------------------------------------------------

def cmd_gen_set(args) -> int:
    state_set = build_locked_set(args.m)
    if args.output:
        save_set(state_set, args.output)
        _emit([{"m": args.m, "N": state_set.size, "path": args.output}], args.format)
    else:
        sys.stdout.write(dumps_set(state_set))
    return 0


def cmd_certify(args) -> int:
    state_set = _state_set(args)
    cuts = [args.cut] if args.cut else range(1, state_set.num_qubits + 1)
    rows = []
    for cut in cuts:
        certificate = bell_triple_certificate(state_set, cut)
        record = certificate.record()
        record["valid"] = certificate.valid
        rows.append(record)
    _emit(rows, args.format, ["cut_party", "triple", "bell_fidelities", "residual", "max_overlap", "valid"])
    return 0


def cmd_status(args) -> int:
    state_set = _state_set(args)
    partition = parse_partition(args.partition, state_set.num_qubits)
    status = Certifier(state_set).lock_status(partition)
    record = status.record()
    if args.format == "records":
        _emit([record], args.format)
    elif status.status == "LOCKED":
        print(f"{partition}  LOCKED  witness cut party {status.certificate.cut_party}")
    elif status.status == "OPEN":
        derived = "  (derived construction)" if status.protocol.derived else ""
        print(f"{partition}  OPEN  protocol on {status.witness}{derived}")
    else:
        print(f"{partition}  UNKNOWN")
    return 0


def cmd_audit(args) -> int:
    state_set = _state_set(args)
    table = audit_all(state_set, state_set.num_qubits)
    rows = [row.record() for row in table.rows]
    for row in rows:
        row["cut_party"] = row.pop("certificate", {}).get("cut_party")
    _emit(rows, args.format, ["partition", "status", "cut_party", "witness"])
    _emit([dict(table.counts)], args.format, ["LOCKED", "OPEN", "UNKNOWN"])
    return 0


def cmd_protocol(args) -> int:
    state_set = _state_set(args)
    partition = parse_partition(args.partition, state_set.num_qubits)
    if len(partition) == 1:
        tree = generate_global_protocol(state_set)
    elif args.restricted:
        tree = generate_restricted_protocol(state_set, partition)
    elif state_set.num_qubits % 2 == 0:
        tree = generate_pairing_protocol(state_set, partition)
    else:
        tree = generate_odd_protocol(state_set, partition)
    if args.output:
        save_protocol(tree, args.output)
        _emit([{"partition": str(partition), "depth": tree.depth(), "derived": tree.derived, "path": args.output}],
              args.format)
    else:
        sys.stdout.write(dumps_protocol(tree))
    return 0


def cmd_eval(args) -> int:
    state_set = _state_set(args)
    tree = load_protocol(args.proto)
    report = evaluate(state_set, tree)
    row = {
        "partition": str(tree.partition),
        "worst_case": report.worst_case,
        "average": report.average,
        "complete": report.complete,
        "branches": report.branch_count,
        "derived_construction": report.derived,
    }
    if args.samples:
        hits = sum(
            sample_run(state_set, tree, i % state_set.size, args.seed + i).correct for i in range(args.samples)
        )
        row["sampled_accuracy"] = hits / args.samples
    if args.format == "records":
        _emit([row], args.format)
        return 0
    print(f"worst-case success {report.worst_case:.9f}")
    print(f"average success {report.average:.9f}")
    for index, (success, abstain) in enumerate(zip(report.success, report.abstain)):
        print(f"  state {index}: success {success:.9f} abstain {abstain:.9f}")
    if "sampled_accuracy" in row:
        print(f"sampled accuracy {row['sampled_accuracy']:.6f} over {args.samples} runs")
    if report.derived:
        print("derived construction")
    return 0


def cmd_plan(args) -> int:
    profile = profile_s2(args.m) if args.baseline == "s2" else profile_s1(args.m)
    if args.budget is not None:
        verdict = insufficiency_check(profile, args.budget)
        record = {
            "kind": verdict.kind,
            "budget": verdict.budget,
            "min_blocks": verdict.min_blocks,
            "pigeonhole": verdict.pigeonhole,
            "best_reachable": str(verdict.best_reachable) if verdict.best_reachable else None,
            "cut_party": verdict.certificate.cut_party if verdict.certificate else None,
            "target": str(verdict.plan.target) if verdict.plan else None,
        }
        _emit([record], args.format)
        return 0
    plan = plan_extraction(profile, optimistic=args.optimistic)
    rows = [{"source": move.source, "dest": move.dest} for move in plan.moves]
    summary = {"target": str(plan.target), "bell_cost": plan.bell_cost, "certified": not args.optimistic}
    if args.format == "records":
        _emit([summary] + rows, args.format)
    else:
        print(f"target {plan.target}  bell_cost {plan.bell_cost}" + ("" if summary["certified"] else "  (non-certified)"))
        _emit(rows, args.format, ["source", "dest"])
    return 0


def cmd_delta_table(args) -> int:
    sizes = range(3 if args.include_odd else 4, args.m_max + 1, 1 if args.include_odd else 2)
    rows = []
    for m in sizes:
        e1, _ = min_bell_cost(profile_s1(m))
        e2, _ = min_bell_cost(profile_s2(m))
        if e2 - e1 != delta_e(m):
            logger.error("Resource gap mismatch", extra={"m": m, "e1": e1, "e2": e2})
            raise SoundnessViolation(f"m={m}: E2 - E1 = {e2 - e1}, closed form gives {delta_e(m)}")
        rows.append({"m": m, "E1": e1, "E2": e2, "dE": e2 - e1})
    _emit(rows, args.format, ["m", "E1", "E2", "dE"])
    return 0


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.config)
    harness = LockingHarnessWorkflow()
    mode = args.mode or ("attack" if scenario.coalition else "extraction")
    if mode == "attack":
        log = harness.run_attack(scenario).log
    elif mode == "extraction":
        log = harness.run_extraction(scenario).log
    else:
        _, log = harness.run_distribution(scenario)
    if args.log:
        log.save(args.log)
    if args.format == "records":
        sys.stdout.write(log.dumps())
    else:
        _emit([log.verdict or log.records[-1].model_dump()], args.format)
    return 0


def cmd_replay(args) -> int:
    verdict = LockingHarnessWorkflow().replay(EventLog.load(args.log))
    _emit([verdict], args.format)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["records", "table"], default="table", help="Output rendering.")
    common.add_argument("-v", "--verbose", action="store_true", help="Log at INFO level on stderr.")

    parser = argparse.ArgumentParser(prog="locklab", description="Multiparty information locking toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-set", parents=[common], help="Write the locked set of m qubits.")
    p.add_argument("-m", type=int, required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen_set)

    p = sub.add_parser("certify", parents=[common], help="Bell-triple certificates for 1-vs-rest cuts.")
    p.add_argument("-m", type=int)
    p.add_argument("--set")
    p.add_argument("--cut", type=int)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("status", parents=[common], help="Lock status of one partition.")
    p.add_argument("-m", type=int)
    p.add_argument("--set")
    p.add_argument("-p", "--partition", required=True)
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("audit", parents=[common], help="Lock status of every partition.")
    p.add_argument("-m", type=int)
    p.add_argument("--set")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("protocol", parents=[common], help="Generate a discrimination protocol.")
    p.add_argument("-m", type=int)
    p.add_argument("--set")
    p.add_argument("-p", "--partition", required=True)
    p.add_argument("--restricted", action="store_true", help="Best-effort peel for an arbitrary partition.")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("eval", parents=[common], help="Exact evaluation of a protocol file.")
    p.add_argument("-m", type=int)
    p.add_argument("--set")
    p.add_argument("--proto", required=True)
    p.add_argument("--samples", type=int, default=0)
    p.add_argument("--seed", type=int, default=HARNESS.default_seed)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plan", parents=[common], help="Cheapest teleportation plan to an OPEN partition.")
    p.add_argument("-m", type=int, required=True)
    p.add_argument("--baseline", choices=["s1", "s2"], default="s1")
    p.add_argument("--optimistic", action="store_true", help="Also accept UNKNOWN partitions (non-certified).")
    p.add_argument("--budget", type=int, help="Check whether this many Bell pairs suffice.")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("delta-table", parents=[common], help="Resource gap per number of parties.")
    p.add_argument("--m-max", type=int, default=12)
    p.add_argument("--include-odd", action="store_true")
    p.set_defaults(func=cmd_delta_table)

    p = sub.add_parser("simulate", parents=[common], help="Run a harness scenario.")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=["distribution", "attack", "extraction"])
    p.add_argument("--log")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", parents=[common], help="Re-run a logged scenario and compare.")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.verbose:
        set_log_level("INFO")
    if hasattr(args, "m") and args.m is None and not getattr(args, "set", None):
        print(f"locklab {args.command}: error: -m or --set is required", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except SoundnessViolation as e:
        logger.error("Soundness violation", extra={"command": args.command})
        print(f"soundness violation: {e}", file=sys.stderr)
        return 3
    except (LockLabError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
