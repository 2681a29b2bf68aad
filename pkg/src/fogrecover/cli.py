"""Command-line front end.

Exit codes: 0 success, 1 verification mismatch, 2 bad input,
3 algorithm precondition violated.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .assessment import DamageItemTable, MaliciousList, assess_primary, assess_secondary
from .errors import PreconditionError, ScenarioError, ScheduleSyntaxError
from .logmodel import TxnId, parse_schedule
from .recovery import recover_primary, recover_secondary
from .scenario import Scenario, compare_states, generate_random, oracle_replay, run_engine
from .serialize import (
    assessment_from_dict,
    assessment_to_dict,
    damage_table_from_dict,
    format_da_table,
    format_damage_table,
    format_patches,
    format_valid_table,
    network_snapshot,
    recovery_to_dict,
    trace_to_dict,
    valid_table_from_dict,
)

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_PRECONDITION = 0, 1, 2, 3


class InputError(Exception):
    pass


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _read_json(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from None


def _emit(doc, fmt: str, text: str) -> None:
    if fmt == "json":
        print(json.dumps(doc, indent=2))
    elif text:
        print(text)


def cmd_assess(args) -> int:
    node = args.node or Path(args.schedule).stem
    log = parse_schedule(_read(args.schedule), node)
    if args.dit:
        table = damage_table_from_dict(_read_json(args.dit))
        out = assess_secondary(log, table)
    else:
        names = [t for chunk in args.malicious for t in chunk.replace(",", " ").split()]
        if not names:
            raise InputError("give --malicious or --dit")
        try:
            txns = [TxnId.parse(t, default_fog=node) for t in names]
        except ValueError as exc:
            raise InputError(str(exc)) from None
        out = assess_primary(log, MaliciousList(node, tuple(txns)))
    parts = [f"DA_Table {node}", format_da_table(out.da_table)]
    if isinstance(out.damaged, DamageItemTable):
        parts += ["", f"DIT {node}", format_damage_table(out.damaged)]
    else:
        parts += ["", "DI_L " + ", ".join(sorted(out.damaged))]
    for fog, table in out.outgoing.items():
        parts += ["", f"DIT {fog} (outgoing)", format_damage_table(table)]
    _emit(assessment_to_dict(out), args.format, "\n".join(parts))
    return EXIT_OK


def cmd_recover(args) -> int:
    assessment = assessment_from_dict(_read_json(args.da))
    damaged = assessment.damaged
    if args.dil:
        damaged = set(_read_json(args.dil))
    if args.dit:
        damaged = damage_table_from_dict(_read_json(args.dit))
    post_log = parse_schedule(_read(args.postlog), assessment.node) if args.postlog else None
    vits = [valid_table_from_dict(_read_json(p)) for p in args.vit]
    if isinstance(damaged, DamageItemTable) or vits:
        if not isinstance(damaged, DamageItemTable):
            damaged = DamageItemTable(assessment.node, [])
        out = recover_secondary(assessment.da_table, damaged, vits, post_log)
    else:
        out = recover_primary(assessment.da_table, damaged, post_log)
    if not out.recovered_table and not out.patches:
        _emit(recovery_to_dict(out), args.format, "")
        return EXIT_OK
    parts = [f"DA_Table {assessment.node} (recovered)", format_da_table(out.recovered_table)]
    for fog, table in out.outgoing.items():
        parts += ["", f"VIT {fog}", format_valid_table(table)]
    if out.patches:
        parts += ["", "patches", format_patches(out.patches)]
    _emit(recovery_to_dict(out), args.format, "\n".join(parts))
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = Scenario.loads(_read(args.scenario))
    started = time.perf_counter()
    net, trace = run_engine(scenario, policy=args.policy, seed=args.seed)
    final = net.states()
    elapsed_ms = (time.perf_counter() - started) * 1000
    report = {"nodes": {}, "final_state": final, "elapsed_ms": round(elapsed_ms, 3)}
    for name, node in net.nodes.items():
        entry = {}
        if node.assessment is not None:
            entry["assessment"] = assessment_to_dict(node.assessment)
        if node.recovery is not None:
            entry["recovery"] = recovery_to_dict(node.recovery)
        report["nodes"][name] = entry
    report["trace_events"] = len(trace) if trace else 0
    if args.trace:
        report["trace"] = trace_to_dict(trace) if trace else []

    lines = []
    if args.trace and trace:
        lines += ["trace", trace.to_text(), ""]
    for name, node in net.nodes.items():
        patches = node.recovery.patches if node.recovery else {}
        state = ", ".join(f"{k}={v}" for k, v in sorted(final[name].items()))
        lines.append(f"{name}: patched {{{', '.join(f'{k}={v}' for k, v in patches.items())}}}")
        lines.append(f"  final {state}")

    code = EXIT_OK
    if args.verify:
        diffs = compare_states(oracle_replay(scenario), final)
        report["verdict"] = "pass" if not diffs else "fail"
        report["diff"] = [str(d) for d in diffs]
        lines.append(f"verify: {report['verdict']}")
        lines += [f"  {d}" for d in diffs]
        if diffs:
            code = EXIT_MISMATCH
    _emit(report, args.format, "\n".join(lines))
    return code


def cmd_gen(args) -> int:
    scenario = generate_random(
        args.seed,
        nodes=args.nodes,
        items=args.items,
        txns=args.txns,
        cross_prob=args.cross_prob,
        malicious=args.malicious,
        abort_prob=args.abort_prob,
    )
    text = scenario.dumps()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_dump(args) -> int:
    scenario = Scenario.loads(_read(args.scenario))
    if args.run:
        net, _ = run_engine(scenario)
    else:
        net = scenario.network()
    print(json.dumps(network_snapshot(net), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    default_format = os.environ.get("FOGRECOVER_FORMAT", "table")
    if default_format not in ("table", "json"):
        default_format = "table"
    parser = argparse.ArgumentParser(prog="fogrecover", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_format(p):
        p.add_argument("--format", choices=["table", "json"], default=default_format)

    p = sub.add_parser("assess", help="damage assessment of one schedule file")
    p.add_argument("schedule")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--malicious", action="append", default=[], help="e.g. T1 or T1,T4")
    group.add_argument("--dit", help="incoming damage item table (JSON)")
    p.add_argument("--node", help="fog id of the schedule (default: file stem)")
    add_format(p)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("recover", help="recovery from a JSON assessment")
    p.add_argument("da", help="output of `assess --format json`")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--dil", help="damaged item list (JSON array)")
    group.add_argument("--dit", help="damage item table (JSON)")
    p.add_argument("--vit", action="append", default=[], help="incoming valid items table (JSON)")
    p.add_argument("--postlog", help="schedule of transactions run during recovery")
    add_format(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("run", help="run a scenario end to end")
    p.add_argument("scenario", help="scenario JSON, or - for stdin")
    p.add_argument("--verify", action="store_true", help="compare with the attack-free replay")
    p.add_argument("--trace", action="store_true")
    p.add_argument("--policy", choices=["fifo", "round_robin", "random"])
    p.add_argument("--seed", type=int)
    add_format(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen", help="generate a random scenario")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--nodes", type=int, default=3)
    p.add_argument("--items", type=int, default=10)
    p.add_argument("--txns", type=int, default=40)
    p.add_argument("--malicious", type=int, default=2)
    p.add_argument("--cross-prob", type=float, default=0.2)
    p.add_argument("--abort-prob", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("dump", help="print a network snapshot")
    p.add_argument("scenario")
    p.add_argument("--run", action="store_true", help="cascade to quiescence first")
    p.set_defaults(func=cmd_dump)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ScheduleSyntaxError, ScenarioError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
