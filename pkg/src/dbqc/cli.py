"""Command-line scenario runner.

JSON reports go to stdout (or --out), a short summary to stderr. Exit codes:
0 success, 1 usage or configuration error, 2 protocol abort, 3 invariant breach.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .localqec import compare_tables, format_table, simulate_table, syndrome_tables
from .network import Network, NetworkError, parse_topology, star_topology
from .pauli import PauliError, StabilizerCode, parse_code_text, steane_code, validate_code
from .protocols import ProtocolError, encode_distributed, parse_gates
from .resources import predict_session
from .statesim import trace_distance
from .verification import (
    VerificationError,
    detection_experiment,
    parse_adversary,
    prepare_traps,
    run_verified_session,
    SessionTask,
)

EXIT_OK, EXIT_USAGE, EXIT_ABORT, EXIT_BREACH = 0, 1, 2, 3
TOL = 1e-9
BUILTIN_CODES = {"steane": steane_code}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_code(source: str) -> StabilizerCode:
    if source in BUILTIN_CODES:
        return BUILTIN_CODES[source]()
    path = Path(source)
    if not path.is_file():
        raise UsageError(f"unknown code {source!r}: not a builtin and no such file")
    code = parse_code_text(path.read_text(), name=path.stem)
    problems = validate_code(code)
    if problems:
        raise UsageError("invalid code file: " + "; ".join(problems))
    return code


def load_gates(args) -> list:
    if args.gates:
        return parse_gates(Path(args.gates).read_text())
    if args.gate_list:
        return parse_gates(args.gate_list.replace(";", "\n"))
    return []


def load_topology(args, default_servers: int):
    if args.topology:
        return parse_topology(Path(args.topology).read_text())
    return star_topology(args.star if args.star is not None else default_servers)


def _emit(doc: dict, args) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------- commands


def cmd_encode(args) -> int:
    code = load_code(args.code)
    topo = load_topology(args, code.n)
    net = Network(topo, args.seed)
    if len(topo.servers) < code.n:
        raise UsageError(f"code needs {code.n} servers, topology has {len(topo.servers)}")
    block = encode_distributed(code, topo.servers[:code.n], net)
    expectations = {str(op): net.state.expectation(op, block.data) for op in code.operators}
    half = np.eye(2) / 2
    leaves = {node: trace_distance(net.state.reduced_density(q), half) for node, q in zip(block.nodes, block.data)}
    setup = net.ledger.model_by_phase()["setup"]
    doc = {
        "command": "encode",
        "code": code.name,
        "seed": args.seed,
        "nodes": block.nodes,
        "expectations": expectations,
        "leaf_trace_distance": leaves,
        "syndrome": list(net.last_syndrome),
        "setup_cost": {"bell": setup[0], "classical": setup[1]},
        "ledger": net.ledger.snapshot(),
    }
    _emit(doc, args)
    ok = all(abs(v - 1) <= TOL for v in expectations.values()) and max(leaves.values()) <= TOL
    _say(f"encode {code.name}: {len(expectations)} operators, setup {setup[0]} Bell pairs / {setup[1]} bits, "
         f"{'ok' if ok else 'INVARIANT BREACH'}")
    return EXIT_OK if ok else EXIT_BREACH


def _session_once(task: SessionTask, k_trap: int, adversary, topo, seed):
    net = Network(topo, seed)
    N = task.n_data + k_trap
    traps = prepare_traps(N, k_trap, net.client_rng)
    return run_verified_session(task, traps, adversary, net)


def cmd_session(args) -> int:
    code = load_code(args.code)
    gates = load_gates(args)
    blocks = 1 + max((o for g in gates for o in g.operands), default=0)
    task = SessionTask(code, tuple(gates), blocks)
    adversary = parse_adversary(args.adversary)
    topo = load_topology(args, task.n_data + args.traps)
    if args.trials == 1:
        report = _session_once(task, args.traps, adversary, topo, args.seed)
        doc = {"command": "session", **report.as_dict()}
        _emit(doc, args)
        rec = report.reconciliation
        tot = rec["observed_model_totals"]
        _say(f"session: {report.verdict}, cost {tot[0]} Bell pairs / {tot[1]} bits "
             f"(predicted {rec['predicted']['totals']['bell']} / {rec['predicted']['totals']['classical']})")
        if not report.accepted:
            return EXIT_ABORT
        breach = not rec["match"] or report.fidelity < 1 - TOL
        return EXIT_BREACH if breach else EXIT_OK
    seeds = np.random.SeedSequence(args.seed).spawn(args.trials)
    verdicts, fids, mismatches = [], [], 0
    for ss in seeds:
        r = _session_once(task, args.traps, adversary, topo, ss)
        verdicts.append(r.verdict)
        if r.accepted:
            fids.append(r.fidelity)
        mismatches += not r.reconciliation["match"]
    doc = {
        "command": "session",
        "seed": args.seed,
        "trials": args.trials,
        "accepted": verdicts.count("accepted"),
        "aborted": verdicts.count("aborted"),
        "min_fidelity": min(fids) if fids else None,
        "cost_mismatches": mismatches,
        "predicted": predict_session(code, gates, args.traps, blocks).as_dict(),
    }
    _emit(doc, args)
    _say(f"sessions: {doc['accepted']} accepted, {doc['aborted']} aborted of {args.trials}")
    if mismatches or (fids and min(fids) < 1 - TOL):
        return EXIT_BREACH
    return EXIT_ABORT if doc["aborted"] else EXIT_OK


def cmd_qec_table(args) -> int:
    golden = dict(zip((1, 2), syndrome_tables()))[args.method]
    got = simulate_table(args.method, np.random.default_rng(args.seed))
    diff = compare_tables(got, golden)
    doc = {
        "command": "qec-table",
        "method": args.method,
        "cells": len(golden.entries),
        "matches": len(golden.entries) - len(diff),
        "table": {f"{k}{p}": {"residual": r, "syndrome": s} for (k, p), (r, s) in sorted(got.entries.items())},
        "mismatches": [{"cell": f"{k}{p}", "got": list(g) if g else None, "want": list(w)} for (k, p), g, w in diff],
    }
    _emit(doc, args)
    sys.stderr.write(format_table(got))
    _say(f"method {args.method}: {doc['matches']}/{doc['cells']} cells match")
    return EXIT_OK if not diff else EXIT_BREACH


def cmd_detect(args) -> int:
    if args.trials < 1000:
        raise UsageError("detection needs --trials >= 1000")
    rec = detection_experiment(args.N, args.k_trap, args.d, args.trials, np.random.default_rng(args.seed))
    _emit({"command": "detect", "seed": args.seed, **rec}, args)
    _say(f"detect N={args.N} k={args.k_trap} d={args.d}: undetected {rec['empirical_rate']:.4f} "
         f"vs bound {rec['bound_placement']:.4f} (exact {rec['exact_rate']:.4f}) -> {rec['verdict']}")
    return EXIT_OK if rec["verdict"] == "pass" else EXIT_BREACH


def cmd_cost(args) -> int:
    code = load_code(args.code)
    gates = load_gates(args)
    blocks = 1 + max((o for g in gates for o in g.operands), default=0)
    pred = predict_session(code, gates, args.traps, blocks)
    _emit({"command": "cost", **pred.as_dict()}, args)
    _say(f"predicted totals: {pred.totals[0]} Bell pairs, {pred.totals[1]} classical bits")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dbqc", description="Distributed blind quantum computation scenarios")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, code=True, topo=True):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="write the JSON report here instead of stdout")
        if code:
            sp.add_argument("--code", default="steane", help="builtin name or code file")
        if topo:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--topology", help="topology file")
            g.add_argument("--star", type=int, help="star topology with this many servers")

    def gate_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--gates", help="gate file")
        g.add_argument("--gate-list", help='inline gates separated by ";", e.g. "H 0;T 0"')
        sp.add_argument("--traps", type=int, default=0, help="number of trap positions")

    sp = sub.add_parser("encode", help="distributed encoding")
    common(sp)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("session", help="verified session")
    common(sp)
    gate_args(sp)
    sp.add_argument("--adversary", default="honest", help="honest | random:D | fixed:POS=P,... | lie:PROB")
    sp.add_argument("--trials", type=int, default=1)
    sp.set_defaults(func=cmd_session)

    sp = sub.add_parser("qec-table", help="simulate a local QEC syndrome table")
    common(sp, code=False, topo=False)
    sp.add_argument("--method", type=int, choices=(1, 2), required=True)
    sp.set_defaults(func=cmd_qec_table)

    sp = sub.add_parser("detect", help="trap detection experiment")
    common(sp, code=False, topo=False)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--k-trap", type=int, required=True)
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--trials", type=int, default=10000)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("cost", help="predicted resource costs")
    common(sp, topo=False)
    gate_args(sp)
    sp.set_defaults(func=cmd_cost)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, PauliError, NetworkError, ProtocolError, VerificationError, OSError) as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
