"""Command-line front end.  Batch I/O only: JSON payload on stdout,
diagnostics on stderr, exit codes 0 (success), 1 (infeasible / nothing
found), 2 (input error), 3 (numerical failure)."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from . import gallery, kstage, maxflow, reduction, stationary
from .errors import (
    DecodeError,
    DomainError,
    GasnetError,
    NoFeasiblePoint,
    NonConvergence,
    SchemaError,
    SizeLimit,
    ValidationError,
    ZeroFlow,
)
from .network import parse_network, serialize_network

INPUT_ERRORS = (SchemaError, ValidationError, DomainError, SizeLimit,
                DecodeError, OSError, UnicodeDecodeError)
NUMERIC_ERRORS = (NonConvergence, ZeroFlow, NoFeasiblePoint, ArithmeticError)


@dataclass(frozen=True)
class CommandResult:
    exit_code: int
    payload: Optional[dict]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gasnet")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve-stationary")
    sp.add_argument("--net", required=True)
    sp.add_argument("--tol", type=float, default=1e-9)

    sp = sub.add_parser("max-st-flow")
    sp.add_argument("--net", required=True)
    sp.add_argument("--source", required=True)
    sp.add_argument("--sink", required=True)

    sp = sub.add_parser("verify-kstage")
    sp.add_argument("--net", required=True)
    sp.add_argument("--stages", required=True)
    sp.add_argument("--tol", type=float, default=1e-9)

    sp = sub.add_parser("search-kstage")
    sp.add_argument("--net", required=True)
    sp.add_argument("--source", required=True)
    sp.add_argument("--sink", required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--budget", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)

    sp = sub.add_parser("search-bflow")
    sp.add_argument("--net", required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--budget", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)

    sp = sub.add_parser("gen")
    sp.add_argument("--which", required=True,
                    choices=["example1", "example2", "example3", "serial", "x3c-demo"])
    sp.add_argument("--q", type=int, default=4)
    sp.add_argument("--eps", type=float, default=0.25)
    sp.add_argument("--ell", type=int, default=2)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("reduce-x3c")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("check-x3c")
    sp.add_argument("--in", dest="infile", required=True)

    sp = sub.add_parser("decode-cover")
    sp.add_argument("--reduced", required=True)
    sp.add_argument("--stages", required=True)

    sp = sub.add_parser("profile")
    sp.add_argument("--net", required=True)
    sp.add_argument("--stages", required=True)
    sp.add_argument("--out", required=True)

    return p


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write(path: Path, text: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return str(path)


def _parse_x3c(text: str) -> reduction.X3CInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "elements" not in doc or "triples" not in doc:
        raise SchemaError("expected an object with 'elements' and 'triples'")
    return reduction.make_x3c(doc["elements"], doc["triples"])


def _x3c_to_dict(inst: reduction.X3CInstance) -> dict:
    return {"elements": list(inst.ground_set),
            "triples": [list(t) for t in inst.triples]}


def _decode_map(red: reduction.ReducedInstance) -> dict:
    return {
        "decision_nodes": {str(j): n for j, n in red.decision_nodes.items()},
        "element_nodes": {x: list(pair) for x, pair in red.element_nodes.items()},
        "x3c": _x3c_to_dict(red.instance),
    }


def _load_reduced(directory: str) -> reduction.ReducedInstance:
    root = Path(directory)
    net = parse_network(_read(str(root / "network.json")))
    doc = json.loads(_read(str(root / "decode_map.json")))
    inst = reduction.make_x3c(doc["x3c"]["elements"], doc["x3c"]["triples"])
    return reduction.ReducedInstance(
        network=net,
        decision_nodes={int(j): n for j, n in doc["decision_nodes"].items()},
        element_nodes={x: tuple(v) for x, v in doc["element_nodes"].items()},
        target_b=dict(net.balances),
        instance=inst,
    )


def _cmd_gen(args) -> CommandResult:
    out = Path(args.out)
    written: List[str] = []
    if args.which == "example1":
        net, stages = gallery.gen_example1()
        written.append(_write(out / "example1.network.json", serialize_network(net)))
        doc = kstage.stages_to_dict(stages, net.balances)
        written.append(_write(out / "example1.stages.json", json.dumps(doc, indent=2)))
    elif args.which == "example2":
        net = gallery.gen_example2()
        stages = gallery.gen_example2_instationary()
        written.append(_write(out / "example2.network.json", serialize_network(net)))
        doc = kstage.stages_to_dict(stages, net.balances)
        written.append(_write(out / "example2.stages.json", json.dumps(doc, indent=2)))
    elif args.which == "serial":
        net = gallery.gen_serial(args.ell)
        stages = gallery.serial_instationary_stages(args.ell)
        written.append(_write(out / "serial.network.json", serialize_network(net)))
        doc = kstage.stages_to_dict(stages, net.balances)
        written.append(_write(out / "serial.stages.json", json.dumps(doc, indent=2)))
    elif args.which == "example3":
        params = gallery.Example3Params(q=args.q, epsilon=args.eps)
        net, pi_stat, stage_pis = gallery.gen_example3(params)
        written.append(_write(out / "example3.network.json", serialize_network(net)))
        half = {v: 0.5 * b for v, b in net.balances.items()}
        doc = kstage.stages_to_dict([pi_stat], half)
        written.append(_write(out / "example3.stationary.json", json.dumps(doc, indent=2)))
        doc = kstage.stages_to_dict(stage_pis, net.balances)
        written.append(_write(out / "example3.stages.json", json.dumps(doc, indent=2)))
    else:  # x3c-demo
        inst = reduction.make_x3c(
            ["1", "2", "3", "4", "5", "6"],
            [["1", "2", "3"], ["4", "5", "6"], ["1", "4", "5"]])
        red = reduction.reduce_x3c(inst)
        cover = reduction.solve_x3c_bruteforce(inst)
        witness = reduction.encode_cover(red, cover)
        written.append(_write(out / "x3c.json", json.dumps(_x3c_to_dict(inst), indent=2)))
        written.append(_write(out / "network.json", serialize_network(red.network)))
        written.append(_write(out / "decode_map.json",
                              json.dumps(_decode_map(red), indent=2)))
        doc = kstage.stages_to_dict(witness, red.target_b)
        written.append(_write(out / "witness.stages.json", json.dumps(doc, indent=2)))
    return CommandResult(0, {"written": written})


def _run_parsed(args) -> CommandResult:
    if args.command == "solve-stationary":
        net = parse_network(_read(args.net))
        cfg = stationary.SolverConfig(balance_tol=args.tol)
        sol = stationary.solve_b_flow(net, cfg=cfg)
        return CommandResult(0, stationary.solution_to_dict(sol))

    if args.command == "max-st-flow":
        net = parse_network(_read(args.net))
        res = maxflow.max_stationary_st_flow(net, args.source, args.sink)
        return CommandResult(0, maxflow.result_to_dict(res))

    if args.command == "verify-kstage":
        net = parse_network(_read(args.net))
        stages, target = kstage.parse_stages(_read(args.stages))
        report = kstage.verify_kstage(net, stages, target_b=target, tol=args.tol)
        payload = {
            "feasible": report.feasible,
            "max_balance_error": report.max_balance_error,
            "max_bound_violation": report.max_bound_violation,
            "st_value": report.st_value,
            "is_stationary": report.is_stationary,
        }
        return CommandResult(0 if report.feasible else 1, payload)

    if args.command == "search-kstage":
        net = parse_network(_read(args.net))
        value, stages = kstage.search_kstage_max_st(
            net, args.source, args.sink, args.k, args.budget, args.seed)
        payload = {"value": value, "source": args.source, "sink": args.sink}
        payload.update(kstage.stages_to_dict(stages))
        return CommandResult(0, payload)

    if args.command == "search-bflow":
        net = parse_network(_read(args.net))
        stages = kstage.search_kstage_b_feasible(
            net, net.balances, args.k, args.budget, args.seed)
        if stages is None:
            return CommandResult(1, {"found": False})
        payload = {"found": True}
        payload.update(kstage.stages_to_dict(stages, net.balances))
        return CommandResult(0, payload)

    if args.command == "gen":
        return _cmd_gen(args)

    if args.command == "reduce-x3c":
        inst = _parse_x3c(_read(args.infile))
        red = reduction.reduce_x3c(inst)
        out = Path(args.out)
        written = [
            _write(out / "network.json", serialize_network(red.network)),
            _write(out / "decode_map.json", json.dumps(_decode_map(red), indent=2)),
        ]
        return CommandResult(0, {"written": written})

    if args.command == "check-x3c":
        inst = _parse_x3c(_read(args.infile))
        cover = reduction.solve_x3c_bruteforce(inst)
        if cover is None:
            return CommandResult(1, {"cover": None})
        return CommandResult(0, {"cover": [list(t) for t in cover]})

    if args.command == "decode-cover":
        red = _load_reduced(args.reduced)
        stages, _ = kstage.parse_stages(_read(args.stages))
        cover = reduction.decode_cover(red, stages)
        if cover is None:
            return CommandResult(1, {"cover": None})
        return CommandResult(0, {"cover": [list(t) for t in cover]})

    if args.command == "profile":
        net = parse_network(_read(args.net))
        stages, _ = kstage.parse_stages(_read(args.stages))
        rows = []
        for idx, pi in enumerate(stages, start=1):
            for node in net.nodes:
                if node not in pi:
                    raise SchemaError(f"stage {idx} misses node {node!r}")
                rows.append((node, idx, pi[node]))
        rows.sort(key=lambda r: (r[0], r[1]))
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node", "stage", "potential"])
            writer.writerows(rows)
        return CommandResult(0, {"rows": len(rows), "out": str(path)})

    raise SchemaError(f"unknown command {args.command!r}")  # unreachable


def run(argv: List[str]) -> CommandResult:
    """Dispatch one command; deterministic given inputs and --seed."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 2
        return CommandResult(2 if code != 0 else 0, None)
    try:
        return _run_parsed(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CommandResult(2, None)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return CommandResult(3, None)
    except GasnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CommandResult(2, None)


def main(argv: Optional[List[str]] = None) -> int:
    result = run(sys.argv[1:] if argv is None else argv)
    if result.payload is not None:
        print(json.dumps(result.payload, indent=2, sort_keys=True))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
