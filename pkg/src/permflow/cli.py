"""Command-line entry point: permflow <command> FILE [options]."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from . import syntax
from .animator import animate
from .encoder import encode_program
from .ill import comp, render_ill, theory, to_ill
from .lcc import render_def, render_process
from .verifier import (
    DEFAULT_BUDGET, HarnessError, Inconclusive, check_concurrent, check_deadlock, check_method,
    parse_goal, prove_reachable,
)

GOAL_HELP = """goal syntax for --reachable: comma-separated atoms, every `_` an
independent existential, numbers are line numbers or counts, `ng` is the
no-group marker, other words are constants.  Example:
  permflow verify deadlock.ap --reachable 'end(_,collection_compStats,15,_)'"""


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="permflow", epilog=GOAL_HELP,
                                 formatter_class=argparse.RawDescriptionHelpFormatter,
                                 description="Permission-flow analysis of access-permission annotated programs.")
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("path")
        p.add_argument("--json", action="store_true", help="emit one JSON object")
        return p

    cmd("parse", "check the program and print diagnostics")
    a = cmd("animate", "run the encoded program under a scheduler")
    a.add_argument("--seed", type=int, help="randomized scheduler with this seed")
    a.add_argument("--policy", choices=["rr", "random"], default="rr")
    a.add_argument("--max-steps", type=int, default=100000)
    v = cmd("verify", "decide reachability questions about the program")
    g = v.add_mutually_exclusive_group(required=True)
    g.add_argument("--deadlock", action="store_true", help="is ok() reachable?")
    g.add_argument("--concurrent", nargs=2, type=int, metavar=("A", "B"),
                   help="can the statements on lines A and B run at the same time?")
    g.add_argument("--method", metavar="CLASS.MEMBER", help="can the member run to completion?")
    g.add_argument("--reachable", metavar="GOAL", help="is a store entailing GOAL reachable?")
    v.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="state budget")
    cmd("emit-lcc", "print the lcc encoding")
    cmd("emit-ill", "print the linear logic theory and main formula")
    cmd("depth", "print comp(main) and the verifier depth bound")
    return ap


def _load(path: str):
    try:
        prog = syntax.parse_file(path)
    except syntax.ParseError as e:
        return None, [str(e)]
    except OSError as e:
        return None, [f"{path}: {e.strerror}"]
    return prog, [d.format(path) for d in syntax.validate_program(prog)]


def _emit(obj, as_json: bool, text: str) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n" if as_json else text)


def main(argv: Optional[list] = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2
    prog, diags = _load(args.path)
    if args.command == "parse" or diags:
        _emit({"schema": 1, "diagnostics": diags}, args.json,
              "".join(d + "\n" for d in diags) or "ok\n")
        return 1 if diags else 0

    if args.command == "animate":
        seed = args.seed if args.seed is not None else (0 if args.policy == "random" else None)
        r = animate(prog, seed=seed, max_steps=args.max_steps)
        _emit(r.to_json(), args.json, r.text())
        return 0 if r.status == "quiescentOk" else 1

    if args.command == "verify":
        try:
            if args.deadlock:
                v = check_deadlock(prog, args.budget)
            elif args.concurrent:
                v = check_concurrent(prog, *args.concurrent, budget=args.budget)
            elif args.method:
                cls, _, member = args.method.partition(".")
                v = check_method(prog, cls, member, args.budget)
            else:
                v = prove_reachable(prog, parse_goal(args.reachable), args.budget)
        except (ValueError, HarnessError) as e:
            sys.stderr.write(f"permflow: {e}\n")
            return 2
        except Inconclusive as e:
            _emit({"schema": 1, "answer": "Inconclusive", "statesExplored": e.states_explored},
                  args.json, f"INCONCLUSIVE\n{e}\n")
            return 3
        text = v.text()
        if args.deadlock:
            text = ("DEADLOCK FREE\n" if v.provable else
                    "DEADLOCK\n[FAIL] Token ok not found. End of the program not reached.\n") + text
        _emit(v.to_json(), args.json, text)
        return 0 if v.provable else 1

    lp = encode_program(prog)
    main_p, defs = lp.desugared()
    if args.command == "emit-lcc":
        text = "".join(render_def(d) + "\n\n" for d in lp.defs) + "main :=\n" + render_process(lp.main, 1) + "\n"
        _emit({"schema": 1, "defs": [render_def(d) for d in lp.defs], "main": render_process(lp.main)},
              args.json, text)
        return 0
    if args.command == "emit-ill":
        th = theory(defs.values())
        clauses = [render_ill(c) for c in th.clauses]
        goal = render_ill(to_ill(main_p))
        _emit({"schema": 1, "theory": clauses, "main": goal}, args.json,
              "".join(c + "\n" for c in clauses) + "\nmain: " + goal + "\n")
        return 0
    n = comp(main_p, defs)
    _emit({"schema": 1, "comp": n, "depthBound": n + 1}, args.json, f"{n}\n{n + 1}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
