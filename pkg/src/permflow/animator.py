"""Run an encoded program under a scheduler and report the permission flow."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from .encoder import LccProgram, encode_program
from .lcc import (
    Choice, Configuration, Randomized, RoundRobin, RunResult, TraceEvent, initial_configuration,
    initial_events, render_killed, run_scheduled,
)
from .store import NIL, Name, ObjId, Store, Term
from .syntax import SourceProgram

SCHEMA_VERSION = 1
FAIL_LINE = "[FAIL] Token ok not found. End of the program not reached."


@dataclass(frozen=True)
class Binding:
    obj: Term
    perm: Term
    group: Term
    ct: Optional[int]

    def as_dict(self) -> dict:
        return {"object": str(self.obj), "permission": str(self.perm),
                "group": str(self.group), "ct": self.ct}


@dataclass
class TraceReport:
    events: list
    final_bindings: dict
    status: str
    process_count: int
    killed: list
    steps: int = 0
    final: Optional[Configuration] = field(default=None, repr=False)
    schedule: list = field(default_factory=list, repr=False)

    def text(self) -> str:
        out = [e.render() for e in self.events]
        if self.status == "quiescentOk":
            out.append("")
            for name, b in self.final_bindings.items():
                if b.obj == NIL:
                    out.append(f"[ref({name},nil,none,{b.group})]")
                else:
                    out.append(f"[ref({name},{b.obj},{b.perm},{b.group}), ct({b.obj},{b.ct})]")
            out.append("ok()")
            out.append(f"{self.process_count} processes Created")
            return "\n".join(out) + "\n"
        out.extend(self.killed)
        out.append(f"{self.process_count} processes Created")
        if self.status == "stepLimit":
            out.append(f"[FAIL] Step limit reached after {self.steps} steps.")
        else:
            out.append(FAIL_LINE)
        out.append("")
        out.append("VARIABLES")
        for name, b in self.final_bindings.items():
            grp = b.group if str(b.perm) == "shr" else "ng"
            out.append(f"{name} -> {b.obj}. {b.perm}:{grp}")
        return "\n".join(out) + "\n"

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "events": [{"kind": e.kind, "text": e.render(), "step": e.step} for e in self.events],
            "finalBindings": {k: b.as_dict() for k, b in self.final_bindings.items()},
            "status": self.status,
            "processCount": self.process_count,
            "killed": list(self.killed),
        }

    def json_text(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _serial(t: Term) -> int:
    if isinstance(t, Name):
        tail = t.name.rsplit("_", 1)[-1]
        return int(tail) if tail.isdigit() else 0
    return 0


def final_bindings(s: Store) -> dict:
    """Every non-field variable still holding a ref, in creation order."""
    cells = {a.args[0] for a in s.banged if a.pred == "field"}
    counts = {a.args[0]: a.args[1].n for a in s.linear if a.pred == "ct"}
    rows = []
    for a in s.linear_atoms():
        if a.pred != "ref" or a.args[0] in cells:
            continue
        x, o, p, g = a.args
        rows.append((x, Binding(o, p, g, counts.get(o) if isinstance(o, ObjId) else None)))
    rows.sort(key=lambda r: (_serial(r[0]), str(r[0])))
    return {str(x): b for x, b in rows}


def report_stuck(c: Configuration) -> list[str]:
    if any(a.pred == "ok" for a in c.store.linear) or any(a.pred == "ok" for a in c.store.banged):
        return []
    return [render_killed(p) for p in c.agents if isinstance(p, Choice)]


def animate_lcc(lp: LccProgram, policy=None, max_steps: int = 100000,
                observer: Optional[Callable] = None) -> TraceReport:
    main, defs = lp.desugared()
    c = initial_configuration(main)
    r: RunResult = run_scheduled(c, defs, policy or RoundRobin(), max_steps, observer,
                                 initial=initial_events(main))
    events = [e for e in r.events if e.kind != "killed"]
    killed = [e.render() for e in r.events if e.kind == "killed"]
    if r.status == "stepLimit":
        killed = []
    return TraceReport(events, final_bindings(r.final.store), r.status, r.final.created, killed,
                       r.steps, r.final, r.schedule)


def animate(prog: SourceProgram, policy: str = "rr", seed: Optional[int] = None,
            max_steps: int = 100000, observer: Optional[Callable] = None) -> TraceReport:
    """Encode and run a program; a seed selects the randomized scheduler."""
    if seed is not None or policy == "random":
        pol = Randomized(seed or 0)
    else:
        pol = RoundRobin()
    return animate_lcc(encode_program(prog), pol, max_steps, observer)
