"""lcc agents: process terms, sequential-composition desugaring, transitions and scheduling."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

from .store import (
    Atom, Const, Guard, Match, Name, Nat, ObjId, Store, Succ, Term, Var,
    instantiate, match_guard, tell_atoms,
)


# ---------------------------------------------------------------------------
# Process terms

def _atom_vars(a: Atom) -> set:
    out = set()
    for t in a.args:
        while isinstance(t, Succ):
            t = t.inner
        if isinstance(t, Var):
            out.add(t)
    return out


class Process:
    __slots__ = ()

    @property
    def fv(self) -> frozenset:
        raise NotImplementedError


@dataclass(frozen=True)
class Tell(Process):
    items: tuple  # of (Atom, banged)

    @cached_property
    def fv(self) -> frozenset:
        out = set()
        for a, _ in self.items:
            out |= _atom_vars(a)
        return frozenset(out)


@dataclass(frozen=True)
class Branch:
    vars: tuple
    guard: tuple  # of Atom
    body: Process

    @cached_property
    def as_guard(self) -> Guard:
        return Guard(self.guard, frozenset(self.vars))

    @cached_property
    def fv(self) -> frozenset:
        out = set(self.body.fv)
        for a in self.guard:
            out |= _atom_vars(a)
        return frozenset(out - set(self.vars))


@dataclass(frozen=True)
class Choice(Process):
    branches: tuple

    def __post_init__(self):
        if not self.branches:
            raise ValueError("a choice needs at least one branch")

    @cached_property
    def fv(self) -> frozenset:
        out = frozenset()
        for b in self.branches:
            out |= b.fv
        return out


@dataclass(frozen=True)
class Par(Process):
    procs: tuple

    @cached_property
    def fv(self) -> frozenset:
        out = frozenset()
        for p in self.procs:
            out |= p.fv
        return out


@dataclass(frozen=True)
class Local(Process):
    vars: tuple
    body: Process

    @cached_property
    def fv(self) -> frozenset:
        return self.body.fv - set(self.vars)


@dataclass(frozen=True)
class Call(Process):
    name: str
    args: tuple

    @cached_property
    def fv(self) -> frozenset:
        return frozenset(t for t in self.args if isinstance(t, Var))


@dataclass(frozen=True)
class Seq(Process):
    first: Process
    second: Process

    @cached_property
    def fv(self) -> frozenset:
        return self.first.fv | self.second.fv


@dataclass(frozen=True)
class ProcessDef:
    name: str
    params: tuple
    body: Process


# small constructors used by the encoder and tests

def tell(*atoms: Atom, banged: Iterable[Atom] = ()) -> Tell:
    return Tell(tuple((a, False) for a in atoms) + tuple((a, True) for a in banged))


def ask(guard: Sequence[Atom], body: Process, bound: Iterable[Var] = ()) -> Choice:
    return Choice((Branch(tuple(bound), tuple(guard), body),))


def choice(*branches: tuple) -> Choice:
    return Choice(tuple(Branch(tuple(v), tuple(g), b) for v, g, b in branches))


def par(*procs: Process) -> Process:
    flat = []
    for p in procs:
        if isinstance(p, Par):
            flat.extend(p.procs)
        elif not (isinstance(p, Tell) and not p.items):
            flat.append(p)
    if len(flat) == 1:
        return flat[0]
    return Par(tuple(flat))


def seq(*procs: Process) -> Process:
    out = procs[-1]
    for p in reversed(procs[:-1]):
        out = Seq(p, out)
    return out


ONE = Tell(())


def sync(z: Term) -> Atom:
    return Atom("sync", (z,))


# ---------------------------------------------------------------------------
# Substitution

def substitute(p: Process, m: dict) -> Process:
    """Replace free variables of p according to m (no capture: images are ground)."""
    if not m or not (p.fv & m.keys()):
        return p
    if isinstance(p, Tell):
        return Tell(tuple((instantiate(a, m), b) for a, b in p.items))
    if isinstance(p, Choice):
        return Choice(tuple(_subst_branch(b, m) for b in p.branches))
    if isinstance(p, Par):
        return Par(tuple(substitute(q, m) for q in p.procs))
    if isinstance(p, Local):
        inner = {k: v for k, v in m.items() if k not in p.vars}
        return Local(p.vars, substitute(p.body, inner))
    if isinstance(p, Call):
        return Call(p.name, tuple(m.get(t, t) if isinstance(t, Var) else t for t in p.args))
    if isinstance(p, Seq):
        return Seq(substitute(p.first, m), substitute(p.second, m))
    raise TypeError(p)


def _subst_branch(b: Branch, m: dict) -> Branch:
    if not (b.fv & m.keys()):
        return b
    inner = {k: v for k, v in m.items() if k not in b.vars}
    return Branch(b.vars, tuple(instantiate(a, inner) for a in b.guard), substitute(b.body, inner))


# ---------------------------------------------------------------------------
# Desugaring of sequential composition

class _Fresh:
    def __init__(self, base: str = "w"):
        self.base = base
        self.n = 0

    def __call__(self) -> Var:
        self.n += 1
        return Var(f"{self.base}#{self.n}")


def _c(p: Process, z: Term, fresh: _Fresh) -> Process:
    """C[[p]]_z: p extended to signal sync(z) on termination."""
    if isinstance(p, Tell):
        return Tell(p.items + ((sync(z), False),))
    if isinstance(p, Choice):
        return Choice(tuple(Branch(b.vars, b.guard, _c(b.body, z, fresh)) for b in p.branches))
    if isinstance(p, Local):
        return Local(p.vars, _c(p.body, z, fresh))
    if isinstance(p, Call):
        return Call(p.name, p.args + (z,))
    if isinstance(p, Par):
        if not p.procs:
            return Tell(((sync(z), False),))
        if len(p.procs) == 1:
            return _c(p.procs[0], z, fresh)
        ws = tuple(fresh() for _ in p.procs)
        parts = tuple(_c(q, w, fresh) for q, w in zip(p.procs, ws))
        collector = ask([sync(w) for w in ws], Tell(((sync(z), False),)))
        return Local(ws, Par(parts + (collector,)))
    if isinstance(p, Seq):
        w = fresh()
        return Local((w,), Par((_c(p.first, w, fresh), ask([sync(w)], _c(p.second, z, fresh)))))
    raise TypeError(p)


def _d(p: Process, fresh: _Fresh) -> Process:
    """Remove Seq nodes from a process that owes no termination signal."""
    if isinstance(p, Tell):
        return p
    if isinstance(p, Choice):
        return Choice(tuple(Branch(b.vars, b.guard, _d(b.body, fresh)) for b in p.branches))
    if isinstance(p, Local):
        return Local(p.vars, _d(p.body, fresh))
    if isinstance(p, Par):
        return Par(tuple(_d(q, fresh) for q in p.procs))
    if isinstance(p, Call):
        w = fresh()
        return Local((w,), Call(p.name, p.args + (w,)))
    if isinstance(p, Seq):
        w = fresh()
        return Local((w,), Par((_c(p.first, w, fresh), ask([sync(w)], _d(p.second, fresh)))))
    raise TypeError(p)


def desugar(p: Process, defs: Iterable[ProcessDef]) -> tuple[Process, list[ProcessDef]]:
    """Eliminate Seq. Every definition gains a trailing synchronization parameter."""
    fresh = _Fresh()
    out_defs = []
    for d in defs:
        k = Var("k#")
        out_defs.append(ProcessDef(d.name, d.params + (k,), _c(d.body, k, fresh)))
    return _d(p, fresh), out_defs


def has_seq(p: Process) -> bool:
    if isinstance(p, Seq):
        return True
    if isinstance(p, Choice):
        return any(has_seq(b.body) for b in p.branches)
    if isinstance(p, Par):
        return any(has_seq(q) for q in p.procs)
    if isinstance(p, Local):
        return has_seq(p.body)
    return False


# ---------------------------------------------------------------------------
# Configurations and events

@dataclass(frozen=True)
class TraceEvent:
    kind: str  # act | run | end | tell | killed
    payload: object
    step: int

    def render(self) -> str:
        if self.kind in ("act", "run", "end"):
            return render_witness(self.payload)
        if self.kind == "killed":
            return str(self.payload)
        return str(self.payload)


def render_witness(a: Atom) -> str:
    caller, label, line, z = a.args
    ln = line.n if isinstance(line, Nat) else line
    return f"{a.pred}({caller},{label},line_{ln} ({z}))"


WITNESS_PREDS = ("act", "run", "end")
# structural witnesses (blocks, splits, group declarations) carry no user-visible event
SILENT_LABELS = frozenset({Const("block"), Const("group")})


@dataclass(frozen=True)
class Configuration:
    hidden: frozenset
    agents: tuple
    store: Store
    serial: int = 0
    created: int = field(default=0, compare=False)


def _fresh_name(v: Var, serial: int) -> Term:
    base = v.name.split("#", 1)[0]
    if base.startswith("o_new"):
        return ObjId(serial)
    return Name(f"{base.upper()}_{serial}")


class _Builder:
    """Mutable scratch state for one transition."""

    def __init__(self, c: Configuration, step: int):
        self.hidden = c.hidden
        self.store = c.store
        self.serial = c.serial
        self.created = c.created
        self.events: list[TraceEvent] = []
        self.step = step

    def tell(self, items) -> None:
        for a, banged in items:
            if a.pred in WITNESS_PREDS and a.args[1] not in SILENT_LABELS:
                if not (banged and a in self.store.banged):
                    self.events.append(TraceEvent(a.pred, a, self.step))
        self.store = tell_atoms(self.store, items)

    def open(self, p: Local) -> Process:
        m = {}
        hidden = set(self.hidden)
        for v in p.vars:
            self.serial += 1
            t = _fresh_name(v, self.serial)
            m[v] = t
            hidden.add(t)
        self.hidden = frozenset(hidden)
        return substitute(p.body, m)

    def normalize(self, procs: Iterable[Process]) -> list[Process]:
        """Apply tells, open scopes and flatten parallels; return the residual agents."""
        out = []
        stack = list(reversed(list(procs)))
        while stack:
            p = stack.pop()
            self.created += 1
            if isinstance(p, Tell):
                self.tell(p.items)
            elif isinstance(p, Par):
                stack.extend(reversed(p.procs))
            elif isinstance(p, Local):
                stack.append(self.open(p))
            elif isinstance(p, (Choice, Call)):
                out.append(p)
            else:
                raise TypeError(f"unexpected process {p!r}")
        return out

    def config(self, agents) -> Configuration:
        return Configuration(self.hidden, tuple(agents), self.store, self.serial, self.created)


def initial_configuration(main: Process) -> Configuration:
    b = _Builder(Configuration(frozenset(), (), Store()), 0)
    agents = b.normalize([main])
    return b.config(agents)


def initial_events(main: Process) -> list[TraceEvent]:
    b = _Builder(Configuration(frozenset(), (), Store()), 0)
    b.normalize([main])
    return b.events


def is_normalized(c: Configuration) -> bool:
    return all(isinstance(p, (Choice, Call)) for p in c.agents)


@dataclass(frozen=True)
class Transition:
    agent: int
    kind: str  # tell | local | par | call | choice
    branch: int
    match: int
    target: Configuration
    events: tuple
    phase: int  # 1 for positive actions (choice, call), 0 otherwise
    match_obj: Optional[Match] = None


def unfold(p: Call, defs: dict) -> Process:
    d = defs.get(p.name)
    if d is None:
        raise KeyError(f"call to unknown definition {p.name}")
    if len(d.params) != len(p.args):
        raise ValueError(f"{p.name} expects {len(d.params)} arguments, got {len(p.args)}")
    return substitute(d.body, dict(zip(d.params, p.args)))


def _rest(c: Configuration, i: int) -> list:
    return list(c.agents[:i]) + list(c.agents[i + 1:])


def fire_agent(c: Configuration, i: int, defs: dict, step: int = 0,
               first_only: bool = False) -> list[Transition]:
    """All transitions of agent i (or only the first one, for schedulers)."""
    p = c.agents[i]
    out = []
    if isinstance(p, Choice):
        for bi, br in enumerate(p.branches):
            for mi, m in enumerate(match_guard(c.store, br.as_guard)):
                b = _Builder(c, step)
                b.store = m.residual
                new = b.normalize([substitute(br.body, m.subst)])
                out.append(Transition(i, "choice", bi, mi, b.config(_rest(c, i) + new),
                                      tuple(b.events), 1, m))
                if first_only:
                    return out
        return out
    b = _Builder(c, step)
    if isinstance(p, Call):
        new = b.normalize([unfold(p, defs)])
        out.append(Transition(i, "call", 0, 0, b.config(_rest(c, i) + new), tuple(b.events), 1))
    elif isinstance(p, Tell):
        b.tell(p.items)
        out.append(Transition(i, "tell", 0, 0, b.config(_rest(c, i)), tuple(b.events), 0))
    elif isinstance(p, Local):
        body = b.open(p)
        out.append(Transition(i, "local", 0, 0, b.config(_rest(c, i) + [body]), (), 0))
    elif isinstance(p, Par):
        out.append(Transition(i, "par", 0, 0, b.config(_rest(c, i) + list(p.procs)), (), 0))
    else:
        raise TypeError(p)
    return out


def enabled_transitions(c: Configuration, defs) -> list[Transition]:
    """Every successor of c, one per agent action and per (branch, match) pair."""
    defs = defs if isinstance(defs, dict) else {d.name: d for d in defs}
    out = []
    for i in range(len(c.agents)):
        out.extend(fire_agent(c, i, defs))
    return out


# ---------------------------------------------------------------------------
# Rendering

def _render_term(t: Term, bound: frozenset) -> str:
    if isinstance(t, Var):
        base, _, k = t.name.partition("#")
        return f"{base.upper()}_{k}" if k else base.upper()
    if isinstance(t, Succ):
        return f"s({_render_term(t.inner, bound)})"
    return str(t)


def render_atom_pattern(a: Atom, bound: frozenset = frozenset()) -> str:
    if a.pred in WITNESS_PREDS and len(a.args) == 4 and not isinstance(a.args[2], Var):
        caller, label, line, z = (_render_term(t, bound) for t in a.args)
        return f"{a.pred}({caller},{label},line_{line} ({z}))"
    return f"{a.pred}({','.join(_render_term(t, bound) for t in a.args)})"


def render_guard(br: Branch) -> str:
    if not br.guard:
        return "1"
    return " * ".join(render_atom_pattern(a, frozenset(br.vars)) for a in br.guard)


def render_killed(p: Process) -> str:
    if isinstance(p, Choice):
        return "[Killed] " + " + ".join(f"ask {render_guard(b)} then ..." for b in p.branches)
    if isinstance(p, Call):
        return f"[Killed] call {p.name}({','.join(str(t) for t in p.args)})"
    return f"[Killed] {type(p).__name__.lower()}"


def render_process(p: Process, indent: int = 0) -> str:
    """Textual lcc: ltell, ask ... then, par, local, calls."""
    pad = "  " * indent
    if isinstance(p, Tell):
        if not p.items:
            return pad + "ltell 1"
        return pad + "ltell " + " * ".join(("!" if b else "") + render_atom_pattern(a) for a, b in p.items)
    if isinstance(p, Choice):
        lines = []
        for k, b in enumerate(p.branches):
            q = f"forall {','.join(_render_term(v, frozenset()) for v in b.vars)} " if b.vars else ""
            lead = pad + ("+ " if k else "")
            lines.append(f"{lead}{q}ask {render_guard(b)} then")
            lines.append(render_process(b.body, indent + 2))
        return "\n".join(lines)
    if isinstance(p, Par):
        if not p.procs:
            return pad + "ltell 1"
        return pad + "par\n" + "\n".join(render_process(q, indent + 1) for q in p.procs) + "\n" + pad + "end"
    if isinstance(p, Local):
        vs = ",".join(_render_term(v, frozenset()) for v in p.vars)
        return pad + f"local {vs} in\n" + render_process(p.body, indent + 1)
    if isinstance(p, Call):
        return pad + f"{p.name}({','.join(_render_term(t, frozenset()) for t in p.args)})"
    if isinstance(p, Seq):
        return render_process(p.first, indent) + " ;\n" + render_process(p.second, indent)
    raise TypeError(p)


def render_def(d: ProcessDef) -> str:
    ps = ",".join(_render_term(v, frozenset()) for v in d.params)
    return f"{d.name}({ps}) :=\n{render_process(d.body, 1)}"


# ---------------------------------------------------------------------------
# Scheduling

@dataclass(frozen=True)
class RoundRobin:
    pass


@dataclass(frozen=True)
class Randomized:
    seed: int


@dataclass
class RunResult:
    final: Configuration
    events: list
    status: str  # quiescentOk | quiescentStuck | stepLimit
    steps: int
    schedule: list  # (agent index, branch, match) per step


OK = Atom("ok", ())


def has_ok(s: Store) -> bool:
    return s.count(OK) > 0 or OK in s.banged


def run_scheduled(c: Configuration, defs, policy=RoundRobin(), max_steps: int = 100000,
                  observer=None, initial: Iterable[TraceEvent] = ()) -> RunResult:
    """Repeatedly fire one enabled agent chosen by the policy until quiescence or the step limit."""
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    defs = defs if isinstance(defs, dict) else {d.name: d for d in defs}
    events = list(initial)
    schedule = []
    rng = random.Random(policy.seed) if isinstance(policy, Randomized) else None
    pos = 0
    steps = 0
    if observer is not None:
        observer(c, None)
    while True:
        n = len(c.agents)
        chosen: Optional[Transition] = None
        if n:
            if rng is None:
                for k in range(n):
                    i = (pos + k) % n
                    ts = fire_agent(c, i, defs, steps + 1, first_only=True)
                    if ts:
                        chosen = ts[0]
                        break
            else:
                order = list(range(n))
                rng.shuffle(order)
                for i in order:
                    ts = fire_agent(c, i, defs, steps + 1, first_only=True)
                    if ts:
                        chosen = ts[0]
                        break
        if chosen is None:
            status = "quiescentOk" if has_ok(c.store) else "quiescentStuck"
            if status == "quiescentStuck":
                events.extend(TraceEvent("killed", render_killed(p), steps) for p in c.agents)
            return RunResult(c, events, status, steps, schedule)
        if steps >= max_steps:
            return RunResult(c, events, "stepLimit", steps, schedule)
        steps += 1
        schedule.append((chosen.agent, chosen.branch, chosen.match))
        c = chosen.target
        events.extend(chosen.events)
        pos = chosen.agent
        if observer is not None:
            observer(c, chosen)


def replay(c: Configuration, defs, schedule) -> Configuration:
    """Re-run a recorded schedule of (agent, branch, match) choices."""
    defs = defs if isinstance(defs, dict) else {d.name: d for d in defs}
    for i, bi, mi in schedule:
        ts = [t for t in fire_agent(c, i, defs) if t.branch == bi and t.match == mi]
        if not ts:
            raise ValueError(f"schedule step ({i},{bi},{mi}) is not enabled")
        c = ts[0].target
    return c
