"""Reachability checking over the encoded transition system.

States are explored breadth-first and deduplicated up to renaming of fresh
names. Every transition is one positive phase, so the search depth is
bounded by comp(main) + 1.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

from . import syntax as ast
from .encoder import LccProgram, encode_program
from .ill import comp
from .lcc import (
    Branch, Call, Choice, Configuration, Local, Par, Process, Randomized, RoundRobin, Tell, TraceEvent,
    fire_agent, initial_configuration, initial_events, replay, run_scheduled,
)
from .store import (
    Atom, Const, Guard, LabelTable, Name, Nat, ObjId, Succ, Term, Var, canonical_items_key, instantiate,
    match_guard,
)

DEFAULT_BUDGET = 1_000_000
PROBE_RUNS = 8
OK_GOAL = Guard((Atom("ok", ()),))


class Inconclusive(RuntimeError):
    def __init__(self, states: int, budget: int):
        super().__init__(f"state budget of {budget} exhausted after {states} states")
        self.states_explored = states
        self.budget = budget


class DepthExceeded(AssertionError):
    pass


@dataclass
class Verdict:
    answer: str  # Provable | NotProvable
    states_explored: int
    depth_bound: int
    comp_bound: int
    max_depth: int
    witness: Optional[list] = None
    events: list = field(default_factory=list)
    flagged_lines: list = field(default_factory=list)
    search: str = "exhaustive"  # or "probe" when a scheduled run found the witness

    @property
    def provable(self) -> bool:
        return self.answer == "Provable"

    def headline(self) -> str:
        return "PROVABLE" if self.provable else "NOT PROVABLE"

    def text(self) -> str:
        out = [self.headline(),
               f"states explored: {self.states_explored} ({self.search} search)",
               f"depth bound: {self.depth_bound} (comp {self.comp_bound}, deepest {self.max_depth})"]
        if self.provable:
            out.append(f"witness: {len(self.witness or [])} steps")
            out.extend("  " + e.render() for e in self.events)
        else:
            out.append("no reachable configuration within the depth bound entails the goal")
            out.extend(f"line {ln}: statement never completes" for ln in self.flagged_lines)
        return "\n".join(out) + "\n"

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "answer": self.answer,
            "statesExplored": self.states_explored,
            "depthBound": self.depth_bound,
            "comp": self.comp_bound,
            "maxDepth": self.max_depth,
            "search": self.search,
            "witness": [list(st) for st in self.witness] if self.witness else None,
            "events": [e.render() for e in self.events],
            "flaggedLines": list(self.flagged_lines),
        }


# -- canonical configuration keys ---------------------------------------------------

def _hidden(t: Term) -> bool:
    return isinstance(t, (Name, ObjId))


def _term_label(t: Term, names: list) -> str:
    if _hidden(t):
        names.append(t)
        return "_"
    return repr(t) if isinstance(t, Var) else str(t)


def _atom_label(a: Atom, names: list) -> str:
    return a.pred + "(" + ",".join(_term_label(t, names) for t in a.args) + ")"


def _shape(p: Process, names: list) -> str:
    if isinstance(p, Tell):
        return "T[" + ";".join(("!" if b else "") + _atom_label(a, names) for a, b in p.items) + "]"
    if isinstance(p, Choice):
        return "C[" + "|".join(_branch_shape(b, names) for b in p.branches) + "]"
    if isinstance(p, Par):
        return "P[" + ";".join(_shape(q, names) for q in p.procs) + "]"
    if isinstance(p, Local):
        return "L" + repr(p.vars) + "[" + _shape(p.body, names) + "]"
    if isinstance(p, Call):
        return p.name + "(" + ",".join(_term_label(t, names) for t in p.args) + ")"
    raise TypeError(p)


def _branch_shape(b: Branch, names: list) -> str:
    return repr(b.vars) + ":" + ";".join(_atom_label(a, names) for a in b.guard) + ">" + _shape(b.body, names)


class _ShapeCache:
    """Agent shapes keyed by object identity; agents are shared between successor states."""

    def __init__(self):
        self.table: dict[int, tuple] = {}
        self.labels = LabelTable()

    def item(self, p: Process) -> tuple:
        hit = self.table.get(id(p))
        if hit is not None and hit[0] is p:
            return hit[1]
        names: list = []
        lab = "A:" + _shape(p, names)
        it = (lab, tuple(names))
        self.table[id(p)] = (p, it)
        return it


def configuration_key(c: Configuration, cache: Optional[_ShapeCache] = None) -> bytes:
    cache = cache or _ShapeCache()
    items = []
    for a, k in c.store._lin.items():
        names: list = []
        items.append((f"L{k}:" + _atom_label(a, names), tuple(names)))
    for a in c.store._bang:
        names = []
        items.append(("B:" + _atom_label(a, names), tuple(names)))
    for p in c.agents:
        items.append(cache.item(p))
    return canonical_items_key(items, None, cache.labels, budget=1)


# -- exploration -------------------------------------------------------------------------

@dataclass
class _Search:
    found: Optional[bytes]
    states: int
    max_depth: int
    parents: dict
    ended_lines: set


# -- partial-order reduction ------------------------------------------------------------
#
# An agent whose only enabled transition consumes control atoms nobody else can
# ever ask for, and whose bound guard variables cannot gain new instances, commutes
# with every other transition and never removes goal atoms: it is fired alone.

_RESOURCE = frozenset({"ref", "ct"})


class _FreshName(Term):
    """Stands for a name a scope will create later; it equals nothing that exists now."""

    def __repr__(self) -> str:
        return "<fresh>"


FRESH = _FreshName()


def _compatible(a: Term, b: Term) -> bool:
    if isinstance(a, Var) or isinstance(b, Var):
        return True
    if a is FRESH or b is FRESH:
        return False
    if isinstance(a, Succ) or isinstance(b, Succ):
        return True
    return a == b


def _may_unify(p: Atom, q: Atom) -> bool:
    return p.pred == q.pred and len(p.args) == len(q.args) and all(
        _compatible(x, y) for x, y in zip(p.args, q.args))


def _mark(a: Atom, marks: dict) -> Atom:
    if not marks or not any(t in marks for t in a.args):
        return a
    return Atom(a.pred, tuple(marks.get(t, t) for t in a.args))


class _Footprints:
    """Every atom an agent (or anything it may spawn) could ask for or tell."""

    def __init__(self, defs: dict):
        self.defs = defs
        self.agents: dict[int, tuple] = {}
        self.templates: dict[str, tuple] = {}

    def of_def(self, name: str) -> tuple:
        if name not in self.templates:
            asks: list = []
            tells: list = []
            self.templates[name] = ((), ())
            self._walk(self.defs[name].body, asks, tells, {})
            self.templates[name] = (tuple(asks), tuple(tells))
        return self.templates[name]

    def _walk(self, p: Process, asks: list, tells: list, marks: dict) -> None:
        if isinstance(p, Tell):
            tells.extend(_mark(a, marks) for a, _ in p.items)
        elif isinstance(p, Choice):
            for b in p.branches:
                inner = {k: v for k, v in marks.items() if k not in b.vars}
                asks.extend(_mark(a, inner) for a in b.guard)
                self._walk(b.body, asks, tells, inner)
        elif isinstance(p, Par):
            for q in p.procs:
                self._walk(q, asks, tells, marks)
        elif isinstance(p, Local):
            self._walk(p.body, asks, tells, {**marks, **{v: FRESH for v in p.vars}})
        elif isinstance(p, Call):
            d = self.defs[p.name]
            m = {k: marks.get(v, v) for k, v in zip(d.params, p.args)}
            da, dt = self.of_def(p.name)
            asks.extend(_subst(a, m) for a in da)
            tells.extend(_subst(a, m) for a in dt)

    def of_agent(self, p: Process) -> tuple:
        hit = self.agents.get(id(p))
        if hit is not None and hit[0] is p:
            return hit[1]
        asks: list = []
        tells: list = []
        self._walk(p, asks, tells, {})
        fp = (tuple(a for a in asks if a.pred not in _RESOURCE),
              tuple(a for a in tells if a.pred not in _RESOURCE))
        self.agents[id(p)] = (p, fp)
        return fp


def _subst(a: Atom, m: dict) -> Atom:
    return Atom(a.pred, tuple(m.get(t, t) if isinstance(t, Var) else t for t in a.args))


def _private(c: Configuration, i: int, t, fps: _Footprints, goal_preds: frozenset, others) -> bool:
    p = c.agents[i]
    if len(p.branches) != 1:
        return False
    br = p.branches[0]
    if any(a.pred in _RESOURCE or a.pred in goal_preds for a in br.guard):
        return False
    asks, tells = others
    bound = set(br.vars)
    for g in br.guard:
        gi = instantiate(g, t.match_obj.subst)
        if c.store.count(gi) and gi not in c.store.banged:
            if any(j != i and _may_unify(a, gi) for j, a in asks.get(gi.pred, ())):
                return False
        if bound & set(g.args):
            if any(j != i and _may_unify(a, g) for j, a in tells.get(g.pred, ())):
                return False
    return True


def _by_pred(c: Configuration, fps: _Footprints) -> tuple:
    asks: dict = {}
    tells: dict = {}
    for j, q in enumerate(c.agents):
        qa, qt = fps.of_agent(q)
        for a in qa:
            asks.setdefault(a.pred, []).append((j, a))
        for a in qt:
            tells.setdefault(a.pred, []).append((j, a))
    return asks, tells


def _successors(c: Configuration, defs: dict, fps: Optional[_Footprints] = None,
                goal_preds: frozenset = frozenset()):
    for i, p in enumerate(c.agents):
        if isinstance(p, Call):
            # unfolding commutes with every other action: take it alone
            return fire_agent(c, i, defs)
    per_agent = [fire_agent(c, i, defs) for i in range(len(c.agents))]
    if fps is not None:
        others = None
        for i, ts in enumerate(per_agent):
            if len(ts) == 1 and isinstance(c.agents[i], Choice):
                others = others or _by_pred(c, fps)
                if _private(c, i, ts[0], fps, goal_preds, others):
                    return ts
    return [t for ts in per_agent for t in ts]


def _explore(lp: LccProgram, goal: Optional[Guard], budget: int, bound: int,
             reduce: bool = True) -> _Search:
    """Breadth-first search; runs of single-successor states are followed without keying them."""
    main, defs = lp.desugared()
    fps = _Footprints(defs) if reduce else None
    goal_preds = frozenset(a.pred for a in goal.atoms) if goal is not None else frozenset()
    start = initial_configuration(main)
    cache = _ShapeCache()
    k0 = configuration_key(start, cache)
    parents: dict = {k0: None}
    ended: set[int] = set()
    counted = [1]
    max_depth = 0

    def note(c: Configuration):
        for a in c.store._bang:
            if a.pred == "end" and isinstance(a.args[2], Nat):
                ended.add(a.args[2].n)

    def hit(c: Configuration) -> bool:
        return goal is not None and bool(match_guard(c.store, goal))

    def step(t, depth: int) -> int:
        nonlocal max_depth
        d = depth + t.phase
        if d > bound:
            raise DepthExceeded(f"a branch needs {d} positive phases, bound is {bound}")
        max_depth = max(max_depth, d)
        counted[0] += 1
        if counted[0] > budget:
            raise Inconclusive(counted[0], budget)
        note(t.target)
        return d

    note(start)
    if hit(start):
        return _Search(k0, 1, 0, parents, ended)
    frontier = deque([(k0, start, 0, None)])
    while frontier:
        key, c, depth, ts = frontier.popleft()
        if ts is None:
            ts = _successors(c, defs, fps, goal_preds)
        for t in ts:
            d = step(t, depth)
            chain = [(t.agent, t.branch, t.match)]
            cur = t.target
            nxt = None
            while not hit(cur):
                nxt = _successors(cur, defs, fps, goal_preds)
                if len(nxt) != 1:
                    break
                (u,) = nxt
                d = step(u, d)
                chain.append((u.agent, u.branch, u.match))
                cur = u.target
            k = configuration_key(cur, cache)
            if k in parents:
                continue
            parents[k] = (key, chain)
            if hit(cur):
                return _Search(k, counted[0], max_depth, parents, ended)
            frontier.append((k, cur, d, nxt))
    return _Search(None, counted[0], max_depth, parents, ended)


def _path(s: _Search, key: bytes) -> list:
    chains = []
    while s.parents[key] is not None:
        key, chain = s.parents[key]
        chains.append(chain)
    return [st for chain in reversed(chains) for st in chain]


def _probe(lp: LccProgram, goal: Guard, bound: int, runs: int = PROBE_RUNS):
    """Scheduled runs watching for the goal; a hit is a genuine witness, a miss proves nothing."""
    main, defs = lp.desugared()
    total = 0
    for policy in [RoundRobin()] + [Randomized(k) for k in range(runs)]:
        first: list = []
        seen = [0]

        def watch(c: Configuration, t, first=first, seen=seen):
            if t is not None:
                seen[0] += 1
            if not first and match_guard(c.store, goal):
                first.append(seen[0])

        r = run_scheduled(initial_configuration(main), defs, policy, bound + 1, watch)
        if r.steps > bound:
            raise DepthExceeded(f"a run needs more than {bound} positive phases")
        total += r.steps + 1
        if first:
            return r.schedule[:first[0]], total
    return None, total


def _replay_events(lp: LccProgram, schedule: list) -> list:
    main, defs = lp.desugared()
    c = initial_configuration(main)
    events = list(initial_events(main))
    for n, (i, bi, mi) in enumerate(schedule, 1):
        (t,) = [t for t in fire_agent(c, i, defs, n) if t.branch == bi and t.match == mi]
        events.extend(t.events)
        c = t.target
    return events


def _as_lcc(p) -> LccProgram:
    return p if isinstance(p, LccProgram) else encode_program(p)


def depth_bound(p) -> int:
    lp = _as_lcc(p)
    main, defs = lp.desugared()
    return comp(main, defs) + 1


def prove_reachable(p: Union[ast.SourceProgram, LccProgram], goal: Guard,
                    budget: int = DEFAULT_BUDGET, probe: bool = True, reduce: bool = True) -> Verdict:
    """Provable iff some reachable store entails the goal (the rest of the store is ignored)."""
    lp = _as_lcc(p)
    bound = depth_bound(lp)
    w, n = _probe(lp, goal, bound) if probe else (None, 0)
    if w is not None:
        return Verdict("Provable", n, bound, bound - 1, len(w), w, _replay_events(lp, w), search="probe")
    s = _explore(lp, goal, budget, bound, reduce)
    if s.found is None:
        return Verdict("NotProvable", n + s.states, bound, bound - 1, s.max_depth,
                       flagged_lines=[])
    w = _path(s, s.found)
    return Verdict("Provable", n + s.states, bound, bound - 1, s.max_depth, w, _replay_events(lp, w))


def replay_witness(p, v: Verdict) -> Configuration:
    lp = _as_lcc(p)
    main, defs = lp.desugared()
    return replay(initial_configuration(main), defs, v.witness)


# -- derived checks ---------------------------------------------------------------------------

def _statement_lines(prog: ast.SourceProgram) -> list[int]:
    out = []
    for s in ast.walk_statements(prog.main.body):
        if isinstance(s, (ast.Assign, ast.Call, ast.New)):
            out.append(s.line)
    return sorted(set(out))


def check_deadlock(prog: ast.SourceProgram, budget: int = DEFAULT_BUDGET) -> Verdict:
    """Provable when ok is reachable; otherwise main statements whose end is unreachable are flagged."""
    lp = encode_program(prog)
    bound = depth_bound(lp)
    w, n = _probe(lp, OK_GOAL, bound)
    if w is not None:
        return Verdict("Provable", n, bound, bound - 1, len(w), w, _replay_events(lp, w), search="probe")
    s = _explore(lp, OK_GOAL, budget, bound)
    if s.found is not None:
        w = _path(s, s.found)
        return Verdict("Provable", n + s.states, bound, bound - 1, s.max_depth, w, _replay_events(lp, w))
    flagged = [ln for ln in _statement_lines(prog) if ln not in s.ended_lines]
    return Verdict("NotProvable", n + s.states, bound, bound - 1, s.max_depth, flagged_lines=flagged)


def run_goal(*lines: int) -> Guard:
    atoms, bound = [], []
    for k, ln in enumerate(lines):
        c, lb, z = Var(f"c#{k}"), Var(f"l#{k}"), Var(f"z#{k}")
        atoms.append(Atom("run", (c, lb, Nat(ln), z)))
        bound.extend((c, lb, z))
    return Guard(tuple(atoms), frozenset(bound))


def _run_lines(prog: ast.SourceProgram) -> set[int]:
    out = set()
    roots = [prog.main.body] + [m.body for c in prog.classes for m in c.constructors + c.methods]
    for r in roots:
        for s in ast.walk_statements(r):
            if isinstance(s, (ast.Assign, ast.Call, ast.New)):
                out.add(s.line)
    return out


def check_concurrent(prog: ast.SourceProgram, line_a: int, line_b: int,
                     budget: int = DEFAULT_BUDGET) -> Verdict:
    known = _run_lines(prog)
    for ln in (line_a, line_b):
        if ln not in known:
            raise ValueError(f"line {ln} has no assignment, call or object creation")
    return prove_reachable(prog, run_goal(line_a, line_b), budget)


def end_goal(label: str) -> Guard:
    c, ln, z = Var("c#"), Var("l#"), Var("z#")
    return Guard((Atom("end", (c, Const(label), ln, z)),), frozenset({c, ln, z}))


class HarnessError(ValueError):
    pass


def method_harness(prog: ast.SourceProgram, class_name: str, member: str) -> ast.SourceProgram:
    """A main that creates one receiver (and one object per argument) and calls the member."""
    cls = prog.class_named(class_name)
    if cls is None or cls.member(member) is None:
        raise HarnessError(f"no member {class_name}.{member}")
    m = cls.member(member)
    groups: list[str] = []

    def fresh_group() -> str:
        groups.append(f"hg{len(groups) + 1}")
        return groups[-1]

    decls: list[ast.VarDecl] = []
    stmts: list = []
    line = [3]

    def nxt() -> int:
        line[0] += 1
        return line[0]

    def build(cname: str, dg_args: tuple, depth: int) -> str:
        c = prog.class_named(cname)
        if c is None:
            raise HarnessError(f"unknown class {cname}")
        if not c.constructors:
            raise HarnessError(f"class {cname} has no constructor")
        if depth > 4:
            raise HarnessError(f"constructor arguments of {cname} nest too deeply")
        k = c.constructors[0]
        args = []
        for prm in k.params:
            if k.pre_of(prm.name).kind == "none":
                args.append(_new_var(prm.type, None))
            else:
                args.append(build(prm.type.name, prm.type.dg_args, depth + 1))
        gs = tuple(dg_args) if dg_args else tuple(fresh_group() for _ in c.dg_params)
        return _new_var(ast.TypeRef(cname, gs), (cname, gs, args))

    def _new_var(tref: ast.TypeRef, creation) -> str:
        name = f"h{len(decls) + 1}"
        decls.append(ast.VarDecl(tref, name))
        if creation is not None:
            cname, gs, args = creation
            stmts.append(ast.New(ast.Reference(name), cname, gs,
                                 tuple(ast.Reference(a) for a in args), nxt()))
        return name

    own = tuple(fresh_group() for _ in cls.dg_params)
    binding = dict(zip(cls.dg_params, own))
    if m.name == cls.name:
        args = []
        for prm in m.params:
            if m.pre_of(prm.name).kind == "none":
                args.append(_new_var(prm.type, None))
            else:
                args.append(build(prm.type.name, tuple(binding.get(g, g) for g in prm.type.dg_args), 1))
        x = _new_var(ast.TypeRef(cls.name, own), None)
        stmts.append(ast.New(ast.Reference(x), cls.name, own, tuple(ast.Reference(a) for a in args), nxt()))
    else:
        x = build(cls.name, own, 0)
        args = []
        for prm in m.params:
            if m.pre_of(prm.name).kind == "none":
                args.append(_new_var(prm.type, None))
            else:
                args.append(build(prm.type.name, tuple(binding.get(g, g) for g in prm.type.dg_args), 1))
        stmts.append(ast.Call(ast.Reference(x), m.name, tuple(ast.Reference(a) for a in args), nxt()))
    used = set(groups)
    for c in prog.classes:
        for k in c.constructors + c.methods:
            for _, perm in k.pre + k.post:
                if perm.group and perm.group not in c.dg_params:
                    used.add(perm.group)
    header = ast.GroupDecl(tuple(sorted(used)), 2) if used else None
    body = ast.Block(tuple(stmts), 3)
    let = ast.Let(tuple(decls), body, 3) if decls else body
    main_stmts = ((header,) if header else ()) + (let,)
    return ast.SourceProgram(prog.classes, ast.MainDecl(ast.Block(main_stmts, 1), 1))


def check_method(prog: ast.SourceProgram, class_name: str, member: str,
                 budget: int = DEFAULT_BUDGET) -> Verdict:
    harness = method_harness(prog, class_name, member)
    return prove_reachable(harness, end_goal(f"{class_name}_{member}"), budget)


_GOAL_ATOM = re.compile(r"\s*([a-z][A-Za-z0-9_]*)\s*\(([^()]*)\)\s*(,|$)")


def parse_goal(text: str) -> Guard:
    """Comma-separated atoms such as `end(_,_,15,_), ok()`; each `_` is its own existential."""
    atoms, bound = [], []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _GOAL_ATOM.match(text, pos)
        if not m:
            raise ValueError(f"cannot read goal at {text[pos:]!r}")
        args = []
        for raw in (a.strip() for a in m.group(2).split(",")) if m.group(2).strip() else ():
            if raw == "_":
                v = Var(f"w#{len(bound)}")
                bound.append(v)
                args.append(v)
            elif raw.isdigit():
                args.append(Nat(int(raw)))
            elif re.fullmatch(r"O_\d+", raw):
                args.append(ObjId(int(raw[2:])))
            elif raw == "ng":
                args.append(Const("ndg"))
            elif re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", raw):
                args.append(Const(raw))
            else:
                raise ValueError(f"bad goal argument {raw!r}")
        atoms.append(Atom(m.group(1), tuple(args)))
        pos = m.end()
    if not atoms:
        raise ValueError("empty goal")
    return Guard(tuple(atoms), frozenset(bound))
