"""Intuitionistic linear logic view of lcc processes and the proof-depth measure comp()."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Union

from .lcc import Call, Choice, Local, Par, Process, ProcessDef, Seq, Tell
from .store import AXIOMS, Atom, Const, Name, Nat, ObjId, Succ, Term, Var


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class AtomF(Formula):
    atom: Atom


@dataclass(frozen=True)
class Tensor(Formula):
    items: tuple


@dataclass(frozen=True)
class With(Formula):
    items: tuple


@dataclass(frozen=True)
class Lolli(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Exists(Formula):
    vars: tuple
    body: Formula


@dataclass(frozen=True)
class Forall(Formula):
    vars: tuple
    body: Formula


@dataclass(frozen=True)
class Bang(Formula):
    body: Formula


@dataclass(frozen=True)
class _Unit(Formula):
    name: str


ONE = _Unit("1")
TOP = _Unit("top")


def tensor(items: Iterable[Formula]) -> Formula:
    flat = []
    for f in items:
        if isinstance(f, Tensor):
            flat.extend(f.items)
        elif f != ONE:
            flat.append(f)
    if not flat:
        return ONE
    return flat[0] if len(flat) == 1 else Tensor(tuple(flat))


def guard_formula(atoms: Iterable[Atom]) -> Formula:
    return tensor(AtomF(a) for a in atoms)


# -- translation -----------------------------------------------------------------

def to_ill(p: Process) -> Formula:
    if isinstance(p, Tell):
        return tensor(Bang(AtomF(a)) if b else AtomF(a) for a, b in p.items)
    if isinstance(p, Par):
        return tensor(to_ill(q) for q in p.procs)
    if isinstance(p, Choice):
        arms = []
        for b in p.branches:
            f = Lolli(guard_formula(b.guard), to_ill(b.body))
            arms.append(Forall(tuple(b.vars), f) if b.vars else f)
        return arms[0] if len(arms) == 1 else With(tuple(arms))
    if isinstance(p, Local):
        body = to_ill(p.body)
        return Exists(tuple(p.vars), body) if p.vars else body
    if isinstance(p, Call):
        return AtomF(Atom(p.name, tuple(p.args)))
    if isinstance(p, Seq):
        raise ValueError("sequential composition must be desugared before translation")
    raise TypeError(p)


def clause(d: ProcessDef) -> Formula:
    head = AtomF(Atom(d.name, tuple(d.params)))
    return Bang(Forall(tuple(d.params), Lolli(head, to_ill(d.body))))


def axiom_clause(name: str) -> Formula:
    ax = AXIOMS[name]
    vs = sorted({t for a in ax.lhs + ax.rhs for t in a.args if isinstance(t, Var)}, key=lambda v: v.name)
    return Bang(Forall(tuple(vs), Lolli(guard_formula(ax.lhs), guard_formula(ax.rhs))))


@dataclass(frozen=True)
class Theory:
    clauses: tuple

    def __post_init__(self):
        assert len(self.clauses) >= len(AXIOMS)


def theory(defs: Iterable[ProcessDef]) -> Theory:
    return Theory(tuple(clause(d) for d in defs) + tuple(axiom_clause(n) for n in sorted(AXIOMS)))


# -- depth ---------------------------------------------------------------------------

class CyclicDefinitions(ValueError):
    pass


def comp(f: Union[Formula, Process], defs=None) -> int:
    """Nested positive phases needed to decompose f; calls unfold into 1 + their body."""
    table = {}
    for d in (defs.values() if isinstance(defs, dict) else defs or ()):
        table[d.name] = d
    memo: dict[str, int] = {}
    active: set[str] = set()

    def call_cost(name: str) -> int:
        if name not in table:
            return 0
        if name in memo:
            return memo[name]
        if name in active:
            raise CyclicDefinitions(f"cyclic definition through {name}")
        active.add(name)
        memo[name] = 1 + walk(table[name].body)
        active.discard(name)
        return memo[name]

    def walk(x) -> int:
        if isinstance(x, Tell):
            return 0
        if isinstance(x, Par):
            return sum(walk(q) for q in x.procs)
        if isinstance(x, Choice):
            return 1 + max(walk(b.body) for b in x.branches)
        if isinstance(x, Local):
            return walk(x.body)
        if isinstance(x, Call):
            return call_cost(x.name)
        if isinstance(x, Seq):
            raise ValueError("desugar before computing comp")
        if isinstance(x, AtomF):
            return call_cost(x.atom.pred)
        if isinstance(x, Tensor):
            return sum(walk(g) for g in x.items)
        if isinstance(x, With):
            return max(walk(g) for g in x.items)
        if isinstance(x, Lolli):
            return 1 + walk(x.right)
        if isinstance(x, (Exists, Forall)):
            return walk(x.body)
        if isinstance(x, Bang):
            return 0 if isinstance(x.body, AtomF) else walk(x.body)
        if isinstance(x, _Unit):
            return 0
        raise TypeError(x)

    return walk(f)


# -- fragment membership ----------------------------------------------------------------

def is_goal(f: Formula) -> bool:
    if isinstance(f, AtomF) or f == ONE:
        return True
    if isinstance(f, Tensor):
        return all(is_goal(g) for g in f.items)
    if isinstance(f, Exists):
        return is_goal(f.body)
    return False


def is_process(f: Formula) -> bool:
    if isinstance(f, AtomF) or f == ONE:
        return True
    if isinstance(f, Bang):
        b = f.body
        if isinstance(b, AtomF):
            return True
        # definition clauses have an atomic head; the axioms a guard
        return (isinstance(b, Forall) and isinstance(b.body, Lolli) and is_goal(b.body.left)
                and is_process(b.body.right))
    if isinstance(f, (Tensor, With)):
        return all(is_process(g) for g in f.items)
    if isinstance(f, Forall):
        return isinstance(f.body, Lolli) and is_goal(f.body.left) and is_process(f.body.right)
    if isinstance(f, Lolli):
        return is_goal(f.left) and is_process(f.right)
    if isinstance(f, Exists):
        return is_process(f.body)
    return False


# -- rendering and reading ---------------------------------------------------------------

def _term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name if "#" in t.name else "?" + t.name
    if isinstance(t, Name):
        return "$" + t.name
    if isinstance(t, Succ):
        return f"s({_term(t.inner)})"
    if isinstance(t, Const):
        return t.name
    return str(t)


def _atom(a: Atom) -> str:
    return f"{a.pred}({','.join(_term(t) for t in a.args)})"


def render_ill(f: Formula) -> str:
    if isinstance(f, AtomF):
        return _atom(f.atom)
    if isinstance(f, _Unit):
        return f.name
    if isinstance(f, Bang):
        return "!" + render_ill(f.body)
    if isinstance(f, Tensor):
        return "(" + " * ".join(render_ill(g) for g in f.items) + ")"
    if isinstance(f, With):
        return "(" + " & ".join(render_ill(g) for g in f.items) + ")"
    if isinstance(f, Lolli):
        return f"({render_ill(f.left)} -o {render_ill(f.right)})"
    if isinstance(f, (Exists, Forall)):
        q = "exists" if isinstance(f, Exists) else "forall"
        return f"{q} {','.join(_term(v) for v in f.vars)}.{render_ill(f.body)}"
    raise TypeError(f)


_TOK = re.compile(r"\s*(-o|[()*&!,.]|[?$]?[A-Za-z_][A-Za-z0-9_#]*|\d+)")
_OBJ = re.compile(r"O_(\d+)$")


class _Reader:
    def __init__(self, text: str):
        self.toks = []
        pos = 0
        text = text.rstrip()
        while pos < len(text):
            m = _TOK.match(text, pos)
            if not m:
                raise ValueError(f"unexpected input at {pos}: {text[pos:pos + 10]!r}")
            self.toks.append(m.group(1))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, want=None) -> str:
        t = self.peek()
        if t is None or (want is not None and t != want):
            raise ValueError(f"expected {want!r}, found {t!r}")
        self.i += 1
        return t

    def term(self) -> Term:
        t = self.take()
        if t == "s" and self.peek() == "(":
            self.take("(")
            inner = self.term()
            self.take(")")
            return Succ(inner)
        if t.isdigit():
            return Nat(int(t))
        if t.startswith("?"):
            return Var(t[1:])
        if "#" in t:
            return Var(t)
        if t.startswith("$"):
            return Name(t[1:])
        m = _OBJ.match(t)
        if m:
            return ObjId(int(m.group(1)))
        return Const(t)

    def formula(self) -> Formula:
        t = self.peek()
        if t == "!":
            self.take()
            return Bang(self.formula())
        if t in ("exists", "forall"):
            self.take()
            vs = [self.term()]
            while self.peek() == ",":
                self.take()
                vs.append(self.term())
            self.take(".")
            body = self.formula()
            return (Exists if t == "exists" else Forall)(tuple(vs), body)
        if t == "(":
            self.take()
            items = [self.formula()]
            ops = set()
            while self.peek() in ("*", "&", "-o"):
                ops.add(self.take())
                items.append(self.formula())
            self.take(")")
            if len(ops) != 1:
                raise ValueError("mixed or missing connective inside parentheses")
            op = ops.pop()
            if op == "-o":
                if len(items) != 2:
                    raise ValueError("-o is binary")
                return Lolli(items[0], items[1])
            return (Tensor if op == "*" else With)(tuple(items))
        if t == "1":
            self.take()
            return ONE
        if t == "top":
            self.take()
            return TOP
        pred = self.take()
        self.take("(")
        args = []
        if self.peek() != ")":
            args.append(self.term())
            while self.peek() == ",":
                self.take()
                args.append(self.term())
        self.take(")")
        return AtomF(Atom(pred, tuple(args)))


def read_ill(text: str) -> Formula:
    r = _Reader(text)
    f = r.formula()
    if r.peek() is not None:
        raise ValueError(f"trailing input: {r.peek()!r}")
    return f
