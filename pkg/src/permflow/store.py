"""Terms, atoms and the linear constraint store with axiom-aware guard matching."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Union


class Term:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Const(Term):
    name: str

    def __str__(self) -> str:
        return "ng" if self.name == "ndg" else self.name


@dataclass(frozen=True, slots=True)
class Var(Term):
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Name(Term):
    """A ground name for a variable (created fresh by scope opening)."""
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class ObjId(Term):
    serial: int

    def __str__(self) -> str:
        return f"O_{self.serial}"


@dataclass(frozen=True, slots=True)
class Nat(Term):
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("Nat must be >= 0")

    def __str__(self) -> str:
        return str(self.n)


@dataclass(frozen=True, slots=True)
class Succ(Term):
    """Successor pattern s(t); only appears in guards and tells before instantiation."""
    inner: Term

    def __str__(self) -> str:
        return f"s({self.inner})"


NIL = Const("nil")
NDG = Const("ndg")
UNQ, SHR, IMM, NONE = Const("unq"), Const("shr"), Const("imm"), Const("none")
ATM, CONC, NST = Const("atm"), Const("conc"), Const("nst")

ARITY = {
    "ref": 4, "field": 3, "gpar": 3, "sync": 1, "act": 4, "run": 4, "end": 4,
    "ct": 2, "dg": 3, "env": 3, "ok": 0,
}


class Atom:
    __slots__ = ("pred", "args", "_hash")

    def __init__(self, pred: str, args: Iterable[Term] = ()):
        self.pred = pred
        self.args = tuple(args)
        want = ARITY.get(pred)
        if want is not None and want != len(self.args):
            raise ValueError(f"{pred} expects {want} arguments, got {len(self.args)}")
        self._hash = hash((pred, self.args))

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return (self is other or isinstance(other, Atom) and self._hash == other._hash
                and self.pred == other.pred and self.args == other.args)

    def __lt__(self, other: "Atom") -> bool:
        return self.sort_key() < other.sort_key()

    def sort_key(self):
        return (self.pred, tuple(_term_key(a) for a in self.args))

    def __repr__(self) -> str:
        return f"Atom({self})"

    def __str__(self) -> str:
        return f"{self.pred}({','.join(str(a) for a in self.args)})"

    def is_ground(self) -> bool:
        return all(_ground(a) for a in self.args)


def _term_key(t: Term):
    if isinstance(t, Nat):
        return (0, t.n, "")
    if isinstance(t, ObjId):
        return (1, t.serial, "")
    if isinstance(t, Const):
        return (2, 0, t.name)
    if isinstance(t, Name):
        return (3, 0, t.name)
    if isinstance(t, Var):
        return (4, 0, t.name)
    return (5, 0, str(t))


def _ground(t: Term) -> bool:
    return not isinstance(t, (Var, Succ))


def atom(pred: str, *args) -> Atom:
    """Convenience constructor: ints become Nat, strings become Const."""
    out = []
    for a in args:
        if isinstance(a, Term):
            out.append(a)
        elif isinstance(a, int):
            out.append(Nat(a))
        else:
            out.append(Const(a))
    return Atom(pred, out)


def ref(x: Term, o: Term, p: Term, g: Term) -> Atom:
    return Atom("ref", (x, o, p, g))


def ct(o: Term, n) -> Atom:
    return Atom("ct", (o, Nat(n) if isinstance(n, int) else n))


# ---------------------------------------------------------------------------
# Store

_NONE: list = []
# successor stores share their banged set, so its index is cached by identity
_BANG_INDEX: dict[int, tuple] = {}


def _bang_index(bang: frozenset) -> dict:
    hit = _BANG_INDEX.get(id(bang))
    if hit is not None and hit[0] is bang:
        return hit[1]
    idx: dict = {}
    for a in bang:
        idx.setdefault((a.pred,), []).append(a)
        for i, t in enumerate(a.args):
            idx.setdefault((a.pred, i, t), []).append(a)
    if len(_BANG_INDEX) > 4096:
        _BANG_INDEX.clear()
    _BANG_INDEX[id(bang)] = (bang, idx)
    return idx


class Store:
    """Linear multiset plus banged set. Immutable: operations return new stores."""

    __slots__ = ("_lin", "_bang", "_index", "_hash")

    def __init__(self, linear: Optional[dict] = None, banged: Iterable[Atom] = ()):
        self._lin: dict[Atom, int] = {a: n for a, n in (linear or {}).items() if n > 0}
        self._bang: frozenset[Atom] = frozenset(banged)
        self._index: Optional[dict] = None
        self._hash: Optional[int] = None

    @classmethod
    def of(cls, linear: Iterable[Atom] = (), banged: Iterable[Atom] = ()) -> "Store":
        lin: dict[Atom, int] = {}
        for a in linear:
            lin[a] = lin.get(a, 0) + 1
        return cls(lin, banged)

    @property
    def linear(self) -> dict[Atom, int]:
        return dict(self._lin)

    @property
    def banged(self) -> frozenset[Atom]:
        return self._bang

    def count(self, a: Atom) -> int:
        return self._lin.get(a, 0)

    def has(self, a: Atom) -> bool:
        return a in self._bang or a in self._lin

    def linear_atoms(self) -> Iterator[Atom]:
        for a, n in self._lin.items():
            for _ in range(n):
                yield a

    def by_pred(self, pred: str) -> list[Atom]:
        if self._index is None:
            idx: dict[str, list[Atom]] = {}
            for a in self._lin:
                idx.setdefault(a.pred, []).append(a)
                if a.args:
                    idx.setdefault((a.pred, a.args[0]), []).append(a)
            self._index = idx
        return self._index.get(pred, _NONE)

    def linear_candidates(self, pat: Atom, bound: frozenset) -> list[Atom]:
        every = self.by_pred(pat.pred)
        if pat.args:
            t = pat.args[0]
            if not (isinstance(t, Succ) or (isinstance(t, Var) and t in bound)):
                return self._index.get((pat.pred, t), _NONE)
        return every

    def banged_by_pred(self, pred: str) -> list[Atom]:
        return _bang_index(self._bang).get((pred,), _NONE)

    def banged_candidates(self, pat: Atom, bound: frozenset) -> list[Atom]:
        """Banged atoms that may match pat, narrowed on its most selective ground argument."""
        idx = _bang_index(self._bang)
        best = idx.get((pat.pred,), _NONE)
        for i, t in enumerate(pat.args):
            if not best:
                break
            if isinstance(t, Succ) or (isinstance(t, Var) and t in bound):
                continue
            cand = idx.get((pat.pred, i, t), _NONE)
            if len(cand) < len(best):
                best = cand
        return best

    def __len__(self) -> int:
        return sum(self._lin.values()) + len(self._bang)

    def __eq__(self, other) -> bool:
        return isinstance(other, Store) and self._lin == other._lin and self._bang == other._bang

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((frozenset(self._lin.items()), self._bang))
        return self._hash

    def render(self) -> str:
        parts = [str(a) for a in sorted(self.linear_atoms())]
        parts += ["!" + str(a) for a in sorted(self._bang)]
        return "[" + ", ".join(parts) + "]"

    __str__ = render

    def __repr__(self) -> str:
        return f"Store({self.render()})"


def tell_atoms(s: Store, atoms: Iterable[tuple[Atom, bool]]) -> Store:
    """Add ground atoms; banged ones go to the replicable set."""
    lin = None
    bang = None
    for a, banged in atoms:
        if not a.is_ground():
            raise ValueError(f"cannot tell non-ground atom {a}")
        if banged:
            if a not in s._bang and (bang is None or a not in bang):
                bang = set(s._bang) if bang is None else bang
                bang.add(a)
        else:
            if lin is None:
                lin = dict(s._lin)
            lin[a] = lin.get(a, 0) + 1
    if lin is None and bang is None:
        return s
    return Store(lin if lin is not None else s._lin, bang if bang is not None else s._bang)


# ---------------------------------------------------------------------------
# Patterns and substitution

Subst = dict  # Var -> Term


def resolve(t: Term, subst: Subst) -> Term:
    if isinstance(t, Var):
        return subst.get(t, t)
    if isinstance(t, Succ):
        inner = resolve(t.inner, subst)
        if isinstance(inner, Nat):
            return Nat(inner.n + 1)
        return Succ(inner)
    return t


def instantiate(a: Atom, subst: Subst) -> Atom:
    if not subst:
        return _normalize(a)
    return Atom(a.pred, tuple(resolve(t, subst) for t in a.args))


def _normalize(a: Atom) -> Atom:
    if any(isinstance(t, Succ) for t in a.args):
        return Atom(a.pred, tuple(resolve(t, {}) for t in a.args))
    return a


def match_term(p: Term, t: Term, bound: frozenset, subst: Subst) -> Optional[Subst]:
    """One-way match of pattern p against ground t; returns the extended subst or None."""
    if isinstance(p, Var) and p in bound:
        cur = subst.get(p)
        if cur is None:
            new = dict(subst)
            new[p] = t
            return new
        return subst if cur == t else None
    if isinstance(p, Succ):
        if not isinstance(t, Nat) or t.n == 0:
            return None
        return match_term(p.inner, Nat(t.n - 1), bound, subst)
    return subst if p == t else None


def match_atom(p: Atom, a: Atom, bound: frozenset, subst: Subst) -> Optional[Subst]:
    if p.pred != a.pred or len(p.args) != len(a.args):
        return None
    for pt, at in zip(p.args, a.args):
        subst = match_term(pt, at, bound, subst)
        if subst is None:
            return None
    return subst


# ---------------------------------------------------------------------------
# Guards and axioms

@dataclass(frozen=True)
class Guard:
    atoms: tuple[Atom, ...]
    bound: frozenset = frozenset()

    def __str__(self) -> str:
        body = " * ".join(str(a) for a in self.atoms) if self.atoms else "1"
        if self.bound:
            vs = ",".join(sorted(v.name for v in self.bound))
            return f"forall {vs}({body})"
        return body


@dataclass(frozen=True)
class Axiom:
    name: str
    lhs: tuple[Atom, ...]
    rhs: tuple[Atom, ...]


_X, _O, _G = Var("x"), Var("o"), Var("g")
AXIOMS = {
    "downgrade1": Axiom("downgrade1", (ref(_X, _O, UNQ, NDG),), (ref(_X, _O, SHR, _G),)),
    "downgrade2": Axiom("downgrade2", (ref(_X, _O, UNQ, NDG),), (ref(_X, _O, IMM, NDG),)),
    "upgrade1": Axiom("upgrade1", (ref(_X, _O, SHR, _G), ct(_O, 1)), (ref(_X, _O, UNQ, NDG), ct(_O, 1))),
    "upgrade2": Axiom("upgrade2", (ref(_X, _O, IMM, NDG), ct(_O, 1)), (ref(_X, _O, UNQ, NDG), ct(_O, 1))),
}
MAX_REWRITES = 2


def apply_axiom(s: Store, name: str, inst: dict) -> Store:
    """Apply one axiom instance (lhs consumed, rhs produced); raises if not applicable."""
    ax = AXIOMS[name]
    lin = dict(s._lin)
    for p in ax.lhs:
        a = instantiate(p, inst)
        if lin.get(a, 0) == 0:
            raise ValueError(f"{name} not applicable: missing {a}")
        lin[a] -= 1
    for p in ax.rhs:
        a = instantiate(p, inst)
        lin[a] = lin.get(a, 0) + 1
    return Store(lin, s._bang)


def rewrite_chains(r: Atom, target_group: Optional[Term]):
    """Axiom chains (length <= 2) from ref atom r; yields (result_atom, steps, needs_ct1).

    steps is a tuple of (axiomName, instantiation). target_group is the ground
    group a downgrade1 may introduce, or None when the guard leaves it open.
    """
    x, o, p, g = r.args
    out = []
    if p == UNQ:
        if target_group is not None:
            out.append((ref(x, o, SHR, target_group), (("downgrade1", {_X: x, _O: o, _G: target_group}),), False))
        out.append((ref(x, o, IMM, NDG), (("downgrade2", {_X: x, _O: o}),), False))
    elif p in (SHR, IMM):
        up = ("upgrade1", {_X: x, _O: o, _G: g}) if p == SHR else ("upgrade2", {_X: x, _O: o})
        out.append((ref(x, o, UNQ, NDG), (up,), True))
        if target_group is not None and not (p == SHR and g == target_group):
            out.append((ref(x, o, SHR, target_group),
                        (up, ("downgrade1", {_X: x, _O: o, _G: target_group})), True))
        if p == SHR:
            out.append((ref(x, o, IMM, NDG), (up, ("downgrade2", {_X: x, _O: o})), True))
    return out


@dataclass(frozen=True)
class Match:
    subst: dict
    residual: Store
    axiom_trace: tuple = ()

    def subst_key(self):
        return tuple(sorted(((v.name, _term_key(t)) for v, t in self.subst.items())))


def _ground_group(g: Term, bound: frozenset) -> Optional[Term]:
    if isinstance(g, Var) and g in bound:
        return None
    return g if _ground(g) else None


def match_guard(s: Store, g: Guard) -> list[Match]:
    """All most-general matches of guard g against store s (see module docs)."""
    atoms = g.atoms
    bound = g.bound
    if not atoms:
        return [Match({}, s, ())]
    lin = dict(s._lin)
    bang = s._bang
    results: list[tuple] = []
    seen: set = set()
    n = len(atoms)

    def groundness(a: Atom, subst: Subst) -> int:
        k = 0
        for t in a.args:
            if not (isinstance(t, Var) and t in bound and t not in subst):
                k += 1
        return k

    def rec(remaining: tuple[int, ...], subst: Subst, trace: tuple):
        if not remaining:
            sub = {v: t for v, t in subst.items() if v in bound}
            residual = Store(lin, bang)
            key = (tuple(sorted((v.name, _term_key(t)) for v, t in sub.items())),
                   frozenset(residual._lin.items()))
            if key not in seen:
                seen.add(key)
                results.append((len(trace), len(results), Match(sub, residual, trace)))
            return
        # most instantiated guard atom first, ties by position
        i = max(remaining, key=lambda j: (groundness(atoms[j], subst), -j))
        rest = tuple(j for j in remaining if j != i)
        raw = atoms[i]
        pat = instantiate(raw, subst) if subst else raw
        # banged atoms are copied, never consumed
        for b in s.banged_candidates(pat, bound):
            s2 = match_atom(pat, b, bound, subst)
            if s2 is not None:
                rec(rest, s2, trace)
        for a in s.linear_candidates(pat, bound):
            if lin[a] <= 0 or a in bang:
                continue
            s2 = match_atom(pat, a, bound, subst)
            if s2 is not None:
                lin[a] -= 1
                rec(rest, s2, trace)
                lin[a] += 1
        if raw.pred != "ref":
            return
        target_group = _ground_group(raw.args[3], bound)
        for r in s.by_pred("ref"):
            if lin[r] <= 0 or r in bang or match_atom(raw, r, bound, {}) is not None:
                continue  # direct match is more general than any rewrite
            if match_term(pat.args[0], r.args[0], bound, subst) is None:
                continue
            ct1 = ct(r.args[1], 1)
            for res, steps, needs_ct1 in rewrite_chains(r, target_group):
                if len(steps) > MAX_REWRITES:
                    continue
                if needs_ct1 and s._lin.get(ct1, 0) == 0:  # catalyst, checked before consumption
                    continue
                s2 = match_atom(pat, res, bound, subst)
                if s2 is None:
                    continue
                lin[r] -= 1
                rec(rest, s2, trace + steps)
                lin[r] += 1

    rec(tuple(range(n)), {}, ())
    results.sort(key=lambda t: (t[0], t[1]))
    return [m for _, _, m in results]


def consumed_atoms(s: Store, m: Match) -> list[Atom]:
    """Linear atoms removed from the rewritten store by match m (for bookkeeping checks)."""
    rewritten = s
    for name, inst in m.axiom_trace:
        rewritten = apply_axiom(rewritten, name, inst)
    out = []
    for a, c in rewritten._lin.items():
        d = c - m.residual._lin.get(a, 0)
        out.extend([a] * d)
    return out


# ---------------------------------------------------------------------------
# Canonical keys

class LabelTable:
    """Interns item labels to small integers; ids depend only on first-seen order of the label text."""

    def __init__(self):
        self.ids: dict[str, int] = {}

    def __call__(self, label: str) -> int:
        i = self.ids.get(label)
        if i is None:
            i = self.ids[label] = len(self.ids)
        return i


def canonical_items_key(items: list[tuple[str, tuple]], hidden=None, table: Optional[LabelTable] = None,
                        budget: int = 64) -> bytes:
    """Canonical key for a multiset of (label, names) items up to renaming of the names.

    Colour refinement followed by individualization of tied names; the key is a
    digest of the least relabelled listing over the explored branches.
    """
    # without a shared table the label text itself is the (invariant) identity
    labs = [table(lab) for lab, _ in items] if table is not None else [lab for lab, _ in items]
    seqs = [ns for _, ns in items]
    names = sorted({t for ns in seqs for t in ns}, key=_term_key)
    if not names:
        return hashlib.blake2b(repr(sorted(labs)).encode(), digest_size=16).digest()
    index = {t: i for i, t in enumerate(names)}
    iseqs = [tuple(index[t] for t in ns) for ns in seqs]
    occ: list[list[tuple[int, int]]] = [[] for _ in names]
    for k, ns in enumerate(iseqs):
        for pos, i in enumerate(ns):
            occ[i].append((k, pos))
    n = len(names)

    def ranks(sigs: list) -> list[int]:
        order = {v: r for r, v in enumerate(sorted(set(sigs)))}
        return [order[v] for v in sigs]

    def refine(color: list[int]) -> list[int]:
        count = len(set(color))
        while True:
            item_sig = [hash((labs[k], tuple(color[i] for i in ns))) for k, ns in enumerate(iseqs)]
            sigs = [(color[i], tuple(sorted((item_sig[k], pos) for k, pos in occ[i]))) for i in range(n)]
            new = ranks(sigs)
            c = len(set(new))
            if c == count:
                return new
            color, count = new, c

    def render(color: list[int]) -> tuple:
        return tuple(sorted((labs[k], tuple(color[i] for i in ns)) for k, ns in enumerate(iseqs)))

    kinds = [0 if isinstance(t, ObjId) else 1 for t in names]
    first = [(kinds[i], tuple(sorted((labs[k], pos) for k, pos in occ[i]))) for i in range(n)]
    start = refine(ranks(first))
    left = [budget]
    best: list = [None]

    def search(color: list[int]):
        if len(set(color)) == n:
            r = render(color)
            if best[0] is None or r < best[0]:
                best[0] = r
            return
        cells: dict[int, list[int]] = {}
        for i, c in enumerate(color):
            cells.setdefault(c, []).append(i)
        cell = min((c for c, members in cells.items() if len(members) > 1))
        for i in cells[cell]:
            if left[0] <= 0 and best[0] is not None:
                return
            left[0] -= 1
            c2 = [c * 2 for c in color]
            c2[i] -= 1
            search(refine(c2))

    search(start)
    return hashlib.blake2b(repr(best[0]).encode(), digest_size=16).digest()


def _atom_item(a: Atom, prefix: str, hidden) -> tuple[str, tuple]:
    ns = tuple(t for t in a.args if t in hidden)
    lab = prefix + a.pred + "(" + ",".join("_" if t in hidden else str(t) for t in a.args) + ")"
    return lab, ns


def canonicalize(s: Store, hidden) -> bytes:
    """Key equal for stores identical up to a bijective renaming of hidden names."""
    hidden = set(hidden)
    items = []
    for a, c in s._lin.items():
        items.append(_atom_item(a, f"L{c}:", hidden))
    for a in s._bang:
        items.append(_atom_item(a, "B:", hidden))
    return canonical_items_key(items, hidden)


def render_atoms(atoms: Iterable[Atom]) -> str:
    return "[" + ", ".join(str(a) for a in atoms) + "]"


TermLike = Union[Term, str, int]
