"""Independent reference implementations used to cross-check the optimized code."""

from __future__ import annotations

import itertools
from collections import Counter

from permflow.store import (
    AXIOMS, IMM, NDG, SHR, UNQ, Atom, Guard, Store, Var, ct, instantiate, match_atom, ref,
)


def _axiom_steps(a: Atom, store_lin: dict, groups):
    """Every single axiom application to ref atom a in a store with multiplicities store_lin."""
    x, o, p, g = a.args
    out = []
    if p == UNQ and g == NDG:
        for grp in groups:
            out.append(("downgrade1", ref(x, o, SHR, grp)))
        out.append(("downgrade2", ref(x, o, IMM, NDG)))
    if store_lin.get(ct(o, 1), 0) > 0:
        if p == SHR:
            out.append(("upgrade1", ref(x, o, UNQ, NDG)))
        if p == IMM and g == NDG:
            out.append(("upgrade2", ref(x, o, UNQ, NDG)))
    return out


def _chains(a: Atom, store_lin: dict, groups, k: int):
    """All (result, names) reachable from a by 1..k axiom applications."""
    frontier = [(a, ())]
    out = []
    for _ in range(k):
        nxt = []
        for cur, names in frontier:
            for name, res in _axiom_steps(cur, store_lin, groups):
                nxt.append((res, names + (name,)))
        out.extend(nxt)
        frontier = nxt
    return out


def brute_force_matches(s: Store, g: Guard, k: int = 2) -> set:
    """Set of (subst-items, residual-items) pairs by exhaustive enumeration.

    Enumerates every choice of rewritten store atoms and chains, then every
    injective assignment of guard atoms to store atoms, and filters by the
    most-general-choice side conditions.
    """
    bound = g.bound
    atoms = g.atoms
    if not atoms:
        return {((), frozenset(s.linear.items()))}
    groups = sorted({a.args[3] for a in atoms if a.pred == "ref"
                     and not (isinstance(a.args[3], Var) and a.args[3] in bound)},
                    key=str)
    lin_occ = [a for a in s.linear_atoms()]
    ref_idx = [i for i, a in enumerate(lin_occ) if a.pred == "ref" and a not in s.banged]
    n_guard_refs = sum(1 for a in atoms if a.pred == "ref")
    results = set()
    lin0 = s.linear
    for r in range(0, min(n_guard_refs, len(ref_idx)) + 1):
        for chosen in itertools.combinations(ref_idx, r):
            options = [_chains(lin_occ[i], lin0, groups, k) for i in chosen]
            for plan in itertools.product(*options):
                rewritten = list(lin_occ)
                is_rw = {}
                for i, (res, names) in zip(chosen, plan):
                    rewritten[i] = res
                    is_rw[i] = names
                pool = [("B", b) for b in sorted(s.banged)] + [("L", i) for i in range(len(rewritten))]
                for assign in itertools.product(range(len(pool)), repeat=len(atoms)):
                    used_lin = [pool[j][1] for j in assign if pool[j][0] == "L"]
                    if len(set(used_lin)) != len(used_lin):
                        continue
                    subst = {}
                    ok = True
                    for gi, j in enumerate(assign):
                        kind, v = pool[j]
                        target = v if kind == "B" else rewritten[v]
                        if kind == "L" and target in s.banged:
                            ok = False
                            break
                        subst = match_atom(atoms[gi], target, bound, subst)
                        if subst is None:
                            ok = False
                            break
                        if kind == "L" and v in is_rw:
                            raw = atoms[gi]
                            if raw.pred != "ref" or match_atom(raw, lin_occ[v], bound, {}) is not None:
                                ok = False
                                break
                            if "downgrade1" in is_rw[v] and rewritten[v].args[3] != raw.args[3]:
                                ok = False
                                break
                    if not ok:
                        continue
                    # every rewritten atom must be consumed by the guard
                    if any(i not in used_lin for i in is_rw):
                        continue
                    residual = {}
                    for i, a in enumerate(rewritten):
                        if i not in used_lin:
                            residual[a] = residual.get(a, 0) + 1
                    sub = tuple(sorted((v.name, str(t)) for v, t in subst.items() if v in bound))
                    results.add((sub, frozenset(residual.items())))
    return results


def fast_matches(s: Store, g: Guard) -> set:
    from permflow.store import match_guard
    out = set()
    for m in match_guard(s, g):
        sub = tuple(sorted((v.name, str(t)) for v, t in m.subst.items()))
        out.add((sub, frozenset(m.residual.linear.items())))
    return out


def replay_axioms(s: Store, trace) -> Store:
    from permflow.store import apply_axiom
    for name, inst in trace:
        s = apply_axiom(s, name, inst)
    return s


# -- naive interleaving enumerator ------------------------------------------------------
#
# No partial-order reduction, no chain compression, no canonical hashing: every
# enabled choice of every agent is taken and states are compared for plain
# equality. A fresh name is derived from the scope that creates it plus the
# smallest counter not yet used on the path, so interleavings that only differ
# in order reach literally equal configurations.


def _subst_term(t, m: dict):
    from permflow.store import Succ
    if isinstance(t, Var):
        return m.get(t, t)
    if isinstance(t, Succ):
        return Succ(_subst_term(t.inner, m))
    return t


def _subst_proc(p, m: dict):
    from permflow.lcc import Branch, Call, Choice, Local, Par, Tell
    if not m:
        return p
    if isinstance(p, Tell):
        return Tell(tuple((instantiate(a, m), b) for a, b in p.items))
    if isinstance(p, Choice):
        out = []
        for b in p.branches:
            inner = {k: v for k, v in m.items() if k not in b.vars}
            out.append(Branch(b.vars, tuple(Atom(a.pred, tuple(_subst_term(t, inner) for t in a.args))
                                            for a in b.guard), _subst_proc(b.body, inner)))
        return Choice(tuple(out))
    if isinstance(p, Par):
        return Par(tuple(_subst_proc(q, m) for q in p.procs))
    if isinstance(p, Local):
        return Local(p.vars, _subst_proc(p.body, {k: v for k, v in m.items() if k not in p.vars}))
    if isinstance(p, Call):
        return Call(p.name, tuple(_subst_term(t, m) for t in p.args))
    raise TypeError(p)


def _settle(store: Store, agents: list, used: frozenset):
    """Apply tells, open scopes and split parallels until only asks and calls remain."""
    from permflow.lcc import Local, Par, Tell
    from permflow.store import Name, ObjId, tell_atoms
    out = []
    todo = list(agents)
    fresh = set()
    while todo:
        p = todo.pop()
        if isinstance(p, Tell):
            store = tell_atoms(store, p.items)
        elif isinstance(p, Par):
            todo.extend(p.procs)
        elif isinstance(p, Local):
            m = {}
            for v in p.vars:
                h = hash((v, p.body)) & 0xFFFFFFFF
                k = 0
                while (h, k) in used or (h, k) in fresh:
                    k += 1
                fresh.add((h, k))
                base = v.name.split("#", 1)[0]
                m[v] = ObjId(h * 64 + k) if base.startswith("o_new") else Name(f"N{h:x}_{k}")
            todo.append(_subst_proc(p.body, m))
        else:
            out.append(p)
    return store, out, used | fresh if fresh else used


def naive_reachable(main, defs: dict, limit: int = 2_000_000) -> list:
    """Every reachable store, by exhaustive interleaving of all agents."""
    from permflow.lcc import Call, Choice
    from permflow.store import match_guard
    store, agents, used = _settle(Store(), [main], frozenset())
    seen = {(store, frozenset(Counter(agents).items()))}
    stores = [store]
    todo = [(store, tuple(agents), used)]
    while todo:
        store, agents, used = todo.pop()
        for i, p in enumerate(agents):
            rest = list(agents[:i]) + list(agents[i + 1:])
            succs = []
            if isinstance(p, Call):
                d = defs[p.name]
                succs.append((store, _subst_proc(d.body, dict(zip(d.params, p.args)))))
            elif isinstance(p, Choice):
                for b in p.branches:
                    for m in match_guard(store, Guard(tuple(b.guard), frozenset(b.vars))):
                        succs.append((m.residual, _subst_proc(b.body, m.subst)))
            for st, body in succs:
                s2, new, u2 = _settle(st, rest + [body], used)
                k = (s2, frozenset(Counter(new).items()))
                if k in seen:
                    continue
                seen.add(k)
                if len(seen) > limit:
                    raise RuntimeError("naive enumeration limit reached")
                stores.append(s2)
                todo.append((s2, tuple(new), u2))
    return stores


def naive_holds(stores: list, goal: Guard) -> bool:
    from permflow.store import match_guard
    return any(match_guard(s, goal) for s in stores)


__all__ = ["brute_force_matches", "fast_matches", "replay_axioms", "naive_reachable", "naive_holds"]
