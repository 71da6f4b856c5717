"""Compile AP programs into lcc definitions and a main process."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import syntax as ast
from .lcc import (
    ONE, Call, Choice, Local, Process, ProcessDef, Tell, ask, choice, desugar, par, seq, sync, tell,
)
from .store import (
    ATM, CONC, IMM, NDG, NIL, NONE, NST, SHR, UNQ, Atom, Const, Nat, Succ, Term, Var, ct, ref,
)

BLOCK = Const("block")
GROUP = Const("group")
ASSG = Const("assg")
NOBODY = Const("_")
DEFAULT_GROUP = Const("default")
PERM = {"unq": UNQ, "shr": SHR, "imm": IMM, "none": NONE}


def witness(pred: str, caller: Term, label: Term, line, z: Term) -> Atom:
    return Atom(pred, (caller, label, Nat(line) if isinstance(line, int) else line, z))


def dg(g: Term, kind: Term, z: Term) -> Atom:
    return Atom("dg", (g, kind, z))


def env(g: Term, kind: Term, z: Term) -> Atom:
    return Atom("env", (g, kind, z))


def member_label(cls: str, member: str) -> Const:
    return Const(f"{cls}_{member}")


@dataclass
class LccProgram:
    defs: list
    main: Process
    line_index: dict = field(default_factory=dict)
    _cache: Optional[tuple] = None

    def desugared(self) -> tuple[Process, dict]:
        if self._cache is None:
            main, defs = desugar(self.main, self.defs)
            self._cache = (main, {d.name: d for d in defs})
        return self._cache

    def def_named(self, name: str) -> ProcessDef:
        for d in self.defs:
            if d.name == name:
                return d
        raise KeyError(name)


@dataclass
class _Ctx:
    cls: Optional[ast.ClassDecl]
    vars: dict            # source name -> Term
    types: dict           # source name -> class name
    groups: dict          # source group name -> Term
    in_main: bool = False


class Encoder:
    """Stateful compiler; one instance per program so fresh template names are deterministic."""

    def __init__(self, prog: ast.SourceProgram):
        self.prog = prog
        self.n = 0
        self.line_index: dict[int, list[str]] = {}
        self.main_groups = set(prog.main.group_decls)

    # -- fresh template variables ---------------------------------------------

    def var(self, base: str) -> Var:
        self.n += 1
        return Var(f"{base}#{self.n}")

    def zvar(self) -> Var:
        return self.var("z_par")

    # -- small pieces ------------------------------------------------------------

    def drop(self, x: Term) -> Choice:
        """Release whatever x points to and decrement the count of that object."""
        branches = [((), [ref(x, NIL, NONE, NDG)], ONE)]
        for p in (UNQ, SHR, IMM):
            o, n, g = self.var("o"), self.var("n"), self.var("g")
            branches.append(((o, n, g), [ref(x, o, p, g), ct(o, Succ(n))], tell(ct(o, n))))
        return choice(*branches)

    def gain(self, x: Term, y: Term, gt: Term) -> Choice:
        o1 = self.var("o")
        o2, n2 = self.var("o"), self.var("n")
        o3, n3 = self.var("o"), self.var("n")
        return choice(
            ((), [ref(y, NIL, NONE, NDG)], tell(ref(x, NIL, NONE, NDG), ref(y, NIL, NONE, NDG))),
            ((o1,), [ref(y, o1, UNQ, NDG), ct(o1, 1)],
             tell(ref(y, o1, SHR, gt), ref(x, o1, SHR, gt), ct(o1, 2))),
            ((o2, n2), [ref(y, o2, SHR, gt), ct(o2, n2)],
             tell(ref(y, o2, SHR, gt), ref(x, o2, SHR, gt), ct(o2, Succ(n2)))),
            ((o3, n3), [ref(y, o3, IMM, NDG), ct(o3, n3)],
             tell(ref(y, o3, IMM, NDG), ref(x, o3, IMM, NDG), ct(o3, Succ(n3)))),
        )

    def wrap(self, p: Process, groups, z: Term, caller: Term, label: Term, line: int) -> Process:
        act = witness("act", caller, label, line, z)
        if not groups:
            return par(tell(act), p)
        gs = sorted(groups, key=str)
        take = [ask([dg(g, CONC, z)], ONE) for g in gs]
        give_back = ask([witness("end", caller, label, line, z)], tell(*[dg(g, CONC, z) for g in gs]))
        return seq(par(tell(act), *take), par(p, give_back))

    def run_end(self, caller: Term, label: Term, line: int, z: Term) -> Process:
        """act -> run ; run -> sync * !end"""
        return seq(
            ask([witness("act", caller, label, line, z)], tell(witness("run", caller, label, line, z))),
            ask([witness("run", caller, label, line, z)],
                tell(sync(z), banged=[witness("end", caller, label, line, z)])),
        )

    def any_end(self, z: Term) -> tuple[Atom, tuple]:
        c, lb, ln = self.var("c"), self.var("l"), self.var("n")
        return witness("end", c, lb, ln, z), (c, lb, ln)

    # -- references ---------------------------------------------------------------

    def class_of(self, r: ast.Reference, ctx: _Ctx) -> str:
        base = ctx.types[r.base]
        if r.field is None:
            return base
        return self.prog.class_named(base).field_type(r.field).name

    def resolve(self, r: ast.Reference, ctx: _Ctx, probes: list) -> Term:
        """Term naming reference r; field selections append a probe resolving the field variable."""
        x = ctx.vars[r.base]
        if r.field is None:
            return x
        owner = ctx.types[r.base]
        u, o, p, g = self.var("u"), self.var("o"), self.var("p"), self.var("g")
        probes.append(((u, o, p, g), [ref(x, o, p, g), Atom("field", (u, o, Const(f"{owner}_{r.field}")))],
                       ref(x, o, p, g)))
        return u

    @staticmethod
    def with_probes(probes: list, body: Process) -> Process:
        for bound, guard, keep in reversed(probes):
            body = ask(guard, par(tell(keep), body), bound)
        return body

    def group(self, name: Optional[str], ctx: _Ctx) -> Term:
        if name is None:
            return DEFAULT_GROUP
        if name in ctx.groups:
            return ctx.groups[name]
        return Const(name)

    # -- statements -----------------------------------------------------------------

    def statement(self, s, z: Term, G: frozenset, ctx: _Ctx) -> Process:
        self.line_index.setdefault(getattr(s, "line", 0), []).append(type(s).__name__)
        if isinstance(s, ast.Assign):
            return self.assign(s, z, G, ctx)
        if isinstance(s, ast.Call):
            return self.call(s, z, G, ctx)
        if isinstance(s, ast.New):
            return self.new(s, z, G, ctx)
        if isinstance(s, ast.Let):
            return self.let(s, z, G, ctx)
        if isinstance(s, ast.Block):
            return self.block(s, z, G, ctx)
        if isinstance(s, ast.GroupDecl):
            atoms = [dg(Const(g), ATM, NST) for g in s.names]
            return tell(*atoms, sync(z), banged=[witness("end", NOBODY, GROUP, s.line, z)])
        if isinstance(s, ast.Split):
            return self.split(s, z, G, ctx)
        raise TypeError(s)

    def assign(self, s: ast.Assign, z, G, ctx) -> Process:
        probes: list = []
        x = self.resolve(s.lhs, ctx, probes)
        gt = self.group(s.group, ctx)
        if s.rhs is None:
            body = seq(self.drop(x), tell(ref(x, NIL, NONE, NDG)), self.run_end(x, ASSG, s.line, z))
        else:
            y = self.resolve(s.rhs, ctx, probes)
            body = Call("assg", (x, y, z, gt, Nat(s.line)))
        return self.with_probes(probes, self.wrap(body, G, z, x, ASSG, s.line))

    def call(self, s: ast.Call, z, G, ctx) -> Process:
        probes: list = []
        cls = self.class_of(s.target, ctx)
        x = self.resolve(s.target, ctx, probes)
        ys = [self.resolve(a, ctx, probes) for a in s.args]
        label = member_label(cls, s.method)
        body = Call(label.name, (x, *ys, z, Nat(s.line)))
        return self.with_probes(probes, self.wrap(body, G, z, x, label, s.line))

    def new(self, s: ast.New, z, G, ctx) -> Process:
        probes: list = []
        x = self.resolve(s.lhs, ctx, probes)
        ys = [self.resolve(a, ctx, probes) for a in s.args]
        gs = [self.group(g, ctx) for g in s.dg_args]
        label = member_label(s.class_name, s.class_name)
        body = Call(label.name, (x, *ys, z, Nat(s.line), *gs))
        return self.with_probes(probes, self.wrap(body, G, z, x, label, s.line))

    def let(self, s: ast.Let, z, G, ctx) -> Process:
        xs = [self.var(d.name) for d in s.decls]
        inner = _Ctx(ctx.cls, dict(ctx.vars), dict(ctx.types), ctx.groups, ctx.in_main)
        for d, x in zip(s.decls, xs):
            inner.vars[d.name] = x
            inner.types[d.name] = d.type.name
        init = tell(*[ref(x, NIL, NONE, NDG) for x in xs])
        body = self.statement(s.body, z, G, inner)
        if ctx.in_main:
            return Local(tuple(xs), par(init, body))
        end, bound = self.any_end(z)
        gc = ask([end], par(*[self.drop(x) for x in xs]), bound)
        return Local(tuple(xs), par(init, body, gc))

    def block(self, s: ast.Block, z, G, ctx) -> Process:
        if not s.stmts:
            return tell(sync(z), banged=[witness("end", NOBODY, BLOCK, s.line, z)])
        zs = [self.zvar() for _ in s.stmts]
        parts = [self.statement(s.stmts[0], zs[0], frozenset(), ctx)]
        for prev, st, zi in zip(zs, s.stmts[1:], zs[1:]):
            parts.append(ask([sync(prev)], self.statement(st, zi, frozenset(), ctx)))
        parts.append(ask([sync(zs[-1])], tell(sync(z))))
        ends, bound = [], []
        for zi in zs:
            e, b = self.any_end(zi)
            ends.append(e)
            bound.extend(b)
        run = witness("run", NOBODY, BLOCK, s.line, z)
        parts.append(ask([run] + ends, tell(banged=[witness("end", NOBODY, BLOCK, s.line, z)]), bound))
        p = seq(ask([witness("act", NOBODY, BLOCK, s.line, z)], tell(run)), Local(tuple(zs), par(*parts)))
        return self.wrap(p, G, z, NOBODY, BLOCK, s.line)

    def split(self, s: ast.Split, z, G, ctx) -> Process:
        gps = [self.group(g, ctx) for g in s.groups]
        Gp = frozenset(gps)
        zs = [self.zvar() for _ in s.body]
        zq = self.zvar()
        act = witness("act", NOBODY, BLOCK, s.line, z)
        run = witness("run", NOBODY, BLOCK, s.line, z)
        end = witness("end", NOBODY, BLOCK, s.line, z)
        gain = par(*[choice(((), [dg(g, CONC, z)], tell(env(g, CONC, z))),
                            ((), [dg(g, ATM, NST)], tell(env(g, ATM, NST)))) for g in gps])
        shares = [dg(g, CONC, zi) for zi in zs for g in gps]
        add = ask([act], tell(run, *shares))
        if s.body:
            chain = [self.statement(s.body[0], zs[0], Gp, ctx)]
            for prev, st, zi in zip(zs, s.body[1:], zs[1:]):
                chain.append(ask([sync(prev)], self.statement(st, zi, Gp, ctx)))
            chain.append(ask([sync(zs[-1])], tell(sync(zq))))
            execp = par(*chain)
        else:
            execp = tell(sync(zq))
        # the last group handed back carries end(z), so the DGAPs are in place when it shows
        backs = [choice(((), [env(g, CONC, z)], tell(dg(g, CONC, z), banged=[end] if last else [])),
                        ((), [env(g, ATM, NST)], tell(dg(g, ATM, NST), banged=[end] if last else [])))
                 for g, last in zip(gps, [False] * (len(gps) - 1) + [True])]
        restore = seq(ask(shares + [run], tell(sync(z))), *(backs or [tell(banged=[end])]))
        p = Local(tuple(zs) + (zq,), seq(gain, add, execp, ask([sync(zq)], restore)))
        return self.wrap(p, G - Gp, z, NOBODY, BLOCK, s.line)

    # -- definitions ----------------------------------------------------------------

    def consume(self, x: Term, xi: Term, perm: ast.Permission, ctx: _Ctx) -> Process:
        o, n = self.var("o"), self.var("n")
        if perm.kind == "imm":
            return ask([ref(x, o, IMM, NDG), ct(o, n)],
                       tell(ref(x, o, IMM, NDG), ct(o, Succ(n)), ref(xi, o, IMM, NDG)), (o, n))
        if perm.kind == "shr":
            g = self.group(perm.group, ctx)
            return ask([ref(x, o, SHR, g), ct(o, n)],
                       tell(ref(x, o, SHR, g), ct(o, Succ(n)), ref(xi, o, SHR, g)), (o, n))
        p = PERM[perm.kind]
        return ask([ref(x, o, p, NDG)], tell(ref(xi, o, p, NDG)), (o,))

    def r_env(self, x: Term, pre: ast.Permission, xi: Term, post: ast.Permission, ctx: _Ctx,
              done: tuple = ()) -> Process:
        """Give the caller its permission back; `done` is told (banged) in the same step."""
        o2, n2 = self.var("o"), self.var("n")
        p, q = pre.kind, post.kind
        qg = self.group(post.group, ctx) if q == "shr" else NDG
        if p == q == "imm":
            return ask([ref(xi, o2, IMM, NDG), ct(o2, Succ(n2))], tell(ct(o2, n2), banged=done), (o2, n2))
        if p == q == "shr":
            return ask([ref(xi, o2, SHR, qg), ct(o2, Succ(n2))], tell(ct(o2, n2), banged=done), (o2, n2))
        if p == q == "unq":
            return ask([ref(xi, o2, UNQ, NDG), ct(o2, 1)],
                       tell(ref(x, o2, UNQ, NDG), ct(o2, 1), banged=done), (o2,))
        transfer = ask([ref(xi, o2, PERM[q], qg)], tell(ref(x, o2, PERM[q], qg), banged=done), (o2,))
        if p in ("imm", "shr"):
            # the external copy is released first, then the internal reference moves out
            o, n = self.var("o"), self.var("n")
            pg = self.group(pre.group, ctx) if p == "shr" else NDG
            release = ask([ref(x, o, PERM[p], pg), ct(o, Succ(n))], tell(ct(o, n)), (o, n))
            return seq(release, transfer)
        return transfer

    def _used_params(self, c: ast.ClassDecl, m: ast.MethodDecl) -> list[str]:
        used = set()
        for _, perm in m.pre + m.post:
            if perm.group:
                used.add(perm.group)
        for st in ast.walk_statements(m.body):
            if isinstance(st, ast.Assign) and st.group:
                used.add(st.group)
            elif isinstance(st, ast.Split):
                used.update(st.groups)
            elif isinstance(st, ast.New):
                used.update(st.dg_args)
        return [g for g in c.dg_params if g in used]

    def member(self, c: ast.ClassDecl, m: ast.MethodDecl, is_ctor: bool) -> ProcessDef:
        name = f"{c.name}_{m.name}"
        label = Const(name)
        x = self.var("x")
        ys = [self.var(f"y_{p.name}") for p in m.params]
        z, line = self.var("z"), self.var("line")
        xi = self.var("inner")
        yis = [self.var(p.name) for p in m.params]
        ctx = _Ctx(c, {"this": xi}, {"this": c.name}, {})
        for p, yi in zip(m.params, yis):
            ctx.vars[p.name] = yi
            ctx.types[p.name] = p.type.name
        gparams = []
        probe_bound, probe_gpar = [], []
        if is_ctor:
            gparams = [self.var(f"g_{g}") for g in c.dg_params]
            ctx.groups.update(dict(zip(c.dg_params, gparams)))
        else:
            for g in self._used_params(c, m):
                G = self.var(f"grp_{g}")
                ctx.groups[g] = G
                probe_bound.append(G)
        # everything after the (optional) group lookup
        consume = [self.consume(y, yi, m.pre_of(p.name), ctx) for p, y, yi in zip(m.params, ys, yis)]
        inner_z = self.var("z_body")
        body = self.statement(m.body, inner_z, frozenset(), ctx)
        r_envs = [self.r_env(y, m.pre_of(p.name), yi, m.post_of(p.name), ctx)
                  for p, y, yi in zip(m.params, ys, yis)]
        done = (witness("end", x, label, line, z),)
        if is_ctor:
            o_new = self.var("o_new")
            consume.append(ask([ref(x, NIL, NONE, NDG)], tell(ref(xi, o_new, UNQ, NDG), ct(o_new, 1))))
        else:
            consume.insert(0, self.consume(x, xi, m.pre_of("this"), ctx))
        r_this = self.r_env(x, m.pre_of("this"), xi, m.post_of("this"), ctx, done)
        body_end = witness("end", NOBODY, BLOCK, m.body.line, inner_z)
        act = witness("act", x, label, line, z)
        run = witness("run", x, label, line, z)
        # run(z) is retired when restoration starts; end(z) appears together with
        # the receiver's permission, so nothing can use the receiver before it
        finish = seq(par(*r_envs), r_this) if r_envs else r_this
        run_body = Local((inner_z,), par(body, ask([sync(inner_z), body_end, run], finish)))
        start = seq(tell(sync(z)), ask([act], tell(run)), run_body)
        if is_ctor:
            us = [self.var("u") for _ in c.fields]
            fields_init = tell(*[ref(u, NIL, NONE, NDG) for u in us],
                               banged=[Atom("field", (u, o_new, Const(f"{c.name}_{f.name}")))
                                       for u, f in zip(us, c.fields)])
            gparam_init = tell(banged=[Atom("gpar", (Const(f"{c.name}_{g}"), o_new, gv))
                                       for g, gv in zip(c.dg_params, gparams)])
            inner = seq(gparam_init, par(*consume), Local(tuple(us), seq(fields_init, start)))
            proc = Local(tuple(yis) + (xi, o_new), inner)
            params = (x, *ys, z, line, *gparams)
        else:
            proc = Local(tuple(yis) + (xi,), seq(par(*consume), start))
            if probe_bound:
                o, p, g = self.var("o"), self.var("p"), self.var("g")
                guard = [ref(x, o, p, g)] + [Atom("gpar", (Const(f"{c.name}_{pg}"), o, G))
                                             for pg, G in zip(self._used_params(c, m), probe_bound)]
                proc = ask(guard, par(tell(ref(x, o, p, g)), proc), (o, p, g, *probe_bound))
            params = (x, *ys, z, line)
        return ProcessDef(name, tuple(params), proc)

    def assg_def(self) -> ProcessDef:
        x, y, z, gt, line = (self.var(b) for b in ("x", "y", "z", "gt", "line"))
        body = seq(self.drop(x), self.gain(x, y, gt), self.run_end(x, ASSG, line, z))
        return ProcessDef("assg", (x, y, z, gt, line), body)

    def program(self) -> LccProgram:
        defs = [self.assg_def()]
        for c in self.prog.classes:
            for k in c.constructors:
                defs.append(self.member(c, k, True))
            for m in c.methods:
                defs.append(self.member(c, m, False))
        z = self.var("z_main")
        ctx = _Ctx(None, {}, {}, {}, in_main=True)
        body = self.statement(self.prog.main.body, z, frozenset(), ctx)
        sentinel = ask([witness("end", NOBODY, BLOCK, self.prog.main.body.line, z)], tell(Atom("ok", ())))
        main = Local((z,), par(body, sentinel))
        return LccProgram(defs, main, {k: v for k, v in sorted(self.line_index.items())})


def encode_program(prog: ast.SourceProgram) -> LccProgram:
    return Encoder(prog).program()


def encode_statement(s, z: Term, G=frozenset(), prog: Optional[ast.SourceProgram] = None,
                     types: Optional[dict] = None, names: Optional[dict] = None) -> Process:
    """Encode one statement in isolation (variables named by `names`, classes from `prog`)."""
    enc = Encoder(prog or ast.SourceProgram((), ast.MainDecl(ast.Block(()))))
    ctx = _Ctx(None, dict(names or {}), dict(types or {}), {})
    return enc.statement(s, z, frozenset(G), ctx)
