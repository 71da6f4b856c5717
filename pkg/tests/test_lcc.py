import random

from hypothesis import given, settings, strategies as st

from permflow.lcc import (
    Call, Choice, Configuration, Local, Par, ProcessDef, Randomized, RoundRobin, Seq, Tell, ask, desugar,
    enabled_transitions, has_seq, initial_configuration, par, replay, run_scheduled, seq, sync, tell,
)
from permflow.store import (
    IMM, NDG, NIL, NONE, UNQ, Atom, Name, Nat, ObjId, Store, Var, canonicalize, ct, ref,
)

A, B, C, OK = Atom("a", ()), Atom("b", ()), Atom("c", ()), Atom("ok", ())


def closed(atoms=(), agents=()):
    return Configuration(frozenset(), tuple(agents), Store.of(atoms))


# -- desugaring --------------------------------------------------------------------------

def test_seq_of_tells_synchronizes_on_a_fresh_variable():
    main, _ = desugar(seq(tell(A), tell(B)), [])
    assert isinstance(main, Local) and len(main.vars) == 1
    (z,) = main.vars
    first, second = main.body.procs
    assert first == Tell(((A, False), (sync(z), False)))
    assert isinstance(second, Choice) and second.branches[0].guard == (sync(z),)
    assert second.branches[0].body == tell(B)
    assert not has_seq(main)


def test_seq_after_par_uses_a_collector():
    main, _ = desugar(seq(Par((tell(A), tell(B))), tell(C)), [])
    z = main.vars[0]
    inner = main.body.procs[0]
    assert isinstance(inner, Local) and len(inner.vars) == 2
    w1, w2 = inner.vars
    collector = inner.body.procs[-1]
    assert collector.branches[0].guard == (sync(w1), sync(w2))
    assert collector.branches[0].body == Tell(((sync(z), False),))


def test_calls_and_definitions_gain_a_sync_parameter():
    d = ProcessDef("p", (Var("x"),), tell(Atom("q", (Var("x"),))))
    main, defs = desugar(seq(Call("p", (Name("N_1"),)), tell(C)), [d])
    (p2,) = defs
    assert len(p2.params) == 2
    assert sync(p2.params[1]) in [a for a, _ in p2.body.items]
    call = main.body.procs[0]
    assert isinstance(call, Call) and call.args[0] == Name("N_1") and len(call.args) == 2


def test_sequence_runs_in_order():
    main, defs = desugar(seq(tell(A), ask([A], tell(B)), tell(C)), [])
    r = run_scheduled(initial_configuration(main), defs)
    assert r.status == "quiescentStuck"  # no ok(), but every tell happened
    assert r.final.store.count(B) == 1 and r.final.store.count(C) == 1


# -- transitions ---------------------------------------------------------------------------

def test_tell_has_one_successor():
    ts = enabled_transitions(closed(agents=[tell(A)]), {})
    assert len(ts) == 1
    assert ts[0].target.agents == () and ts[0].target.store == Store.of([A])


def test_blocked_branch_is_excluded():
    c = closed([A], [ask([A], tell(OK)), ask([B], tell(OK))])
    ts = enabled_transitions(c, {})
    assert len(ts) == 1 and ts[0].agent == 0


def test_consuming_permissions():
    # P1 and P2 already told: x holds o_x immutably with count one; y and z share o_y
    x, y, z = Name("X_1"), Name("Y_2"), Name("Z_3")
    ox, oy = ObjId(1), ObjId(2)
    o = Var("o#")
    store = [ref(x, ox, IMM, NDG), ct(ox, 1), ref(y, oy, IMM, NDG), ref(z, oy, IMM, NDG), ct(oy, 2)]
    q = ask([ref(x, o, UNQ, NDG), ct(o, 1)], tell(ref(x, NIL, NONE, NDG), ct(o, 0)), [o])
    r = ask([ref(y, o, UNQ, NDG)], tell(Atom("r_done", ())), [o])
    ts = enabled_transitions(closed(store, [q, r]), {})
    assert len(ts) == 1
    (t,) = ts
    assert t.agent == 0 and t.match_obj.subst == {o: ox}
    assert [name for name, _ in t.match_obj.axiom_trace] == ["upgrade2"]
    s = t.target.store
    assert s.count(ref(x, NIL, NONE, NDG)) == 1 and s.count(ct(ox, 0)) == 1
    assert s.count(ct(ox, 1)) == 0
    assert t.target.agents == (r,)


def test_local_creates_fresh_names():
    v = Var("v#1")
    c = initial_configuration(Local((v,), tell(Atom("p", (v,)))))
    (a,) = c.store.linear_atoms()
    assert isinstance(a.args[0], Name) and a.args[0] in c.hidden


# -- scheduling ------------------------------------------------------------------------------

TRACES = par(tell(A, B), ask([A], ask([B], tell(A, B))), ask([B], ask([A], tell(OK))))


def test_traces_example_has_ok_and_stuck_runs():
    statuses = set()
    finals = set()
    for seed in range(40):
        r = run_scheduled(initial_configuration(TRACES), {}, Randomized(seed))
        statuses.add(r.status)
        if r.status == "quiescentOk":
            finals.add(r.final.store)
    assert statuses == {"quiescentOk", "quiescentStuck"}
    assert Store.of([OK]) in finals


def test_empty_program_is_quiescent_at_once():
    r = run_scheduled(initial_configuration(par()), {})
    assert r.steps == 0 and r.events == [] and r.final.agents == ()


def test_equal_seeds_give_equal_traces():
    runs = [run_scheduled(initial_configuration(TRACES), {}, Randomized(7)) for _ in range(2)]
    assert [e.render() for e in runs[0].events] == [e.render() for e in runs[1].events]
    assert runs[0].schedule == runs[1].schedule


def test_round_robin_is_deterministic_and_replayable():
    r1 = run_scheduled(initial_configuration(TRACES), {}, RoundRobin())
    r2 = run_scheduled(initial_configuration(TRACES), {}, RoundRobin())
    assert r1.schedule == r2.schedule
    assert replay(initial_configuration(TRACES), {}, r1.schedule).store == r1.final.store


def test_step_limit_is_reported():
    loop = ProcessDef("loop", (), Call("loop", ()))
    r = run_scheduled(initial_configuration(Call("loop", ())), {"loop": loop}, RoundRobin(), max_steps=5)
    assert r.status == "stepLimit" and r.steps == 5


# -- properties ------------------------------------------------------------------------------

def _rename(c: Configuration, offset: int) -> Configuration:
    from permflow.lcc import substitute
    m = {}
    for h in c.hidden:
        if isinstance(h, Name):
            m[h] = Name(h.name + f"r{offset}")
    def tr(t):
        return m.get(t, t)
    lin = {Atom(a.pred, tuple(tr(t) for t in a.args)): k for a, k in c.store.linear.items()}
    bang = [Atom(a.pred, tuple(tr(t) for t in a.args)) for a in c.store.banged]
    agents = tuple(_rename_proc(p, m) for p in c.agents)
    return Configuration(frozenset(tr(h) for h in c.hidden), agents, Store(lin, bang), c.serial)


def _rename_proc(p, m):
    from permflow.lcc import Branch
    def ta(a):
        return Atom(a.pred, tuple(m.get(t, t) for t in a.args))
    if isinstance(p, Tell):
        return Tell(tuple((ta(a), b) for a, b in p.items))
    if isinstance(p, Choice):
        return Choice(tuple(Branch(b.vars, tuple(ta(a) for a in b.guard), _rename_proc(b.body, m))
                            for b in p.branches))
    if isinstance(p, Par):
        return Par(tuple(_rename_proc(q, m) for q in p.procs))
    if isinstance(p, Local):
        return Local(p.vars, _rename_proc(p.body, m))
    if isinstance(p, Call):
        return Call(p.name, tuple(m.get(t, t) for t in p.args))
    raise TypeError(p)


def _program(rng: random.Random):
    v = Var("v#1")
    tokens = [Atom(n, ()) for n in "abcd"]
    procs = []
    for _ in range(rng.randint(1, 5)):
        k = rng.randrange(4)
        a, b = rng.sample(tokens, 2)
        if k == 0:
            procs.append(tell(a))
        elif k == 1:
            procs.append(ask([a], tell(b)))
        elif k == 2:
            procs.append(Local((v,), tell(Atom("p", (v,)), banged=[Atom("q", (v,))])))
        else:
            w = Var("w#")
            procs.append(ask([Atom("p", (w,))], tell(a, banged=[Atom("r", (w,))]), [w]))
    return par(*procs)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_successors_are_invariant_under_renaming(seed):
    rng = random.Random(seed)
    c = initial_configuration(_program(rng))
    c2 = _rename(c, 1)
    assert canonicalize(c.store, c.hidden) == canonicalize(c2.store, c2.hidden)
    ks1 = sorted(canonicalize(t.target.store, t.target.hidden) for t in enabled_transitions(c, {}))
    ks2 = sorted(canonicalize(t.target.store, t.target.hidden) for t in enabled_transitions(c2, {}))
    assert ks1 == ks2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_banged_atoms_grow_along_runs(seed):
    rng = random.Random(seed)
    prev = [frozenset()]

    def watch(c, t):
        assert prev[0] <= c.store.banged
        prev[0] = c.store.banged

    run_scheduled(initial_configuration(_program(rng)), {}, Randomized(seed), observer=watch)
