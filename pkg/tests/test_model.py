"""Core execution-model tests.

The predicate oracles here (_oracle_cache, _oracle_knows, _oracle_hidden) are
independent re-derivations from the definitions, working only on the raw
trace; they deliberately share no code with the incremental implementations
they check.
"""

from __future__ import annotations

import pytest

from rmrlab.model import (
    LOSE,
    WIN,
    AbortNotice,
    AlgorithmSpec,
    AlgorithmTooDeep,
    Configuration,
    RegisterId,
    RegisterValue,
    ScheduleItem,
    Simulator,
    abort_item,
    cache_set,
    hidden_set,
    indistinguishable,
    is_safe,
    knows_set,
    lost_set,
    project_schedule,
    rmr_counts,
    rmr_flag,
    schedule_from_json,
    schedule_to_json,
    step,
    steps,
    trace_to_json,
)
from rmrlab.subjects import Le2, TournamentLe


class Scripted(AlgorithmSpec):
    """Test subject running a fixed list of (kind, register) actions per
    process, then returning a fixed outcome."""

    name = "scripted"

    def __init__(self, segments, scripts, outcomes=None):
        self.n = len(segments)
        self._segments = tuple(tuple(s) for s in segments)
        self.scripts = scripts
        self.outcomes = outcomes or [LOSE] * self.n

    def segments(self):
        return self._segments

    def program(self, pid, ctx):
        try:
            for kind, reg in self.scripts[pid]:
                if kind == "read":
                    yield from ctx.read(reg)
                else:
                    yield from ctx.write(reg)
            return self.outcomes[pid]
        except AbortNotice:
            return LOSE


def r(o, i):
    return RegisterId(o, i)


def two_proc(scripts, outcomes=None, seg_sizes=(2, 2)):
    segs = [tuple(r(p, i) for i in range(sz)) for p, sz in enumerate(seg_sizes)]
    return Scripted(segs, scripts, outcomes)


# ---------------------------------------------------------------------------
# oracles (independent re-derivations from the definitions)


def _oracle_cache(C: Configuration, p: int):
    """Own segment plus registers p accessed with no later foreign write."""
    if C.returned(p):
        return frozenset()
    trace = C.trace_steps()
    out = set(C.segments[p])
    accessed = {}
    for i, e in enumerate(trace):
        if e.kind in ("read", "write") and e.actor == p:
            accessed[e.register] = i
    for reg, t in accessed.items():
        later_foreign_write = any(
            e.kind == "write" and e.register == reg and e.actor != p
            for e in trace[t + 1:]
        )
        if not later_foreign_write:
            out.add(reg)
    return frozenset(out)


def _oracle_knows(C: Configuration):
    trace = C.trace_steps()
    stepped = {e.actor for e in trace if e.kind != "abort"}
    K = set()
    for i, e in enumerate(trace):
        if e.kind == "read":
            if e.value.token is not None and e.value.writer != e.actor:
                K.add((e.actor, e.value.writer))
            if e.register.owner != e.actor and e.register.owner in stepped:
                K.add((e.actor, e.register.owner))
        if e.kind == "write" and e.register.owner != e.actor:
            owner = e.register.owner
            if owner not in stepped:
                continue
            # before the owner's terminating read of that register
            term = None
            for j, f in enumerate(trace):
                if f.terminating and f.actor == owner and f.register == e.register:
                    term = j
                    break
            if term is None or i < term:
                K.add((owner, e.actor))
    return frozenset(K)


def _oracle_hidden(C: Configuration):
    trace = C.trace_steps()
    lost = lost_set(C)
    hidden = set(range(C.n))
    for p in range(C.n):
        for reg in {e.register for e in trace if e.register is not None}:
            if reg.owner == p:
                writers = [e.actor for e in trace if e.kind == "write" and e.register == reg]
                if any(w != p and w not in lost for w in writers):
                    hidden.discard(p)
            else:
                acc = [i for i, e in enumerate(trace)
                       if e.actor == p and e.kind in ("read", "write") and e.register == reg]
                if not acc:
                    continue
                t = acc[-1]
                after = [e.actor for e in trace[t + 1:] if e.kind == "write" and e.register == reg]
                if after and not any(w in lost for w in after):
                    hidden.discard(p)
    return frozenset(hidden)


# ---------------------------------------------------------------------------
# apply semantics


def test_empty_schedule_is_identity():
    sim = Simulator(Le2())
    G = sim.initial()
    C, trace = sim.apply(G, ())
    assert trace == ()
    assert indistinguishable(G, C, range(2))


def test_invocation_read_is_remote():
    subj = two_proc([[("read", r(1, 0))], []], outcomes=[WIN, LOSE])
    sim = Simulator(subj)
    C, trace = sim.apply(sim.initial(), (step(0),))
    assert len(trace) == 1
    assert trace[0].kind == "read" and trace[0].rmr


def test_two_process_tournament_one_winner_round_robin():
    subj = TournamentLe(2)
    sim = Simulator(subj)
    C = sim.initial()
    i = 0
    while not C.all_returned() and i < 4000:
        if not C.returned(i % 2):
            C, _ = sim.apply(C, (step(i % 2),))
        i += 1
    outs = [C.outcome(0), C.outcome(1)]
    assert sorted(outs) == [LOSE, WIN]


def test_step_for_returned_process_is_noop():
    subj = two_proc([[("read", r(1, 0))], []], outcomes=[WIN, LOSE])
    sim = Simulator(subj)
    C, _ = sim.apply(sim.initial(), steps(0, 0, 0))  # action + 2 scan reads
    assert C.returned(0)
    C2, trace = sim.apply(C, (step(0),))
    assert trace == ()
    assert indistinguishable(C, C2, range(2))
    assert len(C2.schedule()) == len(C.schedule()) + 1  # lineage still records it


def test_abort_flips_once_and_repeats_ignored():
    sim = Simulator(Le2())
    C, t1 = sim.apply(sim.initial(), (abort_item(0),))
    assert C.aborted[0] and len(t1) == 1 and t1[0].kind == "abort" and not t1[0].rmr
    C2, t2 = sim.apply(C, (abort_item(0),))
    assert t2 == ()


def test_abort_after_return_is_noop():
    subj = two_proc([[("read", r(1, 0))], []], outcomes=[WIN, LOSE])
    sim = Simulator(subj)
    C, _ = sim.apply(sim.initial(), steps(0, 0, 0))
    assert C.returned(0)
    C2, trace = sim.apply(C, (abort_item(0),))
    assert trace == () and not C2.aborted[0]


def test_terminating_scan_reads_whole_segment_locally():
    subj = two_proc([[("read", r(1, 0))], []], outcomes=[WIN, LOSE], seg_sizes=(3, 1))
    sim = Simulator(subj)
    C, trace = sim.apply(sim.initial(), steps(0, 0, 0, 0))
    assert C.returned(0) and C.outcome(0) == WIN
    scan = [e for e in trace if e.terminating]
    assert [e.register for e in scan] == [r(0, 0), r(0, 1), r(0, 2)]
    assert all(not e.rmr for e in scan)


def test_algorithm_too_deep():
    class Spinner(AlgorithmSpec):
        name = "spinner"
        n = 1

        def segments(self):
            return ((r(0, 0),),)

        def program(self, pid, ctx):
            while True:
                yield from ctx.read(r(0, 0), abortable=False)

    sim = Simulator(Spinner(), step_ceiling=50)
    with pytest.raises(AlgorithmTooDeep):
        sim.apply(sim.initial(), tuple(step(0) for _ in range(100)))


def test_determinism_replay_lineage():
    sim = Simulator(Le2())
    C, _ = sim.apply(sim.initial(), (step(0), abort_item(1), step(1), step(0), step(1), step(0)))
    C2, _ = sim.apply(sim.initial(), C.schedule())
    assert C.fingerprint() == C2.fingerprint()
    assert indistinguishable(C, C2, range(2))
    assert C.trace_steps() == C2.trace_steps()


def test_value_uniqueness():
    sim = Simulator(TournamentLe(3))
    C = sim.initial()
    import random
    rng = random.Random(7)
    for _ in range(300):
        live = [p for p in range(3) if not C.returned(p)]
        if not live:
            break
        C, _ = sim.apply(C, (step(rng.choice(live)),))
    written = [e.value for e in C.trace_steps() if e.kind == "write"]
    assert len(written) == len(set(written))


# ---------------------------------------------------------------------------
# rmr_flag / cache


def test_rmr_flag_own_segment_read_is_local():
    sim = Simulator(Le2())
    G = sim.initial()
    assert rmr_flag(G, 0, "read", r(0, 1)) is False


def test_rmr_flag_foreign_write_is_remote():
    sim = Simulator(Le2())
    assert rmr_flag(sim.initial(), 0, "write", r(1, 1)) is True


def test_rmr_flag_cached_reread_is_local():
    subj = two_proc([[("read", r(1, 0)), ("read", r(1, 0))], []], outcomes=[WIN, LOSE])
    sim = Simulator(subj)
    C, trace = sim.apply(sim.initial(), steps(0, 0))
    assert trace[0].rmr and not trace[1].rmr


def test_rmr_flag_write_invalidates_reader():
    # p0 reads r(1,0); p1 writes it; p0's cached copy dies
    subj = two_proc([[("read", r(1, 0))], [("write", r(1, 0))]])
    sim = Simulator(subj)
    C, _ = sim.apply(sim.initial(), (step(0),))
    assert rmr_flag(C, 0, "read", r(1, 0)) is False
    C, _ = sim.apply(C, (step(1),))
    assert rmr_flag(C, 0, "read", r(1, 0)) is True


def test_cache_set_initially_own_segment():
    sim = Simulator(Le2())
    G = sim.initial()
    assert cache_set(G, 0) == frozenset(G.segments[0]) == _oracle_cache(G, 0)


def test_cache_set_empty_when_terminated():
    subj = two_proc([[("read", r(1, 0))], []], outcomes=[WIN, LOSE])
    sim = Simulator(subj)
    C, _ = sim.apply(sim.initial(), steps(0, 0, 0))
    assert C.returned(0)
    assert cache_set(C, 0) == frozenset() == _oracle_cache(C, 0)


def test_cache_set_invalidated_by_foreign_write_matches_oracle():
    subj = two_proc([[("read", r(1, 0))], [("write", r(1, 0)), ("write", r(0, 1))]])
    sim = Simulator(subj)
    C, _ = sim.apply(sim.initial(), steps(0, 1, 1))
    assert r(1, 0) not in cache_set(C, 0)
    assert cache_set(C, 0) == _oracle_cache(C, 0)
    assert cache_set(C, 1) == _oracle_cache(C, 1)


# ---------------------------------------------------------------------------
# knowledge / hidden / safe


def test_knows_empty_initially():
    sim = Simulator(Le2())
    assert knows_set(sim.initial()) == frozenset()


def test_knows_k1_read_of_visible_value():
    subj = two_proc([[("read", r(1, 1))], [("write", r(1, 1))]])
    sim = Simulator(subj)
    C, _ = sim.apply(sim.initial(), steps(1, 0))
    K = knows_set(C)
    assert (0, 1) in K
    assert K == _oracle_knows(C)


def test_knows_k3_foreign_write_into_segment():
    subj = two_proc([[("read", r(1, 0))], [("write", r(0, 1))]])
    sim = Simulator(subj)
    C, _ = sim.apply(sim.initial(), steps(0, 1))
    assert (0, 1) in knows_set(C)  # q=1 wrote into p=0's segment, 0 stepped
    assert knows_set(C) == _oracle_knows(C)


def test_knows_k3_respects_terminating_read_position():
    # p0 only ever touches the silent p2's segment, so K2 never links (0,1);
    # whether (0,1) enters K3 depends on p1's write landing before or after
    # p0's terminating read of the written register
    segs = [(r(0, 0), r(0, 1)), (r(1, 0),), (r(2, 0),)]
    make = lambda: Scripted(segs, [[("read", r(2, 0))], [("write", r(0, 0))], []],
                            [WIN, LOSE, LOSE])
    sim = Simulator(make())
    late, _ = sim.apply(sim.initial(), steps(0, 0, 0, 1))  # p0 returned, then p1 writes
    assert late.returned(0)
    assert (0, 1) not in knows_set(late)
    assert knows_set(late) == _oracle_knows(late)
    sim2 = Simulator(make())
    early, _ = sim2.apply(sim2.initial(), steps(1, 0, 0, 0))  # write lands first
    assert (0, 1) in knows_set(early)
    assert knows_set(early) == _oracle_knows(early)


def test_hidden_initially_everyone():
    sim = Simulator(Le2())
    assert hidden_set(sim.initial()) == frozenset(range(2))


def test_hidden_h1_unshielded_overwrite():
    # p0 writes a foreign register, live p1 overwrites it: p0 exposed
    subj = two_proc([[("write", r(1, 1))], [("write", r(1, 1))]])
    sim = Simulator(subj)
    C, _ = sim.apply(sim.initial(), steps(0, 1))
    H = hidden_set(C)
    assert 0 not in H
    assert H == _oracle_hidden(C)


def test_hidden_h2_foreign_write_into_own_segment():
    subj = two_proc([[("read", r(1, 0))], [("write", r(0, 1))]])
    sim = Simulator(subj)
    C, _ = sim.apply(sim.initial(), steps(1,))
    H = hidden_set(C)
    assert 0 not in H  # live p1 wrote into p0's segment
    assert H == _oracle_hidden(C)


def test_safe_initially_and_k1_violation():
    sim = Simulator(Le2())
    assert is_safe(sim.initial())
    subj = two_proc([[("read", r(1, 1))], [("write", r(1, 1))]])
    sim2 = Simulator(subj)
    C, _ = sim2.apply(sim2.initial(), steps(1, 0))
    assert not is_safe(C)  # (0,1) in K but 1 is not lost


# ---------------------------------------------------------------------------
# projections / indistinguishability / counting


def test_project_schedule_identity_and_filter():
    sched = (step(0), abort_item(1), step(1), step(0))
    assert project_schedule(sched, {0, 1}) == sched
    assert project_schedule(sched, {0}) == (step(0), step(0))
    assert project_schedule(sched, {1}) == (abort_item(1), step(1))


def test_indistinguishable_reflexive_and_register_sensitivity():
    sim = Simulator(Le2())
    G = sim.initial()
    assert indistinguishable(G, G, {0, 1})
    C, _ = sim.apply(G, steps(1, 1, 1, 1, 1))  # p1 scans, inv read, announce
    assert not indistinguishable(G, C, {0})  # registers differ after announce


def test_flp_case_two_overwrite_indistinguishability():
    # both poised to write the same register; a's write after b's erases b's
    reg = r(0, 1)
    subj = two_proc([[("write", reg), ("read", r(1, 0))], [("write", reg)]])
    sim = Simulator(subj)
    G = sim.initial()
    Ca, _ = sim.apply(G, (step(0),))            # a alone
    Cba, _ = sim.apply(G, (step(1), step(0)))   # b then a
    assert indistinguishable(Ca, Cba, {0})
    assert not indistinguishable(Ca, Cba, {1})


def test_rmr_counts_trivial_and_single_read():
    assert rmr_counts([]) == {}
    subj = two_proc([[("read", r(1, 0))], []])
    sim = Simulator(subj)
    _, trace = sim.apply(sim.initial(), (step(0),))
    assert rmr_counts(trace) == {0: 1}
    assert rmr_counts(trace, [0, 1]) == {0: 1, 1: 0}


def test_le2_solo_winner_rmr_count():
    sim = Simulator(Le2())
    C, steps_taken = sim.run_solo(sim.initial(), 0)
    assert C.outcome(0) == WIN
    counts = rmr_counts(C.trace_steps())
    assert counts[0] >= 1


# ---------------------------------------------------------------------------
# serialization


def test_schedule_json_roundtrip():
    sched = (step(0), abort_item(1), step(1))
    assert schedule_from_json(schedule_to_json(sched)) == sched


def test_trace_json_schema():
    subj = two_proc([[("read", r(1, 0)), ("write", r(0, 1))], []], outcomes=[WIN, LOSE])
    sim = Simulator(subj)
    C, trace = sim.apply(sim.initial(), (step(0), step(0), abort_item(1)))
    rows = trace_to_json(trace)
    assert [row["seq"] for row in rows] == [0, 1, 2]
    assert rows[0] == {
        "seq": 0, "actor": 0, "kind": "read",
        "register": {"owner": 1, "index": 0},
        "value": {"writer": 1, "token": None}, "rmr": True,
    }
    assert rows[1]["kind"] == "write" and rows[1]["value"]["token"] == [0, 2]
    assert rows[2] == {"seq": 2, "actor": 1, "kind": "abort",
                       "register": None, "value": None, "rmr": False}


def test_trace_json_bit_identical_across_runs():
    import json
    sim = Simulator(Le2())
    out = []
    for _ in range(2):
        C, trace = sim.apply(sim.initial(), steps(0, 1, 0, 1, 0, 1, 0, 1))
        out.append(json.dumps(trace_to_json(trace), sort_keys=True))
    assert out[0] == out[1]
