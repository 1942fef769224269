"""Shared fuzz machinery for the projection/safety claim suite.

Generates seeded (subject, schedule) cases biased toward configurations that
satisfy the claims' hypotheses (zero-information prefixes, adversary-built
safe states, poised one-shot executions), evaluates every applicable claim,
and on a counterexample shrinks the schedule to a minimal replayable witness
before failing.
"""

from __future__ import annotations

import json
import random

from rmrlab.adversary import AdversaryParams, base_case, extend_to_poised
from rmrlab.explorer import ExplorationBudget
from rmrlab.model import (
    LOSE,
    WIN,
    Simulator,
    abort_item,
    cache_set,
    is_safe,
    knows_set,
    lost_set,
    project_schedule,
    rmr_counts,
    rmr_flag,
    schedule_to_json,
    step,
    total_rmr,
)
from rmrlab.subjects import FunnelLe, Le2, TournamentLe

CLAIMS = (
    "projection_same_execution",
    "projection_cache",
    "projection_safe",
    "winner_projection",
    "zero_rmr_safe",
    "k_change_locality",
    "bounds_on_k_and_m",
)


class CounterexampleFound(AssertionError):
    pass


def _subject_pool():
    return [
        ("le2", lambda: Le2()),
        ("tournament2", lambda: TournamentLe(2)),
        ("tournament3", lambda: TournamentLe(3)),
        ("tournament4", lambda: TournamentLe(4)),
        ("funnel4", lambda: FunnelLe(4)),
    ]


def _staggered_prefix(sim, rng):
    """Scan plus invocation read per process in ascending order (keeps every
    knows-pair pointed at a silent process), optionally extended randomly."""
    n = sim.algorithm.n
    items = []
    for p in range(n):
        items.extend([step(p)] * (len(sim.segments[p]) + rng.randrange(0, 2)))
    for _ in range(rng.randrange(0, 10)):
        items.append(step(rng.randrange(n)))
    return tuple(items)


def _random_prefix(sim, rng):
    n = sim.algorithm.n
    items = []
    for _ in range(rng.randrange(1, 40)):
        p = rng.randrange(n)
        if rng.random() < 0.05:
            items.append(abort_item(p))
        items.append(step(p))
    return tuple(items)


def _truncate_to_live(sim, items):
    """Drop schedule items once a process has returned (keeps runs short)."""
    C = sim.initial()
    out = []
    for it in items:
        if C.returned(it.pid):
            continue
        C, _ = sim.apply(C, (it,))
        out.append(it)
    return tuple(out), C


def _adversary_states(name_filter=None):
    """Safe configurations produced by the round construction itself: the
    base case, the poised states, and the first round's output (after which
    the register owner's path is often clear, making zero-RMR finishers
    reachable)."""
    from rmrlab.adversary import run as adv_run

    out = []
    for subj_name, make in (("tournament4", lambda: TournamentLe(4)),
                            ("funnel4", lambda: FunnelLe(4))):
        subj = make()
        sim = Simulator(subj)
        st = base_case(sim)
        out.append((subj_name, make, st.schedule))
        D, pset, lam, _ = extend_to_poised(sim, st)
        out.append((subj_name, make, D.schedule()))
        rep = adv_run(make(), params=AdversaryParams(ell_override=1, rounds=1))
        if rep.rounds:
            out.append((subj_name, make, rep.witness_schedules[-1]))
    return out


def iter_cases(seed: int, count: int):
    """Yields (label, sim, schedule, C) seeded case tuples."""
    rng = random.Random(seed)
    pool = _subject_pool()
    adversary_cases = _adversary_states()
    produced = 0
    while produced < count:
        mode = rng.random()
        if mode < 0.45:
            name, make = pool[rng.randrange(len(pool))]
            sim = Simulator(make())
            sched = _staggered_prefix(sim, rng)
        elif mode < 0.85:
            name, make = pool[rng.randrange(len(pool))]
            sim = Simulator(make())
            sched = _random_prefix(sim, rng)
        else:
            name, make, sched = adversary_cases[rng.randrange(len(adversary_cases))]
            sim = Simulator(make())
            extra = tuple(step(rng.randrange(sim.algorithm.n))
                          for _ in range(rng.randrange(0, 6)))
            sched = tuple(sched) + extra
        sched, C = _truncate_to_live(sim, sched)
        yield name, sim, sched, C
        produced += 1


# ---------------------------------------------------------------------------
# claim evaluation; each returns True when it actually checked something


def _random_superset(rng, n, lower):
    P = set(lower)
    for p in range(n):
        if rng.random() < 0.6:
            P.add(p)
    return frozenset(P)


def _trace_restricted(C, P):
    return [e for e in C.trace_steps() if e.actor in P]


def check_projection_same_execution(sim, sched, C, rng):
    K = knows_set(C)
    lost = lost_set(C)
    if any(q not in lost for _, q in K):
        return False
    P = _random_superset(rng, C.n, lost)
    proj = project_schedule(sched, P)
    sim2 = Simulator(type(sim.algorithm)(sim.algorithm.n) if _rebuildable(sim) else sim.algorithm)
    Cp, _ = sim.apply(sim.initial(), proj)
    left = _trace_restricted(C, P)
    right = Cp.trace_steps()
    if left != right:
        raise CounterexampleFound("projection_same_execution")
    # companion claim: equal projections preserve RMR counts and knowledge
    if rmr_counts(left, P) != rmr_counts(right, P):
        raise CounterexampleFound("projection preserves rmr counts")
    kc = {pair for pair in knows_set(C) if pair[0] in P and pair[1] in P}
    kp = {pair for pair in knows_set(Cp) if pair[0] in P and pair[1] in P}
    if kc != kp:
        raise CounterexampleFound("projection preserves knowledge")
    return True


def _rebuildable(sim):
    return False


def check_projection_cache(sim, sched, C, rng):
    if not is_safe(C):
        return False
    lost = lost_set(C)
    P = _random_superset(rng, C.n, lost)
    Cp, _ = sim.apply(sim.initial(), project_schedule(sched, P))
    for p in P:
        if cache_set(C, p) != cache_set(Cp, p):
            raise CounterexampleFound(f"projection_cache process {p}")
    return True


def check_projection_safe(sim, sched, C, rng):
    if not is_safe(C):
        return False
    lost = lost_set(C)
    parts = C.participants()
    if not lost <= parts:
        return False
    extra = [p for p in parts if p not in lost]
    rng.shuffle(extra)
    P = frozenset(lost) | frozenset(extra[: rng.randrange(0, len(extra) + 1)])
    Cp, _ = sim.apply(sim.initial(), project_schedule(sched, P))
    if not is_safe(Cp):
        raise CounterexampleFound("projection_safe")
    return True


def check_winner_projection(sim, sched, C, rng):
    if not is_safe(C):
        return False
    winners = [p for p in range(C.n) if C.outcome(p) == WIN]
    if not winners:
        return False
    w = winners[0]
    P = frozenset(range(C.n)) - {w}
    Cp, _ = sim.apply(sim.initial(), project_schedule(sched, P))
    for q in P:
        if C.history(q) != Cp.history(q):
            raise CounterexampleFound(f"winner_projection history of {q}")
        if cache_set(C, q) != cache_set(Cp, q):
            raise CounterexampleFound(f"winner_projection cache of {q}")
    return True


def check_zero_rmr_safe(sim, sched, C, rng):
    if not is_safe(C):
        return False
    lost = lost_set(C)
    candidates = [
        x for x in sorted(C.participants())
        if x not in lost and not C.aborted[x] and not C.returned(x)
    ]
    rng.shuffle(candidates)
    for x in candidates[:3]:
        act = sim.poised(C, x)
        if act is None:
            continue
        if rmr_flag(C, x, act[0], act[1]):
            continue
        Cx, _ = sim.apply(C, (step(x),))
        if not is_safe(Cx):
            raise CounterexampleFound(f"zero_rmr_safe step by {x}")
        return True
    return False


def check_k_change_locality(sim, sched, C, rng):
    p = rng.randrange(C.n)
    item = abort_item(p) if rng.random() < 0.2 and not C.aborted[p] else step(p)
    Cn, delta = sim.apply(C, (item,))
    diff = knows_set(C) ^ knows_set(Cn)
    if not diff:
        return True
    if not delta or delta[0].kind == "abort":
        raise CounterexampleFound("knowledge changed without a shared-memory step")
    actor = delta[0].actor
    for a, b in diff:
        if actor not in (a, b):
            raise CounterexampleFound(f"knowledge pair {(a, b)} changed by step of {actor}")
    return True


def check_bounds_on_k_and_m(sim, sched, C, rng):
    """Poise every survivor, then execute a register-unique one-shot subset."""
    if not is_safe(C):
        return False
    lost = lost_set(C)
    if any(C.aborted[p] and p not in lost for p in range(C.n)):
        return False
    survivors = [p for p in sorted(C.participants()) if p not in lost and not C.returned(p)]
    if not survivors:
        return False
    cur = C
    for q in survivors:
        try:
            _, t, fate, _ = sim.solo_zero_rmr_prefix(cur, q)
        except Exception:
            return False
        if fate == "returns":
            return False
        cur, tr = sim.apply(cur, tuple(step(q) for _ in range(t)))
        if total_rmr(tr) != 0:
            return False
    D = cur
    if not is_safe(D):
        return False
    P = frozenset(survivors)
    chosen = []
    seen_written = set()
    order = survivors[:]
    rng.shuffle(order)
    for q in order:
        act = sim.poised(D, q)
        if act is None:
            continue
        kind, reg = act
        if kind == "write":
            if reg in seen_written:
                continue
            seen_written.add(reg)
        chosen.append(q)
    caches = {p: cache_set(D, p) for p in survivors}
    shot = tuple(step(q) for q in chosen)
    Dn, tr = sim.apply(D, shot)
    kp = {pair for pair in knows_set(Dn) if pair[0] in P and pair[1] in P}
    if len(kp) > 2 * total_rmr(tr):
        raise CounterexampleFound("bounds_on_k_and_m part (a)")
    m_pairs = set()
    for ev in tr:
        if ev.kind != "write":
            continue
        for p in survivors:
            if p == ev.actor:
                continue
            if ev.register.owner == p or ev.register in caches[p]:
                m_pairs.add((p, ev.actor))
    if len(m_pairs) > total_rmr(D.trace_steps()) + total_rmr(tr):
        raise CounterexampleFound("bounds_on_k_and_m part (b)")
    return True


CHECKERS = {
    "projection_same_execution": check_projection_same_execution,
    "projection_cache": check_projection_cache,
    "projection_safe": check_projection_safe,
    "winner_projection": check_winner_projection,
    "zero_rmr_safe": check_zero_rmr_safe,
    "k_change_locality": check_k_change_locality,
    "bounds_on_k_and_m": check_bounds_on_k_and_m,
}


def shrink_schedule(fails, sched):
    """Greedy delta-debugging: drop chunks, then single items, while the
    failure persists.  `fails(schedule) -> bool`."""
    items = list(sched)
    chunk = max(1, len(items) // 2)
    while chunk >= 1:
        i = 0
        while i < len(items):
            trial = items[:i] + items[i + chunk:]
            if trial and fails(tuple(trial)):
                items = trial
            else:
                i += chunk
        chunk //= 2
    return tuple(items)


def run_claim_fuzz(seed: int, cases: int, out_witness="witness_shrunk.json"):
    """Evaluates every claim over `cases` seeded cases; returns the per-claim
    evaluation counts.  On a counterexample, shrinks and fails."""
    counts = {name: 0 for name in CLAIMS}
    rng = random.Random(seed * 31 + 7)
    for label, sim, sched, C in iter_cases(seed, cases):
        for name, checker in CHECKERS.items():
            sub_rng = random.Random(rng.randrange(2**31))
            try:
                if checker(sim, sched, C, random.Random(sub_rng.randrange(2**31))):
                    counts[name] += 1
            except CounterexampleFound as exc:
                def still_fails(trial, checker=checker, sim=sim, seed2=sub_rng.randrange(2**31)):
                    trial_sched, trial_C = _truncate_to_live(sim, trial)
                    try:
                        checker(sim, trial_sched, trial_C, random.Random(seed2))
                    except CounterexampleFound:
                        return True
                    return False

                shrunk = shrink_schedule(still_fails, sched)
                witness = {
                    "claim": name,
                    "subject": label,
                    "n": sim.algorithm.n,
                    "schedule": schedule_to_json(shrunk),
                }
                with open(out_witness, "w") as fh:
                    json.dump(witness, fh, indent=2, sort_keys=True)
                raise AssertionError(
                    f"claim {name} failed on {label}; shrunk witness "
                    f"({len(shrunk)} items) written to {out_witness}: {exc}"
                ) from exc
    return counts
