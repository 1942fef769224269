"""Round-based adversarial scheduler against leader-election subjects.

Builds a schedule round by round so that every surviving process pays exactly
one remote memory reference per round while the reached configuration stays
safe (nobody knows a live process, every live participant is hidden).  Each
round extends every survivor with free steps until it is poised to perform an
RMR, then branches:

low contention (many poised registers, or readers in the majority)
    Pick at most one accessor per register (all of them when a register only
    has readers), take the poised steps one each, and build a conflict graph
    whose edges witness either a new knows-pair or an overwrite into a live
    process's segment or cache.  A large independent set of that graph
    survives; everyone else is erased from the schedule, which by the safety
    projections does not disturb the survivors.

high contention (few registers, writers in the majority)
    Per contended register, pick two writers a and b that would not discover
    each other, erase the handful of processes either could observe, let all
    other writers take their single write step, then run a and b through a
    found schedule on which both lose; their writes bury the other writers'
    traces, so those stay hidden.

Erasures are schedule projections; every claim the construction leans on
(projection equalities, cache preservation, safety of the reached
configuration, the one-RMR accounting) is asserted at runtime and an
InternalInvariantBroken carries the full replayable context when one fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import model
from .explorer import ExplorationBudget, PreconditionViolated, find_both_lose_schedule
from .model import (
    LOSE,
    WIN,
    Simulator,
    cache_set,
    is_safe,
    knows_set,
    lost_set,
    project_schedule,
    rmr_counts,
    step,
    total_rmr,
)


class ModelViolation(Exception):
    """The subject algorithm contradicted a guarantee of abortable leader
    election (reported against the subject, not the adversary)."""


class InternalInvariantBroken(Exception):
    """A construction-level assertion failed; carries round diagnostics."""


class BothLoseNotFound(Exception):
    """The both-lose search gave up within its budget."""


@dataclass(frozen=True)
class AdversaryParams:
    c: int = 10
    ell_override: int | None = None
    rounds: int | None = None  # defaults to the computed ell
    turan_mode: str = "greedy"  # "greedy" | "exact"
    both_lose_budget: ExplorationBudget = ExplorationBudget(max_depth=60, max_nodes=50_000)
    step_ceiling: int = 10**6

    def __post_init__(self):
        if self.c < 1:
            raise ValueError("c must be at least 1")
        if self.turan_mode not in ("greedy", "exact"):
            raise ValueError("turan_mode must be greedy or exact")


def ell_formula(n: int, c: int) -> int:
    """floor(log2 n / (c * log2 log2 n)); 0 at any desk-scale n with c=10."""
    if n < 4:
        return 0
    lg = math.log2(n)
    lglg = math.log2(lg)
    if lglg <= 0:
        return 0
    return int(lg // (c * lglg))


@dataclass
class RoundState:
    i: int
    schedule: tuple
    pset: frozenset
    config: model.Configuration

    @property
    def lost(self) -> frozenset:
        return lost_set(self.config)

    @property
    def survivors(self) -> frozenset:
        return self.pset - self.lost


@dataclass
class PoisedMap:
    readers: dict  # register -> sorted tuple of pids
    writers: dict

    @property
    def poised_registers(self) -> frozenset:
        return frozenset(self.readers) | frozenset(self.writers)

    @property
    def writer_procs(self) -> frozenset:
        return frozenset(p for ps in self.writers.values() for p in ps)

    @property
    def reader_procs(self) -> frozenset:
        return frozenset(p for ps in self.readers.values() for p in ps)


@dataclass
class ConflictGraph:
    vertices: tuple
    edges: set  # {(p, q, tag)}; tag "know" or "overwrite"

    def degree_map(self) -> dict:
        deg = {v: 0 for v in self.vertices}
        und = {(min(p, q), max(p, q)) for p, q, _ in self.edges}
        for p, q in und:
            deg[p] += 1
            deg[q] += 1
        return deg

    def undirected(self) -> set:
        return {(min(p, q), max(p, q)) for p, q, _ in self.edges}


@dataclass
class RoundRecord:
    i: int
    case: str
    pop_before: int
    pop_after: int
    losers: int
    erased: int
    rmr_total: int
    invariants: dict
    notes: list = field(default_factory=list)


@dataclass
class AdversaryReport:
    subject: str
    n: int
    ell: int
    c: int
    degenerate: bool
    rounds: list  # RoundRecord
    witness_schedules: list  # per round, JSON-able schedules
    survivor_rmrs: list  # per round, {pid: rmrs}
    completed: bool
    stop_reason: str
    notes: list = field(default_factory=list)

    def all_invariants_hold(self) -> bool:
        return all(all(r.invariants.values()) for r in self.rounds)

    def to_json(self) -> dict:
        return {
            "subject": self.subject,
            "n": self.n,
            "ell": self.ell,
            "c": self.c,
            "degenerate": self.degenerate,
            "completed": self.completed,
            "stop_reason": self.stop_reason,
            "rounds": [
                {
                    "i": r.i,
                    "case": r.case,
                    "pop_before": r.pop_before,
                    "pop_after": r.pop_after,
                    "losers": r.losers,
                    "erased": r.erased,
                    "rmr_total": r.rmr_total,
                    "invariants": r.invariants,
                    "notes": r.notes,
                }
                for r in self.rounds
            ],
            "witness_schedules": [model.schedule_to_json(s) for s in self.witness_schedules],
            "survivor_rmrs": [
                {str(p): c for p, c in sorted(h.items())} for h in self.survivor_rmrs
            ],
            "notes": self.notes,
        }


# ---------------------------------------------------------------------------
# construction pieces


def base_case(sim: Simulator) -> RoundState:
    """Every process scans its own segment; zero RMRs, everyone surviving."""
    n = sim.algorithm.n
    sched = []
    for p in range(n):
        sched.extend([step(p)] * len(sim.segments[p]))
    sched = tuple(sched)
    C, trace = sim.apply(sim.initial(), sched)
    if total_rmr(trace) != 0:
        raise InternalInvariantBroken("base case produced RMRs; subject scan prefix missing")
    if not is_safe(C):
        raise InternalInvariantBroken("base-case configuration is not safe")
    return RoundState(0, sched, frozenset(range(n)), C)


def extend_to_poised(sim: Simulator, state: RoundState):
    """Free solo steps per survivor until each is poised to incur an RMR.

    A survivor that would finish its run without paying (it necessarily wins)
    is erased from the whole schedule; more than one such process means the
    subject let two processes win.  Returns (D, P', lambda, erased_winner).
    """
    C = state.config
    survivors = sorted(state.survivors)
    prefix_steps = {}
    winners = []
    for q in survivors:
        _, t, fate, outcome = sim.solo_zero_rmr_prefix(C, q)
        if fate == "returns":
            if outcome != WIN:
                raise ModelViolation(
                    f"process {q} terminates a zero-RMR solo run with {outcome}; "
                    "a free finisher from a safe configuration must win"
                )
            winners.append(q)
        else:
            prefix_steps[q] = t
    if len(winners) > 1:
        raise ModelViolation(f"multiple zero-RMR solo winners {winners}")
    erased = winners[0] if winners else None
    pset = state.pset - {erased} if erased is not None else state.pset

    projected = project_schedule(state.schedule, pset)
    base, _ = sim.apply(sim.initial(), projected)
    lam = []
    for q in sorted(prefix_steps):
        lam.extend([step(q)] * prefix_steps[q])
    D, lam_trace = sim.apply(base, tuple(lam))
    if total_rmr(lam_trace) != 0:
        raise InternalInvariantBroken("poising steps incurred RMRs after projection")
    if not is_safe(D):
        raise InternalInvariantBroken("poised configuration is not safe")
    before = rmr_counts(C.trace_steps())
    after = rmr_counts(D.trace_steps())
    for q in sorted(pset - lost_set(D)):
        if before.get(q, 0) != after.get(q, 0):
            raise InternalInvariantBroken(
                f"erasure changed RMR count of survivor {q}: {before.get(q,0)} -> {after.get(q,0)}"
            )
    return D, pset, tuple(lam), erased


def poised_map(sim: Simulator, D: model.Configuration, procs) -> PoisedMap:
    readers: dict = {}
    writers: dict = {}
    for q in sorted(procs):
        act = sim.poised(D, q)
        if act is None:
            raise InternalInvariantBroken(f"survivor {q} has no pending action")
        kind, reg = act
        if not model.rmr_flag(D, q, kind, reg):
            raise InternalInvariantBroken(f"survivor {q} poised at a local step")
        if reg.owner == q:
            raise InternalInvariantBroken(f"poised RMR step into own segment by {q}")
        target = readers if kind == "read" else writers
        target.setdefault(reg, []).append(q)
    return PoisedMap(
        {r: tuple(sorted(ps)) for r, ps in readers.items()},
        {r: tuple(sorted(ps)) for r, ps in writers.items()},
    )


LOW_CONTENTION = "low-contention"
HIGH_CONTENTION = "high-contention"


def classify(pm: PoisedMap, population: int, ell: int) -> str:
    """Low contention iff many registers are poised or readers outnumber
    writers; high contention otherwise."""
    s = len(pm.poised_registers)
    x = len(pm.writer_procs)
    y = len(pm.reader_procs)
    if s >= population / (10 * ell) or x < y:
        return LOW_CONTENTION
    return HIGH_CONTENTION


def _independent_set(graph: ConflictGraph, mode: str) -> tuple:
    und = graph.undirected()
    verts = list(graph.vertices)
    if mode == "exact" and len(verts) <= 20:
        best: tuple = ()
        m = len(verts)
        for mask in range(1 << m):
            sel = [verts[i] for i in range(m) if mask >> i & 1]
            if len(sel) <= len(best):
                continue
            ok = all((min(a, b), max(a, b)) not in und for i, a in enumerate(sel) for b in sel[i + 1:])
            if ok:
                best = tuple(sel)
        return best
    # greedy minimum-degree removal; meets the m/(d+1) bound
    adj = {v: set() for v in verts}
    for a, b in und:
        adj[a].add(b)
        adj[b].add(a)
    alive = set(verts)
    out = []
    while alive:
        v = min(alive, key=lambda u: (len(adj[u] & alive), u))
        out.append(v)
        alive.discard(v)
        alive -= adj[v]
    return tuple(sorted(out))


def _one_shot_bounds_check(sim, Cp, procs, one_shot_trace, final_cfg):
    """Knowledge and overwrite bounds for a one-step-each poised execution."""
    P = frozenset(procs)
    kp = {pair for pair in knows_set(final_cfg) if pair[0] in P and pair[1] in P}
    rmr_shot = total_rmr(one_shot_trace)
    if len(kp) > 2 * rmr_shot:
        raise InternalInvariantBroken(
            f"knows-pairs {len(kp)} exceed 2x one-shot RMRs {rmr_shot}")
    caches = {p: cache_set(Cp, p) for p in procs}
    m_pairs = set()
    for ev in one_shot_trace:
        if ev.kind != "write":
            continue
        q = ev.actor
        for p in procs:
            if p == q:
                continue
            if ev.register.owner == p or ev.register in caches[p]:
                m_pairs.add((p, q))
    if len(m_pairs) > total_rmr(Cp.trace_steps()) + rmr_shot:
        raise InternalInvariantBroken("overwrite pairs exceed the RMR budget")
    return kp, m_pairs


def low_contention_round(sim: Simulator, D: model.Configuration, pset: frozenset,
                         pm: PoisedMap, ell: int, params: AdversaryParams):
    """One poised RMR step for a conflict-free crowd; everyone else erased."""
    lostD = lost_set(D)
    notes: list = []

    V = []
    for reg in sorted(pm.poised_registers, key=lambda r: (r.owner, r.index)):
        rd = pm.readers.get(reg, ())
        wr = pm.writers.get(reg, ())
        if rd:
            V.extend(rd)  # writers of this register excluded
        else:
            V.append(wr[0])
    V = tuple(sorted(V))

    keep = frozenset(V) | lostD
    Cp, _ = sim.apply(sim.initial(), project_schedule(D.schedule(), keep))
    if not is_safe(Cp):
        raise InternalInvariantBroken("projection to accessor crowd lost safety")
    for x in V:
        if sim.poised(Cp, x) != sim.poised(D, x):
            raise InternalInvariantBroken(f"projection changed the poised step of {x}")

    one_shot = tuple(step(x) for x in V)
    shot_cfg, shot_trace = sim.apply(Cp, one_shot)
    kp, m_pairs = _one_shot_bounds_check(sim, Cp, V, shot_trace, shot_cfg)

    edges = {(p, q, "know") for p, q in kp}
    edges |= {(p, q, "overwrite") for p, q in m_pairs}
    graph = ConflictGraph(V, edges)

    Q1 = _independent_set(graph, params.turan_mode)
    deg = graph.degree_map()
    m = len(V)
    avg = sum(deg.values()) / m if m else 0.0
    if len(Q1) < m / (avg + 1):
        raise InternalInvariantBroken("independent set below the Turan bound")

    # drop the at most one process that would terminate on its poised step
    probe_cfg, _ = sim.apply(Cp, tuple(step(x) for x in Q1))
    finished = [x for x in Q1 if probe_cfg.returned(x)]
    if len(finished) > 1:
        raise ModelViolation(f"two processes finished on one poised step each: {finished}")
    Q = tuple(x for x in Q1 if x not in finished)

    keepQ = frozenset(Q) | lost_set(Cp)
    sched = project_schedule(Cp.schedule(), keepQ) + tuple(step(x) for x in sorted(Q))
    Cn, _ = sim.apply(sim.initial(), sched)

    if not is_safe(Cn):
        raise InternalInvariantBroken("low-contention round produced an unsafe configuration")
    before = rmr_counts(D.trace_steps(), Q)
    after = rmr_counts(Cn.trace_steps(), Q)
    for q in Q:
        if after[q] != before[q] + 1:
            raise InternalInvariantBroken(
                f"survivor {q} RMR count {after[q]} != {before[q]} + 1")
    if any(it.abort for it in sched):
        got = {it.pid for it in sched if it.abort}
        if got - set(lost_set(Cn)):
            raise InternalInvariantBroken("abort token for a non-lost process in the schedule")

    pnext = frozenset(Q) | lostD
    notes.append(f"V={len(V)} edges={len(graph.undirected())} Q={len(Q)}")
    return sched, pnext, Cn, notes


def _zero_rmr_solo_reads(sim: Simulator, C: model.Configuration, p: int):
    """Registers p reads in its full solo run from C (terminating scan included)."""
    cur = C
    reads = []
    guard = 0
    while not cur.returned(p):
        act = sim.poised(cur, p)
        if act and act[0] == "read":
            reads.append(act[1])
        cur, _ = sim.apply(cur, (step(p),))
        guard += 1
        if guard > sim.step_ceiling:
            raise model.AlgorithmTooDeep(f"solo probe for {p} exceeded the ceiling")
    return reads


def _observable_set(C: model.Configuration, regs, exclude, universe):
    """Processes in `universe` visible on, or owning, any register in regs."""
    out = set()
    for r in regs:
        if r.owner in universe and r.owner not in exclude:
            out.add(r.owner)
        v = C.val(r)
        if v.token is not None and v.writer in universe and v.writer not in exclude:
            out.add(v.writer)
    return out


def high_contention_round(sim: Simulator, D: model.Configuration, pset: frozenset,
                          pm: PoisedMap, ell: int, params: AdversaryParams):
    """Per contended register: two chosen writers lose out of sight, the rest
    write once and stay hidden behind them."""
    lostD = lost_set(D)
    notes: list = []
    writer_set = pm.writer_procs
    keep0 = writer_set | lostD
    cur, _ = sim.apply(sim.initial(), project_schedule(D.schedule(), keep0))
    if not is_safe(cur):
        raise InternalInvariantBroken("projection to writers lost safety")
    erased_total = len(pset - lostD) - len(writer_set)

    regs = sorted(pm.writers, key=lambda r: (r.owner, r.index))
    survivors = set(writer_set)
    new_losers = 0
    for reg in regs:
        population = {p for p in cur.participants() if p not in lost_set(cur)}
        pr = []
        for p in sorted(population & survivors):
            act = sim.poised(cur, p)
            if act == ("write", reg):
                pr.append(p)
        if not pr:
            continue
        if len(pr) < 8 * ell - 1:
            keep = (population - set(pr)) | lost_set(cur)
            cur, _ = sim.apply(sim.initial(), project_schedule(cur.schedule(), keep))
            survivors -= set(pr)
            erased_total += len(pr)
            notes.append(f"{reg}: dropped {len(pr)} writers (below 8l-1)")
            continue

        zsets = {}
        for p in pr:
            reads = _zero_rmr_solo_reads(sim, cur, p)
            z = _observable_set(cur, reads, {p}, population)
            z.discard(p)
            zsets[p] = z
            if len(z) > 2 * ell:
                notes.append(f"{reg}: |Z_{p}|={len(z)} exceeds 2l; subject above the l-RMR hypothesis")
        pair = None
        for i, a in enumerate(pr):
            for b in pr[i + 1:]:
                if a not in zsets[b] and b not in zsets[a]:
                    pair = (a, b)
                    break
            if pair:
                break
        if pair is None:
            raise InternalInvariantBroken(f"no compatible writer pair at {reg}")
        a, b = pair

        D2, _ = sim.apply(sim.initial(), project_schedule(cur.schedule(), lost_set(cur) | {a, b}))
        Da, _ = sim.apply(D2, (step(a),))
        try:
            lam = find_both_lose_schedule(sim, Da, a, b, params.both_lose_budget)
        except PreconditionViolated as exc:
            raise InternalInvariantBroken(f"both-lose preconditions failed at {reg}: {exc}") from exc
        if lam is None:
            raise BothLoseNotFound(f"no both-lose schedule for ({a},{b}) at {reg}")
        lam_cfg, lam_trace = sim.apply(Da, lam)
        lam_reads = [ev.register for ev in lam_trace if ev.kind == "read"]
        Y = _observable_set(cur, lam_reads, {a, b}, population)
        X = (zsets[a] | zsets[b] | Y | {reg.owner}) - {a, b}
        if len(X) > 8 * ell + 1:
            notes.append(f"{reg}: erased set {len(X)} exceeds 8l+1")

        keep = lost_set(cur) | (population - X)
        D3, _ = sim.apply(sim.initial(), project_schedule(cur.schedule(), keep))
        qs = [q for q in pr if q not in X and q not in (a, b)]
        tail = tuple(step(q) for q in sorted(qs)) + (step(a),) + lam
        before = rmr_counts(D3.trace_steps(), qs)
        nxt, tail_trace = sim.apply(D3, tail)

        if not is_safe(nxt):
            raise InternalInvariantBroken(f"unsafe configuration after register {reg}")
        if not (nxt.outcome(a) == LOSE and nxt.outcome(b) == LOSE):
            raise InternalInvariantBroken(f"chosen writers did not both lose at {reg}")
        after = rmr_counts(nxt.trace_steps(), qs)
        for q in qs:
            if after[q] != before.get(q, 0) + 1:
                raise InternalInvariantBroken(f"writer {q} did not pay exactly one RMR")
        aborted_now = {ev.actor for ev in tail_trace if ev.kind == "abort"}
        if aborted_now - set(lost_set(nxt)):
            raise InternalInvariantBroken("an aborted process survived the register round")
        newly_lost = set(lost_set(nxt)) - set(lost_set(cur))
        if len(newly_lost) > 2:
            raise InternalInvariantBroken(f"more than two new losers at {reg}: {newly_lost}")

        cur = nxt
        survivors = (survivors - X - set(newly_lost)) | set(qs)
        erased_total += len(X)
        new_losers += len(newly_lost)
        notes.append(f"{reg}: writers={len(pr)} erased={len(X)} pair=({a},{b})")

    pnext = frozenset(survivors) | frozenset(lost_set(cur))
    sched = cur.schedule()
    return sched, pnext, cur, notes + [f"new_losers={new_losers} erased={erased_total}"]


def check_invariants(i: int, case: str, pop_before: int, state: RoundState,
                     ell: int) -> dict:
    """The five per-round invariants, with the case-specific population bound."""
    C = state.config
    survivors = sorted(state.survivors)
    counts = rmr_counts(C.trace_steps(), survivors)
    if case == LOW_CONTENTION:
        bound = pop_before / (60 * ell * ell) - 1
    else:
        bound = pop_before / 10
    aborted_in_sched = {it.pid for it in state.schedule if it.abort}
    return {
        "I1": is_safe(C),
        "I2": len(survivors) >= bound,
        "I3": sum(counts.values()) >= i * len(survivors) - i,
        "I4": all(counts[p] <= i for p in survivors),
        "I5": not (set(survivors) & aborted_in_sched),
    }


def run(subject, n: int | None = None, params: AdversaryParams = AdversaryParams()) -> AdversaryReport:
    """Base case plus rounds until the configured limit, a degenerate
    population, or the ell formula runs out."""
    sim = Simulator(subject, params.step_ceiling)
    n = subject.n if n is None else n
    if n != subject.n:
        raise ValueError("subject instance size disagrees with n")
    ell = params.ell_override if params.ell_override is not None else ell_formula(n, params.c)
    rounds_wanted = params.rounds if params.rounds is not None else ell
    report = AdversaryReport(
        subject=getattr(subject, "name", "subject"), n=n, ell=ell, c=params.c,
        degenerate=(ell == 0), rounds=[], witness_schedules=[], survivor_rmrs=[],
        completed=False, stop_reason="",
    )
    state = base_case(sim)
    report.witness_schedules.append(state.schedule)
    report.survivor_rmrs.append({p: 0 for p in sorted(state.survivors)})
    if ell == 0:
        report.stop_reason = "ell formula is zero at this n; base case only"
        report.completed = rounds_wanted == 0
        return report

    for i in range(1, rounds_wanted + 1):
        pop_before = len(state.survivors)
        if pop_before < 2:
            report.stop_reason = f"population dropped below 2 before round {i}"
            return report
        D, pprime, _, erased_winner = extend_to_poised(sim, state)
        pm = poised_map(sim, D, sorted(pprime - lost_set(D)))
        case = classify(pm, len(pprime - lost_set(D)), ell)
        if case == LOW_CONTENTION:
            sched, pnext, cfg, notes = low_contention_round(sim, D, pprime, pm, ell, params)
        else:
            sched, pnext, cfg, notes = high_contention_round(sim, D, pprime, pm, ell, params)
        state = RoundState(i, sched, pnext, cfg)
        inv = check_invariants(i, case, pop_before, state, ell)
        counts = rmr_counts(cfg.trace_steps(), sorted(state.survivors))
        rec = RoundRecord(
            i=i, case=case, pop_before=pop_before, pop_after=len(state.survivors),
            losers=len(state.lost), erased=(1 if erased_winner is not None else 0),
            rmr_total=sum(counts.values()), invariants=inv, notes=notes,
        )
        report.rounds.append(rec)
        report.witness_schedules.append(state.schedule)
        report.survivor_rmrs.append(dict(sorted(counts.items())))
    report.completed = True
    report.stop_reason = "configured rounds completed"
    return report
