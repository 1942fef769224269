"""Bounded exploration and verification of simulator subjects.

Everything here is either bounded-exhaustive (breadth-first over schedules
with state deduplication) or explicitly sampled; no verdict claims more than
that.  States are deduplicated on configuration fingerprints, under which two
configurations are equal iff every process observed the same events and the
registers agree; runs of identical spin reads collapse, so idle waiting
closes the state graph.  Every Fail verdict carries a schedule witness that
replays to the same verdict.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .model import (
    LOSE,
    WIN,
    Configuration,
    ScheduleItem,
    Simulator,
    abort_item,
    lost_set,
    step,
)

NOT_BIVALENT = "not_bivalent"
BIVALENT = "bivalent"
STRONGLY_BIVALENT = "strongly_bivalent"


class PreconditionViolated(Exception):
    pass


class HistoryTooLarge(Exception):
    pass


@dataclass(frozen=True)
class ExplorationBudget:
    max_depth: int = 160
    max_nodes: int = 200_000

    def __post_init__(self):
        if self.max_depth <= 0 or self.max_nodes <= 0:
            raise ValueError("budget bounds must be positive")


@dataclass
class Verdict:
    status: str  # "pass" | "fail" | "inconclusive"
    witness: tuple | None = None  # replayable schedule
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def failed(self) -> bool:
        return self.status == "fail"


# ---------------------------------------------------------------------------
# generic bounded BFS


class _Search:
    """BFS over schedules with fingerprint dedup and path reconstruction."""

    def __init__(self, sim: Simulator, root: Configuration, budget: ExplorationBudget,
                 fp_extra=None):
        self.sim = sim
        self.budget = budget
        self.fp_extra = fp_extra  # augments the state key, e.g. with step counters
        self.root = root
        root_fp = self._fp(root)
        self.seen = {root_fp}
        self.parent: dict = {root_fp: None}
        self.frontier = [(root, root_fp, 0)]
        self.nodes = 1
        self.truncated = False

    def _fp(self, C: Configuration):
        fp = C.fingerprint()
        if self.fp_extra is not None:
            fp = (fp, self.fp_extra(C))
        return fp

    def expand(self, C: Configuration, fp, depth: int, items):
        out = []
        if depth >= self.budget.max_depth:
            self.truncated = True
            return out
        for item in items:
            if self.nodes >= self.budget.max_nodes:
                self.truncated = True
                break
            nxt, _ = self.sim.apply(C, (item,))
            nfp = self._fp(nxt)
            if nfp in self.seen:
                continue
            self.seen.add(nfp)
            self.parent[nfp] = (fp, item)
            self.nodes += 1
            out.append((nxt, nfp, depth + 1))
        return out

    def path_to(self, fp) -> tuple:
        items = []
        cur = self.parent[fp]
        while cur is not None:
            pfp, item = cur
            items.append(item)
            cur = self.parent[pfp]
        return tuple(reversed(items))


def _enabled(C: Configuration, procs, allow_aborts: bool):
    items = []
    for p in procs:
        if C.returned(p):
            continue
        items.append(step(p))
        if allow_aborts and not C.aborted[p]:
            items.append(abort_item(p))
    return items


# ---------------------------------------------------------------------------
# solo runs


def solo_outcome(sim: Simulator, C: Configuration, p: int, cap: int = 5000):
    """Outcome of p's abort-free solo run from C, or None if it does not
    terminate (a revisited state or the cap is read as divergence)."""
    if C.returned(p):
        return C.outcome(p)
    cur = C
    seen = {cur.fingerprint()}
    for _ in range(cap):
        cur, _ = sim.apply(cur, (step(p),))
        if cur.returned(p):
            return cur.outcome(p)
        fp = cur.fingerprint()
        if fp in seen:
            return None
        seen.add(fp)
    return None


# ---------------------------------------------------------------------------
# outcome vectors and bivalency


def outcome_vectors(sim: Simulator, C: Configuration, a: int, b: int,
                    budget: ExplorationBudget = ExplorationBudget(),
                    allow_aborts: bool = True, stop_when=None):
    """All outcome vectors of {a,b}-only executions from C in which both
    terminate, with a completeness flag.

    Schedules range over step and abort tokens of a and b; the flag is True
    iff every explored branch reached a both-returned state within budget.
    ``stop_when(vectors)`` may abort the search early once the collected set
    already settles the caller's question; the flag is then False.
    """
    if a == b:
        raise PreconditionViolated("need two distinct processes")
    search = _Search(sim, C, budget)
    vectors = set()
    frontier = search.frontier
    while frontier:
        nxt = []
        for cfg, fp, depth in frontier:
            if cfg.returned(a) and cfg.returned(b):
                vectors.add((cfg.outcome(a), cfg.outcome(b)))
                if stop_when is not None and stop_when(vectors):
                    return vectors, False, search.nodes
                continue
            nxt.extend(search.expand(cfg, fp, depth, _enabled(cfg, (a, b), allow_aborts)))
        frontier = nxt
    return vectors, (not search.truncated), search.nodes


@dataclass
class BivalenceReport:
    classification: str
    vectors: set
    complete: bool
    solo_outcomes: dict
    nodes: int


_PAIR = frozenset({(WIN, LOSE), (LOSE, WIN)})


def classify_bivalence(sim: Simulator, C: Configuration, a: int, b: int,
                       budget: ExplorationBudget = ExplorationBudget(),
                       allow_aborts: bool = True) -> BivalenceReport:
    """NotBivalent / Bivalent / StronglyBivalent for processes a, b at C.

    Bivalent means the outcome-vector set is exactly {(win,lose),(lose,win)};
    strongly bivalent adds that each of a, b wins its solo run from C.  Cheap
    deterministic probes (both aborted up front; each solo order) run first,
    and the vector search stops early once a vector outside the pair shows
    up, since that already forces NotBivalent.
    """
    solo = {a: solo_outcome(sim, C, a, cap=max(budget.max_depth, 2000)),
            b: solo_outcome(sim, C, b, cap=max(budget.max_depth, 2000))}
    probed = _probe_vectors(sim, C, a, b, cap=max(budget.max_depth, 2000))
    if not probed <= _PAIR:
        return BivalenceReport(NOT_BIVALENT, probed, False, solo, 0)
    vectors, complete, nodes = outcome_vectors(
        sim, C, a, b, budget, allow_aborts=allow_aborts,
        stop_when=lambda vs: not vs <= _PAIR,
    )
    vectors |= probed
    if not vectors <= _PAIR:
        cls = NOT_BIVALENT
    elif vectors == set(_PAIR):
        cls = STRONGLY_BIVALENT if (solo[a] == WIN and solo[b] == WIN) else BIVALENT
    else:
        cls = NOT_BIVALENT  # fewer than both pair vectors reached within budget
    return BivalenceReport(cls, vectors, complete, solo, nodes)


def _probe_vectors(sim: Simulator, C: Configuration, a: int, b: int, cap: int) -> set:
    """Vectors of a few canonical {a,b}-only schedules: both aborted up front,
    and each process running solo to completion before the other starts."""
    out = set()
    plans = (
        (abort_item(a), abort_item(b)),
        (),
        (abort_item(b),),
        (abort_item(a),),
    )
    orders = ((a, b), (a, b), (a, b), (b, a))
    for prefix, order in zip(plans, orders):
        cur, _ = sim.apply(C, prefix)
        ok = True
        for p in order:
            budgeted = 0
            while not cur.returned(p):
                cur, _ = sim.apply(cur, (step(p),))
                budgeted += 1
                if budgeted > cap:
                    ok = False
                    break
            if not ok:
                break
        if ok and cur.returned(a) and cur.returned(b):
            out.add((cur.outcome(a), cur.outcome(b)))
    return out


def flp_disjunction_holds(sim: Simulator, C: Configuration, a: int, b: int,
                          budget: ExplorationBudget = ExplorationBudget()) -> bool:
    """For a bivalent C: Conf(C,a) or Conf(C,b) is bivalent, or some infinite
    {a,b}-only step execution keeps both running (detected as a reachable
    cycle of non-terminated states)."""
    for p in (a, b):
        child, _ = sim.apply(C, (step(p),))
        vecs, complete, _ = outcome_vectors(sim, child, a, b, budget)
        if vecs == {(WIN, LOSE), (LOSE, WIN)} and complete:
            return True
    return _has_nonterminating_cycle(sim, C, (a, b), budget)


def _has_nonterminating_cycle(sim, C, procs, budget) -> bool:
    """DFS for a lasso through states where no process in `procs` returned."""
    seen = set()
    stack = [(C, C.fingerprint(), iter(_enabled(C, procs, False)), {C.fingerprint()})]
    seen.add(C.fingerprint())
    nodes = 0
    while stack:
        cfg, fp, it, onpath = stack[-1]
        advanced = False
        for item in it:
            nxt, _ = sim.apply(cfg, (item,))
            if any(nxt.returned(p) for p in procs):
                continue
            nfp = nxt.fingerprint()
            if nfp in onpath:
                return True
            if nfp in seen:
                continue
            nodes += 1
            if nodes > budget.max_nodes or len(onpath) > budget.max_depth:
                return False
            seen.add(nfp)
            stack.append((nxt, nfp, iter(_enabled(nxt, procs, False)), onpath | {nfp}))
            advanced = True
            break
        if not advanced:
            stack.pop()
    return False


# ---------------------------------------------------------------------------
# both-lose search


def find_both_lose_schedule(sim: Simulator, C: Configuration, a: int, b: int,
                            budget: ExplorationBudget = ExplorationBudget(max_depth=60)):
    """A schedule over {a,b} steps and aborts after which both a and b have
    returned lose, or None when the budget is exhausted.

    The double-abort prefix is tried first; for a conforming subject the
    lemma guarantees existence, so None is an anomaly of the subject or the
    budget.  Raises PreconditionViolated unless both processes are unaborted
    non-losers that win their solo runs from C.
    """
    lost = lost_set(C)
    if a in lost or b in lost or a == b:
        raise PreconditionViolated("processes must be distinct non-losers")
    if C.aborted[a] or C.aborted[b]:
        raise PreconditionViolated("processes must not have received the abort signal")
    for p in (a, b):
        if solo_outcome(sim, C, p, cap=max(budget.max_depth * 4, 2000)) != WIN:
            raise PreconditionViolated(f"process {p} does not win its solo run")

    # fast path: abort both, then run each to completion
    cur, _ = sim.apply(C, (abort_item(a), abort_item(b)))
    sched = [abort_item(a), abort_item(b)]
    for p in (a, b):
        while not cur.returned(p) and len(sched) < budget.max_depth:
            cur, _ = sim.apply(cur, (step(p),))
            sched.append(step(p))
    if cur.outcome(a) == LOSE and cur.outcome(b) == LOSE:
        return tuple(sched)

    search = _Search(sim, C, budget)
    frontier = search.frontier
    while frontier:
        nxt = []
        for cfg, fp, depth in frontier:
            if cfg.outcome(a) == LOSE and cfg.outcome(b) == LOSE:
                return search.path_to(fp)
            nxt.extend(search.expand(cfg, fp, depth, _enabled(cfg, (a, b), True)))
        frontier = nxt
    return None


# ---------------------------------------------------------------------------
# leader-election checkers


def check_le_safety(C: Configuration, participants=None) -> Verdict:
    """At most one win; all-lose only if every participant received the abort
    signal.  Evaluated on the final configuration of a run."""
    if participants is None:
        participants = sorted(C.participants())
    participants = sorted(participants)
    wins = [p for p in participants if C.outcome(p) == WIN]
    if len(wins) > 1:
        return Verdict("fail", C.schedule(), {"reason": "multiple winners", "winners": wins})
    if participants and all(C.outcome(p) == LOSE for p in participants):
        unaborted = [p for p in participants if not C.aborted[p]]
        if unaborted:
            return Verdict(
                "fail", C.schedule(),
                {"reason": "all lose without all aborts", "unaborted": unaborted},
            )
    return Verdict("pass", None, {"winners": wins})


def _post_abort_steps(C: Configuration, p: int) -> int:
    h = C.history(p)
    for i, ev in enumerate(h):
        if ev.kind == "abort":
            return len(h) - i - 1
    return 0


def check_bounded_abort(sim: Simulator, bound: int,
                        budget: ExplorationBudget = ExplorationBudget(),
                        procs=None, prefix_samples: int = 40, seed: int = 1) -> Verdict:
    """Fail when a process can take more than `bound` of its own steps after
    receiving the abort signal without returning.

    Runs two phases.  Targeted: from round-robin and seeded random-walk
    prefixes, abort each live process and run it solo; it must return within
    the bound.  Bounded-exhaustive: BFS with abort injection anywhere, with
    capped post-abort step counters in the state key so that spinning after
    an abort cannot collapse into an already-seen state.  Pass means no
    violation was found at the configured effort.
    """
    procs = tuple(range(sim.algorithm.n)) if procs is None else tuple(procs)
    root = sim.initial()

    def solo_exceeds(C, p):
        cur, _ = sim.apply(C, (abort_item(p),))
        taken = _post_abort_steps(cur, p)
        sched = [abort_item(p)]
        while not cur.returned(p):
            if taken > bound:
                return tuple(sched)
            cur, _ = sim.apply(cur, (step(p),))
            sched.append(step(p))
            taken += 1
        return None

    for C in _prefix_configs(sim, procs, prefix_samples, seed):
        for p in procs:
            if C.returned(p) or C.aborted[p]:
                continue
            tail = solo_exceeds(C, p)
            if tail is not None:
                return Verdict("fail", C.schedule() + tail,
                               {"reason": "abort not bounded", "process": p, "bound": bound})

    def counters(C):
        return tuple(
            min(_post_abort_steps(C, p), bound + 1) if C.aborted[p] else 0 for p in procs
        )

    search = _Search(sim, root, budget, fp_extra=counters)
    frontier = search.frontier
    while frontier:
        nxt = []
        for cfg, fp, depth in frontier:
            for p in procs:
                if cfg.aborted[p] and not cfg.returned(p) and _post_abort_steps(cfg, p) > bound:
                    return Verdict("fail", search.path_to(fp),
                                   {"reason": "abort not bounded", "process": p, "bound": bound})
            if cfg.all_returned(procs):
                continue
            nxt.extend(search.expand(cfg, fp, depth, _enabled(cfg, procs, True)))
        frontier = nxt
    return Verdict("pass", None, {"nodes": search.nodes, "exhaustive": not search.truncated})


def _prefix_configs(sim: Simulator, procs, samples: int, seed: int, cap: int = 400):
    """Deterministic round-robin prefixes plus seeded random-walk prefixes."""
    out = []
    for start in range(len(procs)):
        C = sim.initial()
        out.append(C)
        i = start
        for _ in range(cap):
            if C.all_returned(procs):
                break
            p = procs[i % len(procs)]
            i += 1
            if C.returned(p):
                continue
            C, _ = sim.apply(C, (step(p),))
            out.append(C)
    rng = random.Random(seed)
    for _ in range(samples):
        C = sim.initial()
        for _ in range(rng.randrange(1, cap)):
            live = [p for p in procs if not C.returned(p)]
            if not live:
                break
            C, _ = sim.apply(C, (step(rng.choice(live)),))
        out.append(C)
    return out


def fair_schedule_stream(n: int, rng: random.Random):
    """Infinite fair stream: concatenated random permutations of all processes."""
    while True:
        order = list(range(n))
        rng.shuffle(order)
        for p in order:
            yield p


def check_deadlock_freedom(sim: Simulator, n: int | None = None,
                           fairness_window: int | None = None,
                           budget: ExplorationBudget = ExplorationBudget(),
                           samples: int = 20, seed: int = 0,
                           with_aborts: bool = False) -> Verdict:
    """Sampled fair schedules (round-robin rotations plus seeded shuffles);
    fail if a process exceeds the per-process step budget without returning."""
    n = sim.algorithm.n if n is None else n
    window = fairness_window if fairness_window is not None else 8 * n
    per_proc_cap = max(budget.max_depth, window)

    def run_fair(item_iter, abort_plan):
        C = sim.initial()
        sched = []
        own = [0] * n
        while not C.all_returned(range(n)):
            p = next(item_iter)
            for q, at in abort_plan:
                if at == len(sched):
                    C, _ = sim.apply(C, (abort_item(q),))
                    sched.append(abort_item(q))
            if C.returned(p):
                continue
            C, _ = sim.apply(C, (step(p),))
            sched.append(step(p))
            own[p] += 1
            if own[p] > per_proc_cap:
                return Verdict("fail", tuple(sched),
                               {"reason": "no return in fair run", "process": p,
                                "own_steps": own[p]})
        return None

    def rotations():
        for r in range(n):
            def rr(start=r):
                i = start
                while True:
                    yield i % n
                    i += 1
            yield rr(), ()

    rng = random.Random(seed)
    trials = list(rotations())
    for _ in range(samples):
        plan = ()
        if with_aborts:
            k = rng.randrange(n + 1)
            victims = rng.sample(range(n), k)
            plan = tuple((q, rng.randrange(40)) for q in victims)
        trials.append((fair_schedule_stream(n, random.Random(rng.randrange(2**31))), plan))
    for stream, plan in trials:
        bad = run_fair(stream, plan)
        if bad is not None:
            return bad
    return Verdict("pass", None, {"trials": len(trials)})


def check_le_safety_runs(sim: Simulator, runs: int = 500, seed: int = 0,
                         abort_rate: float = 0.03, max_total_steps: int = 5000) -> Verdict:
    """Seeded random complete runs (with sprinkled aborts); every finished run
    must satisfy leader-election safety."""
    n = sim.algorithm.n
    rng = random.Random(seed)
    for _ in range(runs):
        C = sim.initial()
        sched = []
        for _ in range(max_total_steps):
            live = [p for p in range(n) if not C.returned(p)]
            if not live:
                break
            p = rng.choice(live)
            if not C.aborted[p] and rng.random() < abort_rate:
                C, _ = sim.apply(C, (abort_item(p),))
                sched.append(abort_item(p))
            C, _ = sim.apply(C, (step(p),))
            sched.append(step(p))
        if C.all_returned(range(n)):
            v = check_le_safety(C, range(n))
            if v.failed:
                return Verdict("fail", tuple(sched), v.detail)
    return Verdict("pass", None, {"runs": runs})


def scan_le_safety(sim: Simulator, budget: ExplorationBudget = ExplorationBudget(),
                   allow_aborts: bool = True) -> Verdict:
    """Bounded-exhaustive scan from the initial configuration: leader-election
    safety must hold at every node, completed runs included."""
    procs = tuple(range(sim.algorithm.n))
    root = sim.initial()
    search = _Search(sim, root, budget)
    completed = 0
    frontier = search.frontier
    while frontier:
        nxt = []
        for cfg, fp, depth in frontier:
            verdict = check_le_safety(cfg, procs) if cfg.all_returned(procs) else _partial_safety(cfg, procs)
            if verdict is not None and verdict.failed:
                return Verdict("fail", search.path_to(fp), verdict.detail)
            if cfg.all_returned(procs):
                completed += 1
                continue
            nxt.extend(search.expand(cfg, fp, depth, _enabled(cfg, procs, allow_aborts)))
        frontier = nxt
    status = "pass" if not search.truncated else "inconclusive"
    return Verdict(status, None, {"nodes": search.nodes, "completed": completed})


def _partial_safety(C: Configuration, procs) -> Verdict | None:
    wins = [p for p in procs if C.outcome(p) == WIN]
    if len(wins) > 1:
        return Verdict("fail", C.schedule(), {"reason": "multiple winners", "winners": wins})
    return None


# ---------------------------------------------------------------------------
# sampling reachable configurations


def sample_reachable(sim: Simulator, count: int, seed: int = 0,
                     max_steps: int = 80, allow_aborts: bool = False,
                     procs=None) -> list:
    """Seeded random walks from the initial configuration; returns `count`
    reachable configurations (the walks' intermediate states)."""
    procs = tuple(range(sim.algorithm.n)) if procs is None else tuple(procs)
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        C = sim.initial()
        length = rng.randrange(1, max_steps)
        for _ in range(length):
            live = [p for p in procs if not C.returned(p)]
            if not live:
                break
            p = rng.choice(live)
            if allow_aborts and not C.aborted[p] and rng.random() < 0.05:
                C, _ = sim.apply(C, (abort_item(p),))
            C, _ = sim.apply(C, (step(p),))
            out.append(C)
            if len(out) >= count:
                break
    return out


# ---------------------------------------------------------------------------
# object-world exploration

from .objects import BOTTOM, ObjRuntime, World  # noqa: E402


@dataclass
class ObjExploration:
    terminal_worlds: list
    histories: list  # list of sorted OpRecord lists, one per terminal world
    complete: bool
    nodes: int
    max_op_rmrs: int


def explore_objects(runtime: ObjRuntime,
                    budget: ExplorationBudget = ExplorationBudget(max_depth=60),
                    allow_aborts: bool = True) -> ObjExploration:
    """Bounded-exhaustive interleaving of the runtime's scripts, with at most
    one abort delivery per process at any point.  Harvests every state where
    all scripts completed."""
    root = runtime.initial()
    seen = {root.fingerprint()}
    frontier = [(root, 0)]
    nodes = 1
    truncated = False
    terminals = []
    max_rmr = 0
    while frontier:
        nxt = []
        for w, depth in frontier:
            if w.all_done():
                terminals.append(w)
                for rec in w.completed_ops():
                    max_rmr = max(max_rmr, rec.rmrs)
                continue
            if depth >= budget.max_depth:
                truncated = True
                continue
            children = []
            for p in range(w.n):
                if not w.done(p):
                    children.append(runtime.step(w, p))
                    if allow_aborts and not w.aborted[p]:
                        children.append(runtime.abort(w, p))
            for c in children:
                if nodes >= budget.max_nodes:
                    truncated = True
                    break
                fp = c.fingerprint()
                if fp in seen:
                    continue
                seen.add(fp)
                nodes += 1
                nxt.append((c, depth + 1))
        frontier = nxt
    return ObjExploration(
        terminal_worlds=terminals,
        histories=[w.completed_ops() for w in terminals],
        complete=not truncated,
        nodes=nodes,
        max_op_rmrs=max_rmr,
    )


# ---------------------------------------------------------------------------
# linearizability (compare-and-swap histories)

from .objects import OpRecord  # noqa: E402


def _sequential_apply(state, op: OpRecord):
    """Returns new state if op's return value is consistent, else None."""
    if op.kind == "read":
        return state if op.ret == state else None
    cmp_v, new_v = op.args
    if op.ret != state:
        return None
    return new_v if state == cmp_v else state


def linearize_cas(ops, initial, limit: int = 10):
    """A sequential order of the (non-failed) ops consistent with CAS
    semantics and real-time precedence, or None."""
    ops = [o for o in ops if o.ret != BOTTOM]
    if len(ops) > limit:
        raise HistoryTooLarge(f"{len(ops)} completed operations (limit {limit})")
    order = []
    memo = set()

    def search(remaining, state):
        if not remaining:
            return True
        key = (frozenset(id(o) for o in remaining), state)
        if key in memo:
            return False
        min_ret = min(o.t_ret for o in remaining)
        for o in remaining:
            if o.t_inv > min_ret:
                continue  # some other op completed before this one began
            nstate = _sequential_apply(state, o)
            if nstate is None:
                continue
            order.append(o)
            if search([x for x in remaining if x is not o], nstate):
                return True
            order.pop()
        memo.add(key)
        return False

    return list(order) if search(ops, initial) else None


def check_linearizable_cas(history, initial, limit: int = 10) -> Verdict:
    """Exhaustive linearization search over the non-failed operations."""
    try:
        order = linearize_cas(history, initial, limit)
    except HistoryTooLarge:
        raise
    if order is None:
        return Verdict("fail", None, {"reason": "no linearization", "ops": len(history)})
    return Verdict("pass", None, {"order": [(o.proc, o.kind, o.args, o.ret) for o in order]})
