"""Register-only abortable leader-election subjects.

All subjects follow the same normalization: a process first scans its own
segment (local reads), then performs one remote "invocation" read of its
right neighbour's first register, and only then competes.  A process that
returns lose does so either because it observed the global final register
written (so a winner exists) or because it received the abort signal; this
is what makes all-lose-without-all-abort impossible.

The concrete register layouts below are artifact choices, not normative.

le2 (two processes)
    Per process: a retreat flag and an announce flag; shared: one race
    register and one final register.  After announcing, both write the race
    register; the first writer escapes the spin (it eventually reads the
    register with the peer's value on top), writes the final register and
    wins.  The spinning loser waits on the final register, the peer's
    announce (absent peer: win) and the peer's retreat flag (retreated peer:
    win).  On abort a process that has announced writes its retreat flag and
    returns lose; before announcing it just returns lose.

tournament (n processes)
    A binary tree of two-sided races.  Each node carries a sequence of
    numbered rounds, each with two announce slots, a race register and a
    winner register.  A climber joins the first round whose winner register
    is unwritten (skipping rounds whose recorded winner has retreated) or
    watches the live winner of the round that blocks it.  Races follow le2's
    rules, with the per-process global retreat flag standing in for the
    peer-retreat check.  When a watched winner retreats, watchers re-race at
    the next round, so a subtree never becomes headless: either the final
    register gets written, or every process that could have written it has
    retreated (and then losing is legal, since retreat implies abort).

funnel (n processes)
    The tournament prefixed by one write to a single shared register, so
    that after the invocation reads the whole population is poised to write
    the same remote register.  Exists to drive the high-contention machinery.

le2-noabort, double-winner, spin-pair
    Deliberately non-conforming subjects: an abort-ignoring spinner (a
    correct non-abortable leader election), a subject where everybody
    returns win, and a pair that spins forever.  Checker fodder.
"""

from __future__ import annotations

from .model import (
    LOSE,
    WIN,
    AbortNotice,
    AlgorithmSpec,
    RegisterId,
)


class _Lost(Exception):
    """Internal control flow: the final register was observed written."""


def _scan_own(ctx, segment):
    for r in segment:
        yield from ctx.read(r)


# ---------------------------------------------------------------------------
# le2


class Le2(AlgorithmSpec):
    """Two-process abortable leader election."""

    name = "le2"
    n = 2

    RETREAT = (RegisterId(0, 0), RegisterId(1, 0))
    ANNOUNCE = (RegisterId(0, 1), RegisterId(1, 1))
    RACE = RegisterId(0, 2)
    FINAL = RegisterId(1, 2)

    def __init__(self, n: int = 2):
        if n != 2:
            raise ValueError("le2 is a 2-process subject")

    def segments(self):
        return (
            (self.RETREAT[0], self.ANNOUNCE[0], self.RACE),
            (self.RETREAT[1], self.ANNOUNCE[1], self.FINAL),
        )

    def program(self, pid, ctx):
        me, peer = pid, 1 - pid
        announced = False
        try:
            yield from _scan_own(ctx, self.segments()[me])
            yield from ctx.read(self.RETREAT[peer])  # invocation read
            yield from ctx.write(self.ANNOUNCE[me])
            announced = True
            yield from ctx.write(self.RACE)
            while True:
                v = yield from ctx.read(self.ANNOUNCE[peer])
                if v.is_initial:
                    break  # peer never showed up
                v = yield from ctx.read(self.RACE)
                if not v.is_initial and v.writer == peer:
                    break  # peer wrote the race register after us
                v = yield from ctx.read(self.FINAL)
                if not v.is_initial:
                    return LOSE
                v = yield from ctx.read(self.RETREAT[peer])
                if not v.is_initial:
                    break  # peer gave up
            yield from ctx.write(self.FINAL)
            return WIN
        except AbortNotice:
            if announced:
                yield from ctx.write(self.RETREAT[me])
            return LOSE


class Le2NoAbort(AlgorithmSpec):
    """le2 with abort handling stripped: a correct *non-abortable* leader
    election that ignores the abort signal entirely."""

    name = "le2-noabort"
    n = 2

    def __init__(self, n: int = 2):
        if n != 2:
            raise ValueError("le2-noabort is a 2-process subject")
        self._inner = Le2()

    def segments(self):
        return self._inner.segments()

    def program(self, pid, ctx):
        me, peer = pid, 1 - pid
        s = self._inner
        yield from _scan_own_shielded(ctx, s.segments()[me])
        yield from ctx.read(s.RETREAT[peer], abortable=False)
        yield from ctx.write(s.ANNOUNCE[me], abortable=False)
        yield from ctx.write(s.RACE, abortable=False)
        while True:
            v = yield from ctx.read(s.ANNOUNCE[peer], abortable=False)
            if v.is_initial:
                break
            v = yield from ctx.read(s.RACE, abortable=False)
            if not v.is_initial and v.writer == peer:
                break
            v = yield from ctx.read(s.FINAL, abortable=False)
            if not v.is_initial:
                return LOSE
        yield from ctx.write(s.FINAL, abortable=False)
        return WIN


def _scan_own_shielded(ctx, segment):
    for r in segment:
        yield from ctx.read(r, abortable=False)


# ---------------------------------------------------------------------------
# tournament


def _next_pow2(n: int) -> int:
    m = 1
    while m < n:
        m *= 2
    return m


class _TreeLayout:
    """Static register layout for a tournament instance.

    Heap-indexed complete binary tree over ``width`` leaves; leaf of process
    p sits at ``width + p``.  A node is active when both of its sides contain
    at least one real process; climbers pass through inactive nodes for free.
    Each active node owns ``real + 1`` rounds of four registers (two announce
    slots, race, winner), all placed in the segment of the smallest process
    of its subtree.
    """

    def __init__(self, n: int, shared_prologue: bool):
        self.n = n
        self.width = _next_pow2(n)
        counters = [0] * n
        alloc = lambda p: (counters.__setitem__(p, counters[p] + 1), RegisterId(p, counters[p] - 1))[1]

        self.retreat = tuple(alloc(p) for p in range(n))  # (p, 0) for each p
        self.final = alloc(0)
        self.shared = alloc(0) if shared_prologue else None

        self.rounds: dict[int, int] = {}
        self.owner: dict[int, int] = {}
        self.regs: dict[tuple, RegisterId] = {}  # (v, k, tag) -> register
        for v in range(1, self.width):
            members = self._members(v)
            left = self._members(2 * v)
            right = self._members(2 * v + 1)
            if not left or not right:
                continue
            self.rounds[v] = len(members) + 1
            owner = min(members)
            self.owner[v] = owner
            for k in range(self.rounds[v]):
                for tag in ("al", "ar", "race", "win"):
                    self.regs[(v, k, tag)] = alloc(owner)

        self.segments = tuple(
            tuple(RegisterId(p, i) for i in range(counters[p])) for p in range(n)
        )

    def _members(self, v: int) -> list:
        lo, hi = v, v
        while lo < self.width:
            lo, hi = 2 * lo, 2 * hi + 1
        return [p for p in range(max(lo - self.width, 0), min(hi - self.width + 1, self.n))]

    def path(self, p: int) -> list:
        """Active (node, side) pairs from p's leaf to the root."""
        out = []
        v = self.width + p
        while v > 1:
            side = v % 2  # 0 = left child, 1 = right child
            v //= 2
            if v in self.rounds:
                out.append((v, side))
        return out

    def side_of(self, v: int, p: int) -> int:
        """Which side of node v process p belongs to."""
        leaf = self.width + p
        while leaf // 2 != v:
            leaf //= 2
        return leaf % 2

    def reg(self, v: int, k: int, tag: str) -> RegisterId:
        return self.regs[(v, k, tag)]


class TournamentLe(AlgorithmSpec):
    """n-process abortable leader election over a tree of promotion rounds."""

    name = "tournament"

    def __init__(self, n: int, shared_prologue: bool = False):
        if n < 2:
            raise ValueError("need at least 2 processes")
        self.n = n
        self.layout = _TreeLayout(n, shared_prologue)
        self._prologue = shared_prologue

    def segments(self):
        return self.layout.segments

    def program(self, pid, ctx):
        lay = self.layout
        announced = False
        try:
            yield from _scan_own(ctx, lay.segments[pid])
            yield from ctx.read(lay.retreat[(pid + 1) % self.n])  # invocation read
            if self._prologue:
                yield from ctx.write(lay.shared)
            for v, side in lay.path(pid):
                announced = True
                yield from self._compete(ctx, pid, v, side)
            yield from ctx.write(lay.final)
            return WIN
        except _Lost:
            return LOSE
        except AbortNotice:
            if announced:
                yield from ctx.write(lay.retreat[pid])
            return LOSE

    def _watch(self, ctx, winner):
        """Spin until the final register is written (lose) or `winner` retreats."""
        lay = self.layout
        while True:
            f = yield from ctx.read(lay.final)
            if not f.is_initial:
                raise _Lost
            r = yield from ctx.read(lay.retreat[winner])
            if not r.is_initial:
                return

    def _compete(self, ctx, me, v, side):
        lay = self.layout
        other = 1 - side
        tag_mine = "al" if side == 0 else "ar"
        tag_other = "al" if other == 0 else "ar"
        k = 0
        while True:
            if k >= lay.rounds[v]:
                raise RuntimeError(f"round allocation exceeded at node {v}")
            w = yield from ctx.read(lay.reg(v, k, "win"))
            if not w.is_initial:
                r = yield from ctx.read(lay.retreat[w.writer])
                if r.is_initial:
                    yield from self._watch(ctx, w.writer)
                k += 1
                continue
            # round k is open: race it
            yield from ctx.write(lay.reg(v, k, tag_mine))
            yield from ctx.write(lay.reg(v, k, "race"))
            while True:
                ao = yield from ctx.read(lay.reg(v, k, tag_other))
                if ao.is_initial:
                    yield from ctx.write(lay.reg(v, k, "win"))
                    return
                b = yield from ctx.read(lay.reg(v, k, "race"))
                if not b.is_initial and lay.side_of(v, b.writer) == other:
                    yield from ctx.write(lay.reg(v, k, "win"))
                    return
                w = yield from ctx.read(lay.reg(v, k, "win"))
                if not w.is_initial:
                    r = yield from ctx.read(lay.retreat[w.writer])
                    if r.is_initial:
                        yield from self._watch(ctx, w.writer)
                    k += 1
                    break  # re-enter selection at the next round
                r = yield from ctx.read(lay.retreat[ao.writer])
                if not r.is_initial:
                    yield from ctx.write(lay.reg(v, k, "win"))
                    return
                f = yield from ctx.read(lay.final)
                if not f.is_initial:
                    raise _Lost


class FunnelLe(TournamentLe):
    """Tournament with a shared-register write prologue (high write contention)."""

    name = "funnel"

    def __init__(self, n: int):
        super().__init__(n, shared_prologue=True)


class SplitFunnelLe(TournamentLe):
    """Funnel variant writing one of two shared registers (roughly 80/20), so
    one register draws a thin crowd of writers."""

    name = "funnel2"

    def __init__(self, n: int):
        super().__init__(n, shared_prologue=True)
        counters = [len(s) for s in self.layout.segments]
        self._shared2 = RegisterId(0, counters[0])
        segs = list(self.layout.segments)
        segs[0] = segs[0] + (self._shared2,)
        self.layout.segments = tuple(segs)

    def program(self, pid, ctx):
        lay = self.layout
        announced = False
        try:
            yield from _scan_own(ctx, lay.segments[pid])
            yield from ctx.read(lay.retreat[(pid + 1) % self.n])
            target = lay.shared if pid < (self.n * 4) // 5 else self._shared2
            yield from ctx.write(target)
            for v, side in lay.path(pid):
                announced = True
                yield from self._compete(ctx, pid, v, side)
            yield from ctx.write(lay.final)
            return WIN
        except _Lost:
            return LOSE
        except AbortNotice:
            if announced:
                yield from ctx.write(lay.retreat[pid])
            return LOSE


# ---------------------------------------------------------------------------
# broken subjects (checker fodder)


class DoubleWinner(AlgorithmSpec):
    """Everybody wins.  Violates leader-election safety."""

    name = "double-winner"

    def __init__(self, n: int = 2):
        self.n = max(2, n)

    def segments(self):
        return tuple((RegisterId(p, 0),) for p in range(self.n))

    def program(self, pid, ctx):
        yield from ctx.read(RegisterId((pid + 1) % self.n, 0), abortable=False)
        return WIN


class SpinPair(AlgorithmSpec):
    """Two processes that wait for each other forever.  Violates
    deadlock-freedom (and bounded abort, incidentally)."""

    name = "spin-pair"
    n = 2

    def __init__(self, n: int = 2):
        if n != 2:
            raise ValueError("spin-pair is a 2-process subject")

    def segments(self):
        return ((RegisterId(0, 0), RegisterId(0, 1)), (RegisterId(1, 0), RegisterId(1, 1)))

    def program(self, pid, ctx):
        peer = 1 - pid
        yield from ctx.read(RegisterId(peer, 0), abortable=False)
        yield from ctx.write(RegisterId(pid, 1), abortable=False)
        while True:
            # wait for a second write by the peer that never comes
            v = yield from ctx.read(RegisterId(peer, 0), abortable=False)
            if not v.is_initial:
                return WIN


REGISTRY = {
    "le2": Le2,
    "le2-noabort": Le2NoAbort,
    "tournament": TournamentLe,
    "funnel": FunnelLe,
    "funnel2": SplitFunnelLe,
    "double-winner": DoubleWinner,
    "spin-pair": SpinPair,
}


def make_subject(name: str, n: int) -> AlgorithmSpec:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown subject {name!r}; known: {sorted(REGISTRY)}") from None
    return factory(n)
