"""Abortable synchronization objects in a cache-coherent runtime.

This is the reference-object side of the artifact: an atomic abortable
test-and-set base object, name consensus built on it, and a compare-and-swap
built from pages of (value, flag, name-consensus) triples reached through a
dispatch register.

The runtime here is deliberately different from the lower-bound simulator:
registers hold typed values, reads are free exactly when the reader's cached
copy is still current (per-variable version counters), writes and TAS
accesses always cost one remote memory reference, and abort delivery is a
local event.  Worlds are immutable values: a schedule step produces a new
world, so exploration can branch freely.  Program control state is the
process's event history; programs are replayed from it on demand.

Abort semantics follow the strongest reading: an abortable TAS invoked by a
process that has received the abort signal fails (returns the bottom marker)
and leaves the bit untouched, and a name-consensus or CAS call returns bottom
only if its caller was aborted, in which case it has written nothing shared.
"""

from __future__ import annotations

from dataclasses import dataclass

BOTTOM = "⊥"  # failed (aborted) operation marker

_ABORTED = object()


class DoubleCall(Exception):
    """A one-shot object was invoked twice by the same process."""


class PoolExhausted(Exception):
    """getNewPage ran out of its bounded page pool."""


class ObjAbort(Exception):
    """Raised inside an object program at an abort-sensitive point."""


# ---------------------------------------------------------------------------
# atomic abortable test-and-set


class AbortableTasObject:
    """One-bit atomic test-and-set with abort awareness.

    The first non-aborted caller gets 0 and sets the bit; later callers get
    1.  A caller that has received the abort signal gets the bottom marker
    and the bit is untouched; at most one caller ever receives 0.
    """

    def __init__(self):
        self.bit = 0
        self.callers = frozenset()

    def copy(self) -> "AbortableTasObject":
        t = AbortableTasObject.__new__(AbortableTasObject)
        t.bit = self.bit
        t.callers = self.callers
        return t

    def tas(self, caller: int, aborted: bool = False):
        if caller in self.callers:
            raise DoubleCall(f"process {caller} called TAS twice")
        self.callers = self.callers | {caller}
        if aborted:
            return BOTTOM
        if self.bit == 0:
            self.bit = 1
            return 0
        return 1


# ---------------------------------------------------------------------------
# operations and records


@dataclass(frozen=True)
class ObjOp:
    kind: str  # "cas" | "read" | "nd" | "tas"
    args: tuple = ()


@dataclass(frozen=True)
class OpRecord:
    proc: int
    kind: str
    args: tuple
    ret: object
    t_inv: int
    t_ret: int
    rmrs: int


# ---------------------------------------------------------------------------
# world


def _page_vars(i: int):
    return f"value{i}", f"flag{i}", f"leader{i}"


class World:
    """Immutable snapshot of the object system plus per-process progress."""

    __slots__ = (
        "n", "scripts", "vars", "versions", "tas", "cache", "aborted",
        "histories", "oplog", "pool_used", "ops_issued", "time", "initial_value",
    )

    def __init__(self, n, scripts, initial_value="init"):
        self.n = n
        self.scripts = scripts  # tuple[tuple[ObjOp, ...], ...]
        v0, f0, l0 = _page_vars(0)
        self.vars = {"D": 0, v0: initial_value, f0: False, l0: None}
        self.versions = {k: 0 for k in self.vars}
        self.tas = {"T0": AbortableTasObject()}
        self.cache = {}  # (proc, var) -> version seen
        self.aborted = tuple(False for _ in range(n))
        self.histories = tuple(() for _ in range(n))
        self.oplog = tuple(() for _ in range(n))
        self.pool_used = 1
        self.ops_issued = 0
        self.time = 0
        self.initial_value = initial_value

    def clone(self) -> "World":
        w = World.__new__(World)
        w.n = self.n
        w.scripts = self.scripts
        w.vars = dict(self.vars)
        w.versions = dict(self.versions)
        w.tas = {k: t.copy() for k, t in self.tas.items()}
        w.cache = dict(self.cache)
        w.aborted = self.aborted
        w.histories = self.histories
        w.oplog = self.oplog
        w.pool_used = self.pool_used
        w.ops_issued = self.ops_issued
        w.time = self.time
        w.initial_value = self.initial_value
        return w

    def done(self, p: int) -> bool:
        return len(self.oplog[p]) == len(self.scripts[p])

    def all_done(self) -> bool:
        return all(self.done(p) for p in range(self.n))

    def completed_ops(self) -> list:
        out = []
        for p in range(self.n):
            out.extend(self.oplog[p])
        return sorted(out, key=lambda r: r.t_ret)

    def abstract_value(self):
        """Current CAS value: the value register of the page D points to."""
        v, _, _ = _page_vars(self.vars["D"])
        return self.vars[v]

    def fingerprint(self):
        """State key for exploration dedup.

        Versions are abstracted to per-process cache-validity bits, absolute
        times to the precedence pattern among operations, and repeated spin
        read blocks collapse, so equal keys mean behaviorally identical
        futures (for programs insensitive to spin counts).
        """
        names = sorted(self.vars)
        vals = tuple(self.vars[k] for k in names)
        validity = tuple(
            sorted((p, k) for (p, k), ver in self.cache.items() if ver == self.versions[k])
        )
        tas = tuple(sorted((k, t.bit, tuple(sorted(t.callers))) for k, t in self.tas.items()))
        hist = tuple(_collapse(h) for h in self.histories)
        prec = self._precedence()
        return (vals, validity, tas, self.aborted, hist, prec, self.pool_used)

    def _precedence(self):
        """Bitmatrix over started operations: response-before-invocation."""
        marks = []
        for p in range(self.n):
            for r in self.oplog[p]:
                marks.append((p, r.t_inv, r.t_ret))
            pend = self._pending_inv(p)
            if pend is not None:
                marks.append((p, pend, None))
        marks.sort()
        bits = []
        for i, (_, _, ret_i) in enumerate(marks):
            for j, (_, inv_j, _) in enumerate(marks):
                if i != j and ret_i is not None and ret_i < inv_j:
                    bits.append((i, j))
        return (len(marks), tuple(bits))

    def _pending_inv(self, p: int):
        """Invocation time of p's op in flight: the first shared step since
        the latest end marker, if any."""
        inv = None
        for ev in self.histories[p]:
            if ev[0] == "e":
                inv = None
            elif inv is None and ev[0] in ("r", "w", "t", "alloc"):
                inv = ev[-1]
        return inv


_SPIN = 8


def _collapse(hist: tuple) -> tuple:
    """Collapse immediately repeated read-event blocks, masking times."""
    out = []
    for ev in hist:
        if ev[0] in ("r", "e", "w", "t", "alloc"):
            e = ev[:-1]  # strip the timestamp
        else:
            e = ev
        out.append(e)
        if e[0] != "r":
            continue
        m = len(out)
        k = 1
        while k <= _SPIN and m >= 2 * k:
            if out[m - k][0] != "r":
                break
            if out[m - k:] == out[m - 2 * k:m - k]:
                del out[m - k:]
                break
            k += 1
    return tuple(out)


# ---------------------------------------------------------------------------
# programs (Fig.-style pseudocode as generators)


class ObjCtx:
    __slots__ = ("pid", "aborted")

    def __init__(self, pid: int):
        self.pid = pid
        self.aborted = False

    def _do(self, action, abortable):
        res = yield action
        if res is _ABORTED:
            self.aborted = True
            if abortable:
                raise ObjAbort
            res = yield action
        return res

    def read(self, var, abortable=False):
        return (yield from self._do(("r", var), abortable))

    def write(self, var, value):
        return (yield from self._do(("w", var, value), False))

    def tas(self, name):
        return (yield from self._do(("t", name), False))

    def alloc(self):
        return (yield from self._do(("alloc",), False))


def _name_decide(ctx, page: int):
    """Name consensus on page `page`: agreement and validity; bottom only for
    an aborted caller that did not win the TAS."""
    _, _, leader = _page_vars(page)
    x = yield from ctx.tas(f"T{page}")
    if x == 0:
        yield from ctx.write(leader, ctx.pid)
        return ctx.pid
    while True:
        v = yield from ctx.read(leader, abortable=True)
        if v is not None:
            return v
        if ctx.aborted:
            return BOTTOM


def _cas(ctx, cmp_v, new_v):
    d = yield from ctx.read("D")
    value_d, flag_d, _ = _page_vars(d)
    old = yield from ctx.read(value_d)
    if old == cmp_v and cmp_v != new_v:
        winner = yield from _name_decide(ctx, d)
        if winner == ctx.pid:
            i = yield from ctx.alloc()
            value_i, _, _ = _page_vars(i)
            yield from ctx.write(value_i, new_v)
            yield from ctx.write("D", i)
            yield from ctx.write(value_d, new_v)
            yield from ctx.write(flag_d, True)
        else:
            while True:
                f = yield from ctx.read(flag_d, abortable=True)
                if f:
                    break
                if ctx.aborted:
                    return BOTTOM
            old = yield from ctx.read(value_d)
    return old


def _read_op(ctx):
    d = yield from ctx.read("D")
    value_d, _, _ = _page_vars(d)
    v = yield from ctx.read(value_d)
    return v


def _tas_op(ctx):
    x = yield from ctx.tas("T0")
    return x


_OP_BODIES = {"cas": _cas, "read": _read_op, "nd": _name_decide, "tas": _tas_op}


def _driver(ctx, script):
    for idx, op in enumerate(script):
        try:
            ret = yield from _OP_BODIES[op.kind](ctx, *op.args)
        except ObjAbort:
            ret = BOTTOM
        yield ("e", idx, ret)
    return None


def cas_op(cmp_v, new_v) -> ObjOp:
    return ObjOp("cas", (cmp_v, new_v))


def read_op() -> ObjOp:
    return ObjOp("read")


def nd_op(page: int = 0) -> ObjOp:
    return ObjOp("nd", (page,))


def tas_op() -> ObjOp:
    return ObjOp("tas")


# ---------------------------------------------------------------------------
# runtime engine


class ObjRuntime:
    """Binds scripts to the world transition function."""

    def __init__(self, n: int, scripts, initial_value="init"):
        self.n = n
        self.scripts = tuple(tuple(s) for s in scripts)
        self.initial_value = initial_value

    def initial(self) -> World:
        return World(self.n, self.scripts, self.initial_value)

    # -- program replay ------------------------------------------------------

    def _advance(self, w, gen, payload, p):
        """Resume p's driver, recording end-of-operation markers inline;
        returns the pending real action or None when the script finished."""
        try:
            item = gen.send(payload)
            while item[0] == "e":
                w = self._marker(w, p, item)
                item = gen.send(None)
            return w, item
        except StopIteration:
            return w, None

    def _marker(self, w, p, item):
        idx, ret = item[1], item[2]
        rec = self._finish_record(w, p, idx, ret)
        ev = ("e", idx, ret, w.time)
        w.histories = w.histories[:p] + (w.histories[p] + (ev,),) + w.histories[p + 1:]
        w.oplog = w.oplog[:p] + (w.oplog[p] + (rec,),) + w.oplog[p + 1:]
        return w

    def _finish_record(self, w, p, idx, ret) -> OpRecord:
        """Operation extent = events since the previous end marker; its
        invocation time is its first shared step (its end time if it never
        took one, which only aborted bottom-returns do)."""
        inv = None
        rmrs = 0
        for ev in w.histories[p]:
            if ev[0] == "e":
                inv = None
                rmrs = 0
                continue
            if ev[0] in ("r", "w", "t", "alloc"):
                if inv is None:
                    inv = ev[-1]
                rmrs += ev[-2] if ev[0] == "r" else 1
        op = w.scripts[p][idx]
        t_inv = inv if inv is not None else w.time
        return OpRecord(p, op.kind, op.args, ret, t_inv, w.time, rmrs)

    def _rebuild(self, w: World, p: int):
        ctx = ObjCtx(p)
        gen = _driver(ctx, w.scripts[p])
        pending = self._replay_advance(gen, None)
        for ev in w.histories[p]:
            if ev[0] == "e":
                continue
            if ev[0] == "a":
                pending = self._replay_advance(gen, _ABORTED)
                continue
            if pending is None:
                raise RuntimeError("history extends past program end")
            payload = {"r": lambda e: e[2], "w": lambda e: None,
                       "t": lambda e: e[2], "alloc": lambda e: e[1]}[ev[0]](ev)
            pending = self._replay_advance(gen, payload)
        return gen, pending

    def _replay_advance(self, gen, payload):
        try:
            item = gen.send(payload)
            while item[0] == "e":
                item = gen.send(None)
            return item
        except StopIteration:
            return None

    # -- transitions -----------------------------------------------------------

    def step(self, w: World, p: int) -> World:
        """One shared-memory step by p (no-op if its script is done)."""
        if w.done(p):
            return w
        gen, pending = self._rebuild(w, p)
        if pending is None:
            return w
        nw = w.clone()
        nw.time += 1
        kind = pending[0]
        if kind == "r":
            var = pending[1]
            val = nw.vars[var]
            rmr = nw.cache.get((p, var)) != nw.versions[var]
            nw.cache[(p, var)] = nw.versions[var]
            ev = ("r", var, val, 1 if rmr else 0, nw.time)
        elif kind == "w":
            var, val = pending[1], pending[2]
            if var not in nw.vars:
                raise KeyError(f"unknown variable {var}")
            nw.vars[var] = val
            nw.versions[var] += 1
            nw.cache[(p, var)] = nw.versions[var]
            ev = ("w", var, val, nw.time)
        elif kind == "t":
            name = pending[1]
            val = nw.tas[name].tas(p, aborted=nw.aborted[p])
            ev = ("t", name, val, nw.time)
        elif kind == "alloc":
            nw.ops_issued += 1
            bound = 4 * sum(len(s) for s in nw.scripts) + 2
            if nw.pool_used >= bound:
                raise PoolExhausted(f"page pool bound {bound} reached")
            idx = nw.pool_used
            nw.pool_used += 1
            v, f, l = _page_vars(idx)
            for name, init in ((v, None), (f, False), (l, None)):
                nw.vars[name] = init
                nw.versions[name] = 0
            nw.tas[f"T{idx}"] = AbortableTasObject()
            ev = ("alloc", idx, nw.time)
        else:
            raise RuntimeError(f"malformed action {pending!r}")
        nw.histories = nw.histories[:p] + (nw.histories[p] + (ev,),) + nw.histories[p + 1:]
        payload = {"r": ev[2] if kind == "r" else None,
                   "w": None, "t": ev[2] if kind == "t" else None,
                   "alloc": ev[1] if kind == "alloc" else None}[kind]
        nw2, _ = self._advance(nw, gen, payload, p)
        return nw2

    def abort(self, w: World, p: int) -> World:
        """Deliver the abort signal to p (idempotent, local)."""
        if w.aborted[p] or w.done(p):
            return w
        nw = w.clone()
        nw.aborted = nw.aborted[:p] + (True,) + nw.aborted[p + 1:]
        nw.histories = nw.histories[:p] + (nw.histories[p] + (("a",),),) + nw.histories[p + 1:]
        gen, pending = self._rebuild(w, p)
        if pending is not None:
            nw2, _ = self._advance(nw, gen, _ABORTED, p)
            return nw2
        return nw

    def run_schedule(self, w: World, items) -> World:
        """items: process ids for steps, ("abort", p) for abort deliveries."""
        for it in items:
            if isinstance(it, tuple) and it[0] == "abort":
                w = self.abort(w, it[1])
            else:
                w = self.step(w, it)
        return w
