"""Deterministic simulator for asynchronous shared-memory algorithms with aborts.

Processes are deterministic programs over a finite register space partitioned
into per-process segments.  A schedule is a finite sequence of step and abort
tokens; applying a schedule to a configuration is a pure function, so
configurations are replayable values that can be cloned, projected, compared
and explored without shared mutable state.

Locality follows a combined cache/segment rule: a step is local (incurs no
remote memory reference) iff it accesses the actor's own segment, or it reads
a register the actor accessed before and that no other process wrote since.
Abort deliveries are always local.

Register values are write-unique: every write stores the writer's id plus a
per-writer step counter, so no value is written twice in an execution and
cache validity can be decided by value comparison alone.  A process's state
is its observed event sequence; the engine replays a process's program from
its history whenever it needs the next pending action, which keeps
configurations plain values.

When a program returns, the engine inserts the terminating scan: the process
reads every register of its own segment once (all local) and only then enters
its halting state.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

WIN = "win"
LOSE = "lose"

RUNNING = "running"
SCANNING = "scanning"
RETURNED = "returned"


class SimulationError(Exception):
    pass


class AlgorithmTooDeep(SimulationError):
    """A process exceeded the per-process step ceiling."""


class AbortNotice(Exception):
    """Raised inside a program when the abort signal arrives at an abortable point."""


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class RegisterId:
    owner: int
    index: int

    def __repr__(self):
        return f"r({self.owner},{self.index})"


@dataclass(frozen=True)
class RegisterValue:
    """Pair (writer, token); token None marks the initial value of a register."""

    writer: int
    token: tuple[int, int] | None = None

    @property
    def is_initial(self) -> bool:
        return self.token is None


@dataclass(frozen=True)
class ScheduleItem:
    pid: int
    abort: bool = False

    def __repr__(self):
        return f"{self.pid}^T" if self.abort else f"{self.pid}"


Schedule = tuple  # tuple[ScheduleItem, ...]


def step(pid: int) -> ScheduleItem:
    return ScheduleItem(pid)


def abort_item(pid: int) -> ScheduleItem:
    return ScheduleItem(pid, True)


def steps(*pids: int) -> Schedule:
    return tuple(ScheduleItem(p) for p in pids)


_KIND_CODE = {"read": 0, "write": 1, "abort": 2}


@dataclass(frozen=True)
class ExecutionStep:
    actor: int
    kind: str  # "read" | "write" | "abort"
    register: RegisterId | None
    value: RegisterValue | None
    rmr: bool
    terminating: bool = False  # read belonging to the actor's terminating scan

    def __post_init__(self):
        # flat integer encoding; cheap to hash and compare in state fingerprints
        r, v = self.register, self.value
        tok = v.token if v is not None else None
        object.__setattr__(
            self,
            "enc",
            (
                _KIND_CODE[self.kind],
                self.actor,
                r.owner if r is not None else -1,
                r.index if r is not None else -1,
                v.writer if v is not None else -1,
                tok[0] if tok is not None else -1,
                tok[1] if tok is not None else -1,
                self.rmr,
                self.terminating,
            ),
        )


@dataclass(frozen=True)
class ProcState:
    phase: str = RUNNING
    outcome: str | None = None
    scan_pos: int = 0
    sm_steps: int = 0  # shared-memory steps taken (incl. terminating reads)


class _Chain:
    """Immutable append-only sequence with O(1) push and structural sharing."""

    __slots__ = ("parent", "item", "length")

    def __init__(self, parent, item, length):
        self.parent = parent
        self.item = item
        self.length = length

    def push(self, item) -> "_Chain":
        return _Chain(self, item, self.length + 1)

    def __len__(self) -> int:
        return self.length

    def to_list(self) -> list:
        out = [None] * self.length
        node = self
        i = self.length - 1
        while i >= 0:
            out[i] = node.item
            node = node.parent
            i -= 1
        return out


_EMPTY_CHAIN = _Chain(None, None, 0)


def _chain(items=()) -> _Chain:
    c = _EMPTY_CHAIN
    for it in items:
        c = c.push(it)
    return c


_MAX_SPIN_CYCLE = 8


def _append_collapsed(hist: tuple, enc: tuple) -> tuple:
    """Append an encoded event, dropping an immediately repeated block of up
    to _MAX_SPIN_CYCLE read events.

    A spin loop re-reads the same registers and, while nothing changes, keeps
    appending the same block of read events; dropping the repetition yields a
    canonical form under which idle spinning is a no-op (kind code 0 = read).
    """
    out = hist + (enc,)
    if enc[0] != 0:
        return out
    m = len(out)
    k = 1
    while k <= _MAX_SPIN_CYCLE and m >= 2 * k:
        if out[m - k][0] != 0:
            break
        if out[m - k:] == out[m - 2 * k:m - k]:
            return out[: m - k]
        k += 1
    return out


# ---------------------------------------------------------------------------
# configuration


class Configuration:
    """Full system snapshot: per-process histories, registers, abort flags,
    statuses, plus the schedule that produced it from the initial
    configuration.  Immutable by convention; all mutation goes through the
    simulator, which builds fresh instances."""

    __slots__ = (
        "n",
        "segments",
        "procs",
        "aborted",
        "registers",
        "histories",
        "trace",
        "lineage",
        "last_access",
        "fph",
        "regsfp",
    )

    def __init__(self, n, segments, procs, aborted, registers, histories, trace, lineage, last_access,
                 fph=None, regsfp=()):
        self.n = n
        self.segments = segments  # tuple[tuple[RegisterId, ...], ...]
        self.procs = procs  # tuple[ProcState, ...]
        self.aborted = aborted  # tuple[bool, ...]
        self.registers = registers  # dict[RegisterId, RegisterValue], written ones only
        self.histories = histories  # tuple[_Chain of ExecutionStep, ...]
        self.trace = trace  # _Chain of ExecutionStep, the whole execution E(C)
        self.lineage = lineage  # _Chain of ScheduleItem, Sched(C)
        self.last_access = last_access  # tuple[dict[RegisterId, RegisterValue], ...]
        self.fph = fph if fph is not None else tuple(() for _ in range(n))
        self.regsfp = regsfp  # sorted flat encoding of written registers

    # -- views -------------------------------------------------------------

    def val(self, r: RegisterId) -> RegisterValue:
        v = self.registers.get(r)
        return v if v is not None else RegisterValue(r.owner, None)

    def history(self, p: int) -> list:
        return self.histories[p].to_list()

    def trace_steps(self) -> list:
        return self.trace.to_list()

    def schedule(self) -> Schedule:
        return tuple(self.lineage.to_list())

    def participants(self) -> frozenset:
        """Proc(Sched(C)): processes with at least one non-abort schedule item."""
        return frozenset(it.pid for it in self.lineage.to_list() if not it.abort)

    def returned(self, p: int) -> bool:
        return self.procs[p].phase == RETURNED

    def outcome(self, p: int) -> str | None:
        return self.procs[p].outcome if self.procs[p].phase == RETURNED else None

    def all_returned(self, pids=None) -> bool:
        pids = range(self.n) if pids is None else pids
        return all(self.procs[p].phase == RETURNED for p in pids)

    def fingerprint(self):
        """Canonical value identifying the system state.

        Two configurations with equal fingerprints are indistinguishable to
        every process and have identical register contents, statuses and
        abort flags.  The global step order (and thus lineage) is excluded on
        purpose: it does not affect any process's future behavior.  An
        immediately repeated block of identical read events collapses, closing
        the state graph over idle spin loops (sound for programs whose
        behavior does not depend on how often a spin rechecks unchanged
        values).  Maintained incrementally by the simulator.
        """
        st = tuple((s.phase, s.outcome, s.scan_pos) for s in self.procs)
        return (self.fph, self.regsfp, st, self.aborted)


# ---------------------------------------------------------------------------
# program protocol

_ABORT_DELIVERED = object()
_WRITE_DONE = object()


class Ctx:
    """Handle passed to process programs.

    Programs are generators that issue shared-memory actions through
    :meth:`read` and :meth:`write` (via ``yield from``) and finish by
    returning ``WIN`` or ``LOSE``.  When the abort signal is delivered while
    an abortable action is pending, the action is dropped and
    :class:`AbortNotice` is raised at that point; a non-abortable action is
    simply re-issued.  The engine replays programs from recorded histories,
    so programs must be deterministic functions of the values they read.
    """

    __slots__ = ("pid", "aborted")

    def __init__(self, pid: int):
        self.pid = pid
        self.aborted = False

    def read(self, register: RegisterId, abortable: bool = True):
        res = yield ("read", register)
        if res is _ABORT_DELIVERED:
            self.aborted = True
            if abortable:
                raise AbortNotice
            res = yield ("read", register)
        return res

    def write(self, register: RegisterId, abortable: bool = True):
        res = yield ("write", register)
        if res is _ABORT_DELIVERED:
            self.aborted = True
            if abortable:
                raise AbortNotice
            res = yield ("write", register)
        return None


class AlgorithmSpec:
    """Deterministic transition interface a test-subject algorithm implements.

    Subclasses fix the number of processes, declare the register space
    (``segments``) and provide one program generator per process.
    """

    name = "algorithm"
    n = 0

    def segments(self) -> tuple:
        raise NotImplementedError

    def program(self, pid: int, ctx: Ctx):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# simulator


class Simulator:
    """Binds an algorithm to the execution semantics.

    All methods are pure with respect to configurations: ``apply`` returns a
    fresh configuration and the executed trace segment.  A small cache of
    live program generators keyed to configuration identity makes linear
    extension cheap; any configuration can still be extended after the cache
    moved on, at the cost of replaying the process history.
    """

    def __init__(self, algorithm: AlgorithmSpec, step_ceiling: int = 10**6):
        self.algorithm = algorithm
        self.step_ceiling = step_ceiling
        segs = tuple(tuple(s) for s in algorithm.segments())
        if len(segs) != algorithm.n:
            raise SimulationError("segments() must declare one segment per process")
        seen = set()
        for p, seg in enumerate(segs):
            if not seg:
                raise SimulationError(f"process {p} owns no registers")
            for r in seg:
                if r.owner != p:
                    raise SimulationError(f"register {r} listed in segment of process {p}")
                if r in seen:
                    raise SimulationError(f"duplicate register {r}")
                seen.add(r)
        self.segments = segs
        # one live generator per process, keyed by the identity of the
        # history chain it is positioned at; a process's control state is a
        # function of its own history only, so the entry stays valid while
        # other processes step
        self._gencache: dict = {}

    # -- construction --------------------------------------------------------

    def initial(self) -> Configuration:
        n = self.algorithm.n
        return Configuration(
            n=n,
            segments=self.segments,
            procs=tuple(ProcState() for _ in range(n)),
            aborted=tuple(False for _ in range(n)),
            registers={},
            histories=tuple(_EMPTY_CHAIN for _ in range(n)),
            trace=_EMPTY_CHAIN,
            lineage=_EMPTY_CHAIN,
            last_access=tuple({} for _ in range(n)),
        )

    # -- program management ---------------------------------------------------

    def _advance(self, gen, payload):
        """Resume a program generator; returns ("action", act) or ("return", outcome)."""
        try:
            act = gen.send(payload)
        except StopIteration as stop:
            if stop.value not in (WIN, LOSE):
                raise SimulationError(f"program returned {stop.value!r}, expected WIN or LOSE")
            return ("return", stop.value)
        except AbortNotice:
            raise SimulationError("program leaked AbortNotice; aborts must be handled")
        if not (isinstance(act, tuple) and len(act) == 2 and act[0] in ("read", "write")):
            raise SimulationError(f"program yielded malformed action {act!r}")
        return ("action", act)

    def _rebuild(self, C: Configuration, p: int):
        """Replay process p's program against its recorded history."""
        ctx = Ctx(p)
        gen = self.algorithm.program(p, ctx)
        state = self._advance(gen, None)
        for ev in C.histories[p].to_list():
            if state[0] == "return":
                # trailing events are the terminating scan / post-return aborts
                break
            if ev.kind == "abort":
                state = self._advance(gen, _ABORT_DELIVERED)
                continue
            kind, reg = state[1]
            if kind != ev.kind or reg != ev.register:
                raise SimulationError(
                    f"nondeterministic program: replayed action ({kind},{reg}) != recorded ({ev.kind},{ev.register})"
                )
            payload = ev.value if ev.kind == "read" else _WRITE_DONE
            state = self._advance(gen, payload)
        return gen, state

    def _generator_at(self, C: Configuration, p: int, consume: bool):
        hit = self._gencache.get(p)
        if hit is not None and hit[0] is C.histories[p]:
            if consume:
                del self._gencache[p]
            return hit[1], hit[2]
        gen, state = self._rebuild(C, p)
        if not consume:
            self._gencache[p] = (C.histories[p], gen, state)
        return gen, state

    def _cache_put(self, C: Configuration, p: int, gen, state):
        self._gencache[p] = (C.histories[p], gen, state)

    def poised(self, C: Configuration, p: int):
        """Pending action of p in C: ("read"|"write", RegisterId), or None if returned."""
        st = C.procs[p]
        if st.phase == RETURNED:
            return None
        if st.phase == SCANNING:
            return ("read", self.segments[p][st.scan_pos])
        gen, state = self._generator_at(C, p, consume=False)
        if state[0] == "return":
            # program finished without ever acting; scan starts on next step
            return ("read", self.segments[p][st.scan_pos])
        return state[1]

    # -- transition -----------------------------------------------------------

    def apply(self, C: Configuration, schedule) -> tuple:
        """Conf(C, sigma) and Exec(C, sigma).

        Step items naming a returned process and repeated abort deliveries are
        no-ops recorded in the lineage but absent from the trace.
        """
        cur = C
        delta = []
        for item in schedule:
            cur = self._one(cur, item, delta)
        return cur, tuple(delta)

    def _one(self, C: Configuration, item: ScheduleItem, delta: list) -> Configuration:
        p = item.pid
        if not (0 <= p < C.n):
            raise SimulationError(f"schedule names unknown process {p}")
        st = C.procs[p]

        if item.abort:
            if C.aborted[p] or st.phase == RETURNED:
                return self._bump(C, item)  # ignored no-op
            ev = ExecutionStep(p, "abort", None, None, False)
            new_gen = None
            if st.phase == RUNNING:
                gen, state = self._generator_at(C, p, consume=True)
                if state[0] != "return":  # a finished program only logs the flag
                    state = self._advance(gen, _ABORT_DELIVERED)
                new_gen = (gen, state)
            return self._commit(C, item, p, ev, new_gen, delta, flip_abort=True)

        if st.phase == RETURNED:
            return self._bump(C, item)  # ignored no-op

        if st.phase == SCANNING:
            reg = self.segments[p][st.scan_pos]
            ev = ExecutionStep(p, "read", reg, C.val(reg), False, terminating=True)
            return self._commit(C, item, p, ev, None, delta)

        gen, state = self._generator_at(C, p, consume=True)
        if state[0] == "return":
            # program finished at priming; this step performs the first scan read
            reg = self.segments[p][st.scan_pos]
            ev = ExecutionStep(p, "read", reg, C.val(reg), False, terminating=True)
            return self._commit(C, item, p, ev, (gen, state), delta, program_done=state[1])
        kind, reg = state[1]
        if kind == "read":
            value = C.val(reg)
            rmr = self._read_is_rmr(C, p, reg)
            ev = ExecutionStep(p, "read", reg, value, rmr)
            state2 = self._advance(gen, value)
        else:
            token = (p, st.sm_steps + 1)
            value = RegisterValue(p, token)
            rmr = reg.owner != p
            ev = ExecutionStep(p, "write", reg, value, rmr)
            state2 = self._advance(gen, _WRITE_DONE)
        return self._commit(C, item, p, ev, (gen, state2), delta)

    def _read_is_rmr(self, C: Configuration, p: int, reg: RegisterId) -> bool:
        if reg.owner == p:
            return False
        return C.last_access[p].get(reg) != C.val(reg)

    def _bump(self, C: Configuration, item: ScheduleItem) -> Configuration:
        return Configuration(
            C.n, C.segments, C.procs, C.aborted, C.registers,
            C.histories, C.trace, C.lineage.push(item), C.last_access,
            C.fph, C.regsfp,
        )

    def _commit(self, C, item, p, ev, gen_state, delta, flip_abort=False, program_done=None):
        st = C.procs[p]
        registers = C.registers
        last_access = C.last_access
        regsfp = C.regsfp
        if ev.kind == "write":
            registers = dict(registers)
            registers[ev.register] = ev.value
            r, v = ev.register, ev.value
            regsfp = tuple(sorted(
                tuple(x for x in regsfp if x[:2] != (r.owner, r.index))
                + ((r.owner, r.index, v.writer, v.token[0], v.token[1]),)
            ))
        if ev.kind in ("read", "write"):
            la = dict(last_access[p])
            la[ev.register] = ev.value
            last_access = last_access[:p] + (la,) + last_access[p + 1:]

        phase, outcome, scan_pos, sm = st.phase, st.outcome, st.scan_pos, st.sm_steps
        if ev.kind != "abort":
            sm += 1
            if sm > self.step_ceiling:
                raise AlgorithmTooDeep(f"process {p} exceeded step ceiling {self.step_ceiling}")
        if program_done is not None:
            outcome = program_done
        if ev.terminating:
            scan_pos += 1
            phase = SCANNING
            if scan_pos == len(self.segments[p]):
                phase = RETURNED
        elif gen_state is not None and gen_state[1][0] == "return":
            outcome = gen_state[1][1]
            phase = RETURNED if not self.segments[p] else SCANNING
            scan_pos = 0

        procs = C.procs[:p] + (ProcState(phase, outcome, scan_pos, sm),) + C.procs[p + 1:]
        aborted = C.aborted
        if flip_abort:
            aborted = aborted[:p] + (True,) + aborted[p + 1:]

        new = Configuration(
            C.n, C.segments, procs, aborted, registers,
            C.histories[:p] + (C.histories[p].push(ev),) + C.histories[p + 1:],
            C.trace.push(ev),
            C.lineage.push(item),
            last_access,
            C.fph[:p] + (_append_collapsed(C.fph[p], ev.enc),) + C.fph[p + 1:],
            regsfp,
        )
        delta.append(ev)
        if gen_state is not None and phase == RUNNING:
            self._cache_put(new, p, gen_state[0], gen_state[1])
        return new

    # -- convenience runs -------------------------------------------------------

    def run_solo(self, C: Configuration, p: int, max_steps: int | None = None):
        """Step p alone until it returns (or the ceiling hits); returns (C', n_steps)."""
        limit = max_steps if max_steps is not None else self.step_ceiling
        cur = C
        taken = 0
        while not cur.returned(p):
            if taken >= limit:
                raise AlgorithmTooDeep(f"process {p} still running after {limit} solo steps")
            cur = self._one(cur, ScheduleItem(p), [])
            taken += 1
        return cur, taken

    def solo_zero_rmr_prefix(self, C: Configuration, p: int):
        """Largest t with RMR(Exec(C, p^t)) = 0 and p not returning.

        Returns (C', t, fate, outcome): fate is "poised-rmr" if p's next step
        would incur an RMR (outcome None), or "returns" if p's next step
        completes its run with zero RMRs, with the outcome it returns.
        """
        if C.returned(p):
            raise SimulationError("process already returned")
        cur = C
        t = 0
        while True:
            act = self.poised(cur, p)
            if act is None:
                raise SimulationError("no pending action for running process")
            kind, reg = act
            if kind == "write":
                rmr = reg.owner != p
            else:
                rmr = self._read_is_rmr(cur, p, reg)
            if rmr:
                return cur, t, "poised-rmr", None
            nxt = self._one(cur, ScheduleItem(p), [])
            if nxt.returned(p):
                return cur, t, "returns", nxt.outcome(p)
            cur = nxt
            t += 1
            if t > self.step_ceiling:
                raise AlgorithmTooDeep(f"process {p} took {t} zero-RMR solo steps")


def apply(C: Configuration, schedule, algorithm: AlgorithmSpec, step_ceiling: int = 10**6):
    """Module-level convenience wrapper around :meth:`Simulator.apply`."""
    return Simulator(algorithm, step_ceiling).apply(C, schedule)


# ---------------------------------------------------------------------------
# model predicates


def rmr_flag(C: Configuration, p: int, kind: str, register: RegisterId) -> bool:
    """Whether a read/write of `register` by p would incur an RMR in C."""
    if kind == "write":
        return register.owner != p
    if kind == "read":
        if register.owner == p:
            return False
        return C.last_access[p].get(register) != C.val(register)
    raise ValueError(f"not a shared-memory action: {kind}")


def cache_set(C: Configuration, p: int) -> frozenset:
    """Own segment plus valid cached copies; empty once p terminated."""
    if C.procs[p].phase == RETURNED:
        return frozenset()
    out = set(C.segments[p])
    for reg, v in C.last_access[p].items():
        if C.val(reg) == v:
            out.add(reg)
    return frozenset(out)


def lost_set(C: Configuration) -> frozenset:
    return frozenset(p for p in range(C.n) if C.procs[p].phase == RETURNED and C.procs[p].outcome == LOSE)


def _stepped(C: Configuration) -> frozenset:
    """Processes with at least one shared-memory step in E(C)."""
    return frozenset(p for p in range(C.n) if any(e.kind != "abort" for e in C.histories[p].to_list()))


def knows_set(C: Configuration) -> frozenset:
    """Pairs (p, q): p gained, or can freely gain, information about q.

    Union of:
      K1  p read a register while q was visible on it (value (q, x), x a token);
      K2  p read a register of q's segment, and q took a shared-memory step;
      K3  q wrote into p's segment before p's terminating read of that
          register, and p took a shared-memory step.
    """
    trace = C.trace_steps()
    stepped = _stepped(C)
    K = set()
    # position of each terminating read, per (process, register)
    term_pos: dict = {}
    for i, e in enumerate(trace):
        if e.terminating:
            term_pos[(e.actor, e.register)] = i
    for i, e in enumerate(trace):
        if e.kind == "read":
            p = e.actor
            v = e.value
            if v.token is not None and v.writer != p:
                K.add((p, v.writer))  # K1
            if e.register.owner != p and e.register.owner in stepped:
                K.add((p, e.register.owner))  # K2
        elif e.kind == "write":
            q = e.actor
            owner = e.register.owner
            if owner != q and owner in stepped:
                tp = term_pos.get((owner, e.register))
                if tp is None or i < tp:
                    K.add((owner, q))  # K3
    return frozenset(K)


def hidden_set(C: Configuration) -> frozenset:
    """Processes hidden on every register.

    On a foreign register, p is hidden unless its last access was followed by
    writes exclusively from processes that have not lost (H1, with the access
    point read as p's last access).  On p's own segment, p is hidden iff every
    foreign writer into it has lost (H2).
    """
    trace = C.trace_steps()
    lost = lost_set(C)
    exposed = set()
    writes: dict = {}  # register -> list of (pos, writer)
    last_access: dict = {}  # (p, register) -> pos
    for i, e in enumerate(trace):
        if e.kind == "abort":
            continue
        last_access[(e.actor, e.register)] = i
        if e.kind == "write":
            writes.setdefault(e.register, []).append((i, e.actor))
    for reg, ws in writes.items():
        owner = reg.owner
        for _, w in ws:
            if w != owner and w not in lost:
                exposed.add(owner)  # H2 violated for the owner
    for (p, reg), t in last_access.items():
        if reg.owner == p:
            continue
        after = [w for pos, w in writes.get(reg, ()) if pos > t]
        if after and not any(w in lost for w in after):
            exposed.add(p)  # H1 violated
    return frozenset(range(C.n)) - exposed


def is_safe(C: Configuration) -> bool:
    """(S1) every known process has lost; (S2) every non-hidden process has
    lost or never took a shared-memory step."""
    lost = lost_set(C)
    for _, q in knows_set(C):
        if q not in lost:
            return False
    hidden = hidden_set(C)
    stepped = _stepped(C)
    for p in range(C.n):
        if p not in hidden and p not in lost and p in stepped:
            return False
    return True


def project_schedule(schedule, pids) -> Schedule:
    """sigma | P^Delta: keep step and abort items of processes in P, in order."""
    pids = frozenset(pids)
    return tuple(it for it in schedule if it.pid in pids)


def indistinguishable(C: Configuration, D: Configuration, pids) -> bool:
    """E(C)|p = E(D)|p for all p in pids, and identical register contents."""
    if C.registers != D.registers:
        return False
    for p in pids:
        if C.history(p) != D.history(p):
            return False
    return True


def rmr_counts(trace_steps, pids=None) -> dict:
    """Per-process count of RMR steps in an execution."""
    counts: dict = {}
    if pids is not None:
        counts = {p: 0 for p in pids}
    for e in trace_steps:
        if e.rmr:
            if pids is None:
                counts[e.actor] = counts.get(e.actor, 0) + 1
            elif e.actor in counts:
                counts[e.actor] += 1
    return counts


def total_rmr(trace_steps) -> int:
    return sum(1 for e in trace_steps if e.rmr)


# ---------------------------------------------------------------------------
# serialization


def register_to_json(r: RegisterId | None):
    return None if r is None else {"owner": r.owner, "index": r.index}


def value_to_json(v: RegisterValue | None):
    if v is None:
        return None
    return {"writer": v.writer, "token": list(v.token) if v.token is not None else None}


def trace_to_json(trace_steps) -> list:
    out = []
    for i, e in enumerate(trace_steps):
        out.append(
            {
                "seq": i,
                "actor": e.actor,
                "kind": e.kind,
                "register": register_to_json(e.register),
                "value": value_to_json(e.value),
                "rmr": e.rmr,
            }
        )
    return out


def config_snapshot(C: Configuration) -> dict:
    regs = sorted(C.registers.items(), key=lambda kv: (kv[0].owner, kv[0].index))
    return {
        "registers": [
            {"register": register_to_json(r), "value": value_to_json(v)} for r, v in regs
        ],
        "procs": [
            {
                "pid": p,
                "phase": C.procs[p].phase,
                "outcome": C.procs[p].outcome,
                "aborted": C.aborted[p],
                "steps": C.procs[p].sm_steps,
            }
            for p in range(C.n)
        ],
    }


def schedule_to_json(schedule) -> list:
    return [{"abort": it.pid} if it.abort else {"step": it.pid} for it in schedule]


def schedule_from_json(items) -> Schedule:
    out = []
    for obj in items:
        if "step" in obj:
            out.append(ScheduleItem(int(obj["step"])))
        elif "abort" in obj:
            out.append(ScheduleItem(int(obj["abort"]), True))
        else:
            raise ValueError(f"malformed schedule item {obj!r}")
    return tuple(out)
