"""Synchronization wrappers as resumable step machines over a shared store.

A machine advances one visible step at a time: the op invocation, one node
read, one node write, or the response point.  Everything else - lock
acquisition, version validation, commit - is internal to a step and never
occupies a schedule slot.

Two wrappers are provided plus an unsynchronized reference machine:

* ``hoh`` - pessimistic.  Updates take the root lock exclusively at their
  invocation (serializing all updates), traverse lock-free under it, then
  exclusively lock exactly the nodes they are about to write before the
  first write and release in reverse order, root last.  Finds crab-walk:
  a shared lock is held on the last node read, and the next node's lock
  is acquired inside its read step before the previous one is released.
  A step whose locks are unavailable reports blocked and changes nothing.

* ``stm`` - optimistic lazy-versioning.  Reads return the last committed
  record and (in the default per-read mode) revalidate the whole read set
  against current versions; writes are buffered; the response step commits:
  validate, install the write set with bumped versions under one global
  commit timestamp.  Conflicts abort the operation, which may be restarted.
  ``validation="commit-only"`` skips per-read validation; it exists to
  demonstrate (via the checkers) that doomed reads violate safe-strictness.

* ``unsync`` - no synchronization at all: the raw sequential code sharing
  the store.  Its interleavings define the schedule universe.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

from .model import (ABORT, ABORTED, COMPLETE, Event, INCOMPLETE, OI, OR, RI,
                    RR, WI, WR, OperationInstance)
from .seqspec import (DagState, Gop, NodeRec, Operation, SearchStructureDef,
                      UpdatePlan)

IMPLS = ("hoh", "stm", "stm-commit-only", "unsync")

FREE, SHARED, EXCLUSIVE = "free", "shared", "exclusive"


class LockManager:
    """Per-element reader/writer locks with FIFO wait queues.

    A request succeeds only when compatible with the current holders and
    no earlier waiter is still queued (no barging), which is the
    starvation-freedom surrogate the pessimistic class assumes.
    """

    def __init__(self):
        self.shared: dict[int, set[int]] = {}
        self.exclusive: dict[int, int] = {}
        self.queues: dict[int, deque[int]] = {}

    def held_mode(self, nid: int, holder: int) -> str:
        if self.exclusive.get(nid) == holder:
            return EXCLUSIVE
        if holder in self.shared.get(nid, ()):
            return SHARED
        return FREE

    def _compatible(self, nid: int, mode: str, holder: int) -> bool:
        exc = self.exclusive.get(nid)
        if exc is not None and exc != holder:
            return False
        if mode == SHARED:
            return True
        readers = self.shared.get(nid, set()) - {holder}
        return not readers

    def try_acquire(self, nid: int, mode: str, holder: int) -> bool:
        held = self.held_mode(nid, holder)
        if held == EXCLUSIVE or (held == SHARED and mode == SHARED):
            return True
        queue = self.queues.setdefault(nid, deque())
        if (queue and queue[0] != holder) or not self._compatible(nid, mode, holder):
            if holder not in queue:
                queue.append(holder)
            return False
        if queue and queue[0] == holder:
            queue.popleft()
        if mode == EXCLUSIVE:
            if held == SHARED:
                self.shared[nid].discard(holder)
            self.exclusive[nid] = holder
        else:
            self.shared.setdefault(nid, set()).add(holder)
        return True

    def acquire_all(self, nids: list[int], mode: str, holder: int) -> int | None:
        """All-or-nothing; returns the blocking nid on failure."""
        got = []
        for nid in nids:
            pre = self.held_mode(nid, holder)
            if self.try_acquire(nid, mode, holder):
                if pre == FREE:
                    got.append(nid)
            else:
                for g in reversed(got):
                    self.release(g, holder)
                return nid
        return None

    def release(self, nid: int, holder: int) -> None:
        if self.exclusive.get(nid) == holder:
            del self.exclusive[nid]
        self.shared.get(nid, set()).discard(holder)

    def release_holder(self, holder: int) -> None:
        for nid in list(self.exclusive):
            if self.exclusive[nid] == holder:
                del self.exclusive[nid]
        for readers in self.shared.values():
            readers.discard(holder)
        for q in self.queues.values():
            try:
                q.remove(holder)
            except ValueError:
                pass

    def audit(self) -> None:
        for nid, holder in self.exclusive.items():
            readers = self.shared.get(nid, set()) - {holder}
            assert not readers, f"shared and exclusive coexist on n{nid}"

    def clone(self) -> LockManager:
        lm = LockManager()
        lm.shared = {n: set(s) for n, s in self.shared.items() if s}
        lm.exclusive = dict(self.exclusive)
        lm.queues = {n: deque(q) for n, q in self.queues.items() if q}
        return lm


class VersionStore:
    """Committed version counters per element plus a global commit clock."""

    def __init__(self):
        self.versions: dict[int, int] = {}
        self.commit_clock = 0

    def current(self, nid: int) -> int:
        return self.versions.get(nid, 0)

    def bump(self, nids) -> int:
        self.commit_clock += 1
        for nid in nids:
            self.versions[nid] = self.versions.get(nid, 0) + 1
        return self.commit_clock

    def clone(self) -> VersionStore:
        vs = VersionStore()
        vs.versions = dict(self.versions)
        vs.commit_clock = self.commit_clock
        return vs


@dataclass
class World:
    """The shared substrate one driver owns: store, locks, versions, and
    the execution record."""

    state: DagState
    locks: LockManager = field(default_factory=LockManager)
    versions: VersionStore = field(default_factory=VersionStore)
    events: list[Event] = field(default_factory=list)
    ops: dict[int, OperationInstance] = field(default_factory=dict)
    seq: int = 0

    def emit(self, proc, op, kind, elem=None, value=None, nid=None, attempt=0):
        ev = Event(self.seq, proc, op, kind, elem, value, nid, attempt)
        self.events.append(ev)
        self.seq += 1
        return ev

    def role(self, nid: int) -> str:
        return self.state.role_of(nid)

    def clone(self) -> World:
        return World(self.state.clone(), self.locks.clone(), self.versions.clone(),
                     list(self.events),
                     {i: replace(o) for i, o in self.ops.items()}, self.seq)


@dataclass(frozen=True)
class StepOutcome:
    kind: str  # progressed | blocked | aborted | finished
    events: tuple[Event, ...] = ()
    blocked_on: int | None = None
    reason: str | None = None
    response: object = None

    @property
    def invoke_event(self) -> Event | None:
        for e in self.events:
            if e.kind in (OI, RI, WI, OR):
                return e
        return None


PROGRESSED, BLOCKED, ABORT_OUT, FINISHED = "progressed", "blocked", "aborted", "finished"


class StepMachine:
    """A suspended operation: one visible event per step() call."""

    def __init__(self, def_: SearchStructureDef, op: OperationInstance, attempt: int = 0):
        self.def_ = def_
        self.op = op
        self.operation = Operation(op.name, op.key, op.val)
        self.attempt = attempt
        self.invoked = False
        self.finished = False
        self.gop = Gop()
        self.plan: UpdatePlan | None = None
        self.write_idx = 0

    # -- drive interface ---------------------------------------------------

    def step(self, world: World) -> StepOutcome:
        if self.finished:
            raise RuntimeError(f"step on finished op {self.op.id}")
        if not self.invoked:
            return self._invoke(world)
        if self.plan is None:
            nxt = self.def_.tau(self.operation, self.gop, world.state.root)
            if nxt is not None:
                return self._read(world, nxt)
            self.plan = self.def_.plan_update(self.operation, self.gop, world.state)
        if self.write_idx < len(self.plan.writes):
            return self._write(world)
        return self._respond(world)

    # -- shared pieces -----------------------------------------------------

    def _emit_oi(self, world) -> Event:
        return world.emit(self.op.proc, self.op.id, OI,
                          value=[self.op.name, self.op.key], attempt=self.attempt)

    def _emit_read(self, world, nid, snap) -> tuple[Event, Event]:
        role = world.role(nid)
        a = world.emit(self.op.proc, self.op.id, RI, elem=role, nid=nid,
                       attempt=self.attempt)
        b = world.emit(self.op.proc, self.op.id, RR, elem=role, value=snap,
                       nid=nid, attempt=self.attempt)
        return a, b

    def _emit_write(self, world, nid, patch) -> tuple[Event, Event]:
        role = world.role(nid)
        patch_json = {lab: (f"n{t}" if t is not None else None)
                      for lab, t in patch.items()}
        a = world.emit(self.op.proc, self.op.id, WI, elem=role,
                       value={"edges": patch_json}, nid=nid, attempt=self.attempt)
        b = world.emit(self.op.proc, self.op.id, WR, elem=role, value="ok",
                       nid=nid, attempt=self.attempt)
        return a, b

    def _finish(self, world, events) -> StepOutcome:
        resp = self.plan.response
        ev = world.emit(self.op.proc, self.op.id, OR, value=resp, attempt=self.attempt)
        self.op.status, self.op.response = COMPLETE, resp
        self.finished = True
        return StepOutcome(FINISHED, tuple(events) + (ev,), response=resp)

    def _apply_unlink(self, world):
        for nid in self.plan.unlink:
            world.state.nodes[nid].alive = False

    def write_targets(self) -> list[int]:
        return [nid for nid, _ in self.plan.writes]

    def clone(self, ops: dict[int, OperationInstance]) -> StepMachine:
        m = type(self).__new__(type(self))
        m.__dict__.update(self.__dict__)
        m.op = ops[self.op.id]
        m.gop = self.gop.clone()
        if self.plan is not None:
            m.plan = UpdatePlan(self.plan.response, list(self.plan.writes),
                                list(self.plan.new_nodes), list(self.plan.unlink))
        m._clone_extra()
        return m

    def _clone_extra(self):
        pass


class UnsyncMachine(StepMachine):
    """The raw sequential code on the shared store: no locks, no versions,
    never blocks, never aborts.  Defines the schedule universe."""

    def _invoke(self, world):
        self.invoked = True
        return StepOutcome(PROGRESSED, (self._emit_oi(world),))

    def _read(self, world, nid):
        rec = world.state.read(nid)
        self.gop.visit(rec)
        return StepOutcome(PROGRESSED, self._emit_read(world, nid, rec.snap()))

    def _write(self, world):
        nid, patch = self.plan.writes[self.write_idx]
        world.state.write_edges(nid, patch)
        world.versions.bump([nid])
        self.write_idx += 1
        evs = self._emit_write(world, nid, patch)
        if self.write_idx == len(self.plan.writes):
            self._apply_unlink(world)
        return StepOutcome(PROGRESSED, evs)

    def _respond(self, world):
        return self._finish(world, ())


class HohMachine(StepMachine):
    """Hand-over-hand pessimistic wrapper (class P: never aborts)."""

    def __init__(self, def_, op, attempt=0):
        super().__init__(def_, op, attempt)
        self.is_update = op.name in ("insert", "delete")
        self.held_shared: int | None = None
        self.write_locked: list[int] = []

    def _holder(self) -> int:
        return self.op.id

    def _invoke(self, world):
        root = world.state.root
        mode = EXCLUSIVE if self.is_update else SHARED
        if not world.locks.try_acquire(root, mode, self._holder()):
            return StepOutcome(BLOCKED, blocked_on=root)
        self.invoked = True
        if not self.is_update:
            self.held_shared = root
        return StepOutcome(PROGRESSED, (self._emit_oi(world),))

    def _read(self, world, nid):
        if not self.is_update and nid != self.held_shared:
            # hand-over-hand: take the next node before letting go of the
            # last one, so the chain is never lock-free
            if not world.locks.try_acquire(nid, SHARED, self._holder()):
                return StepOutcome(BLOCKED, blocked_on=nid)
            if self.held_shared is not None:
                world.locks.release(self.held_shared, self._holder())
            self.held_shared = nid
        rec = world.state.read(nid)
        self.gop.visit(rec)
        return StepOutcome(PROGRESSED, self._emit_read(world, nid, rec.snap()))

    def _write(self, world):
        if self.write_idx == 0:
            blocked = world.locks.acquire_all(self.write_targets(), EXCLUSIVE,
                                              self._holder())
            if blocked is not None:
                return StepOutcome(BLOCKED, blocked_on=blocked)
            self.write_locked = self.write_targets()
        nid, patch = self.plan.writes[self.write_idx]
        world.state.write_edges(nid, patch)
        world.versions.bump([nid])
        self.write_idx += 1
        evs = self._emit_write(world, nid, patch)
        if self.write_idx == len(self.plan.writes):
            self._apply_unlink(world)
        return StepOutcome(PROGRESSED, evs)

    def _respond(self, world):
        holder = self._holder()
        for nid in reversed(self.write_locked):
            if nid != world.state.root:
                world.locks.release(nid, holder)
        if self.is_update:
            world.locks.release(world.state.root, holder)
        elif self.held_shared is not None:
            world.locks.release(self.held_shared, holder)
        return self._finish(world, ())

    def _clone_extra(self):
        self.write_locked = list(self.write_locked)


class StmMachine(StepMachine):
    """Lazy version-clock STM wrapper (class SM: never blocks)."""

    def __init__(self, def_, op, attempt=0, commit_only=False):
        super().__init__(def_, op, attempt)
        self.commit_only = commit_only
        self.read_set: dict[int, int] = {}
        self.write_set: dict[int, dict] = {}

    def _invoke(self, world):
        self.invoked = True
        return StepOutcome(PROGRESSED, (self._emit_oi(world),))

    def _conflict(self, world) -> int | None:
        for nid, ver in self.read_set.items():
            if world.versions.current(nid) > ver:
                return nid
        return None

    def _abort(self, world, nid, events) -> StepOutcome:
        role = world.role(nid)
        evs = list(events)
        evs.append(world.emit(self.op.proc, self.op.id, RR, elem=role, value=ABORT,
                              nid=nid, attempt=self.attempt))
        evs.append(world.emit(self.op.proc, self.op.id, OR, value=ABORT,
                              attempt=self.attempt))
        self.op.status = ABORTED
        self.finished = True
        for new in (self.plan.new_nodes if self.plan else ()):
            world.state.nodes[new].alive = False
        return StepOutcome(ABORT_OUT, tuple(evs), reason=f"conflict on {role}")

    def _read(self, world, nid):
        rec = world.state.read(nid)
        snap = rec.snap()
        if nid in self.write_set:  # read-own-writes from the buffer
            patched = dict(snap["edges"])
            patched.update({lab: (f"n{t}" if t is not None else None)
                            for lab, t in self.write_set[nid].items()})
            snap = {**snap, "edges": patched}
        self.read_set.setdefault(nid, world.versions.current(nid))
        role = world.role(nid)
        ri = world.emit(self.op.proc, self.op.id, RI, elem=role, nid=nid,
                        attempt=self.attempt)
        if not self.commit_only:
            conflict = self._conflict(world)
            if conflict is not None:
                return self._abort(world, nid, (ri,))
        rr = world.emit(self.op.proc, self.op.id, RR, elem=role, value=snap,
                        nid=nid, attempt=self.attempt)
        # the sequential code sees the committed record overlaid with the
        # operation's own buffered writes
        view_edges = dict(rec.edges)
        view_edges.update(self.write_set.get(nid, {}))
        self.gop.visit(NodeRec(nid, rec.key, rec.val, view_edges, rec.alive))
        return StepOutcome(PROGRESSED, (ri, rr))

    def _write(self, world):
        nid, patch = self.plan.writes[self.write_idx]
        self.write_set.setdefault(nid, {}).update(patch)
        self.write_idx += 1
        return StepOutcome(PROGRESSED, self._emit_write(world, nid, patch))

    def _respond(self, world):
        conflict = self._conflict(world)
        if conflict is not None:
            # validation failure surfaces as one last aborted read
            role = world.role(conflict)
            ri = world.emit(self.op.proc, self.op.id, RI, elem=role, nid=conflict,
                            attempt=self.attempt)
            return self._abort(world, conflict, (ri,))
        if self.write_set:
            for nid, patch in self.write_set.items():
                world.state.write_edges(nid, patch)
            world.versions.bump(sorted(self.write_set))
            self._apply_unlink(world)
        return self._finish(world, ())

    def _clone_extra(self):
        self.read_set = dict(self.read_set)
        self.write_set = {n: dict(p) for n, p in self.write_set.items()}


def make_machine(impl: str, def_: SearchStructureDef,
                 op: OperationInstance, attempt: int = 0) -> StepMachine:
    if impl == "hoh":
        return HohMachine(def_, op, attempt)
    if impl == "stm":
        return StmMachine(def_, op, attempt)
    if impl == "stm-commit-only":
        return StmMachine(def_, op, attempt, commit_only=True)
    if impl == "unsync":
        return UnsyncMachine(def_, op, attempt)
    raise ValueError(f"unknown implementation {impl!r}")


def restart(machine: StepMachine) -> StepMachine:
    """Fresh machine for the same operation instance, next attempt id."""
    if machine.op.status != ABORTED:
        raise ValueError("restart requires an aborted machine")
    machine.op.status = INCOMPLETE
    machine.op.response = None
    impl = {HohMachine: "hoh", UnsyncMachine: "unsync"}.get(type(machine))
    if impl is None:
        impl = "stm-commit-only" if machine.commit_only else "stm"
    return make_machine(impl, machine.def_, machine.op, machine.attempt + 1)
