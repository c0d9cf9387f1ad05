"""Deterministic drivers for step machines: acceptance-test a given
schedule, enumerate every interleaving of a workload, or run it free with
restarts.

A workload is a structure plus a sequential setup (run to completion before
anything concurrent starts; the post-setup store is the initial snapshot of
every driven history) and the concurrent operations, one process each.

``drive`` replays one schedule slot list; a slot either progresses with
exactly the named event or the schedule is rejected at that slot index
(blocked / aborted / order-mismatch).  ``enumerate_schedules`` walks the
full schedule universe - all interleavings of the unsynchronized machines'
steps - and classifies each schedule by re-driving it under the chosen
implementation.  ``free_run`` is the liveness mode: random scheduling,
blocked machines retried, aborted machines restarted.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field

from .model import (OI, RI, WI, Event, History, OperationInstance,
                    Schedule, Slot, complete, schedule_of)
from .seqspec import Operation, SearchStructureDef
from .sync import (ABORT_OUT, BLOCKED, FINISHED, PROGRESSED, StepMachine,
                   World, make_machine, restart)


class MalformedScheduleError(ValueError):
    """The schedule is not a valid input for this workload."""


@dataclass
class Workload:
    structure: SearchStructureDef
    setup: list[Operation]
    concurrent: list[tuple[int, Operation]]  # (process id, operation)

    def __post_init__(self):
        procs = [p for p, _ in self.concurrent]
        if len(set(procs)) != len(procs):
            raise ValueError("concurrent processes must be distinct")
        if 0 in procs:
            raise ValueError("process 0 is reserved for the setup")

    def fingerprint(self) -> str:
        blob = json.dumps([list(self.structure.fingerprint()),
                           [(o.name, o.key) for o in self.setup],
                           [(p, o.name, o.key) for p, o in self.concurrent]],
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class DriveResult:
    verdict: str  # accepted | rejected
    history: History
    reason: str | None = None  # blocked | aborted | order-mismatch
    failing_slot: int | None = None
    responses: dict[int, object] = field(default_factory=dict)

    @property
    def accepted(self) -> bool:
        return self.verdict == "accepted"


@dataclass
class ExplorationReport:
    impl: str
    fingerprint: str
    total: int
    verdicts: dict[str, str]  # schedule digest -> accepted | rejected:<reason>
    representatives: dict[str, Schedule]
    partial: bool = False

    @property
    def accepted(self) -> set[str]:
        return {d for d, v in self.verdicts.items() if v == "accepted"}


def _spawn(impl: str, w: Workload, world: World) -> dict[int, StepMachine]:
    machines = {}
    next_id = max(world.ops, default=-1) + 1
    for proc, op in w.concurrent:
        inst = OperationInstance(id=next_id, proc=proc, name=op.name,
                                 key=op.key, val=op.val)
        world.ops[next_id] = inst
        machines[proc] = make_machine(impl, w.structure, inst)
        next_id += 1
    return machines


def build_world(impl: str, w: Workload) -> tuple[World, dict[int, StepMachine], int]:
    """Run the setup sequentially, snapshot the store, spawn the machines.

    Returns (world, machines by process, index of the first concurrent
    event)."""
    world = World(w.structure.new_state())
    for i, op in enumerate(w.setup):
        inst = OperationInstance(id=i, proc=0, name=op.name, key=op.key, val=op.val)
        world.ops[inst.id] = inst
        m = make_machine("unsync", w.structure, inst)
        while not m.finished:
            out = m.step(world)
            assert out.kind in (PROGRESSED, FINISHED)
    w.structure.audit(world.state)
    return world, _spawn(impl, w, world), len(world.events)


def _concurrent_history(world: World, w: Workload, start: int,
                        initial: dict) -> History:
    events = world.events[start:]
    ops = {i: o for i, o in world.ops.items()
           if any(e.op == i for e in events)}
    return History(list(events), ops, initial, w.structure.name)


def _fork(world: World, machines: dict[int, StepMachine]):
    w2 = world.clone()
    m2 = {p: m.clone(w2.ops) for p, m in machines.items()}
    return w2, m2


def _slot_matches(slot: Slot, ev: Event) -> bool:
    if slot.kind != ev.kind:
        return False
    if slot.kind == OI:
        return slot.op_name == ev.value[0] and slot.key == ev.value[1]
    if slot.kind in (RI, WI):
        return slot.elem == ev.elem
    return True  # or: bare response point


def drive(impl: str, w: Workload, schedule: Schedule) -> DriveResult:
    """Give the named process's machine one step per slot; accept iff every
    slot progresses with the named event and all operations complete."""
    world, machines, start = build_world(impl, w)
    initial = world.state.snapshot()
    known = {p for p, _ in w.concurrent}
    for slot in schedule.slots:
        if slot.proc not in known:
            raise MalformedScheduleError(f"slot for unknown process {slot.proc}")

    def result(verdict, reason=None, idx=None):
        hist = _concurrent_history(world, w, start, initial)
        responses = {i: o.response for i, o in hist.ops.items() if o.is_complete()}
        return DriveResult(verdict, hist, reason, idx, responses)

    for idx, slot in enumerate(schedule.slots):
        m = machines[slot.proc]
        if m.finished:
            raise MalformedScheduleError(
                f"slot {idx} addresses finished operation of process {slot.proc}")
        out = m.step(world)
        if out.kind == BLOCKED:
            return result("rejected", "blocked", idx)
        if out.kind == ABORT_OUT:
            return result("rejected", "aborted", idx)
        ev = out.invoke_event
        if ev is None or not _slot_matches(slot, ev):
            return result("rejected", "order-mismatch", idx)
    if not all(m.finished for m in machines.values()):
        raise MalformedScheduleError("schedule leaves operations incomplete")
    res = result("accepted")
    exported = schedule_of(complete(res.history).exported())
    assert exported == schedule, "accepted history does not export the schedule"
    return res


def universe(w: Workload, budget: int = 20000) -> tuple[list[Schedule], bool]:
    """Every schedule of the workload: all interleavings of the
    unsynchronized machines' next-step choices, DFS in process order.

    Returns (schedules, truncated?).  Deterministic."""
    world, machines, start = build_world("unsync", w)
    out: list[Schedule] = []
    truncated = False

    def rec(world, machines):
        nonlocal truncated
        if truncated:
            return
        live = sorted(p for p, m in machines.items() if not m.finished)
        if not live:
            hist = History(world.events[start:],
                           {i: o for i, o in world.ops.items()}, {},
                           w.structure.name)
            out.append(schedule_of(hist))
            if len(out) >= budget:
                truncated = True
            return
        for proc in live:
            w2, m2 = _fork(world, machines)
            step = m2[proc].step(w2)
            assert step.kind in (PROGRESSED, FINISHED), \
                "unsync machines always progress"
            rec(w2, m2)

    rec(world, machines)
    return out, truncated


def enumerate_schedules(impl: str, w: Workload, budget: int = 20000) -> ExplorationReport:
    """Classify every schedule in the universe by re-driving it."""
    scheds, truncated = universe(w, budget)
    verdicts: dict[str, str] = {}
    reps: dict[str, Schedule] = {}
    for s in scheds:
        d = s.digest()
        if d in verdicts:
            continue
        reps[d] = s
        res = drive(impl, w, s)
        verdicts[d] = "accepted" if res.accepted else f"rejected:{res.reason}"
    return ExplorationReport(impl, w.fingerprint(), len(verdicts), verdicts,
                             reps, truncated)


class LivelockError(RuntimeError):
    pass


def free_run(impl: str, w: Workload, seed: int = 0, max_restarts: int = 100,
             max_steps: int = 100000, round_robin: bool = False) -> History:
    """Random (or round-robin) scheduler: blocked machines are retried
    later, aborted machines are restarted.  Returns the full history
    (setup included); aborted attempts' events are excluded from the
    exported view per the history model."""
    world = World(w.structure.new_state())
    initial = world.state.snapshot()
    for i, op in enumerate(w.setup):
        inst = OperationInstance(id=i, proc=0, name=op.name, key=op.key, val=op.val)
        world.ops[inst.id] = inst
        m = make_machine("unsync", w.structure, inst)
        while not m.finished:
            m.step(world)
    machines = _spawn(impl, w, world)
    rng = random.Random(seed)
    restarts = 0
    steps = 0
    rr_next = 0
    while True:
        live = sorted(p for p, m in machines.items() if not m.finished)
        if not live:
            break
        if round_robin:
            proc = live[rr_next % len(live)]
            rr_next += 1
        else:
            proc = rng.choice(live)
        out = machines[proc].step(world)
        steps += 1
        if steps > max_steps:
            raise LivelockError(f"no progress after {max_steps} steps")
        if out.kind == BLOCKED:
            blocked_everywhere = all(
                machines[p].finished or _peek_blocked(world, machines, p)
                for p in machines)
            if blocked_everywhere:
                raise LivelockError("all machines blocked: deadlock")
            continue
        if out.kind == ABORT_OUT:
            restarts += 1
            if restarts > max_restarts:
                raise LivelockError(f"restart budget {max_restarts} exhausted")
            machines[proc] = restart(machines[proc])
    hist = History(list(world.events), dict(world.ops), initial, w.structure.name)
    return hist


def _peek_blocked(world: World, machines: dict[int, StepMachine], proc: int) -> bool:
    m = machines[proc]
    if m.finished:
        return False
    w2, m2 = _fork(world, machines)
    return m2[proc].step(w2).kind == BLOCKED
