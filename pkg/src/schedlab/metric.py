"""Accepted-schedule sets, the LSL-schedule oracle, and comparisons.

The concurrency of an implementation on a workload is the set of schedules
it accepts.  The correctness oracle is the set of LSL schedules: a schedule
belongs to it when the history obtained by replaying it with legal reads
(the unsynchronized machines), extended with one sequential find per
workload key, is LS-linearizable.  The audit extension operationalizes the
observation that a lost update is only visible to later operations: without
it, a schedule that silently drops a key would still have a locally
consistent exporting history.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import History, OperationInstance, Schedule
from .scheduler import Workload, build_world, drive, universe
from .checkers import check_ls_linearizable
from .seqspec import Operation
from .sync import FINISHED, PROGRESSED, make_machine


@dataclass
class ScheduleSet:
    impl: str
    fingerprint: str
    digests: frozenset[str]
    representatives: dict[str, Schedule]
    total: int
    partial: bool = False
    inconclusive: frozenset[str] = frozenset()

    def __contains__(self, schedule: Schedule) -> bool:
        return schedule.digest() in self.digests


@dataclass
class ComparisonVerdict:
    relation: str  # equal | left-strictly-more | right-strictly-more | incomparable
    left_only: list[Schedule] = field(default_factory=list)
    right_only: list[Schedule] = field(default_factory=list)


def workload_keys(w: Workload) -> tuple[int, ...]:
    keys = {o.key for o in w.setup} | {o.key for _, o in w.concurrent}
    return tuple(sorted(keys))


def accepted_set(impl: str, w: Workload, budget: int = 20000,
                 extras: list[Schedule] = ()) -> ScheduleSet:
    """Accepted schedules over the enumerated universe plus any explicitly
    supplied schedules (for workloads whose full universe is infeasible)."""
    scheds, truncated = universe(w, budget)
    digests, reps, seen = set(), {}, set()
    for s in list(scheds) + list(extras):
        d = s.digest()
        if d in seen:
            continue
        seen.add(d)
        if drive(impl, w, s).accepted:
            digests.add(d)
            reps[d] = s
    return ScheduleSet(impl, w.fingerprint(), frozenset(digests), reps,
                       len(seen), truncated)


def audited_history(w: Workload, schedule: Schedule) -> History:
    """Legal replay of the schedule plus the sequential audit finds."""
    world, machines, start = build_world("unsync", w)
    initial = world.state.snapshot()
    for slot in schedule.slots:
        machines[slot.proc].step(world)
    assert all(m.finished for m in machines.values()), \
        "universe schedules always complete under unsync"
    next_id = max(world.ops) + 1
    next_proc = max(p for p, _ in w.concurrent) + 1
    for key in workload_keys(w):
        inst = OperationInstance(id=next_id, proc=next_proc, name="find", key=key)
        world.ops[next_id] = inst
        m = make_machine("unsync", w.structure, inst)
        while not m.finished:
            out = m.step(world)
            assert out.kind in (PROGRESSED, FINISHED)
        next_id += 1
        next_proc += 1
    events = world.events[start:]
    ops = {i: o for i, o in world.ops.items() if any(e.op == i for e in events)}
    return History(list(events), ops, initial, w.structure.name)


def lsl_set(w: Workload, budget: int = 20000, max_ops: int | None = None,
            state_cap: int = 4000, extras: list[Schedule] = ()) -> ScheduleSet:
    """Schedules with an LS-linearizable exporting history (audited)."""
    scheds, truncated = universe(w, budget)
    scheds = list(scheds) + list(extras)
    keys = workload_keys(w)
    max_ops = max_ops if max_ops is not None else len(keys) + 1
    digests, reps, inconclusive = set(), {}, set()
    seen = set()
    for s in scheds:
        d = s.digest()
        if d in seen:
            continue
        seen.add(d)
        hist = audited_history(w, s)
        res = check_ls_linearizable(hist, w.structure, keys, max_ops, state_cap)
        if res.verdict is True:
            digests.add(d)
            reps[d] = s
        elif res.verdict is None:
            inconclusive.add(d)
    return ScheduleSet("lsl", w.fingerprint(), frozenset(digests), reps,
                       len(seen), truncated, frozenset(inconclusive))


def compare(a: ScheduleSet, b: ScheduleSet, max_witnesses: int = 3) -> ComparisonVerdict:
    if a.fingerprint != b.fingerprint:
        raise ValueError("schedule sets come from different workloads")
    left = sorted(a.digests - b.digests)
    right = sorted(b.digests - a.digests)
    if not left and not right:
        rel = "equal"
    elif left and not right:
        rel = "left-strictly-more"
    elif right and not left:
        rel = "right-strictly-more"
    else:
        rel = "incomparable"
    return ComparisonVerdict(rel,
                             [a.representatives[d] for d in left[:max_witnesses]],
                             [b.representatives[d] for d in right[:max_witnesses]])


def verify_witness(impl_in: str, impl_out: str, w: Workload,
                   schedule: Schedule) -> bool:
    """Re-drive a comparison witness: accepted by one side, not the other."""
    return (drive(impl_in, w, schedule).accepted
            and not drive(impl_out, w, schedule).accepted)


@dataclass
class OptimalityGap:
    impl: str
    accepted: int
    lsl: int
    ratio: float
    missing: list[Schedule]
    inconclusive: int = 0


def optimality_gap(impl: str, w: Workload, budget: int = 20000,
                   max_witnesses: int = 3,
                   extras: list[Schedule] = ()) -> OptimalityGap:
    acc = accepted_set(impl, w, budget, extras)
    oracle = lsl_set(w, budget, extras=extras)
    usable = oracle.digests  # inconclusive schedules are excluded, ratio is a lower bound
    inter = acc.digests & usable
    missing = sorted(usable - acc.digests)
    ratio = (len(inter) / len(usable)) if usable else 1.0
    return OptimalityGap(impl, len(acc.digests), len(usable), ratio,
                         [oracle.representatives[d] for d in missing[:max_witnesses]],
                         len(oracle.inconclusive))


@dataclass
class IncomparabilityReport:
    verdict: str
    w1_relation: str
    sigma_verified: bool   # stm accepts, hoh rejects, on w1
    sigma0_verified: bool  # hoh accepts, stm rejects, on w2
    sigma: Schedule | None
    sigma0: Schedule | None


def incomparability(w1: Workload, sigma: Schedule, w2: Workload,
                    sigma0: Schedule, budget: int = 20000) -> IncomparabilityReport:
    """The headline result: the two techniques accept incomparable schedule
    sets.  w1 is the identical-insert family (enumerated in full and
    compared set-to-set), w2 the find/delete/delete family, whose universe
    is far beyond enumeration - its witness is re-driven directly."""
    hoh1 = accepted_set("hoh", w1, budget, extras=[sigma])
    stm1 = accepted_set("stm", w1, budget, extras=[sigma])
    c1 = compare(stm1, hoh1)
    sigma_ok = sigma.digest() in stm1.digests and sigma.digest() not in hoh1.digests \
        and verify_witness("stm", "hoh", w1, sigma)
    sigma0_ok = verify_witness("hoh", "stm", w2, sigma0)
    verdict = "incomparable" if (sigma_ok and sigma0_ok) else "comparable"
    return IncomparabilityReport(verdict, c1.relation, sigma_ok, sigma0_ok,
                                 sigma, sigma0)
