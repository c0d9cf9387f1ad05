"""Drive/enumerate/free-run behavior: determinism, acceptance soundness,
rejection reasons, and enumeration counts."""

import math

import pytest

from schedlab.model import OI, RI, Schedule, Slot, complete, schedule_of
from schedlab.scheduler import (LivelockError, MalformedScheduleError,
                                Workload, drive, enumerate_schedules,
                                free_run, universe)
from schedlab.seqspec import Operation, make_structure


def test_drive_is_deterministic(fig3_case):
    w, s = fig3_case
    r1, r2 = drive("hoh", w, s), drive("hoh", w, s)
    assert r1.verdict == r2.verdict
    assert r1.history.render_json() == r2.history.render_json()


def test_accepted_history_exports_the_schedule(fig2a_case):
    w, s = fig2a_case
    r = drive("stm", w, s)
    assert r.accepted
    assert schedule_of(complete(r.history).exported()) == s


def test_order_mismatch_rejects(fig2a_case):
    w, s = fig2a_case
    slots = list(s.slots)
    slots[4], slots[5] = slots[5], slots[4]  # p2 asked to read p1's next node
    bad = Schedule(tuple(slots))
    r = drive("stm", w, bad)
    if not r.accepted:
        assert r.reason in ("order-mismatch", "aborted")
    # a slot naming the wrong element is always an order mismatch
    slots = list(s.slots)
    slots[1] = Slot(1, RI, elem="key:3")
    r = drive("stm", w, Schedule(tuple(slots)))
    assert r.reason == "order-mismatch" and r.failing_slot == 1


def test_slot_for_finished_operation_is_malformed(fig2a_case):
    w, s = fig2a_case
    extended = Schedule(tuple(list(s.slots) + [Slot(1, RI, elem="root")]))
    with pytest.raises(MalformedScheduleError):
        drive("stm", w, extended)


def test_incomplete_schedule_is_malformed(fig2a_case):
    w, s = fig2a_case
    with pytest.raises(MalformedScheduleError):
        drive("stm", w, Schedule(s.slots[:5]))


def test_unknown_process_is_malformed(fig2a_case):
    w, s = fig2a_case
    with pytest.raises(MalformedScheduleError):
        drive("stm", w, Schedule((Slot(9, OI, op_name="insert", key=1),)))


def test_single_op_universe(structure):
    w = Workload(structure, [Operation("insert", 1)], [(1, Operation("find", 1))])
    scheds, truncated = universe(w)
    assert len(scheds) == 1 and not truncated
    for impl in ("hoh", "stm"):
        rep = enumerate_schedules(impl, w)
        assert rep.total == 1 and len(rep.accepted) == 1


def test_enumeration_count_matches_multinomial():
    # two finds on the empty bst: 3 slots each, no conflicts
    d = make_structure("bst")
    w = Workload(d, [], [(1, Operation("find", 1)), (2, Operation("find", 2))])
    scheds, _ = universe(w)
    assert len(scheds) == math.comb(6, 3) == 20
    rep = enumerate_schedules("stm", w)
    assert rep.total == 20 and len(rep.accepted) == 20
    assert math.comb(5, 2) == 10  # the closed form quoted for 2+3 steps


def test_enumeration_count_uneven_ops():
    d = make_structure("bst")
    w = Workload(d, [Operation("insert", 1)],
                 [(1, Operation("find", 1)), (2, Operation("find", 2))])
    scheds, _ = universe(w)
    # find(1): oi, R(root), R(X1), or; find(2): oi, R(root), R(X1), or
    per_op = {}
    for sl in scheds[0].slots:
        per_op[sl.proc] = per_op.get(sl.proc, 0) + 1
    n, k = sum(per_op.values()), min(per_op.values())
    assert len(scheds) == math.comb(n, k)


def test_universe_is_deterministic(fig2a_case):
    w, _ = fig2a_case
    a, _ = universe(w)
    b, _ = universe(w)
    assert [s.digest() for s in a] == [s.digest() for s in b]


def test_universe_budget_truncates(fig2a_case):
    w, _ = fig2a_case
    scheds, truncated = universe(w, budget=10)
    assert truncated and len(scheds) == 10


def test_monotone_rejection_by_sampling(fig2a_case):
    """A blocked prefix dooms every extension: re-drive the rejected
    schedule with shuffled suffixes."""
    w, s = fig2a_case
    r = drive("hoh", w, s)
    assert r.reason == "blocked" and r.failing_slot == 2
    prefix = list(s.slots[:3])
    suffix = list(s.slots[3:])
    for rot in range(1, 4):
        rotated = suffix[rot:] + suffix[:rot]
        try:
            out = drive("hoh", w, Schedule(tuple(prefix + rotated)))
        except MalformedScheduleError:
            continue
        assert not out.accepted
        assert out.failing_slot <= 2 or out.reason in ("blocked", "order-mismatch")


def test_free_run_empty_concurrent(structure):
    w = Workload(structure, [Operation("insert", 1), Operation("find", 1)], [])
    h = free_run("hoh", w, seed=0)
    assert [o.describe() for o in h.ops.values()] == ["insert(1)", "find(1)"]
    assert all(o.proc == 0 for o in h.ops.values())


def test_free_run_deterministic_per_seed(fig3_case):
    w, _ = fig3_case
    a = free_run("stm", w, seed=42)
    b = free_run("stm", w, seed=42)
    assert a.render_json() == b.render_json()


def test_free_run_restart_budget():
    # round-robin forces the two identical inserts to interleave, so the
    # second commit always conflicts; with no restart budget that is fatal
    d = make_structure("sorted-list")
    w = Workload(d, [], [(1, Operation("insert", 1)), (2, Operation("insert", 1))])
    with pytest.raises(LivelockError):
        free_run("stm", w, max_restarts=0, round_robin=True)
    h = free_run("stm", w, max_restarts=5, round_robin=True)
    assert sorted(o.response for o in h.ops.values()) == [False, True]
