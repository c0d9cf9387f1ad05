"""Execution records: events, histories, high-level views, and schedules.

Everything downstream runs on one totally ordered sequence of events: the
invocations and responses of high-level dictionary operations and of the
node reads/writes they perform.  A History is that record plus the registry
of operation instances and a snapshot of the node store at its start.  A
Schedule is the same record with read values and responses erased - the
equivalence-class representative used by the acceptance machinery and the
concurrency metric.

Reads and writes execute atomically in this toolchain, so an invocation
event is always immediately followed by its response event; schedules
therefore carry one slot per read/write (the invocation) plus op-invoke
slots and op-response points.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

# Event kinds (also the wire tags of the JSON fixture format).
OI, OR, RI, RR, WI, WR = "oi", "or", "ri", "rr", "wi", "wr"
INVOKE_KINDS = frozenset((OI, RI, WI))
RESPONSE_KINDS = frozenset((OR, RR, WR))

# Abort mark returned by a failed optimistic read/write; serialized as-is.
ABORT = "⊥"

INCOMPLETE = "incomplete"
COMPLETE = "complete"
ABORTED = "aborted"


@dataclass(frozen=True)
class Event:
    """One point of an execution.

    `elem` is the symbolic role of the touched node ("root", "tail",
    "key:<k>"); `nid` is the concrete node behind it at emission time.
    `value` is a JSON-ready payload: the node snapshot for rr, the edge
    patch for wi, the (name, key[, value]) triple for oi, the response,
    or the abort mark.
    """

    seq: int
    proc: int
    op: int
    kind: str
    elem: str | None = None
    value: object = None
    nid: int | None = None
    attempt: int = 0
    obj: str | None = None

    def is_abort(self) -> bool:
        return self.value == ABORT

    def to_json(self) -> dict:
        out = {"seq": self.seq, "proc": self.proc, "op": self.op, "kind": self.kind}
        if self.elem is not None:
            out["elem"] = self.elem
        if self.value is not None:
            out["value"] = self.value
        return out


@dataclass
class OperationInstance:
    """One high-level operation: identity, arguments, and outcome."""

    id: int
    proc: int
    name: str
    key: int
    val: object = None
    status: str = INCOMPLETE
    response: object = None
    obj: str | None = None

    def is_complete(self) -> bool:
        return self.status == COMPLETE

    def describe(self) -> str:
        return f"{self.name}({self.key})"


@dataclass
class History:
    """A totally ordered execution record.

    The same class serves as the full execution view (which may contain
    abort-marked events and multiple attempts of restarted operations) and,
    via :meth:`exported`, the history in the strict sense: abort-marked
    read/write pairs and abort responses removed, and only the final
    attempt of each operation retained.

    `initial` maps node id -> node snapshot (JSON-ready dict) at the point
    this history starts; checkers replay reads and writes against it.
    """

    events: list[Event] = field(default_factory=list)
    ops: dict[int, OperationInstance] = field(default_factory=dict)
    initial: dict[int, dict] = field(default_factory=dict)
    structure: str | None = None
    obj_nids: dict[str, frozenset[int]] | None = None

    # -- derived views ---------------------------------------------------

    def exported(self) -> History:
        """Drop abort-marked events and superseded attempts."""
        final = {o.id: max((e.attempt for e in self.events if e.op == o.id), default=0)
                 for o in self.ops.values()}
        kept = [e for e in self.events
                if e.attempt == final[e.op] and not e.is_abort()]
        return History(kept, self.ops, self.initial, self.structure, self.obj_nids)

    def high_level(self) -> list[Event]:
        """Events of non-aborted operations at the operation level."""
        return [e for e in self.exported().events
                if e.kind in (OI, OR) and self.ops[e.op].status != ABORTED]

    def op_events(self, op_id: int) -> list[Event]:
        return [e for e in self.events if e.op == op_id]

    def responses(self) -> dict[int, object]:
        return {o.id: o.response for o in self.ops.values() if o.is_complete()}

    def events_json(self) -> list[dict]:
        return [e.to_json() for e in self.events]

    def render_json(self) -> str:
        return json.dumps(self.events_json(), ensure_ascii=True, separators=(",", ":"))


def well_formed(h: History) -> bool:
    """No process invokes a read/write/operation before the previous returns."""
    open_op: dict[int, int | None] = {}
    open_rw: dict[int, bool] = {}
    for e in h.events:
        cur = open_op.setdefault(e.proc, None)
        busy = open_rw.setdefault(e.proc, False)
        if e.kind == OI:
            if cur is not None:
                return False
            open_op[e.proc] = e.op
        elif e.kind == OR:
            if cur != e.op or busy:
                return False
            open_op[e.proc] = None
        elif e.kind in (RI, WI):
            if cur != e.op or busy:
                return False
            open_rw[e.proc] = True
        elif e.kind in (RR, WR):
            if cur != e.op or not busy:
                return False
            open_rw[e.proc] = False
        else:
            return False
    return True


# -- projections ---------------------------------------------------------


def project_process(h: History, proc: int) -> History:
    """Subsequence of h restricted to one process's events."""
    sub = [e for e in h.events if e.proc == proc]
    ops = {i: o for i, o in h.ops.items() if o.proc == proc}
    return History(sub, ops, h.initial, h.structure, h.obj_nids)


def complete(h: History) -> History:
    """Subsequence consisting of the events of complete operations."""
    sub = [e for e in h.events if h.ops[e.op].is_complete()]
    ops = {i: o for i, o in h.ops.items() if o.is_complete()}
    return History(sub, ops, h.initial, h.structure, h.obj_nids)


def restrict_to_operation(h: History, op_id: int) -> list[Event]:
    """The events of one operation, minus its final aborted read/write.

    For an aborted operation this is the successful prefix: the trailing
    invocation whose response carries the abort mark is dropped along with
    that response and the abort op-response.
    """
    evs = [e for e in h.events if e.op == op_id]
    if any(e.is_abort() for e in evs):
        evs = [e for e in evs if not e.is_abort()]
        # the invocation paired with the dropped abort response, if recorded
        if evs and evs[-1].kind in (RI, WI):
            evs = evs[:-1]
    return evs


def precedes(h: History, op_a: int, op_b: int) -> bool:
    """True iff op_a's response occurs before op_b's invocation in h."""
    if op_a == op_b:
        return False
    resp_a = next((e.seq for e in h.events if e.op == op_a and e.kind == OR), None)
    inv_b = next((e.seq for e in h.events if e.op == op_b and e.kind == OI), None)
    return resp_a is not None and inv_b is not None and resp_a < inv_b


def restrict_to_object(h: History, obj: str) -> History:
    """Events on one component of a composed object."""
    sub = [e for e in h.events if e.obj == obj]
    ops = {i: o for i, o in h.ops.items() if o.obj == obj}
    nids = (h.obj_nids or {}).get(obj)
    initial = ({n: s for n, s in h.initial.items() if n in nids}
               if nids is not None else dict(h.initial))
    return History(sub, ops, initial, h.structure, None)


# -- schedules -----------------------------------------------------------


@dataclass(frozen=True)
class Slot:
    """One schedule position: who moves and what kind of step it is.

    oi slots carry the operation name and arguments; ri/wi slots carry the
    symbolic element role; or slots are bare response points.
    """

    proc: int
    kind: str
    elem: str | None = None
    op_name: str | None = None
    key: int | None = None

    def canon(self) -> tuple:
        return (self.proc, self.kind, self.elem, self.op_name, self.key)

    def to_json(self) -> dict:
        out = {"proc": self.proc, "kind": self.kind}
        if self.kind == OI:
            out["op"] = self.op_name
            out["key"] = self.key
        elif self.kind in (RI, WI):
            out["elem"] = self.elem
        return out

    @staticmethod
    def from_json(d: dict) -> Slot:
        kind = d["kind"]
        if kind == OI:
            return Slot(d["proc"], OI, op_name=d["op"], key=d["key"])
        if kind in (RI, WI):
            return Slot(d["proc"], kind, elem=d["elem"])
        if kind == OR:
            return Slot(d["proc"], OR)
        raise ValueError(f"bad slot kind: {kind!r}")


@dataclass(frozen=True)
class Schedule:
    slots: tuple[Slot, ...]

    def digest(self) -> str:
        blob = json.dumps([s.canon() for s in self.slots], separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_json(self) -> list[dict]:
        return [s.to_json() for s in self.slots]

    @staticmethod
    def from_json(slots: list[dict]) -> Schedule:
        return Schedule(tuple(Slot.from_json(d) for d in slots))

    def __len__(self) -> int:
        return len(self.slots)


def schedule_of(h: History) -> Schedule:
    """Erase read values and responses, keeping the event order.

    Response events of reads/writes are adjacent to their invocations and
    carry no ordering information of their own, so slots are taken from
    invocation events plus op-response points.
    """
    slots = []
    for e in h.events:
        if e.kind == OI:
            name, key = e.value[0], e.value[1]
            slots.append(Slot(e.proc, OI, op_name=name, key=key))
        elif e.kind in (RI, WI):
            slots.append(Slot(e.proc, e.kind, elem=e.elem))
        elif e.kind == OR:
            slots.append(Slot(e.proc, OR))
    return Schedule(tuple(slots))
