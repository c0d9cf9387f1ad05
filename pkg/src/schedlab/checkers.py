"""Decision procedures for the correctness criteria.

All checkers are pure functions over histories.  Positive verdicts carry a
replayable witness (a linearization order, per-operation sequential runs,
or nothing to prove); negative strict-serializability verdicts carry a
dependency cycle whose edges are re-derivable from the history.  Bounded
searches that hit their caps report `inconclusive` (verdict None), never a
false negative.

Read/write payloads are the JSON event values: a read returns the node's
full record {"key", "val", "edges"}, a write carries an outgoing-edge
patch.  Node references inside records are "n<id>" tokens; checkers match
local traces up to a bijective renaming of those tokens, assigned by first
appearance (sequential witnesses allocate their own nodes).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

from .model import (ABORTED, COMPLETE, OI, OR, RR, WI, Event, History,
                    OperationInstance, restrict_to_operation)
from .seqspec import (BudgetExceeded, Operation, SearchStructureDef,
                      dec_key, dictionary_apply, local_trace,
                      reachable_states)


@dataclass
class CheckResult:
    verdict: bool | None  # None = inconclusive (bounds hit)
    witness: object = None
    violation: object = None
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.verdict is True

    def to_json(self) -> dict:
        out: dict = {"verdict": self.verdict}
        if self.witness is not None:
            out["witness"] = self.witness
        if self.violation is not None:
            out["violation"] = self.violation
        if self.verdict is None:
            out["inconclusive"] = self.reason or "bounds exceeded"
        return out


# -- shared event plumbing ----------------------------------------------------


def op_intervals(h: History) -> dict[int, tuple[int, float]]:
    """op id -> (invocation seq, response seq or +inf)."""
    out = {}
    for i in h.ops:
        inv = next((e.seq for e in h.events if e.op == i and e.kind == OI), None)
        resp = next((e.seq for e in h.events
                     if e.op == i and e.kind == OR and not e.is_abort()), None)
        if inv is not None:
            out[i] = (inv, resp if resp is not None else float("inf"))
    return out


def rw_trace(h: History, op_id: int) -> list[tuple]:
    """[("r", nid, record) | ("w", nid, edge_patch)] for one operation."""
    out = []
    for e in restrict_to_operation(h, op_id):
        if e.kind == RR:
            out.append(("r", e.nid, e.value))
        elif e.kind == WI:
            out.append(("w", e.nid, e.value["edges"]))
    return out


def _tok(nid: int) -> str:
    return f"n{nid}"


def canonical_steps(trace: list[tuple]) -> tuple:
    """Rename node tokens by first appearance so traces compare up to a
    consistent bijection.  Read targets and edge pointers share one
    namespace: following a pointer and reading the pointed-to node must
    stay the same node after renaming."""
    names: dict[str, int] = {}

    def sym(token):
        if token is None:
            return None
        if token not in names:
            names[token] = len(names)
        return names[token]

    out = []
    for kind, nid, payload in trace:
        if kind == "r":
            out.append(("r", sym(_tok(nid)), payload["key"], payload["val"],
                        tuple((lab, sym(t))
                              for lab, t in sorted(payload["edges"].items()))))
        else:
            out.append(("w", sym(_tok(nid)),
                        tuple((lab, sym(t)) for lab, t in sorted(payload.items()))))
    return tuple(out)


def abstract_state(initial: dict[int, dict]) -> dict:
    """Reachable key->value view of a store snapshot (root is node 0)."""
    if not initial:
        return {}
    out, seen, stack = {}, set(), [0]
    while stack:
        nid = stack.pop()
        if nid in seen or nid not in initial:
            continue
        seen.add(nid)
        rec = initial[nid]
        key = dec_key(rec["key"])
        if key not in (float("-inf"), float("inf")):
            out[key] = rec["val"]
        for t in rec["edges"].values():
            if t is not None:
                stack.append(int(t[1:]))
    return out


# -- linearizability ----------------------------------------------------------


def _default_apply(state: frozenset, op: OperationInstance):
    q = dict(state)
    q2, resp = dictionary_apply(q, Operation(op.name, op.key, op.val))
    return frozenset(q2.items()), resp


def check_linearizable(h: History, apply_fn=None, size_cap: int = 12,
                       q0=None) -> CheckResult:
    """Exact decision by DFS with state memoization.

    Incomplete operations may be completed (their response is whatever the
    specification yields) or dropped; aborted operations are not part of
    the high-level history at all.  `q0` overrides the initial abstract
    state (needed for composed objects, whose state is a pair).
    """
    apply_fn = apply_fn or _default_apply
    hx = h.exported()
    ops = {i: o for i, o in hx.ops.items() if o.status != ABORTED}
    if len(ops) > size_cap:
        return CheckResult(None, reason=f"more than {size_cap} operations")
    iv = op_intervals(hx)
    ops = {i: o for i, o in ops.items() if i in iv}
    if q0 is None:
        q0 = frozenset(abstract_state(hx.initial).items())
    order = sorted(ops)
    complete_ids = [i for i in order if ops[i].is_complete()]
    seen: set[tuple] = set()
    witness: list[tuple[int, object]] = []

    def available(done: frozenset):
        rest = [i for i in order if i not in done]
        for i in rest:
            if all(iv[j][1] >= iv[i][0] for j in rest if j != i):
                yield i

    def dfs(state, done: frozenset) -> bool:
        if all(i in done for i in complete_ids):
            return True
        key = (state, done)
        if key in seen:
            return False
        seen.add(key)
        for i in available(done):
            st2, resp = apply_fn(state, ops[i])
            if ops[i].is_complete() and resp != ops[i].response:
                continue
            witness.append((i, resp))
            if dfs(st2, done | {i}):
                return True
            witness.pop()
        # incomplete ops may also be dropped: allowed implicitly because the
        # success condition only requires the complete ones to be placed
        return False

    if dfs(q0, frozenset()):
        lin = [(i, ops[i].describe(), resp) for i, resp in witness]
        return CheckResult(True, witness=lin)
    return CheckResult(False, reason="no legal linearization")


def naive_linearizable(h: History, apply_fn=None) -> bool:
    """Brute-force oracle: all drop-subsets of incomplete operations, all
    permutations, respecting real time.  Independent of check_linearizable's
    search order and memoization."""
    apply_fn = apply_fn or _default_apply
    hx = h.exported()
    ops = {i: o for i, o in hx.ops.items() if o.status != ABORTED}
    iv = op_intervals(hx)
    ops = {i: o for i, o in ops.items() if i in iv}
    q0 = frozenset(abstract_state(hx.initial).items())
    comp = [i for i, o in ops.items() if o.is_complete()]
    inc = [i for i, o in ops.items() if not o.is_complete()]
    for r in range(len(inc) + 1):
        for keep in itertools.combinations(inc, r):
            pool = comp + list(keep)
            for perm in itertools.permutations(pool):
                ok = True
                for a, b in itertools.combinations(range(len(perm)), 2):
                    if iv[perm[b]][1] < iv[perm[a]][0]:
                        ok = False
                        break
                if not ok:
                    continue
                state = q0
                for i in perm:
                    state, resp = apply_fn(state, ops[i])
                    if ops[i].is_complete() and resp != ops[i].response:
                        ok = False
                        break
                if ok:
                    return True
    return False


# -- local serializability ----------------------------------------------------


def check_locally_serializable(h: History, def_: SearchStructureDef,
                               keys: tuple[int, ...], max_ops: int,
                               state_cap: int = 4000) -> CheckResult:
    """For each operation, search the sequential implementation's histories
    for one whose local trace matches (prefix match for operations that
    never responded)."""
    try:
        states = reachable_states(def_, keys, max_ops, state_cap)
    except BudgetExceeded as e:
        return CheckResult(None, reason=str(e))
    witnesses = {}
    for i, op_inst in sorted(h.ops.items()):
        trace = rw_trace(h, i)
        if not trace and op_inst.status != COMPLETE:
            witnesses[i] = "no events"
            continue
        steps = canonical_steps(trace)
        resp = op_inst.response if op_inst.is_complete() else None
        op = Operation(op_inst.name, op_inst.key, op_inst.val)
        found = None
        for state, path in states:
            cand = local_trace(def_, state, op)
            c_steps, c_resp = cand[:-1], cand[-1][1]
            if resp is not None:
                if steps == c_steps and resp == c_resp:
                    found = [o.describe() for o in path]
                    break
            elif steps == c_steps[:len(steps)]:
                found = [o.describe() for o in path]
                break
        if found is None:
            return CheckResult(False, violation={"op": i, "trace": steps},
                               reason=f"operation {op_inst.describe()} has no "
                                      f"sequential witness")
        witnesses[i] = found
    return CheckResult(True, witness=witnesses)


def check_ls_linearizable(h: History, def_: SearchStructureDef,
                          keys: tuple[int, ...], max_ops: int,
                          state_cap: int = 4000, apply_fn=None) -> CheckResult:
    ls = check_locally_serializable(h, def_, keys, max_ops, state_cap)
    if ls.verdict is not True:
        return ls
    lin = check_linearizable(h, apply_fn=apply_fn)
    if lin.verdict is not True:
        return lin
    return CheckResult(True, witness={"local": ls.witness, "linearization": lin.witness})


# -- strict serializability ---------------------------------------------------


class _Replay:
    """Record-level replay of operation traces in a candidate order.

    Nodes created during the history are undefined until some applied write
    links them; their first read then fixes their record.
    """

    def __init__(self, initial: dict[int, dict]):
        self.store = {nid: {"key": rec["key"], "val": rec["val"],
                            "edges": dict(rec["edges"])}
                      for nid, rec in initial.items()}
        self.introduced = set(self.store)
        for rec in initial.values():
            self.introduced.update(int(t[1:]) for t in rec["edges"].values() if t)

    def fork(self) -> _Replay:
        rp = _Replay.__new__(_Replay)
        rp.store = {nid: {"key": r["key"], "val": r["val"], "edges": dict(r["edges"])}
                    for nid, r in self.store.items()}
        rp.introduced = set(self.introduced)
        return rp

    def apply(self, trace: list[tuple]) -> bool:
        for kind, nid, payload in trace:
            if kind == "r":
                if nid not in self.store:
                    if nid not in self.introduced:
                        return False
                    self.store[nid] = {"key": payload["key"], "val": payload["val"],
                                       "edges": dict(payload["edges"])}
                elif self.store[nid] != payload:
                    return False
                self.introduced.update(int(t[1:]) for t in payload["edges"].values() if t)
            else:
                if nid not in self.store:
                    return False
                self.store[nid]["edges"].update(payload)
                self.introduced.update(int(t[1:]) for t in payload.values() if t)
        return True


def _replayable(order: list[int], traces: dict[int, list], initial) -> bool:
    rp = _Replay(initial)
    return all(rp.apply(traces[i]) for i in order)


def check_strictly_serializable(h: History, size_cap: int = 8) -> CheckResult:
    """Search permutations of the complete operations respecting real time
    for one whose read/write replay is legal; on failure return a
    dependency cycle (real-time, read-from, and anti-dependency edges)."""
    hx = h.exported()
    comp = sorted(i for i, o in hx.ops.items() if o.is_complete())
    if len(comp) > size_cap:
        return CheckResult(None, reason=f"more than {size_cap} complete operations")
    iv = op_intervals(hx)
    traces = {i: rw_trace(hx, i) for i in comp}

    found: list[int] = []

    def dfs(order: list[int], rp: _Replay) -> bool:
        if len(order) == len(comp):
            found.extend(order)
            return True
        rest = [i for i in comp if i not in order]
        for i in rest:
            if any(iv[j][1] < iv[i][0] for j in rest if j != i):
                continue
            rp2 = _Replay(hx.initial)
            if not all(rp2.apply(traces[j]) for j in order + [i]):
                continue
            if dfs(order + [i], rp2):
                return True
        return False

    if dfs([], _Replay(hx.initial)):
        return CheckResult(True, witness=[(i, hx.ops[i].describe()) for i in found])
    cycle = _dependency_cycle(hx, comp, traces, iv)
    return CheckResult(False, violation=cycle,
                       reason="no real-time-respecting legal permutation")


def _dependency_edges(hx: History, comp: list[int], traces, iv):
    """Edges a -> b with reasons, derived from the recorded values.

    read-from: b read an edge value that a wrote (matched by value, ties
    broken by history position).  anti-dependency: b read a value that a
    later overwrote, so b must be serialized before a."""
    writes: dict[tuple[int, str], list[tuple[int, int, object]]] = {}
    for e in hx.events:
        if e.kind == WI and e.op in traces:
            for lab, val in e.value["edges"].items():
                writes.setdefault((e.nid, lab), []).append((e.seq, e.op, val))
    initial_edges = {(nid, lab): val
                     for nid, rec in hx.initial.items()
                     for lab, val in rec["edges"].items()}
    edges: dict[tuple[int, int], dict] = {}

    def add(a, b, kind, detail):
        if a != b and (a, b) not in edges:
            edges[(a, b)] = {"kind": kind, "detail": detail}

    for b in comp:
        for kind, nid, payload in traces[b]:
            if kind != "r":
                continue
            for lab, val in payload["edges"].items():
                slot = writes.get((nid, lab), [])
                matches = [(seq, a) for seq, a, v in slot if v == val and a != b]
                if matches:
                    src_seq, src = matches[-1]
                    add(src, b, "read-from",
                        f"{hx.ops[b].describe()} read n{nid}.{lab}={val} written "
                        f"by {hx.ops[src].describe()}")
                elif initial_edges.get((nid, lab)) == val:
                    src_seq = -1
                else:
                    continue  # private initialization of a created node
                for seq, a, v in slot:
                    if a != b and v != val and seq > src_seq:
                        add(b, a, "anti-dependency",
                            f"{hx.ops[b].describe()} read n{nid}.{lab}={val} "
                            f"that {hx.ops[a].describe()} overwrites")
    for a, b in itertools.permutations(comp, 2):
        if iv[a][1] < iv[b][0]:
            add(a, b, "real-time", f"{hx.ops[a].describe()} returns before "
                                   f"{hx.ops[b].describe()} starts")
    return edges


def _dependency_cycle(hx, comp, traces, iv):
    edges = _dependency_edges(hx, comp, traces, iv)
    adj: dict[int, list[int]] = {i: [] for i in comp}
    for (a, b) in sorted(edges):
        adj[a].append(b)
    best = None
    for start in comp:  # shortest cycle via BFS from each node
        parent = {start: None}
        queue = [start]
        while queue:
            n = queue.pop(0)
            for t in adj[n]:
                if t == start:
                    path = [n]
                    while parent[path[-1]] is not None:
                        path.append(parent[path[-1]])
                    path.reverse()
                    cyc = path + [start] if path[0] != start else path + [start]
                    if best is None or len(cyc) < len(best):
                        best = cyc
                    queue = []
                    break
                if t not in parent:
                    parent[t] = n
                    queue.append(t)
    if best is None:
        return None
    steps = []
    for a, b in zip(best, best[1:]):
        e = edges[(a, b)]
        steps.append({"from": a, "from_op": hx.ops[a].describe(),
                      "to": b, "to_op": hx.ops[b].describe(),
                      "kind": e["kind"], "detail": e["detail"]})
    return steps


# -- safe-strict serializability ----------------------------------------------


def check_safe_strict(h: History, size_cap: int = 8) -> CheckResult:
    """Strict serializability of the complete operations, plus: every
    operation execution (aborted and incomplete attempts included) observes
    a legal sequential execution over some subset of the operations
    completed by its last event, with every participant's recorded trace
    replaying exactly.

    Each restart attempt is its own unit for condition (2): an aborted
    attempt must have observed a committed-prefix state even though a later
    attempt completed the operation."""
    strict = check_strictly_serializable(h, size_cap)
    if strict.verdict is not True:
        return CheckResult(strict.verdict, violation=strict.violation,
                           reason=strict.reason or "condition (1) fails")
    hx = h.exported()
    or_seq = {e.op: e.seq for e in h.events
              if e.kind == OR and not e.is_abort()}
    checked = []
    for k in sorted(h.ops):
        for attempt in sorted({e.attempt for e in h.events if e.op == k}):
            evs = [e for e in h.events if e.op == k and e.attempt == attempt]
            trace_k = _attempt_trace(evs)
            last = evs[-1].seq
            completed = [i for i, o in h.ops.items()
                         if i != k and o.is_complete() and or_seq.get(i, 1 << 60) <= last]
            if len(completed) > size_cap:
                return CheckResult(None, reason=f"prefix of op {k} has more than "
                                                f"{size_cap} complete operations")
            traces = {i: rw_trace(hx, i) for i in completed}
            if not _prefix_witness(h.initial, trace_k, completed, traces):
                return CheckResult(
                    False,
                    violation={"op": k, "attempt": attempt,
                               "op_desc": h.ops[k].describe()},
                    reason=f"{h.ops[k].describe()} (attempt {attempt}) observes "
                           f"no committed-prefix state (condition 2)")
            checked.append((k, attempt))
    return CheckResult(True, witness=checked)


def _attempt_trace(evs: list[Event]) -> list[tuple]:
    out = []
    for e in evs:
        if e.kind == RR and not e.is_abort():
            out.append(("r", e.nid, e.value))
        elif e.kind == WI:
            out.append(("w", e.nid, e.value["edges"]))
    return out


def _prefix_witness(initial, k_trace, completed, traces) -> bool:
    """DFS over sequences of distinct completed ops with replay pruning,
    terminating with the checked operation's trace."""

    def dfs(used: frozenset, rp: _Replay) -> bool:
        tail = rp.fork()
        if tail.apply(k_trace):
            return True
        for i in completed:
            if i in used:
                continue
            rp2 = rp.fork()
            if rp2.apply(traces[i]) and dfs(used | {i}, rp2):
                return True
        return False

    return dfs(frozenset(), _Replay(initial))


# -- compositionality ---------------------------------------------------------


@dataclass
class ComposedObject:
    """Two independent components; operations and nodes carry the tag of
    exactly one of them."""

    defs: dict[str, SearchStructureDef]

    def apply_fn(self):
        def apply(state: tuple, op: OperationInstance):
            q1, q2 = dict(state[0]), dict(state[1])
            target = q1 if op.obj == "O1" else q2
            q, resp = dictionary_apply(target, Operation(op.name, op.key, op.val))
            if op.obj == "O1":
                return (frozenset(q.items()), frozenset(q2.items())), resp
            return (frozenset(q1.items()), frozenset(q.items())), resp
        return apply


def compose_histories(h1: History, h2: History, interleave) -> History:
    """Merge two histories over independent objects into one, tagging every
    event and operation with its component.  `interleave` is a random.Random
    or a list of "O1"/"O2" pulls."""
    offset_op = max(h1.ops, default=-1) + 1
    offset_proc = max((o.proc for o in h1.ops.values()), default=0) + 1
    offset_nid = 10000

    def remap2(e: Event, seq: int) -> Event:
        return replace(e, seq=seq, op=e.op + offset_op, proc=e.proc + offset_proc,
                       nid=(e.nid + offset_nid if e.nid is not None else None),
                       value=_shift_value(e.value, offset_nid), obj="O2")

    ev1 = [replace(e, obj="O1") for e in h1.events]
    ev2 = list(h2.events)
    merged: list[Event] = []
    i = j = 0
    while i < len(ev1) or j < len(ev2):
        if i == len(ev1):
            pick = "O2"
        elif j == len(ev2):
            pick = "O1"
        elif isinstance(interleave, list):
            pick = interleave[(i + j) % len(interleave)]
        else:
            pick = interleave.choice(("O1", "O2"))
        if pick == "O1":
            merged.append(replace(ev1[i], seq=len(merged)))
            i += 1
        else:
            merged.append(remap2(ev2[j], len(merged)))
            j += 1
    ops = {i: replace(o, obj="O1") for i, o in h1.ops.items()}
    for i, o in h2.ops.items():
        ops[i + offset_op] = replace(o, id=i + offset_op, proc=o.proc + offset_proc,
                                     obj="O2")
    initial = dict(h1.initial)
    initial.update({nid + offset_nid: _shift_record(rec, offset_nid)
                    for nid, rec in h2.initial.items()})
    nids = {"O1": frozenset(h1.initial) | {e.nid for e in ev1 if e.nid is not None},
            "O2": frozenset(nid + offset_nid for nid in h2.initial)
                  | {e.nid + offset_nid for e in h2.events if e.nid is not None}}
    return History(merged, ops, initial, "composed", nids)


def _shift_value(value, off):
    if isinstance(value, dict):
        out = dict(value)
        if "edges" in out:
            out["edges"] = {lab: (f"n{int(t[1:]) + off}" if t else None)
                            for lab, t in out["edges"].items()}
        return out
    return value


def _shift_record(rec, off):
    return {"key": rec["key"], "val": rec["val"],
            "edges": {lab: (f"n{int(t[1:]) + off}" if t else None)
                      for lab, t in rec["edges"].items()}}


def _restrict_renumbered(h: History, obj: str) -> History:
    """Component view with node ids shifted back so replay sees root = 0."""
    from .model import restrict_to_object
    sub = restrict_to_object(h, obj)
    if obj == "O1":
        return sub
    off = 10000
    ev = [replace(e, nid=(e.nid - off if e.nid is not None else None),
                  value=_shift_value(e.value, -off)) for e in sub.events]
    initial = {nid - off: _shift_record(rec, -off) for nid, rec in sub.initial.items()}
    return History(ev, sub.ops, initial, sub.structure)


def check_compositionality(h: History, defs: dict[str, SearchStructureDef],
                           keys: tuple[int, ...], max_ops: int) -> CheckResult:
    """Falsifier for 'LSL components imply LSL composition': returns True
    unless both projections are LSL while the composition is not."""
    parts = {}
    for obj, d in defs.items():
        sub = _restrict_renumbered(h, obj)
        parts[obj] = check_ls_linearizable(sub, d, keys, max_ops)
    if not all(p.verdict is True for p in parts.values()):
        return CheckResult(True, witness="vacuous: a component is not LSL")
    # composed local serializability: each op's witness lives in its component
    for obj, d in defs.items():
        sub = _restrict_renumbered(h, obj)
        ls = check_locally_serializable(sub, d, keys, max_ops)
        if ls.verdict is not True:
            return CheckResult(False, violation={"component": obj},
                               reason="component op lost its witness in composition")
    q0 = (frozenset(abstract_state(_restrict_renumbered(h, "O1").initial).items()),
          frozenset(abstract_state(_restrict_renumbered(h, "O2").initial).items()))
    lin = check_linearizable(h, apply_fn=ComposedObject(defs).apply_fn(), q0=q0)
    if lin.verdict is True:
        return CheckResult(True, witness=lin.witness)
    return CheckResult(False, violation="composed high-level history not linearizable",
                       reason="compositionality falsified")
