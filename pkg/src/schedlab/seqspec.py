"""The sequential side: dictionary semantics, DAG states, and the three
search structures compiled into step programs.

A structure is a rooted DAG of key/value nodes with labelled outgoing
edges.  Every operation is a read-only traverse phase (repeatedly visiting
nodes: one visit reads a node's key, value and outgoing edges) followed by
a write-only update phase that patches the outgoing-edge slots of already
visited nodes.  The traverse function works off G_op, the sub-DAG of nodes
visited so far, never off the live graph, so a suspended operation resumes
against whatever the graph has become.

Keys are natural numbers; root/tail sentinels use -inf/+inf.  Values
default to the key itself.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from .model import History

NEG_INF = float("-inf")
POS_INF = float("inf")

ROOT_ROLE = "root"
TAIL_ROLE = "tail"

STRUCTURES = ("sorted-list", "bst", "skiplist")


def enc_key(key) -> object:
    if key == NEG_INF:
        return "-inf"
    if key == POS_INF:
        return "inf"
    return key


def dec_key(enc) -> object:
    if enc == "-inf":
        return NEG_INF
    if enc == "inf":
        return POS_INF
    return enc


@dataclass(frozen=True)
class Operation:
    name: str  # insert | delete | find
    key: int
    val: object = None

    def __post_init__(self):
        if self.name == "insert" and self.val is None:
            object.__setattr__(self, "val", self.key)

    def describe(self) -> str:
        return f"{self.name}({self.key})"


def dictionary_apply(q: dict, op: Operation) -> tuple[dict, bool]:
    """The abstract transition relation: finite map key->value."""
    if op.name == "insert":
        if op.key in q:
            return q, False
        q2 = dict(q)
        q2[op.key] = op.val
        return q2, True
    if op.name == "delete":
        if op.key not in q:
            return q, False
        q2 = dict(q)
        del q2[op.key]
        return q2, True
    if op.name == "find":
        return q, op.key in q
    raise ValueError(f"unknown operation {op.name!r}")


def fold_dictionary(ops, q0: dict | None = None) -> tuple[dict, list[bool]]:
    q = dict(q0 or {})
    out = []
    for op in ops:
        q, r = dictionary_apply(q, op)
        out.append(r)
    return q, out


# -- the shared DAG ---------------------------------------------------------


@dataclass
class NodeRec:
    nid: int
    key: float
    val: object
    edges: dict[str, int | None]
    alive: bool = True

    def snap(self) -> dict:
        """JSON-ready snapshot of the whole record (one element's value)."""
        return {"key": enc_key(self.key), "val": self.val,
                "edges": {lab: (f"n{t}" if t is not None else None)
                          for lab, t in self.edges.items()}}


@dataclass
class DagState:
    nodes: dict[int, NodeRec] = field(default_factory=dict)
    root: int = 0
    tail: int | None = None
    counter: int = 0

    def alloc(self, key, val, edges: dict[str, int | None]) -> int:
        nid = self.counter
        self.counter += 1
        self.nodes[nid] = NodeRec(nid, key, val, dict(edges))
        return nid

    def read(self, nid: int) -> NodeRec:
        return self.nodes[nid]

    def write_edges(self, nid: int, patch: dict[str, int | None]) -> None:
        self.nodes[nid].edges.update(patch)

    def find_alive(self, key) -> int | None:
        for n in self.nodes.values():
            if n.alive and n.key == key:
                return n.nid
        return None

    def role_of(self, nid: int) -> str:
        if nid == self.root:
            return ROOT_ROLE
        if nid == self.tail:
            return TAIL_ROLE
        return f"key:{self.nodes[nid].key}"

    def reachable(self) -> set[int]:
        seen, stack = set(), [self.root]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(t for t in self.nodes[n].edges.values()
                         if t is not None and t not in seen)
        return seen

    def alive_keys(self) -> dict:
        reach = self.reachable()
        return {n.key: n.val for n in self.nodes.values()
                if n.nid in reach and n.nid not in (self.root, self.tail)}

    def snapshot(self) -> dict[int, dict]:
        return {nid: rec.snap() for nid, rec in sorted(self.nodes.items())}

    def clone(self) -> DagState:
        st = DagState(root=self.root, tail=self.tail, counter=self.counter)
        st.nodes = {nid: NodeRec(r.nid, r.key, r.val, dict(r.edges), r.alive)
                    for nid, r in self.nodes.items()}
        return st

    def canonical(self) -> tuple:
        """Shape signature for state memoization (ids canonicalized by BFS)."""
        order, seen, queue = [], set(), [self.root]
        while queue:
            n = queue.pop(0)
            if n in seen or n is None:
                continue
            seen.add(n)
            order.append(n)
            rec = self.nodes[n]
            queue.extend(rec.edges[lab] for lab in sorted(rec.edges))
        remap = {n: i for i, n in enumerate(order)}
        return tuple(
            (remap[n], enc_key(self.nodes[n].key),
             tuple((lab, remap.get(t)) for lab, t in sorted(self.nodes[n].edges.items())))
            for n in order)


# -- the explored sub-DAG of one operation ----------------------------------


@dataclass
class Gop:
    """Nodes visited so far: per-node frozen copies of key and edges."""

    recs: dict[int, NodeRec] = field(default_factory=dict)
    order: list[int] = field(default_factory=list)

    def visit(self, rec: NodeRec) -> None:
        if rec.nid not in self.recs:
            self.order.append(rec.nid)
        self.recs[rec.nid] = NodeRec(rec.nid, rec.key, rec.val, dict(rec.edges), rec.alive)

    def __contains__(self, nid: int) -> bool:
        return nid in self.recs

    def key(self, nid: int) -> float:
        return self.recs[nid].key

    def edges(self, nid: int) -> dict[str, int | None]:
        return self.recs[nid].edges

    def known_edges(self) -> set[tuple[int, str, int]]:
        return {(n, lab, t) for n, r in self.recs.items()
                for lab, t in r.edges.items() if t is not None}

    def has_key(self, key) -> int | None:
        for nid in self.order:
            if self.recs[nid].key == key:
                return nid
        return None

    def clone(self) -> Gop:
        g = Gop()
        g.recs = {n: NodeRec(r.nid, r.key, r.val, dict(r.edges), r.alive)
                  for n, r in self.recs.items()}
        g.order = list(self.order)
        return g


@dataclass
class UpdatePlan:
    """Write-only update phase: edge patches against already shared nodes.

    `writes` is ordered by the target's first-visit position (root-ward
    first), one entry per written node; `new_nodes` were allocated private
    and become shared when the patch linking them lands.
    """

    response: bool
    writes: list[tuple[int, dict[str, int | None]]] = field(default_factory=list)
    new_nodes: list[int] = field(default_factory=list)
    unlink: list[int] = field(default_factory=list)


# -- structure definitions ---------------------------------------------------


class SearchStructureDef:
    """One concrete search structure: layout, traverse, insert and delete
    functions.  Subclasses provide the structure-specific pieces; the
    traverse protocol (visit nodes until the op can decide) is shared."""

    name: str

    def new_state(self) -> DagState:
        raise NotImplementedError

    def tau(self, op: Operation, gop: Gop, state_root: int) -> int | None:
        """Next node to visit, or None when G_op contains enough to decide.

        Pure in G_op: replans the canonical search from the root using only
        visited records, returning the first unvisited node the search
        needs.  The returned node is always the target of a known edge."""
        raise NotImplementedError

    def plan_update(self, op: Operation, gop: Gop, state: DagState) -> UpdatePlan:
        """The insert/delete function applied to G_op; find plans no writes."""
        raise NotImplementedError

    def relevant_set(self, state: DagState, key: int) -> set[int]:
        """V_k: the key's node plus graph neighbours, or the frontier the
        key would be inserted at plus its in-neighbours."""
        hit = state.find_alive(key)
        reach = state.reachable()
        if hit is not None:
            out = {hit}
            out.update(t for t in state.nodes[hit].edges.values() if t is not None)
            out.update(n for n in reach
                       if hit in state.nodes[n].edges.values())
            return out
        anchors = self._absent_anchors(state, key)
        out = set(anchors)
        for a in anchors:
            out.update(n for n in reach if a in state.nodes[n].edges.values())
        return out

    def _absent_anchors(self, state: DagState, key: int) -> set[int]:
        """Nodes holding the smallest key ordered after `key` (structure
        order): the frontier an insert would link in front of."""
        raise NotImplementedError

    def audit(self, state: DagState) -> None:
        """Structure invariant: acyclic and order-respecting."""
        seen: dict[int, int] = {}

        def dfs(n: int) -> None:
            seen[n] = 1
            for t in state.nodes[n].edges.values():
                if t is None:
                    continue
                if seen.get(t) == 1:
                    raise AssertionError("cycle through node %d" % t)
                if t not in seen:
                    dfs(t)
            seen[n] = 2

        dfs(state.root)
        self._audit_order(state)

    def _audit_order(self, state: DagState) -> None:
        raise NotImplementedError

    def fingerprint(self) -> tuple:
        return (self.name,)


class SortedList(SearchStructureDef):
    """Single path of strictly increasing keys between two sentinels."""

    name = "sorted-list"

    def new_state(self) -> DagState:
        st = DagState()
        root = st.alloc(NEG_INF, None, {"next": None})
        tail = st.alloc(POS_INF, None, {})
        st.write_edges(root, {"next": tail})
        st.root, st.tail = root, tail
        return st

    def tau(self, op, gop, state_root):
        if state_root not in gop:
            return state_root
        pos = state_root
        while True:
            nxt = gop.edges(pos).get("next")
            if nxt is None:
                return None
            if nxt not in gop:
                return nxt
            if gop.key(nxt) >= op.key:
                return None
            pos = nxt

    def _chain(self, gop, state_root, key):
        """(pred, succ) along the visited chain for `key`."""
        pos = state_root
        while True:
            nxt = gop.edges(pos).get("next")
            if nxt is None or nxt not in gop or gop.key(nxt) >= key:
                return pos, nxt
            pos = nxt

    def plan_update(self, op, gop, state):
        pred, succ = self._chain(gop, state.root, op.key)
        found = succ is not None and succ in gop and gop.key(succ) == op.key
        if op.name == "find":
            return UpdatePlan(found)
        if op.name == "insert":
            if found:
                return UpdatePlan(False)
            new = state.alloc(op.key, op.val, {"next": succ})
            return UpdatePlan(True, writes=[(pred, {"next": new})], new_nodes=[new])
        if found:
            after = gop.edges(succ).get("next")
            return UpdatePlan(True, writes=[(pred, {"next": after})], unlink=[succ])
        return UpdatePlan(False)

    def _absent_anchors(self, state, key):
        reach = state.reachable()
        cands = [n for n in reach if state.nodes[n].key > key]
        best = min(cands, key=lambda n: state.nodes[n].key)
        return {n for n in cands if state.nodes[n].key == state.nodes[best].key}

    def _audit_order(self, state):
        n = state.root
        while n is not None:
            nxt = state.nodes[n].edges.get("next")
            if nxt is not None:
                assert state.nodes[n].key < state.nodes[nxt].key, "list unsorted"
            n = nxt


class Bst(SearchStructureDef):
    """Unbalanced internal binary search tree below a -inf sentinel.

    Two-child deletes splice the in-order successor into the removed
    node's position and clear the removed node's child edges, so the
    removed node is part of the update's write (and hence lock) set."""

    name = "bst"

    def new_state(self) -> DagState:
        st = DagState()
        st.root = st.alloc(NEG_INF, None, {"right": None})
        st.tail = None
        return st

    @staticmethod
    def _dir(node_key, key) -> str:
        return "right" if key > node_key else "left"

    def _descend(self, gop, state_root, key):
        """Deepest visited node on the search path plus its next target."""
        pos = state_root
        while True:
            if gop.key(pos) == key:
                return pos, None
            d = self._dir(gop.key(pos), key)
            t = gop.edges(pos).get(d)
            if t is None or t not in gop:
                return pos, t
            pos = t

    def tau(self, op, gop, state_root):
        if state_root not in gop:
            return state_root
        pos, t = self._descend(gop, state_root, op.key)
        if gop.key(pos) == op.key:
            if op.name != "delete":
                return None
            return self._successor_probe(gop, pos)
        return t  # unvisited child to probe, or None: key absent

    def _successor_probe(self, gop, d):
        """Explore the in-order successor chain needed by a 2-child splice."""
        if gop.edges(d).get("left") is None or gop.edges(d).get("right") is None:
            return None
        pos = gop.edges(d)["right"]
        while pos in gop:
            nxt = gop.edges(pos).get("left")
            if nxt is None:
                return None  # successor located
            pos = nxt
        return pos

    def plan_update(self, op, gop, state):
        pos, t = self._descend(gop, state.root, op.key)
        found = gop.key(pos) == op.key
        if op.name == "find":
            return UpdatePlan(found)
        if op.name == "insert":
            if found:
                return UpdatePlan(False)
            new = state.alloc(op.key, op.val, {"left": None, "right": None})
            d = self._dir(gop.key(pos), op.key)
            return UpdatePlan(True, writes=[(pos, {d: new})], new_nodes=[new])
        if not found:
            return UpdatePlan(False)
        return self._plan_delete(gop, pos)

    def _plan_delete(self, gop, d):
        parent = next(n for n in gop.order
                      if d in gop.edges(n).values())
        pdir = next(lab for lab, t in gop.edges(parent).items() if t == d)
        left, right = gop.edges(d).get("left"), gop.edges(d).get("right")
        if left is None or right is None:
            child = left if left is not None else right
            return UpdatePlan(True, writes=[(parent, {pdir: child})], unlink=[d])
        # two children: splice the in-order successor into d's position
        s, s_parent = right, d
        while gop.edges(s).get("left") is not None:
            s_parent, s = s, gop.edges(s)["left"]
        writes = [(parent, {pdir: s})]
        if s_parent is d:
            writes.append((s, {"left": left}))
        else:
            writes.append((s_parent, {"left": gop.edges(s).get("right")}))
            writes.append((s, {"left": left, "right": right}))
        writes.append((d, {"left": None, "right": None}))
        order = {nid: i for i, nid in enumerate(gop.order)}
        writes.sort(key=lambda wr: order[wr[0]])
        return UpdatePlan(True, writes=writes, unlink=[d])

    def _absent_anchors(self, state, key):
        pos = state.root
        while True:
            rec = state.nodes[pos]
            t = rec.edges.get(self._dir(rec.key, key))
            if t is None:
                return {pos}
            pos = t

    def _audit_order(self, state):
        def check(n, lo, hi):
            if n is None:
                return
            k = state.nodes[n].key
            assert lo < k < hi, "bst order violated"
            check(state.nodes[n].edges.get("left"), lo, k)
            check(state.nodes[n].edges.get("right"), k, hi)

        check(state.nodes[state.root].edges.get("right"), NEG_INF, POS_INF)


class SkipList(SearchStructureDef):
    """Towers with per-level next pointers; heights drawn from a seeded
    generator keyed by (seed, key) so identical keys always toss the same
    coins."""

    name = "skiplist"

    def __init__(self, max_level: int = 3, seed: int = 0):
        self.max_level = max_level
        self.seed = seed

    def fingerprint(self):
        return (self.name, self.max_level, self.seed)

    def height(self, key: int) -> int:
        rng = random.Random(f"{self.seed}:{key}")
        h = 1
        while h < self.max_level and rng.random() < 0.5:
            h += 1
        return h

    @staticmethod
    def lab(level: int) -> str:
        return f"next{level}"

    def new_state(self) -> DagState:
        st = DagState()
        root = st.alloc(NEG_INF, None, {self.lab(l): None
                                        for l in range(self.max_level, 0, -1)})
        tail = st.alloc(POS_INF, None, {})
        st.write_edges(root, {self.lab(l): tail for l in range(self.max_level, 0, -1)})
        st.root, st.tail = root, tail
        return st

    def _levels_of(self, gop, nid) -> list[int]:
        return sorted((int(lab[4:]) for lab in gop.edges(nid)), reverse=True)

    def _search(self, op, gop, state_root):
        """Replan the canonical descent over visited nodes.

        Returns (preds, probe) where preds maps level -> last node with
        key < op.key whose level-edge was resolved, and probe is the first
        unvisited node the search must read next (None when resolved)."""
        preds: dict[int, int] = {}
        pos = state_root
        for lvl in range(self.max_level, 0, -1):
            while True:
                t = gop.edges(pos).get(self.lab(lvl))
                if t is None:
                    break
                if t not in gop:
                    return preds, t
                if gop.key(t) < op.key:
                    pos = t
                    continue
                break
            preds[lvl] = pos
        return preds, None

    def tau(self, op, gop, state_root):
        if state_root not in gop:
            return state_root
        if op.name != "delete" and gop.has_key(op.key) is not None:
            return None  # found; inserts/finds need nothing further
        preds, probe = self._search(op, gop, state_root)
        return probe

    def plan_update(self, op, gop, state):
        hit = gop.has_key(op.key)
        if op.name == "find":
            return UpdatePlan(hit is not None)
        if op.name == "insert":
            if hit is not None:
                return UpdatePlan(False)
            preds, probe = self._search(op, gop, state.root)
            h = self.height(op.key)
            edges = {self.lab(l): gop.edges(preds[l]).get(self.lab(l))
                     for l in range(h, 0, -1)}
            new = state.alloc(op.key, op.val, edges)
            patches: dict[int, dict] = {}
            for l in range(h, 0, -1):
                patches.setdefault(preds[l], {})[self.lab(l)] = new
            order = {nid: i for i, nid in enumerate(gop.order)}
            writes = sorted(patches.items(), key=lambda wr: order[wr[0]])
            return UpdatePlan(True, writes=writes, new_nodes=[new])
        if hit is None:
            return UpdatePlan(False)
        preds, probe = self._search(op, gop, state.root)
        patches = {}
        for lab, t in gop.edges(hit).items():
            l = int(lab[4:])
            patches.setdefault(preds[l], {})[lab] = t
        order = {nid: i for i, nid in enumerate(gop.order)}
        writes = sorted(patches.items(), key=lambda wr: order[wr[0]])
        return UpdatePlan(True, writes=writes, unlink=[hit])

    def _absent_anchors(self, state, key):
        reach = state.reachable()
        cands = [n for n in reach if state.nodes[n].key > key]
        best = min(state.nodes[n].key for n in cands)
        return {n for n in cands if state.nodes[n].key == best}

    def _audit_order(self, state):
        for lvl in range(self.max_level, 0, -1):
            n = state.root
            while n is not None:
                nxt = state.nodes[n].edges.get(self.lab(lvl))
                if nxt is not None:
                    assert state.nodes[n].key < state.nodes[nxt].key, "skiplist unsorted"
                n = nxt


def make_structure(name: str, max_level: int = 3, seed: int = 0) -> SearchStructureDef:
    if name == "sorted-list":
        return SortedList()
    if name == "bst":
        return Bst()
    if name == "skiplist":
        return SkipList(max_level=max_level, seed=seed)
    raise ValueError(f"unknown structure {name!r}")


# -- relevant graph -----------------------------------------------------------


def relevant_graph(state: DagState, def_: SearchStructureDef, key: int):
    """R_k: the union of all root paths to the k-relevant nodes, returned
    as (nodes, edges)."""
    targets = def_.relevant_set(state, key)
    nodes: set[int] = set()
    edges: set[tuple[int, str, int]] = set()

    def walk(n, path, path_edges):
        if n in targets:
            nodes.update(path + [n])
            edges.update(path_edges)
        for lab, t in sorted(state.nodes[n].edges.items()):
            if t is not None and t not in path:
                walk(t, path + [n], path_edges + [(n, lab, t)])

    walk(state.root, [], [])
    return nodes, edges


def shortest_path_len(state: DagState, target: int) -> int | None:
    dist = {state.root: 0}
    queue = [state.root]
    while queue:
        n = queue.pop(0)
        if n == target:
            return dist[n]
        for t in state.nodes[n].edges.values():
            if t is not None and t not in dist:
                dist[t] = dist[n] + 1
                queue.append(t)
    return None


# -- direct sequential interpreter -------------------------------------------
#
# Independent of the concurrent machinery in `sync`: this is the oracle
# side of the dual route (sequential runs, the Sigma_IS state index, and
# local traces are all computed here).


def run_operation(def_: SearchStructureDef, state: DagState, op: Operation,
                  trace: list | None = None) -> bool:
    """Execute one operation to completion against `state`.

    Appends ("read", nid, snap) / ("write", nid, patch) records to `trace`
    when given.  Asserts the traverse-update and proper-traversal
    disciplines as it goes."""
    gop = Gop()
    while True:
        nxt = def_.tau(op, gop, state.root)
        if nxt is None:
            break
        if gop.order:
            known = {t for _, _, t in gop.known_edges()}
            assert nxt in known, "traversal left the explored frontier"
        rec = state.read(nxt)
        gop.visit(rec)
        if trace is not None:
            trace.append(("read", nxt, rec.snap()))
    plan = def_.plan_update(op, gop, state)
    for nid, patch in plan.writes:
        state.write_edges(nid, patch)
        if trace is not None:
            trace.append(("write", nid,
                          {lab: (f"n{t}" if t is not None else None)
                           for lab, t in patch.items()}))
    for nid in plan.unlink:
        state.nodes[nid].alive = False
    return plan.response


def sequential_run(def_: SearchStructureDef, ops: list[Operation],
                   proc: int = 0) -> tuple[DagState, list[bool], History]:
    """Run ops one at a time from the empty structure, recording a history.

    The produced history is legal by construction (reads return the store's
    current record); an explicit legality replay is asserted on top."""
    from .model import Event, OI, OR, RI, RR, WI, WR, OperationInstance, COMPLETE

    state = def_.new_state()
    events: list[Event] = []
    registry: dict[int, OperationInstance] = {}
    initial = state.snapshot()
    seq = 0

    def emit(**kw):
        nonlocal seq
        events.append(Event(seq=seq, **kw))
        seq += 1

    responses = []
    for i, op in enumerate(ops):
        inst = OperationInstance(id=i, proc=proc, name=op.name, key=op.key, val=op.val)
        registry[i] = inst
        emit(proc=proc, op=i, kind=OI, value=[op.name, op.key])
        trace: list = []
        resp = run_operation(def_, state, op, trace)
        wrote = False
        for entry in trace:
            role = state.role_of(entry[1])
            if entry[0] == "read":
                assert not wrote, "read after write inside one operation"
                emit(proc=proc, op=i, kind=RI, elem=role, nid=entry[1])
                emit(proc=proc, op=i, kind=RR, elem=role, value=entry[2], nid=entry[1])
            else:
                wrote = True
                emit(proc=proc, op=i, kind=WI, elem=role, value={"edges": entry[2]},
                     nid=entry[1])
                emit(proc=proc, op=i, kind=WR, elem=role, value="ok", nid=entry[1])
        emit(proc=proc, op=i, kind=OR, value=resp)
        inst.status, inst.response = COMPLETE, resp
        responses.append(resp)
        def_.audit(state)

    hist = History(events, registry, initial, def_.name)
    assert_legal(hist)
    return state, responses, hist


def assert_legal(h: History) -> None:
    """Every read returns the latest written record of its node.

    Nodes created during the history are private until linked; their first
    read defines their record for the rest of the replay."""
    store = {nid: dict(snap) for nid, snap in h.initial.items()}
    from .model import RR, WI
    for e in h.events:
        if e.kind == RR and not e.is_abort():
            if e.nid not in store:
                store[e.nid] = dict(e.value)
            else:
                assert store[e.nid] == e.value, \
                    f"illegal read of n{e.nid} at seq {e.seq}"
        elif e.kind == WI:
            store[e.nid]["edges"] = {**store[e.nid]["edges"], **e.value["edges"]}


_TRACE_CACHE: dict[tuple, tuple] = {}


def local_trace(def_: SearchStructureDef, state: DagState, op: Operation) -> tuple:
    """Canonical local read/write trace of `op` run on a copy of `state`.

    Node identities are replaced by first-appearance indexes so traces
    compare up to a consistent renaming.  Memoized per (structure, state
    shape, op): the oracle states never mutate once enumerated."""
    canon = getattr(state, "_canonical", None)
    key = None
    if canon is not None:
        key = (def_.fingerprint(), canon, op.name, op.key, op.val)
        hit = _TRACE_CACHE.get(key)
        if hit is not None:
            return hit
    trace: list = []
    st = state.clone()
    resp = run_operation(def_, st, op, trace)
    out = canonical_trace(trace, resp)
    if key is not None:
        _TRACE_CACHE[key] = out
    return out


def canonical_trace(entries: list, resp) -> tuple:
    """Node identities renamed by first appearance.  Read/write targets and
    edge pointers share the "n<id>" namespace, so following a pointer and
    then reading the pointed-to node stays the same node after renaming."""
    names: dict[object, int] = {}

    def sym(token):
        if token is None:
            return None
        if token not in names:
            names[token] = len(names)
        return names[token]

    out = []
    for entry in entries:
        if entry[0] == "read":
            snap = entry[2]
            out.append(("r", sym(f"n{entry[1]}"), snap["key"], snap["val"],
                        tuple((lab, sym(t)) for lab, t in sorted(snap["edges"].items()))))
        else:
            out.append(("w", sym(f"n{entry[1]}"),
                        tuple((lab, sym(t)) for lab, t in sorted(entry[2].items()))))
    out.append(("resp", resp))
    return tuple(out)


# -- Sigma_IS enumeration -----------------------------------------------------


class BudgetExceeded(Exception):
    pass


_STATE_CACHE: dict[tuple, list] = {}


def reachable_states(def_: SearchStructureDef, keys: tuple[int, ...],
                     max_ops: int, state_cap: int = 4000):
    """All concrete states reachable by <= max_ops operations, deduplicated
    by canonical shape.  Returns [(state, ops_path)] in BFS order."""
    cache_key = (def_.fingerprint(), tuple(keys), max_ops, state_cap)
    if cache_key in _STATE_CACHE:
        return _STATE_CACHE[cache_key]
    base = def_.new_state()
    out = [(base, [])]
    seen = {base.canonical()}
    frontier = [(base, [])]
    base._canonical = base.canonical()
    for _ in range(max_ops):
        nxt = []
        for state, path in frontier:
            for key in keys:
                for op in (Operation("insert", key), Operation("delete", key)):
                    st = state.clone()
                    run_operation(def_, st, op)
                    canon = st.canonical()
                    if canon in seen:
                        continue
                    if len(out) >= state_cap:
                        raise BudgetExceeded(f"state cap {state_cap} hit")
                    seen.add(canon)
                    st._canonical = canon
                    entry = (st, path + [op])
                    out.append(entry)
                    nxt.append(entry)
        frontier = nxt
    _STATE_CACHE[cache_key] = out
    return out


def enumerate_sequential_histories(def_: SearchStructureDef, keys: tuple[int, ...],
                                   max_ops: int, state_cap: int = 4000):
    """Stream the histories of IS over op sequences of length <= max_ops.

    Sequences whose end state was already visited are emitted but not
    extended (state memoization prunes the search without collapsing
    distinct histories).  Raises BudgetExceeded past `state_cap` states."""
    alphabet = [Operation(name, key) for key in keys
                for name in ("insert", "delete", "find")]
    base = def_.new_state()
    seen = {base.canonical()}
    _, _, hist0 = sequential_run(def_, [])
    yield hist0

    def extend(state, path):
        if len(path) >= max_ops:
            return
        for op in alphabet:
            st = state.clone()
            run_operation(def_, st, op)
            _, _, hist = sequential_run(def_, path + [op])
            yield hist
            canon = st.canonical()
            if canon in seen:
                continue
            if len(seen) >= state_cap:
                raise BudgetExceeded(f"state cap {state_cap} hit")
            seen.add(canon)
            yield from extend(st, path + [op])

    yield from extend(base, [])


# -- step programs ------------------------------------------------------------


@dataclass
class StepProgram:
    """An operation compiled against a structure: the traverse loop plus
    the update plan, materializable against any concrete state."""

    def_: SearchStructureDef
    op: Operation

    def steps_against(self, state: DagState) -> tuple[list[tuple], bool]:
        """(abstract steps, response) when run alone on a copy of `state`."""
        st = state.clone()
        trace: list = []
        resp = run_operation(self.def_, st, self.op, trace)
        steps = []
        for entry in trace:
            role = st.role_of(entry[1])
            steps.append(("read", role) if entry[0] == "read"
                         else ("write", role, entry[2]))
        return steps, resp


def compile_program(def_: SearchStructureDef, op: Operation) -> StepProgram:
    if op.name not in ("insert", "delete", "find"):
        raise ValueError(f"unknown operation {op.name!r}")
    return StepProgram(def_, op)


# -- non-triviality -----------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    key: int
    ops_to_g: tuple[Operation, ...]
    ops_to_g2: tuple[Operation, ...]


def non_triviality_witness(def_: SearchStructureDef) -> Witness:
    """A key and state where presence is detectable only at the last
    traversal step: G lacks k, G' = G + insert(k) has exactly one edge into
    the k node, and the edge's source sits >= 2 hops from the root.
    Verified by construction, never assumed."""
    for triple in _witness_candidates(def_):
        a, b, k = triple
        ops_g = (Operation("insert", a), Operation("insert", b))
        if _verify_witness(def_, k, ops_g):
            return Witness(k, ops_g, ops_g + (Operation("insert", k),))
    raise AssertionError(f"no non-triviality witness found for {def_.name}")


def _witness_candidates(def_: SearchStructureDef):
    if isinstance(def_, SkipList):
        singles = [k for k in range(1, 64) if def_.height(k) == 1]
        for i in range(len(singles) - 2):
            yield singles[i], singles[i + 1], singles[i + 2]
    else:
        for base in range(1, 8):
            yield base, base + 1, base + 2


def _verify_witness(def_: SearchStructureDef, key: int, ops_g) -> bool:
    state = def_.new_state()
    for op in ops_g:
        run_operation(def_, state, op)
    if state.find_alive(key) is not None:
        return False
    g2 = state.clone()
    run_operation(def_, g2, Operation("insert", key))
    knode = g2.find_alive(key)
    inbound = [(n, lab) for n, rec in g2.nodes.items() if rec.alive
               for lab, t in rec.edges.items() if t == knode]
    if len(inbound) != 1:
        return False
    src = inbound[0][0]
    depth = shortest_path_len(g2, src)
    return depth is not None and depth >= 2
