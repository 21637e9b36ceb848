"""Navigational graph generation and policy-compliant routing."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioInvalid, Unreachable, UnknownNode, UnreachableItem
from .policy import EdgeState, StructuralGraph, canonical, is_strongly_connected
from .scenario import Scenario, point_segment_projection

QUEUE_SPACING = 1.3
_TOL = 1e-9


@dataclass(frozen=True)
class NavNode:
    id: str
    pos: tuple[float, float]
    kind: str  # structural | waypoint | item | queue
    parent: object  # node id, canonical skeleton edge, or checkout id


@dataclass(frozen=True)
class Path:
    nodes: tuple[str, ...]
    length: float

    def __len__(self):
        return len(self.nodes)


class NavGraph:
    """Directed waypoint graph. Immutable after construction."""

    def __init__(self, nodes, arcs):
        self.nodes: tuple[NavNode, ...] = tuple(nodes)
        self.index = {n.id: i for i, n in enumerate(self.nodes)}
        if len(self.index) != len(self.nodes):
            raise ValueError("duplicate nav node id")
        self.pos = np.array([n.pos for n in self.nodes], dtype=float).reshape(-1, 2)
        self.arcs: tuple[tuple[str, str, float], ...] = tuple(arcs)
        self._length = {}
        n = len(self.nodes)
        adj = [[] for _ in range(n)]
        radj = [[] for _ in range(n)]
        for a, b, w in self.arcs:
            i, j = self.index[a], self.index[b]
            adj[i].append((j, w))
            radj[j].append((i, w))
            self._length[(a, b)] = w
        ids = [nd.id for nd in self.nodes]
        self._adj = [sorted(x, key=lambda t: ids[t[0]]) for x in adj]
        self._radj = radj
        self._from_cache = {}
        self._to_cache = {}
        self.item_nodes = {n.parent[1]: n.id for n in self.nodes if n.kind == "item"}

    @classmethod
    def from_points(cls, points: dict, arcs, kind="waypoint"):
        """Build a bare graph from ``{id: (x, y)}`` and ``(u, v)`` pairs; lengths are Euclidean."""
        nodes = [NavNode(k, tuple(map(float, p)), kind, None) for k, p in points.items()]
        out = []
        for u, v in arcs:
            (x0, y0), (x1, y1) = points[u], points[v]
            out.append((u, v, math.hypot(x1 - x0, y1 - y0)))
        return cls(nodes, out)

    def __len__(self):
        return len(self.nodes)

    def node(self, nav_id) -> NavNode:
        try:
            return self.nodes[self.index[nav_id]]
        except KeyError:
            raise UnknownNode(nav_id) from None

    def position(self, nav_id):
        return self.pos[self.index[nav_id]]

    def arc_length(self, u, v) -> float:
        return self._length[(u, v)]

    def has_arc(self, u, v) -> bool:
        return (u, v) in self._length

    # -- routing -----------------------------------------------------------

    def _dijkstra(self, src: int, adj) -> np.ndarray:
        dist = np.full(len(self.nodes), np.inf)
        dist[src] = 0.0
        heap = [(0.0, src)]
        done = np.zeros(len(self.nodes), dtype=bool)
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            for v, w in adj[u]:
                nd = d + w
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        return dist

    def distances_from(self, nav_id) -> np.ndarray:
        i = self._idx(nav_id)
        if i not in self._from_cache:
            self._from_cache[i] = self._dijkstra(i, self._adj)
        return self._from_cache[i]

    def distances_to(self, nav_id) -> np.ndarray:
        i = self._idx(nav_id)
        if i not in self._to_cache:
            self._to_cache[i] = self._dijkstra(i, self._radj)
        return self._to_cache[i]

    def distance(self, a, b) -> float:
        return float(self.distances_from(a)[self._idx(b)])

    def _idx(self, nav_id) -> int:
        try:
            return self.index[nav_id]
        except KeyError:
            raise UnknownNode(nav_id) from None

    def to_dot(self, name="nav") -> str:
        lines = [f"digraph {name} {{"]
        for n in self.nodes:
            lines.append(f'  "{n.id}" [kind={n.kind}, pos="{n.pos[0]:.4f},{n.pos[1]:.4f}!"];')
        for a, b, w in self.arcs:
            lines.append(f'  "{a}" -> "{b}" [len={w:.6f}];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["from,to,length"]
        rows += [f"{a},{b},{w:.9f}" for a, b, w in self.arcs]
        return "\n".join(rows) + "\n"


def shortest_path(h: NavGraph, src, dst) -> Path:
    """Minimum-length directed path; ties go to the lexicographically smallest id sequence."""
    si, ti = h._idx(src), h._idx(dst)
    if si == ti:
        return Path((), 0.0)
    D = h.distances_from(src)
    R = h.distances_to(dst)
    total = D[ti]
    if not np.isfinite(total):
        raise Unreachable(f"no directed path from {src!r} to {dst!r}")
    tol = _TOL * max(1.0, total)

    def on_route(u, v, w):
        return abs(D[u] + w - D[v]) <= tol and abs(D[v] + R[v] - total) <= tol

    # depth-first in id order over the shortest-path DAG; first hit is lexicographically smallest
    seq = [si]
    visited = {si}
    stack = [iter(h._adj[si])]
    while stack:
        u = seq[-1]
        for v, w in stack[-1]:
            if v not in visited and on_route(u, v, w):
                seq.append(v)
                visited.add(v)
                stack.append(iter(h._adj[v]))
                break
        else:
            stack.pop()
            seq.pop()
            continue
        if seq[-1] == ti:
            break
    ids = [h.nodes[i].id for i in seq]
    length = 0.0
    for a, b in zip(ids, ids[1:]):
        length += h.arc_length(a, b)
    return Path(tuple(ids), length)


def plan_tour(h: NavGraph, entrance, stops) -> Path:
    seq: list[str] = []
    length = 0.0
    cur = entrance
    h._idx(entrance)
    for k, stop in enumerate(stops):
        try:
            leg = shortest_path(h, cur, stop)
        except Unreachable as exc:
            raise Unreachable(str(exc), leg=k) from None
        if leg.nodes:
            seq.extend(leg.nodes if not seq else leg.nodes[1:])
        length += leg.length
        cur = stop
    return Path(tuple(seq), length)


def tour_length(h: NavGraph, entrance, stops) -> float:
    """Length of :func:`plan_tour` from cached distances only (inf when unreachable)."""
    total = 0.0
    cur = entrance
    for stop in stops:
        total += h.distance(cur, stop)
        cur = stop
    return total


# -- populate ----------------------------------------------------------------


def waypoint_id(u, v, k):
    return f"wp:{u}|{v}:{k}"


def _chain_arcs(chain, pos, state: EdgeState):
    arcs = []
    for a, b in zip(chain, chain[1:]):
        (x0, y0), (x1, y1) = pos[a], pos[b]
        w = math.hypot(x1 - x0, y1 - y0)
        if state.allows(True):
            arcs.append((a, b, w))
        if state.allows(False):
            arcs.append((b, a, w))
    return arcs


def queue_slot_positions(scenario: Scenario, checkout, count: int) -> list[tuple[float, float]]:
    """Queue slot centres behind ``checkout`` along its queue direction.

    The line folds back on a parallel lane (offset to its right) when the next
    slot would leave the walkable floor; once no lane fits, the last slot repeats.
    """
    x, y = scenario.structural.node(checkout.node).pos
    dx, dy = checkout.queue_dir
    norm = math.hypot(dx, dy)
    dx, dy = dx / norm, dy / norm
    out = []
    px, py = x, y
    folds = 0
    while len(out) < count:
        nx, ny = px + QUEUE_SPACING * dx, py + QUEUE_SPACING * dy
        if scenario.walkable((nx, ny)):
            out.append((nx, ny))
            px, py = nx, ny
            continue
        lx, ly = px + QUEUE_SPACING * dy, py - QUEUE_SPACING * dx
        if folds > 64 or not out or not scenario.walkable((lx, ly)):
            out.extend([out[-1] if out else (x, y)] * (count - len(out)))
            break
        out.append((lx, ly))
        px, py = lx, ly
        dx, dy = -dx, -dy
        folds += 1
    return out


def populate(g: StructuralGraph, scenario: Scenario, spacing: float | None = None, queue_slots=None) -> NavGraph:
    """Expand a structural graph into the directed navigational graph.

    Structural nodes are inherited; each non-blocked skeleton edge becomes a
    chain of uniformly spaced waypoints with item nodes inserted at their
    projection onto the centreline, linked in the permitted direction(s).
    Checkout queue slots hang off each checkout node as a two-way chain.
    """
    if g.skeleton != scenario.structural.skeleton:
        raise ScenarioInvalid("graph skeleton differs from the scenario skeleton", "structural")
    if not is_strongly_connected(g):
        raise ScenarioInvalid("structural graph is not strongly connected", "structural")
    spacing = scenario.sim_params.waypoint_spacing if spacing is None else spacing
    if spacing <= 0:
        raise ScenarioInvalid("waypoint spacing must be > 0", "sim_params.waypoint_spacing")
    nodes = [NavNode(n.id, n.pos, "structural", n.id) for n in g.nodes]
    pos = {n.id: n.pos for n in g.nodes}
    arcs = []
    items_by_edge: dict = {}
    for it in scenario.items:
        items_by_edge.setdefault(canonical(*it.edge), []).append(it)
    for (u, v), state in zip(g.skeleton, g.states):
        edge_items = items_by_edge.get((u, v), [])
        if state is EdgeState.BLOCKED:
            if edge_items:
                raise UnreachableItem(f"item {edge_items[0].id!r} sits on blocked edge ({u}, {v})")
            continue
        a, b = pos[u], pos[v]
        L = math.hypot(b[0] - a[0], b[1] - a[1])
        n_w = max(0, math.ceil(L / spacing - 1e-9) - 1)
        inner = []
        for k in range(1, n_w + 1):
            t = k / (n_w + 1)
            inner.append((t, 0, waypoint_id(u, v, k), (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))))
        for it in edge_items:
            t, _ = point_segment_projection(it.pos, a, b)
            inner.append((t, 1, f"item:{it.id}", (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))))
        inner.sort(key=lambda r: (r[0], r[1], r[2]))
        for t, is_item, nid, p in inner:
            kind = "item" if is_item else "waypoint"
            parent = ((u, v), nid[5:]) if is_item else (u, v)
            nodes.append(NavNode(nid, p, kind, parent))
            pos[nid] = p
        chain = [u] + [r[2] for r in inner] + [v]
        arcs.extend(_chain_arcs(chain, pos, state))
    count = scenario.sim_params.occupancy_load if queue_slots is None else queue_slots
    for c in scenario.checkouts:
        prev = c.node
        for k, p in enumerate(queue_slot_positions(scenario, c, count), start=1):
            qid = f"q:{c.node}:{k}"
            nodes.append(NavNode(qid, p, "queue", c.node))
            pos[qid] = p
            arcs.extend(_chain_arcs([prev, qid], pos, EdgeState.BOTH))
            prev = qid
    return NavGraph(nodes, arcs)


def arc_parent_edge(h: NavGraph, u, v):
    """Skeleton edge an arc belongs to, or ``None`` for queue arcs."""
    for nid in (u, v):
        n = h.node(nid)
        if n.kind == "waypoint":
            return n.parent
        if n.kind == "item":
            return n.parent[0]
    nu, nv = h.node(u), h.node(v)
    if nu.kind == "structural" and nv.kind == "structural":
        return canonical(u, v)
    return None
