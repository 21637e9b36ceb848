"""Directional policy graphs over a fixed undirected skeleton.

A :class:`StructuralGraph` assigns one of four :class:`EdgeState` values to
every skeleton edge. The induced directed arcs drive edit distance,
strong-connectivity checks and mutation-based production of children.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyGraph, ExhaustedAttempts, SkeletonMismatch, UnknownNode

NODE_KINDS = ("entrance", "exit", "checkout", "junction")


class EdgeState(enum.Enum):
    BOTH = "both"
    FORWARD = "forward"
    BACKWARD = "backward"
    BLOCKED = "blocked"

    @property
    def arcs(self) -> frozenset:
        """Directed arcs as relative tokens: +1 is low->high, -1 is high->low."""
        return _ARC_TOKENS[self]

    def allows(self, forward: bool) -> bool:
        return (1 if forward else -1) in self.arcs


_ARC_TOKENS = {
    EdgeState.BOTH: frozenset({1, -1}),
    EdgeState.FORWARD: frozenset({1}),
    EdgeState.BACKWARD: frozenset({-1}),
    EdgeState.BLOCKED: frozenset(),
}

ALL_STATES = tuple(EdgeState)


def canonical(u: str, v: str) -> tuple[str, str]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Node:
    id: str
    pos: tuple[float, float]
    kind: str = "junction"


@dataclass(frozen=True)
class StructuralGraph:
    """Policy graph. ``skeleton[i]`` is a canonical pair with state ``states[i]``."""

    nodes: tuple[Node, ...]
    skeleton: tuple[tuple[str, str], ...]
    states: tuple[EdgeState, ...]

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node id")
        known = set(ids)
        seen = set()
        for u, v in self.skeleton:
            if u == v:
                raise ValueError(f"self-loop on node {u!r}")
            if (u, v) != canonical(u, v):
                raise ValueError(f"edge ({u!r}, {v!r}) not in canonical order")
            if (u, v) in seen:
                raise ValueError(f"duplicate skeleton edge ({u!r}, {v!r})")
            if u not in known or v not in known:
                raise ValueError(f"edge ({u!r}, {v!r}) references an unknown node")
            seen.add((u, v))
        if len(self.states) != len(self.skeleton):
            raise ValueError("states and skeleton lengths differ")

    @classmethod
    def build(cls, nodes: Iterable[Node], edges: Iterable[tuple[str, str, EdgeState]]):
        """Create a graph from edges in any endpoint order.

        A Forward/Backward state given for a non-canonical ``(u, v)`` is
        flipped so the stored state keeps its meaning of "u to v".
        """
        skel, states = [], []
        for u, v, s in edges:
            s = EdgeState(s)
            if (u, v) != canonical(u, v):
                s = flip(s)
                u, v = v, u
            skel.append((u, v))
            states.append(s)
        order = sorted(range(len(skel)), key=lambda i: skel[i])
        return cls(tuple(nodes), tuple(skel[i] for i in order), tuple(states[i] for i in order))

    # -- accessors ---------------------------------------------------------

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise UnknownNode(node_id)

    def nodes_of_kind(self, kind: str) -> list[str]:
        return sorted(n.id for n in self.nodes if n.kind == kind)

    def edge_index(self, u: str, v: str) -> int:
        try:
            return self.skeleton.index(canonical(u, v))
        except ValueError:
            raise KeyError(f"no skeleton edge between {u!r} and {v!r}") from None

    def state_of(self, u: str, v: str) -> EdgeState:
        return self.states[self.edge_index(u, v)]

    def allows(self, u: str, v: str) -> bool:
        """Whether the policy permits travel from ``u`` to ``v``."""
        return self.state_of(u, v).allows(u < v)

    def with_states(self, states: Sequence[EdgeState]) -> "StructuralGraph":
        return StructuralGraph(self.nodes, self.skeleton, tuple(states))

    def with_all(self, state: EdgeState) -> "StructuralGraph":
        return self.with_states([state] * len(self.skeleton))

    def arcs(self) -> list[tuple[str, str]]:
        out = []
        for (u, v), s in zip(self.skeleton, self.states):
            if 1 in s.arcs:
                out.append((u, v))
            if -1 in s.arcs:
                out.append((v, u))
        return out

    def adjacency(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for u, v in self.arcs():
            adj[u].append(v)
        return adj

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "pos": list(n.pos), "kind": n.kind} for n in self.nodes],
            "edges": [
                {"u": u, "v": v, "state": s.value} for (u, v), s in zip(self.skeleton, self.states)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StructuralGraph":
        nodes = [
            Node(str(n["id"]), (float(n["pos"][0]), float(n["pos"][1])), n.get("kind", "junction"))
            for n in data["nodes"]
        ]
        edges = [(str(e["u"]), str(e["v"]), EdgeState(e["state"])) for e in data["edges"]]
        return cls.build(nodes, edges)

    def to_dot(self, name: str = "policy") -> str:
        lines = [f"digraph {name} {{"]
        for n in self.nodes:
            x, y = n.pos
            lines.append(f'  "{n.id}" [label="{n.id}\\n{n.kind}", pos="{x:g},{y:g}!"];')
        for (u, v), s in zip(self.skeleton, self.states):
            if s is EdgeState.BLOCKED:
                lines.append(f'  "{u}" -> "{v}" [style=dotted, arrowhead=none];')
                continue
            for tok in sorted(s.arcs, reverse=True):
                a, b = (u, v) if tok == 1 else (v, u)
                lines.append(f'  "{a}" -> "{b}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def flip(s: EdgeState) -> EdgeState:
    if s is EdgeState.FORWARD:
        return EdgeState.BACKWARD
    if s is EdgeState.BACKWARD:
        return EdgeState.FORWARD
    return s


# -- distances ---------------------------------------------------------------


def edge_edit_distance(s1: EdgeState, s2: EdgeState) -> int:
    """Number of arc insertions/removals turning ``s1`` into ``s2``."""
    return len(s1.arcs ^ s2.arcs)


def graph_edit_distance(g1: StructuralGraph, g2: StructuralGraph) -> int:
    if g1.skeleton != g2.skeleton:
        raise SkeletonMismatch("graphs do not share a skeleton")
    return sum(edge_edit_distance(a, b) for a, b in zip(g1.states, g2.states))


# -- connectivity ------------------------------------------------------------


def _bfs(adj: dict[str, list[str]], start: str) -> set[str]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def reachable_set(g: StructuralGraph, v: str) -> set[str]:
    adj = g.adjacency()
    if v not in adj:
        raise UnknownNode(v)
    return _bfs(adj, v)


def is_strongly_connected(g: StructuralGraph) -> bool:
    if not g.nodes:
        raise EmptyGraph("graph has no nodes")
    adj = g.adjacency()
    radj: dict[str, list[str]] = {u: [] for u in adj}
    for u, vs in adj.items():
        for v in vs:
            radj[v].append(u)
    root = g.nodes[0].id
    n = len(adj)
    return len(_bfs(adj, root)) == n and len(_bfs(radj, root)) == n


# -- mutation / production ---------------------------------------------------


def randomize_state(s: EdgeState, rng: np.random.Generator) -> EdgeState:
    """Uniformly pick one of the three states other than ``s``."""
    others = [t for t in ALL_STATES if t is not s]
    return others[int(rng.integers(3))]


def produce(
    g: StructuralGraph,
    s: int,
    d: int,
    rng: np.random.Generator,
    max_attempts: int | None = None,
) -> list[StructuralGraph]:
    """Generate ``s`` distinct strongly connected children of ``g``.

    Each candidate is built by mutating uniformly chosen skeleton edges until
    the accumulated per-step edit cost reaches ``d``. Candidates whose net
    distance to ``g`` falls outside ``[d, d + 1]`` (possible when one edge
    is mutated twice), duplicates and disconnected graphs are discarded;
    every candidate counts against ``max_attempts`` (default ``1000 * s``).
    """
    if s < 1 or d < 1:
        raise ValueError("sibling count and edit-distance budget must be >= 1")
    if not g.skeleton:
        raise ExhaustedAttempts("graph has no skeleton edges to mutate", 0, 0)
    if max_attempts is None:
        max_attempts = 1000 * s
    k = len(g.skeleton)
    children: list[StructuralGraph] = []
    seen = {g.states}
    attempts = 0
    while len(children) < s:
        if attempts >= max_attempts:
            raise ExhaustedAttempts(
                f"found {len(children)} of {s} children in {attempts} attempts",
                len(children),
                attempts,
            )
        attempts += 1
        states = list(g.states)
        n_e = 0
        while n_e < d:
            i = int(rng.integers(k))
            new = randomize_state(states[i], rng)
            n_e += edge_edit_distance(states[i], new)
            states[i] = new
        key = tuple(states)
        if key in seen:
            continue
        dist = sum(edge_edit_distance(a, b) for a, b in zip(g.states, key))
        if not d <= dist <= d + 1:
            continue
        child = g.with_states(key)
        if not is_strongly_connected(child):
            continue
        seen.add(key)
        children.append(child)
    return children
