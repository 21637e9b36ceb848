import itertools

import numpy as np
import pytest

from navpolicy.policy import EdgeState, Node, StructuralGraph

B, F, K, X = EdgeState.BOTH, EdgeState.FORWARD, EdgeState.BACKWARD, EdgeState.BLOCKED


def make_graph(n_nodes, edges, states=None):
    """Nodes n0..n{k} on a circle; ``edges`` are index pairs."""
    ang = np.linspace(0, 2 * np.pi, n_nodes, endpoint=False)
    nodes = [Node(f"n{i}", (float(5 * np.cos(a)), float(5 * np.sin(a)))) for i, a in enumerate(ang)]
    states = states or [B] * len(edges)
    return StructuralGraph.build(nodes, [(f"n{u}", f"n{v}", s) for (u, v), s in zip(edges, states)])


def cycle(n, states=None):
    return make_graph(n, [(i, (i + 1) % n) for i in range(n)], states)


def all_assignments(g):
    for combo in itertools.product(list(EdgeState), repeat=len(g.skeleton)):
        yield g.with_states(combo)


def brute_reachable(g, src):
    """Transitive closure by repeated relaxation over the explicit directed arc list."""
    arcs = g.arcs()
    seen = {src}
    changed = True
    while changed:
        changed = False
        for a, b in arcs:
            if a in seen and b not in seen:
                seen.add(b)
                changed = True
    return seen


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
