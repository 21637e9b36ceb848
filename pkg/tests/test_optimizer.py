import math

import numpy as np
import pytest

from navpolicy.optimizer import (
    OptimizerConfig,
    OptimizerState,
    accept_decision,
    acceptance_probability,
    converged,
    evaluate,
    optimize,
    static_distance,
)
from navpolicy.policy import EdgeState, graph_edit_distance, is_strongly_connected
from navpolicy.scenario import load_bundled, scenario_from_dict


def two_node():
    return scenario_from_dict({
        "floor": [-1, -1, 5, 2],
        "obstacles": [],
        "structural": {
            "nodes": [{"id": "A", "pos": [0, 0], "kind": "entrance"}, {"id": "B", "pos": [4, 0], "kind": "exit"}],
            "edges": [{"u": "A", "v": "B", "state": "both"}],
        },
        "items": [{"id": "I", "pos": [2, 0.5], "edge": ["A", "B"]}],
        "checkouts": [{"node": "B", "queue_dir": [0, 1]}],
        "sim_params": {"list_length": [1, 1], "occupancy_load": 2, "duration": 5},
    })


# -- acceptance rule ---------------------------------------------------------------


def test_accept_never_when_a_zero():
    rng = np.random.default_rng(0)
    assert not any(accept_decision(n, 0.0, rng) for n in range(1, 2000))


def test_accept_frequency_n1():
    rng = np.random.default_rng(1)
    n = 100_000
    hits = sum(accept_decision(1, 1.0, rng) for _ in range(n))
    assert abs(hits / n - math.exp(-1)) <= 0.01


def test_accept_frequency_large_n():
    rng = np.random.default_rng(2)
    n = 100_000
    hits = sum(accept_decision(10 ** 6, 1.0, rng) for _ in range(n))
    assert abs(hits / n - 1.0) <= 0.001


def test_accept_n0_uses_n1_value():
    assert acceptance_probability(0, 0.7) == acceptance_probability(1, 0.7) == pytest.approx(0.7 * math.exp(-1))
    with pytest.raises(ValueError):
        accept_decision(-1, 1.0, np.random.default_rng(0))


def test_accept_consumes_one_draw():
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    accept_decision(3, 0.5, a)
    b.random()
    assert a.random() == b.random()


# -- convergence -----------------------------------------------------------------


def _state(scores, w):
    st = OptimizerState(None, scores[0] if scores else 0.0)
    for s in scores:
        st.record(s, w)
    return st


def test_not_converged_before_window():
    st = _state([5.0] * 19, 20)
    assert not converged(st, 20, 1e-5)


def test_constant_scores_converge():
    st = _state([5.0] * 40, 20)
    assert converged(st, 20, 1e-5)
    # exactly w entries: windowed means not both set yet
    assert not converged(_state([5.0] * 20, 20), 20, 1e-5)


def test_relative_change_substitution():
    st = OptimizerState(None, 0.0, S=[1.0] * 30, m0=100.0005, m_prev=100.0, n=30)
    assert converged(st, 20, 1e-5)
    st = OptimizerState(None, 0.0, S=[1.0] * 30, m0=100.01, m_prev=100.0, n=30)
    assert not converged(st, 20, 1e-5)


def test_zero_previous_mean_guard():
    assert converged(OptimizerState(None, 0.0, S=[0.0] * 30, m0=0.0, m_prev=0.0, n=30), 20, 1e-5)
    assert not converged(OptimizerState(None, 0.0, S=[0.0] * 30, m0=0.1, m_prev=0.0, n=30), 20, 1e-5)


def test_windowed_means():
    S = list(np.arange(1.0, 26.0))
    st = _state(S, 20)
    assert st.m0 == pytest.approx(np.mean(S[-20:]))
    assert st.m_prev == pytest.approx(np.mean(S[-21:-1]))


def test_config_validation():
    for bad in (dict(children=0), dict(edit_distance=0), dict(window=1), dict(threshold=0),
                dict(sa_scalar=1.5), dict(objective="nope")):
        with pytest.raises(ValueError):
            OptimizerConfig(**bad)


# -- objective -------------------------------------------------------------------


def test_static_distance_line_is_seven():
    sc = load_bundled("line")
    assert static_distance(sc.structural, sc, [("E", ["I1", "I2"])]) == pytest.approx(7.0)


def test_sdi_no_spawn_is_zero():
    sc = load_bundled("retail")
    cfg = OptimizerConfig(objective="sdi", occupancy_load=0, duration=2.0)
    assert evaluate(sc.structural, sc, cfg, seed=1) == 0.0


def test_evaluate_deterministic():
    sc = load_bundled("line")
    for obj in ("sdi", "simulated-distance", "static-distance"):
        cfg = OptimizerConfig(objective=obj, duration=10.0)
        assert evaluate(sc.structural, sc, cfg, 7) == evaluate(sc.structural, sc, cfg, 7)


def test_infeasible_child_scores_inf():
    sc = load_bundled("retail")
    st = list(sc.structural.states)
    i = sc.structural.skeleton.index(("n00", "n10"))  # stocked perimeter edge
    st[i] = EdgeState.BLOCKED
    g = sc.structural.with_states(st)
    assert is_strongly_connected(g)
    for obj in ("sdi", "static-distance"):
        assert evaluate(g, sc, OptimizerConfig(objective=obj, duration=1.0), 0) == math.inf


# -- loop --------------------------------------------------------------------------


def test_cap_zero_returns_input():
    sc = load_bundled("grid3x3")
    res = optimize(sc.structural, sc, OptimizerConfig(objective="static-distance", max_generations=0))
    assert res.best == sc.structural
    assert res.history == []


def test_static_grid_run_invariants():
    sc = load_bundled("grid3x3")
    cfg = OptimizerConfig(objective="static-distance", max_generations=50, seed=3)
    res = optimize(sc.structural, sc, cfg)
    assert res.best_score <= res.initial_score
    prev = res.initial_score
    prev_parent = sc.structural
    for r in res.history:
        assert len(r.children) == cfg.children
        assert r.parent == prev_parent
        assert is_strongly_connected(r.parent)
        for c in r.children:
            assert is_strongly_connected(c)
            assert graph_edit_distance(r.parent, c) in (cfg.edit_distance, cfg.edit_distance + 1)
        assert r.best_child_score == min(r.scores)
        if r.accepted:
            assert r.parent_score == r.best_child_score
            prev_parent = r.best_child
        else:
            assert r.parent_score == prev
        prev = r.parent_score
    assert res.accepted_scores == [r.parent_score for r in res.history]


def test_replay_identical():
    sc = load_bundled("grid3x3")
    cfg = OptimizerConfig(objective="static-distance", max_generations=15, seed=8)
    a, b = optimize(sc.structural, sc, cfg), optimize(sc.structural, sc, cfg)
    assert a.convergence_csv() == b.convergence_csv()
    assert a.children_csv() == b.children_csv()
    assert a.convergence_csv().splitlines()[0] == (
        "generation,parent_score,best_child_score,min_child,max_child,accepted")


def test_workers_do_not_change_results():
    sc = load_bundled("retail")
    base = dict(objective="simulated-distance", max_generations=2, duration=2.0, seed=1, children=2)
    a = optimize(sc.structural, sc, OptimizerConfig(workers=1, **base))
    b = optimize(sc.structural, sc, OptimizerConfig(workers=2, **base))
    assert a.convergence_csv() == b.convergence_csv()


def test_exhausted_attempts_aborts_with_history():
    sc = two_node()
    res = optimize(sc.structural, sc, OptimizerConfig(objective="static-distance", max_generations=5))
    assert res.aborted is not None
    assert res.history == []
    assert res.best == sc.structural
