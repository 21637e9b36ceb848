import math

import numpy as np
import pytest

from navpolicy.errors import EmptySeries
from navpolicy.scenario import Rect, load_bundled
from navpolicy.sdi import (
    CellGrid,
    SdiParams,
    cell_agent_score,
    cell_score,
    environment_score,
    evaluate_sdi,
    export_heatmap,
    heatmap_pixels,
    occupancy_sweep,
    read_heatmap_csv,
    read_pgm,
    score_cells,
    score_result,
    score_static,
    sdi,
)
from navpolicy.simulator import SimConfig, SimResult, Snapshot

P = SdiParams()


def naive_series(centers, frames, m, q, h, residual):
    """Plain double loop over cells x agents, one frame at a time."""
    prev = [0.0] * len(centers)
    E = []
    for agents in frames:
        cur = []
        for i, (cx, cy) in enumerate(centers):
            s = 0.0
            for ax, ay in agents:
                w = math.sqrt((cx - ax) ** 2 + (cy - ay) ** 2)
                if w < m:
                    s += 1.0
                elif w <= q:
                    s += m / w
            cur.append(h * prev[i] + s if residual else h * s)
        prev = cur
        E.append(sum(cur) / len(cur))
    return E


def fake_result(frames):
    snaps = []
    for t, agents in enumerate(frames):
        pos = np.array(agents, dtype=float).reshape(-1, 2)
        snaps.append(Snapshot(t, t * 0.1, np.arange(len(agents)), pos, ("Shopping",) * len(agents)))
    return SimResult(0.1, 0.1 * (len(frames) - 1), snaps, {}, 0, 0, 0)


# -- per-cell scoring -------------------------------------------------------------


def test_cell_agent_examples():
    assert cell_agent_score((0, 0), (0.1, 0), P) == 1.0
    assert cell_agent_score((0, 0), (1500, 0), P) == 0.0
    assert cell_agent_score((0, 0), (3.0, 0), P) == pytest.approx(0.1)
    # boundaries: w == m scores m/m, w == q still counts
    assert cell_agent_score((0, 0), (0.3, 0), P) == pytest.approx(1.0)
    assert cell_agent_score((0, 0), (1000.0, 0), P) == pytest.approx(0.3 / 1000)


def test_cell_score_examples():
    assert cell_score((0, 0), [], P) == 0.0
    assert cell_score((0, 0), [(0, 0)], P) == 1.0
    half = SdiParams(air_exchange=0.5)
    assert cell_score((0, 0), [(0.1, 0), (0, 0.2)], half) == pytest.approx(1.0)


def test_residual_carry_over():
    r = SdiParams(mode="residual", air_exchange=0.5)
    assert cell_score((0, 0), [(0, 0)], r, previous=2.0) == pytest.approx(2.0)
    r0 = SdiParams(mode="residual", air_exchange=0.0)
    assert cell_score((0, 0), [(0, 0)], r0, previous=5.0) == pytest.approx(1.0)


def test_environment_examples():
    assert environment_score(np.zeros(9)) == 0.0
    grid = CellGrid.for_bounds(Rect(0, 0, 2, 2), 1.0)
    assert grid.n_cells == 4
    # centres at (0.5,0.5)...(1.5,1.5): all within 0.71 m, so use m = 1
    p = SdiParams(min_distance=1.0)
    assert environment_score(score_cells(grid, [(1.0, 1.0)], p)) == pytest.approx(1.0)
    assert environment_score(np.full(7, 0.25)) == pytest.approx(0.25)


def test_sdi_examples():
    assert sdi([1, 1, 1]) == 1.0
    assert sdi([0, 2]) == 1.0
    with pytest.raises(EmptySeries):
        sdi([])


def test_bad_params():
    with pytest.raises(ValueError):
        SdiParams(min_distance=2.0, max_distance=1.0)
    with pytest.raises(ValueError):
        SdiParams(air_exchange=1.5)
    with pytest.raises(ValueError):
        SdiParams(mode="bogus")


# -- engine vs naive oracle ----------------------------------------------------------


@pytest.mark.parametrize("trial", range(5))
@pytest.mark.parametrize("mode", ["instantaneous", "residual"])
def test_engine_matches_naive_micro(trial, mode):
    rng = np.random.default_rng(trial)
    nx, ny = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    cs = float(rng.uniform(0.5, 2.0))
    grid = CellGrid.for_bounds(Rect(0, 0, nx * cs, ny * cs), cs)
    assert grid.n_cells <= 4
    m = float(rng.uniform(0.1, 1.0))
    params = SdiParams(min_distance=m, max_distance=float(rng.uniform(m + 0.1, 5)),
                       air_exchange=float(rng.uniform(0, 1)), cell_size=cs, mode=mode)
    frames = [[tuple(rng.uniform(-1, 4, 2)) for _ in range(int(rng.integers(0, 4)))] for _ in range(6)]
    got = score_result(fake_result(frames), grid, params)
    cx, cy = grid.centers()
    want = naive_series(list(zip(cx, cy)), frames, params.min_distance, params.max_distance,
                        params.air_exchange, mode == "residual")
    np.testing.assert_allclose(got.E, want, rtol=1e-9, atol=1e-12)
    assert got.sdi == pytest.approx(float(np.mean(want)), rel=1e-9)


def test_engine_matches_naive_large():
    rng = np.random.default_rng(99)
    grid = CellGrid.for_bounds(Rect(0, 0, 20, 15), 1.0)
    frames = [[tuple(rng.uniform(0, 20, 2)) for _ in range(30)] for _ in range(4)]
    got = score_result(fake_result(frames), grid, P)
    cx, cy = grid.centers()
    want = naive_series(list(zip(cx, cy)), frames, 0.3, 1000.0, 1.0, False)
    np.testing.assert_allclose(got.E, want, rtol=1e-9)


def test_scale_properties():
    grid = CellGrid.for_bounds(Rect(0, 0, 3, 3), 1.0)
    far = SdiParams(max_distance=5.0)
    assert score_static([(500, 500)], grid, far) == 0.0
    near = SdiParams(min_distance=10.0, max_distance=20.0)
    assert score_static([(1.5, 1.5)] * 4, grid, near) == pytest.approx(4.0)


def test_adding_agent_never_decreases_cells():
    rng = np.random.default_rng(5)
    grid = CellGrid.for_bounds(Rect(0, 0, 10, 10), 1.0)
    agents = [tuple(rng.uniform(0, 10, 2)) for _ in range(10)]
    base = score_cells(grid, agents, P)
    more = score_cells(grid, agents + [tuple(rng.uniform(0, 10, 2))], P)
    assert np.all(more >= base)


def test_residual_h0_equals_instantaneous_h1():
    rng = np.random.default_rng(2)
    grid = CellGrid.for_bounds(Rect(0, 0, 5, 5), 1.0)
    frames = [[tuple(rng.uniform(0, 5, 2)) for _ in range(3)] for _ in range(8)]
    res = fake_result(frames)
    a = score_result(res, grid, SdiParams(mode="residual", air_exchange=0.0))
    b = score_result(res, grid, SdiParams(mode="instantaneous", air_exchange=1.0))
    np.testing.assert_allclose(a.E, b.E, rtol=0, atol=0)


def test_obstacle_cells_masked():
    sc = load_bundled("retail")
    grid = CellGrid.for_scenario(sc, P)
    full = CellGrid.for_scenario(sc, SdiParams(include_obstacles=True))
    assert full.n_cells == 22 * 19
    # 3x3 m shelves on half-metre offsets: centres on the rim are outside, 2x2 per shelf inside
    assert grid.n_cells == full.n_cells - 6 * 4


# -- runs ---------------------------------------------------------------------------


def test_no_spawn_is_zero():
    sc = load_bundled("retail")
    cfg = SimConfig.from_scenario(sc, seed=0, occupancy_load=0, duration=2.0)
    s = evaluate_sdi(sc, None, cfg, P)
    assert s.sdi == 0.0
    assert len(s.E) == cfg.n_ticks + 1


def test_evaluate_deterministic():
    sc = load_bundled("line")
    cfg = SimConfig.from_scenario(sc, seed=3)
    a, b = evaluate_sdi(sc, None, cfg, P), evaluate_sdi(sc, None, cfg, P)
    assert a.e_csv() == b.e_csv()
    assert a.e_csv().splitlines()[0] == "time_s,E"


def test_sweep_single_equals_evaluate():
    from dataclasses import replace

    from navpolicy.sdi import derive_seed

    sc = load_bundled("line")
    cfg = SimConfig.from_scenario(sc, seed=4)
    [s] = occupancy_sweep(sc, None, cfg, P, [3])
    direct = evaluate_sdi(sc, None, replace(cfg, occupancy_load=3, seed=derive_seed(4, 0)), P)
    assert s.sdi == direct.sdi
    with pytest.raises(ValueError):
        occupancy_sweep(sc, None, cfg, P, [])


@pytest.mark.slow
def test_open_floor_sweep_non_decreasing():
    sc = load_bundled("open_floor")
    series = occupancy_sweep(sc, None, SimConfig.from_scenario(sc, seed=0), P, [10, 50, 100])
    vals = [s.sdi for s in series]
    assert vals[0] <= vals[1] <= vals[2]


# -- heatmaps -------------------------------------------------------------------------


def test_heatmap_zero_and_single_hot(tmp_path):
    z = np.zeros((3, 4))
    pgm, _ = export_heatmap(z, tmp_path / "z")
    assert not read_pgm(pgm).any()
    hot = np.zeros((3, 4))
    hot[1, 2] = 5.0
    pgm, _ = export_heatmap(hot, tmp_path / "h")
    px = read_pgm(pgm)
    assert (px == 255).sum() == 1
    # image rows run top (highest y) to bottom
    assert px[3 - 1 - 1, 2] == 255
    assert read_pgm(pgm).shape == (3, 4)
    assert pgm.read_bytes().startswith(b"P5\n4 3\n255\n")


def test_heatmap_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.uniform(0, 3, (5, 7))
    m[0, 0] = np.nan
    _, csv = export_heatmap(m, tmp_path / "m.pgm")
    back = read_heatmap_csv(csv)
    np.testing.assert_allclose(back, m, atol=5e-7, equal_nan=True)


def test_heatmap_pixels_linear():
    px = heatmap_pixels(np.array([[0.0, 0.5, 1.0]]))
    assert px.tolist() == [[0, 128, 255]]
