"""Spatial Distancing Index: per-cell proximity scores averaged over space and time."""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import EmptySeries
from .scenario import Rect, Scenario
from .simulator import SimConfig, SimResult, run

INSTANTANEOUS = "instantaneous"
RESIDUAL = "residual"


@dataclass(frozen=True)
class SdiParams:
    min_distance: float = 0.3
    max_distance: float = 1000.0
    air_exchange: float = 1.0
    cell_size: float = 1.0
    bounds: Rect | None = None
    mode: str = INSTANTANEOUS
    include_obstacles: bool = False
    sample_every: int = 1

    def __post_init__(self):
        if not 0 < self.min_distance < self.max_distance:
            raise ValueError("need 0 < min_distance < max_distance")
        if not 0 <= self.air_exchange <= 1:
            raise ValueError("air_exchange must be in [0, 1]")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be > 0")
        if self.mode not in (INSTANTANEOUS, RESIDUAL):
            raise ValueError(f"unknown accumulation mode {self.mode!r}")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")


@dataclass(frozen=True)
class CellGrid:
    """Regular lattice of cell centres. ``mask`` marks cells that count toward E(t)."""

    bounds: Rect
    cell_size: float
    nx: int
    ny: int
    mask: np.ndarray  # (ny, nx) bool

    @classmethod
    def for_bounds(cls, bounds: Rect, cell_size: float, obstacles=(), include_obstacles=False):
        nx = max(1, int(round(bounds.width / cell_size)))
        ny = max(1, int(round(bounds.height / cell_size)))
        grid = cls(bounds, cell_size, nx, ny, np.ones((ny, nx), dtype=bool))
        if not include_obstacles and obstacles:
            X, Y = grid.centers_2d()
            m = np.ones_like(X, dtype=bool)
            for o in obstacles:
                m &= ~((X > o.xmin) & (X < o.xmax) & (Y > o.ymin) & (Y < o.ymax))
            grid = replace(grid, mask=m)
        return grid

    @classmethod
    def for_scenario(cls, scenario: Scenario, params: SdiParams):
        b = params.bounds or scenario.floor
        return cls.for_bounds(b, params.cell_size, scenario.obstacles, params.include_obstacles)

    def centers_2d(self):
        xs = self.bounds.xmin + (np.arange(self.nx) + 0.5) * self.cell_size
        ys = self.bounds.ymin + (np.arange(self.ny) + 0.5) * self.cell_size
        return np.meshgrid(xs, ys)

    def centers(self):
        """Flattened ``(cx, cy)`` of the active cells in row-major (y, x) order."""
        X, Y = self.centers_2d()
        return np.ascontiguousarray(X[self.mask]), np.ascontiguousarray(Y[self.mask])

    @property
    def n_cells(self) -> int:
        return int(self.mask.sum())

    def to_matrix(self, flat_values) -> np.ndarray:
        out = np.full((self.ny, self.nx), np.nan)
        out[self.mask] = flat_values
        return out


@dataclass(frozen=True)
class SdiSeries:
    times: np.ndarray
    E: np.ndarray
    sdi: float
    occupancy_load: int
    cell_mean: np.ndarray | None = None  # (ny, nx) time-mean cell score
    grid: CellGrid | None = None

    def e_csv(self) -> str:
        rows = ["time_s,E"] + [f"{t:.3f},{e:.9f}" for t, e in zip(self.times, self.E)]
        return "\n".join(rows) + "\n"


def cell_agent_score(cell_center, agent_pos, params: SdiParams) -> float:
    w = float(np.hypot(cell_center[0] - agent_pos[0], cell_center[1] - agent_pos[1]))
    m, q = params.min_distance, params.max_distance
    if w < m:
        return 1.0
    if w > q:
        return 0.0
    return m / w


def cell_score(cell_center, agents, params: SdiParams, previous: float = 0.0) -> float:
    """Score of one cell for the agents present; ``previous`` is used in residual mode."""
    total = 0.0
    for p in agents:
        total += cell_agent_score(cell_center, p, params)
    if params.mode == RESIDUAL:
        return params.air_exchange * previous + total
    return params.air_exchange * total


def score_cells(grid: CellGrid, agents, params: SdiParams) -> np.ndarray:
    """Instantaneous scores for every active cell (flattened)."""
    cx, cy = grid.centers()
    a = np.asarray(agents, dtype=float).reshape(-1, 2)
    raw = _kernels.score_cells(cx, cy, np.ascontiguousarray(a[:, 0]), np.ascontiguousarray(a[:, 1]),
                               params.min_distance, params.max_distance)
    return params.air_exchange * raw


def environment_score(cell_scores) -> float:
    c = np.asarray(cell_scores, dtype=float)
    if c.size == 0:
        return 0.0
    return float(c.sum() / c.size)


def sdi(series) -> float:
    E = np.asarray(series, dtype=float)
    if E.size == 0:
        raise EmptySeries("SDI of an empty E(t) series")
    return float(E.mean())


def score_result(result: SimResult, grid: CellGrid, params: SdiParams, occupancy_load: int = 0) -> SdiSeries:
    """Score every (or every ``sample_every``-th) snapshot of a simulation run."""
    snaps = result.snapshots[:: params.sample_every]
    sub = SimResult(result.dt, result.duration, snaps, {}, 0, 0, 0, result.radius)
    offsets, ax, ay = sub.stacked_positions()
    cx, cy = grid.centers()
    E, cell_sum = _kernels.score_series(
        cx, cy, offsets, ax, ay, params.min_distance, params.max_distance,
        params.air_exchange, params.mode == RESIDUAL,
    )
    times = np.array([s.time for s in snaps])
    mean = grid.to_matrix(cell_sum / max(len(snaps), 1))
    return SdiSeries(times, E, sdi(E), occupancy_load, mean, grid)


def score_static(positions, grid: CellGrid, params: SdiParams) -> float:
    """SDI of a single frame of stationary agents."""
    return environment_score(score_cells(grid, positions, params))


def evaluate_sdi(scenario: Scenario, g, config: SimConfig, params: SdiParams) -> SdiSeries:
    result = run(scenario, g, config)
    grid = CellGrid.for_scenario(scenario, params)
    return score_result(result, grid, params, config.occupancy_load)


def derive_seed(master: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def occupancy_sweep(scenario: Scenario, g, config: SimConfig, params: SdiParams, loads) -> list:
    loads = list(loads)
    if not loads:
        raise ValueError("occupancy sweep needs at least one load")
    out = []
    for k, load in enumerate(loads):
        cfg = replace(config, occupancy_load=int(load), seed=derive_seed(config.seed, k))
        out.append(evaluate_sdi(scenario, g, cfg, params))
    return out


def heatmap_pixels(matrix) -> np.ndarray:
    """8-bit min-max normalisation over finite cells; NaN cells map to 0."""
    m = np.asarray(matrix, dtype=float)
    finite = np.isfinite(m)
    out = np.zeros(m.shape, dtype=np.uint8)
    if not finite.any():
        return out
    lo, hi = m[finite].min(), m[finite].max()
    if hi > lo:
        out[finite] = np.round((m[finite] - lo) / (hi - lo) * 255).astype(np.uint8)
    return out


def export_heatmap(matrix, path) -> tuple[Path, Path]:
    """Write ``<path>.pgm`` (binary P5, top row = highest y) and ``<path>.csv``."""
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".pgm", ".csv") else path
    m = np.flipud(np.asarray(matrix, dtype=float))
    px = heatmap_pixels(m)
    pgm = base.with_suffix(".pgm")
    with open(pgm, "wb") as fh:
        fh.write(f"P5\n{px.shape[1]} {px.shape[0]}\n255\n".encode("ascii"))
        fh.write(px.tobytes())
    csv = base.with_suffix(".csv")
    buf = io.StringIO()
    for row in m:
        buf.write(",".join("nan" if not np.isfinite(v) else f"{v:.9f}" for v in row) + "\n")
    csv.write_text(buf.getvalue())
    return pgm, csv


def read_heatmap_csv(path) -> np.ndarray:
    """Inverse of the CSV half of :func:`export_heatmap` (returns y-up orientation)."""
    rows = [[float(v) for v in line.split(",")] for line in Path(path).read_text().splitlines() if line]
    return np.flipud(np.array(rows))


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
