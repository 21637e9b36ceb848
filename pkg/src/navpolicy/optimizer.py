"""Mutation-based generation search with probabilistic acceptance of the best child."""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ExhaustedAttempts, Unreachable, UnreachableItem
from .navgraph import populate, tour_length
from .policy import StructuralGraph, graph_edit_distance, produce
from .scenario import Scenario
from .sdi import SdiParams, derive_seed, evaluate_sdi
from .simulator import SimConfig, run, total_travel_distance

OBJECTIVES = ("sdi", "static-distance", "simulated-distance")

# spawn-key tags separating the independent random streams of one run
_PRODUCE, _DECIDE, _EVAL, _LISTS = 0, 1, 2, 3


@dataclass(frozen=True)
class OptimizerConfig:
    children: int = 5
    edit_distance: int = 1
    window: int = 20
    threshold: float = 1e-5
    sa_scalar: float = 1.0
    max_generations: int = 200
    seed: int = 0
    objective: str = "sdi"
    occupancy_load: int | None = None
    duration: float | None = None
    n_lists: int = 50
    include_checkout_legs: bool = False
    workers: int = 1
    sdi: SdiParams = field(default_factory=SdiParams)

    def __post_init__(self):
        if self.children < 1:
            raise ValueError("children must be >= 1")
        if self.edit_distance < 1:
            raise ValueError("edit_distance must be >= 1")
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0")
        if not 0 <= self.sa_scalar <= 1:
            raise ValueError("sa_scalar must be in [0, 1]")
        if self.max_generations < 0:
            raise ValueError("max_generations must be >= 0")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}; choose from {OBJECTIVES}")


@dataclass(frozen=True)
class GenerationRecord:
    n: int
    parent: StructuralGraph
    children: tuple
    scores: tuple
    best_child_score: float
    accepted: bool
    parent_score: float

    @property
    def best_child(self) -> StructuralGraph:
        return self.children[int(np.argmin(self.scores))]


@dataclass
class OptimizerState:
    parent: StructuralGraph
    parent_score: float
    S: list = field(default_factory=list)
    m0: float | None = None
    m_prev: float | None = None
    n: int = 0

    def record(self, score: float, window: int):
        """Append a generation's parent score and roll the windowed means."""
        self.S.append(score)
        self.n += 1
        if self.n > window:
            self.m_prev = self.m0
            self.m0 = float(np.mean(self.S[-window:]))


# -- objective ---------------------------------------------------------------


def shopping_lists(scenario: Scenario, n: int, seed: int) -> list:
    """Fixed ``(entrance, [item ids])`` sample shared by every candidate in a run."""
    rng = np.random.default_rng(derive_seed(seed, _LISTS))
    lo, hi = scenario.sim_params.list_length
    ents = scenario.entrances
    ids = [it.id for it in scenario.items]
    out = []
    for _ in range(n):
        e = ents[int(rng.integers(len(ents)))]
        k = int(rng.integers(lo, hi + 1))
        out.append((e, [ids[i] for i in rng.choice(len(ids), size=k, replace=False)]))
    return out


def static_distance(g: StructuralGraph, scenario: Scenario, lists, include_checkout_legs=False) -> float:
    try:
        h = populate(g, scenario)
    except UnreachableItem:
        return math.inf
    total = 0.0
    for entrance, items in lists:
        stops = [h.item_nodes[i] for i in items]
        leg = tour_length(h, entrance, stops)
        if include_checkout_legs:
            last = stops[-1] if stops else entrance
            leg += min(h.distance(last, c.node) + min(h.distance(c.node, x) for x in scenario.exits)
                       for c in scenario.checkouts)
        total += leg
    return total if np.isfinite(total) else math.inf


def evaluate(g: StructuralGraph, scenario: Scenario, config: OptimizerConfig, seed: int, lists=None) -> float:
    """Score one candidate policy (lower is better); infeasible policies score +inf."""
    if config.objective == "static-distance":
        if lists is None:
            lists = shopping_lists(scenario, config.n_lists, config.seed)
        return static_distance(g, scenario, lists, config.include_checkout_legs)
    sim = SimConfig.from_scenario(scenario, seed=seed, occupancy_load=config.occupancy_load,
                                  duration=config.duration)
    try:
        if config.objective == "sdi":
            return evaluate_sdi(scenario, g, sim, config.sdi).sdi
        return total_travel_distance(run(scenario, g, sim))
    except (UnreachableItem, Unreachable):
        return math.inf


def _evaluate_task(args):
    return evaluate(*args)


# -- decision rules ----------------------------------------------------------


def acceptance_probability(n: int, a: float) -> float:
    return a * math.exp(-1.0 / max(n, 1))


def accept_decision(n: int, a: float, rng: np.random.Generator) -> bool:
    """One uniform draw per call; true with probability ``a * exp(-1/n)`` (n=0 uses n=1)."""
    if n < 0:
        raise ValueError("generation index must be >= 0")
    return bool(rng.random() < acceptance_probability(n, a))


def converged(state: OptimizerState, window: int, threshold: float) -> bool:
    if state.n < window or state.m0 is None or state.m_prev is None:
        return False
    if state.m_prev == 0:
        return state.m0 == 0
    return abs(state.m0 - state.m_prev) / abs(state.m_prev) <= threshold


# -- main loop ---------------------------------------------------------------


@dataclass
class OptimizeResult:
    best: StructuralGraph
    best_score: float
    initial_score: float
    history: list
    aborted: ExhaustedAttempts | None = None

    def convergence_csv(self) -> str:
        buf = io.StringIO()
        buf.write("generation,parent_score,best_child_score,min_child,max_child,accepted\n")
        for r in self.history:
            finite = [s for s in r.scores if math.isfinite(s)]
            hi = max(finite) if finite else math.inf
            buf.write(f"{r.n},{_fmt(r.parent_score)},{_fmt(r.best_child_score)},"
                      f"{_fmt(min(r.scores))},{_fmt(hi)},{int(r.accepted)}\n")
        return buf.getvalue()

    def children_csv(self) -> str:
        buf = io.StringIO()
        buf.write("generation,child,score,edit_distance\n")
        for r in self.history:
            for k, (c, s) in enumerate(zip(r.children, r.scores)):
                buf.write(f"{r.n},{k},{_fmt(s)},{graph_edit_distance(r.parent, c)}\n")
        return buf.getvalue()

    @property
    def accepted_scores(self) -> list:
        return [r.parent_score for r in self.history]


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.9f}"


def optimize(g0: StructuralGraph, scenario: Scenario, config: OptimizerConfig, log=None) -> OptimizeResult:
    """Run the generation loop until converged or ``max_generations``.

    Children of generation ``n`` are evaluated with seeds derived from
    ``(seed, n, child index)``, so worker count never changes the outcome.
    An :class:`ExhaustedAttempts` from production stops the run; the partial
    history is returned with ``aborted`` set.
    """
    scenario = scenario.with_graph(g0)
    produce_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_PRODUCE,)))
    decide_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_DECIDE,)))
    lists = shopping_lists(scenario, config.n_lists, config.seed) if config.objective == "static-distance" else None
    init = evaluate(g0, scenario, config, derive_seed(config.seed, _EVAL, 0, 2**31 - 1), lists)
    state = OptimizerState(g0, init)
    best, best_score = g0, init
    history: list[GenerationRecord] = []
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    aborted = None
    try:
        while state.n < config.max_generations:
            if converged(state, config.window, config.threshold):
                break
            n = state.n
            try:
                kids = produce(state.parent, config.children, config.edit_distance, produce_rng)
            except ExhaustedAttempts as exc:
                aborted = exc
                break
            tasks = [(c, scenario, config, derive_seed(config.seed, _EVAL, n, k), lists) for k, c in enumerate(kids)]
            if pool is None:
                scores = [_evaluate_task(t) for t in tasks]
            else:
                scores = list(pool.map(_evaluate_task, tasks))
            k_best = int(np.argmin(scores))
            draw = accept_decision(n, config.sa_scalar, decide_rng)
            accepted = draw and math.isfinite(scores[k_best])
            parent = state.parent
            if accepted:
                state.parent, state.parent_score = kids[k_best], scores[k_best]
                if scores[k_best] < best_score:
                    best, best_score = kids[k_best], scores[k_best]
            state.record(state.parent_score, config.window)
            rec = GenerationRecord(n, parent, tuple(kids), tuple(scores), scores[k_best], accepted, state.parent_score)
            history.append(rec)
            if log is not None:
                log(rec)
    finally:
        if pool is not None:
            pool.shutdown()
    return OptimizeResult(best, best_score, init, history, aborted)


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
