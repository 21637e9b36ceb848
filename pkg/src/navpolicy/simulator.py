"""Deterministic fixed-timestep shopping-crowd simulation over a NavGraph."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .navgraph import NavGraph, populate, queue_slot_positions, shortest_path
from .policy import EdgeState, StructuralGraph
from .scenario import Scenario

PHASES = ("Entering", "Shopping", "Queuing", "CheckingOut", "Exiting", "Done")
ENTERING, SHOPPING, QUEUING, CHECKING_OUT, EXITING, DONE = PHASES
LANE_OFFSET = 0.8


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    duration: float = 30.0
    occupancy_load: int = 20
    spawn_interval: float = 1.0
    seed: int = 0
    item_dwell: float = 2.0
    checkout_service: float = 5.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.duration < self.dt:
            raise ValueError("duration must be >= dt")
        if self.occupancy_load < 0:
            raise ValueError("occupancy load must be >= 0")

    @classmethod
    def from_scenario(cls, scenario: Scenario, seed: int = 0, **overrides) -> "SimConfig":
        p = scenario.sim_params
        kw = dict(
            dt=p.dt,
            duration=p.duration,
            occupancy_load=p.occupancy_load,
            spawn_interval=p.spawn_interval,
            seed=seed,
            item_dwell=p.item_dwell,
            checkout_service=p.checkout_service,
        )
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    @property
    def n_ticks(self) -> int:
        return int(math.floor(self.duration / self.dt + 1e-9))


@dataclass
class AgentState:
    id: int
    pos: np.ndarray
    vel: np.ndarray
    radius: float
    speed: float
    entrance: str
    shopping: list
    progress: int = 0
    phase: str = ENTERING
    route: list = field(default_factory=list)
    route_i: int = 0
    timer: int = 0
    travel: float = 0.0
    spawn_time: float = 0.0
    completion_time: float | None = None
    counter: str | None = None
    slot: int = -1
    in_line: bool = False
    stops: list = field(default_factory=list)

    @property
    def route_done(self) -> bool:
        return self.route_i >= len(self.route)

    @property
    def target(self):
        return self.route[self.route_i] if self.route_i < len(self.route) else None


@dataclass(frozen=True)
class Snapshot:
    tick: int
    time: float
    ids: np.ndarray
    pos: np.ndarray
    phases: tuple
    completed: int = 0


@dataclass(frozen=True)
class AgentSummary:
    id: int
    travel_distance: float
    completion_time: float | None
    items_shopped: int
    spawn_time: float
    stops: tuple
    entrance: str


@dataclass
class SimResult:
    dt: float
    duration: float
    snapshots: list
    agents: dict
    spawned: int
    completed: int
    max_concurrent: int
    radius: float = 0.3

    def trajectory_csv(self) -> str:
        buf = io.StringIO()
        buf.write("tick,time_s,agent_id,x,y,phase\n")
        for s in self.snapshots:
            for aid, (x, y), ph in zip(s.ids, s.pos, s.phases):
                buf.write(f"{s.tick},{s.time:.3f},{aid},{x:.6f},{y:.6f},{ph}\n")
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        buf.write("agent_id,spawn_time_s,travel_distance_m,completion_time_s,items_shopped\n")
        for aid in sorted(self.agents):
            a = self.agents[aid]
            ct = "" if a.completion_time is None else f"{a.completion_time:.3f}"
            buf.write(f"{aid},{a.spawn_time:.3f},{a.travel_distance:.6f},{ct},{a.items_shopped}\n")
        return buf.getvalue()

    def stacked_positions(self):
        """Return ``(offsets, x, y)`` with every snapshot's positions concatenated."""
        counts = [len(s.ids) for s in self.snapshots]
        offsets = np.zeros(len(counts) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(counts)
        if offsets[-1]:
            xy = np.concatenate([s.pos for s in self.snapshots if len(s.ids)])
        else:
            xy = np.zeros((0, 2))
        return offsets, np.ascontiguousarray(xy[:, 0]), np.ascontiguousarray(xy[:, 1])

    def trajectories(self) -> dict:
        out: dict = {}
        for s in self.snapshots:
            for aid, p in zip(s.ids, s.pos):
                out.setdefault(int(aid), []).append((s.tick, p[0], p[1]))
        return out


def total_travel_distance(result: SimResult) -> float:
    """Sum over agents of per-frame displacement between consecutive snapshots."""
    total = 0.0
    for samples in result.trajectories().values():
        for (_, x0, y0), (_, x1, y1) in zip(samples, samples[1:]):
            total += math.hypot(x1 - x0, y1 - y0)
    return total


class World:
    """Mutable simulation state advanced one tick at a time by :meth:`step`."""

    def __init__(self, scenario: Scenario, nav: NavGraph, config: SimConfig):
        self.scenario = scenario
        self.nav = nav
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        p = scenario.sim_params
        self.radius = p.agent_radius
        self.speed = p.preferred_speed
        self.list_length = p.list_length
        self.tick = 0
        self.agents: dict[int, AgentState] = {}
        self.next_id = 0
        self.last_spawn: float | None = None
        self.spawned = 0
        self.completed = 0
        self.max_concurrent = 0
        self.snapshots: list[Snapshot] = []
        self.finished: dict[int, AgentSummary] = {}
        self.item_ids = [it.id for it in scenario.items]
        slots = max(config.occupancy_load, 1)
        self.slots = {c.node: queue_slot_positions(scenario, c, slots) for c in scenario.checkouts}
        self.queue_dir = {c.node: c.queue_dir for c in scenario.checkouts}
        self.lines: dict[str, list[int]] = {c.node: [] for c in scenario.checkouts}
        self.in_transit: dict[str, int] = {c.node: 0 for c in scenario.checkouts}
        self.dwell_ticks = int(round(config.item_dwell / config.dt))
        self.service_ticks = int(round(config.checkout_service / config.dt))
        self.entrance_pos = {e: np.array(scenario.structural.node(e).pos) for e in scenario.entrances}
        exits = scenario.exits
        self.exit_for = {}
        for c in scenario.checkouts:
            d = [(nav.distance(c.node, x), x) for x in exits]
            self.exit_for[c.node] = min(d)[1]

    @property
    def time(self) -> float:
        return self.tick * self.config.dt

    # -- routing helpers -----------------------------------------------------

    def _route_to(self, src, dst) -> list:
        path = shortest_path(self.nav, src, dst)
        return [self.nav.position(n).copy() for n in path.nodes[1:]]

    def _item_node(self, item_id):
        return self.nav.item_nodes[item_id]

    def _lane_point(self, counter, k):
        slots = self.slots[counter]
        prev = np.array(self.scenario.structural.node(counter).pos) if k == 0 else np.array(slots[k - 1])
        cur = np.array(slots[k])
        d = cur - prev
        n = np.hypot(*d)
        if n == 0:
            return cur
        d /= n
        return cur + LANE_OFFSET * np.array([d[1], -d[0]])

    # -- spawning ------------------------------------------------------------

    def spawn_step(self):
        cfg = self.config
        if len(self.agents) >= cfg.occupancy_load:
            return None
        if self.last_spawn is not None and self.time - self.last_spawn < cfg.spawn_interval - 1e-9:
            return None
        clear = []
        for e, p in self.entrance_pos.items():
            if all(np.hypot(*(a.pos - p)) >= 2 * self.radius for a in self.agents.values()):
                clear.append(e)
        if not clear:
            return None
        ent = clear[int(self.rng.integers(len(clear)))] if len(clear) > 1 else clear[0]
        lo, hi = self.list_length
        k = int(self.rng.integers(lo, hi + 1))
        picks = self.rng.choice(len(self.item_ids), size=k, replace=False)
        shopping = [self.item_ids[i] for i in picks]
        a = AgentState(
            id=self.next_id,
            pos=self.entrance_pos[ent].copy(),
            vel=np.zeros(2),
            radius=self.radius,
            speed=self.speed,
            entrance=ent,
            shopping=shopping,
            spawn_time=self.time,
        )
        a.route = self._route_to(ent, self._item_node(shopping[0]))
        a.stops.append(ent)
        self.agents[a.id] = a
        self.next_id += 1
        self.spawned += 1
        self.last_spawn = self.time
        self.max_concurrent = max(self.max_concurrent, len(self.agents))
        return a

    # -- phase logic ---------------------------------------------------------

    def _phase_logic(self, a: AgentState):
        if a.phase == ENTERING:
            if a.route_i >= 1 or a.route_done:
                a.phase = SHOPPING
        if a.phase == SHOPPING:
            if a.timer > 0:
                a.timer -= 1
                if a.timer > 0:
                    return
                self._after_item(a)
            elif a.route_done:
                a.stops.append(self._item_node(a.shopping[a.progress]))
                a.timer = self.dwell_ticks
                if a.timer == 0:
                    self._after_item(a)
            return
        if a.phase == QUEUING:
            c = a.counter
            if not a.in_line:
                if a.route_done:
                    self.in_transit[c] -= 1
                    self.lines[c].append(a.id)
                    a.in_line = True
                    idx = len(self.lines[c]) - 1
                    a.slot = idx
                    a.route = [self._lane_point(c, k) for k in range(idx)] + [np.array(self.slots[c][idx])]
                    a.route_i = 0
                return
            idx = self.lines[c].index(a.id)
            if idx != a.slot:
                a.slot = idx
                a.route = [np.array(self.slots[c][idx])]
                a.route_i = 0
            if idx == 0 and a.route_done:
                a.phase = CHECKING_OUT
                a.timer = self.service_ticks
                a.stops.append(c)
                if a.timer > 0:
                    return
            else:
                return
        if a.phase == CHECKING_OUT:
            if a.timer > 0:
                a.timer -= 1
                if a.timer > 0:
                    return
            c = a.counter
            self.lines[c].pop(0)
            ex = self.exit_for[c]
            a.phase = EXITING
            a.route = [np.array(self.scenario.structural.node(c).pos)] + self._route_to(c, ex)
            a.route_i = 0
            a.stops.append(ex)
            return
        if a.phase == EXITING and a.route_done:
            a.phase = DONE

    def _after_item(self, a: AgentState):
        a.progress += 1
        here = self._item_node(a.shopping[a.progress - 1])
        if a.progress < len(a.shopping):
            a.route = self._route_to(here, self._item_node(a.shopping[a.progress]))
            a.route_i = 0
            return
        counters = sorted(self.lines, key=lambda c: (len(self.lines[c]) + self.in_transit[c], c))
        c = counters[0]
        a.counter = c
        self.in_transit[c] += 1
        a.phase = QUEUING
        a.route = self._route_to(here, c)
        a.route_i = 0

    # -- motion --------------------------------------------------------------

    def _stationary(self, a):
        return (a.phase == SHOPPING and a.timer > 0) or a.phase == CHECKING_OUT

    def _integrate(self, a: AgentState, v):
        dt = self.config.dt
        old = a.pos
        new = old + v * dt
        sc = self.scenario
        if not sc.walkable(new):
            slid = None
            for cand in (np.array([new[0], old[1]]), np.array([old[0], new[1]])):
                if sc.walkable(cand):
                    slid = cand
                    break
            new = old.copy() if slid is None else slid
            v = (new - old) / dt
        a.vel = v
        a.travel += float(np.hypot(*(new - old)))
        a.pos = new

    def _hold(self, a: AgentState, tgt, P, k) -> bool:
        """Wait beside a final stop while another agent stands on it."""
        if a.phase != SHOPPING or a.route_i != len(a.route) - 1:
            return False
        r = a.radius
        if np.hypot(*(a.pos - tgt)) > 3.0 * r:
            return False
        d = np.hypot(P[:, 0] - tgt[0], P[:, 1] - tgt[1])
        d[k] = np.inf
        return bool(np.min(d) < 2.0 * r) if len(d) > 1 else False

    def _advance_route(self, a: AgentState, others=None):
        tol = 0.5 * a.radius
        while a.route_i < len(a.route):
            w = a.route[a.route_i]
            d = np.hypot(*(a.pos - w))
            reach = tol
            # an intermediate waypoint taken by another agent counts as reached once in contact
            last = a.route_i == len(a.route) - 1
            if not last and others is not None and len(others) and a.phase in (ENTERING, SHOPPING, EXITING):
                if np.min(np.hypot(others[:, 0] - w[0], others[:, 1] - w[1])) < 2.0 * a.radius:
                    reach = 2.5 * a.radius
            if d > reach:
                break
            a.route_i += 1

    def step(self):
        cfg = self.config
        order = sorted(self.agents)
        for aid in order:
            self._phase_logic(self.agents[aid])
        for aid in [i for i in order if self.agents[i].phase == DONE]:
            self._retire(self.agents.pop(aid))
        order = sorted(self.agents)
        if order:
            P = np.array([self.agents[i].pos for i in order])
            V = np.array([self.agents[i].vel for i in order])
            reach = 4.0 * self.radius + 2.0 * self.speed * cfg.dt
            diff = P[:, None, :] - P[None, :, :]
            D = np.hypot(diff[..., 0], diff[..., 1])
            newV = V.copy()
            for k, aid in enumerate(order):
                a = self.agents[aid]
                if self._stationary(a):
                    newV[k] = 0.0
                    continue
                tgt = a.target if a.target is not None else a.pos
                if self._hold(a, tgt, P, k):
                    tgt = a.pos
                nb = np.flatnonzero((D[k] < reach) & (np.arange(len(order)) != k))
                vx, vy = _kernels.steer_velocity(
                    a.pos[0], a.pos[1], tgt[0], tgt[1], a.speed, a.radius, cfg.dt,
                    np.ascontiguousarray(P[nb, 0]), np.ascontiguousarray(P[nb, 1]),
                    np.ascontiguousarray(newV[nb, 0]), np.ascontiguousarray(newV[nb, 1]),
                )
                newV[k] = (vx, vy)
            for k, aid in enumerate(order):
                self._integrate(self.agents[aid], newV[k])
            P = np.array([self.agents[i].pos for i in order])
            for k, aid in enumerate(order):
                self._advance_route(self.agents[aid], np.delete(P, k, axis=0))
        self.tick += 1
        self.spawn_step()
        self.snapshot()

    def _retire(self, a: AgentState):
        a.completion_time = self.time
        self.completed += 1
        self.finished[a.id] = self._summary(a)

    def _summary(self, a: AgentState) -> AgentSummary:
        shopped = a.progress
        return AgentSummary(a.id, a.travel, a.completion_time, shopped, a.spawn_time, tuple(a.stops), a.entrance)

    def snapshot(self):
        order = sorted(self.agents)
        if order:
            pos = np.array([self.agents[i].pos for i in order])
        else:
            pos = np.zeros((0, 2))
        self.snapshots.append(
            Snapshot(self.tick, self.time, np.array(order, dtype=np.int64), pos,
                     tuple(self.agents[i].phase for i in order), self.completed)
        )
        self.max_concurrent = max(self.max_concurrent, len(order))

    def result(self) -> SimResult:
        agents = dict(self.finished)
        for a in self.agents.values():
            agents[a.id] = self._summary(a)
        return SimResult(self.config.dt, self.config.duration, list(self.snapshots), agents,
                         self.spawned, self.completed, self.max_concurrent, self.radius)


def make_world(scenario: Scenario, g: StructuralGraph, config: SimConfig) -> World:
    nav = populate(g, scenario, queue_slots=max(config.occupancy_load, 1))
    return World(scenario.with_graph(g), nav, config)


def run(scenario: Scenario, g: StructuralGraph | None, config: SimConfig) -> SimResult:
    """Simulate ``config.duration`` seconds and return snapshots plus per-agent totals."""
    g = scenario.structural if g is None else g
    world = make_world(scenario, g, config)
    world.spawn_step()
    world.snapshot()
    for _ in range(config.n_ticks):
        world.step()
    return world.result()


# -- post-checks -------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    agent_id: int
    edge: tuple
    tick: int
    reason: str


def policy_violations(result: SimResult, g: StructuralGraph, end_clearance: float = 1.0) -> list:
    """Check logged trajectories against the directional policy.

    For every non-Both skeleton edge, samples inside its corridor (within
    ``2 * radius`` of the centreline and more than ``end_clearance`` from
    both endpoints) are grouped into consecutive visits. A visit on a Blocked
    edge, or a visit whose net along-edge displacement runs against a
    one-way edge by more than ``2 * radius``, is a violation. Corridors shared
    with a permitted edge are not charged.
    """
    r = result.radius
    half = 2.0 * r
    edges = []
    for (u, v), s in zip(g.skeleton, g.states):
        a = np.array(g.node(u).pos)
        b = np.array(g.node(v).pos)
        L = float(np.hypot(*(b - a)))
        if L <= 2 * end_clearance:
            continue
        edges.append(((u, v), s, a, (b - a) / L, L))

    def inside(e, x, y):
        _, _, a, t, L = e
        dx, dy = x - a[0], y - a[1]
        along = dx * t[0] + dy * t[1]
        lat = abs(-dx * t[1] + dy * t[0])
        return end_clearance < along < L - end_clearance and lat <= half, along

    permitted = [e for e in edges if e[1] is not EdgeState.BLOCKED]
    out = []
    for aid, samples in result.trajectories().items():
        for e in edges:
            edge, state, *_ = e
            if state is EdgeState.BOTH:
                continue
            visit = []
            for tick, x, y in samples + [(None, math.nan, math.nan)]:
                ok, along = inside(e, x, y) if tick is not None else (False, 0.0)
                if ok:
                    shadowed = any(o[0] != edge and inside(o, x, y)[0] for o in permitted)
                    visit.append((tick, along, shadowed))
                    continue
                if visit:
                    out.extend(_judge_visit(aid, edge, state, visit, half))
                    visit = []
    return out


def _judge_visit(aid, edge, state, visit, tol):
    free = [(t, s) for t, s, sh in visit if not sh]
    if not free:
        return []
    if state is EdgeState.BLOCKED:
        return [Violation(aid, edge, free[0][0], "entered blocked corridor")]
    net = visit[-1][1] - visit[0][1]
    if state is EdgeState.FORWARD and net < -tol:
        return [Violation(aid, edge, visit[0][0], "moved against forward edge")]
    if state is EdgeState.BACKWARD and net > tol:
        return [Violation(aid, edge, visit[0][0], "moved against backward edge")]
    return []


def separation_stats(result: SimResult) -> tuple[int, int, int]:
    """Return ``(pair_ticks, soft_contacts, hard_overlaps)`` over all snapshots."""
    r = result.radius
    pairs = soft = hard = 0
    for s in result.snapshots:
        n = len(s.ids)
        if n < 2:
            continue
        d = np.hypot(s.pos[:, None, 0] - s.pos[None, :, 0], s.pos[:, None, 1] - s.pos[None, :, 1])
        iu = np.triu_indices(n, 1)
        dd = d[iu]
        pairs += dd.size
        soft += int((dd < 2 * r).sum())
        hard += int((dd < r).sum())
    return pairs, soft, hard
