"""Scenario files: floor geometry, policy graph, items, checkouts, parameters."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .errors import ScenarioInvalid
from .policy import NODE_KINDS, EdgeState, StructuralGraph, canonical

ITEM_MAX_OFFSET = 3.0
REQUIRED_KEYS = ("floor", "obstacles", "structural", "items", "checkouts", "sim_params")


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, p, strict=False) -> bool:
        x, y = p
        if strict:
            return self.xmin < x < self.xmax and self.ymin < y < self.ymax
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    @property
    def width(self):
        return self.xmax - self.xmin

    @property
    def height(self):
        return self.ymax - self.ymin

    def to_list(self):
        return [self.xmin, self.ymin, self.xmax, self.ymax]


@dataclass(frozen=True)
class Item:
    id: str
    pos: tuple[float, float]
    edge: tuple[str, str]


@dataclass(frozen=True)
class Checkout:
    node: str
    queue_dir: tuple[float, float]


@dataclass(frozen=True)
class SimParams:
    occupancy_load: int = 20
    spawn_interval: float = 1.0
    duration: float = 30.0
    agent_radius: float = 0.3
    preferred_speed: float = 1.4
    list_length: tuple[int, int] = (2, 5)
    dt: float = 0.1
    item_dwell: float = 2.0
    checkout_service: float = 5.0
    waypoint_spacing: float = 1.0


@dataclass(frozen=True)
class Scenario:
    floor: Rect
    obstacles: tuple[Rect, ...]
    structural: StructuralGraph
    items: tuple[Item, ...]
    checkouts: tuple[Checkout, ...]
    sim_params: SimParams = field(default_factory=SimParams)
    name: str = "scenario"

    def __post_init__(self):
        validate(self)

    @property
    def entrances(self) -> list[str]:
        return self.structural.nodes_of_kind("entrance")

    @property
    def exits(self) -> list[str]:
        return self.structural.nodes_of_kind("exit")

    def walkable(self, p) -> bool:
        return self.floor.contains(p) and not any(o.contains(p, strict=True) for o in self.obstacles)

    def with_graph(self, g: StructuralGraph) -> "Scenario":
        if g.skeleton != self.structural.skeleton:
            raise ScenarioInvalid("graph skeleton differs from the scenario skeleton", "structural")
        return replace(self, structural=g)

    def to_dict(self) -> dict:
        p = self.sim_params
        return {
            "name": self.name,
            "floor": self.floor.to_list(),
            "obstacles": [o.to_list() for o in self.obstacles],
            "structural": self.structural.to_dict(),
            "items": [{"id": i.id, "pos": list(i.pos), "edge": list(i.edge)} for i in self.items],
            "checkouts": [{"node": c.node, "queue_dir": list(c.queue_dir)} for c in self.checkouts],
            "sim_params": {
                "occupancy_load": p.occupancy_load,
                "spawn_interval": p.spawn_interval,
                "duration": p.duration,
                "agent_radius": p.agent_radius,
                "preferred_speed": p.preferred_speed,
                "list_length": list(p.list_length),
                "dt": p.dt,
                "item_dwell": p.item_dwell,
                "checkout_service": p.checkout_service,
                "waypoint_spacing": p.waypoint_spacing,
            },
        }


def point_segment_projection(p, a, b) -> tuple[float, float]:
    """Return ``(t, dist)``: clamped parameter along ``a->b`` and distance to it."""
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2
    t = min(1.0, max(0.0, t))
    cx, cy = ax + t * dx, ay + t * dy
    return t, math.hypot(p[0] - cx, p[1] - cy)


def validate(sc: Scenario) -> None:
    g = sc.structural
    if sc.floor.width <= 0 or sc.floor.height <= 0:
        raise ScenarioInvalid("floor rectangle has non-positive extent", "floor")
    for i, o in enumerate(sc.obstacles):
        if o.width <= 0 or o.height <= 0:
            raise ScenarioInvalid("obstacle rectangle has non-positive extent", f"obstacles[{i}]")
    for n in g.nodes:
        if n.kind not in NODE_KINDS:
            raise ScenarioInvalid(f"unknown node kind {n.kind!r}", f"structural.nodes[{n.id}].kind")
        if not sc.walkable(n.pos):
            raise ScenarioInvalid("node lies outside the walkable floor", f"structural.nodes[{n.id}].pos")
    if not g.nodes_of_kind("entrance"):
        raise ScenarioInvalid("at least one entrance node is required", "structural.nodes")
    if not g.nodes_of_kind("exit"):
        raise ScenarioInvalid("at least one exit node is required", "structural.nodes")
    if not sc.checkouts:
        raise ScenarioInvalid("at least one checkout is required", "checkouts")
    ids = set(g.node_ids)
    for c in sc.checkouts:
        if c.node not in ids:
            raise ScenarioInvalid(f"unknown checkout node {c.node!r}", "checkouts")
        if math.hypot(*c.queue_dir) == 0:
            raise ScenarioInvalid("queue direction must be non-zero", f"checkouts[{c.node}].queue_dir")
    item_ids = set()
    for it in sc.items:
        where = f"items[{it.id}]"
        if it.id in item_ids:
            raise ScenarioInvalid("duplicate item id", where)
        item_ids.add(it.id)
        if canonical(*it.edge) not in g.skeleton:
            raise ScenarioInvalid(f"attached edge {it.edge} is not a skeleton edge", where + ".edge")
        if not sc.walkable(it.pos):
            raise ScenarioInvalid("item lies outside the walkable floor", where + ".pos")
        a, b = g.node(it.edge[0]).pos, g.node(it.edge[1]).pos
        if point_segment_projection(it.pos, a, b)[1] > ITEM_MAX_OFFSET:
            raise ScenarioInvalid(f"item is more than {ITEM_MAX_OFFSET} m from its edge", where + ".pos")
    p = sc.sim_params
    checks = [
        (p.occupancy_load >= 1, "occupancy_load", "must be >= 1"),
        (p.duration > 0, "duration", "must be > 0"),
        (p.agent_radius > 0, "agent_radius", "must be > 0"),
        (p.preferred_speed > 0, "preferred_speed", "must be > 0"),
        (p.dt > 0, "dt", "must be > 0"),
        (p.spawn_interval >= 0, "spawn_interval", "must be >= 0"),
        (p.waypoint_spacing > 0, "waypoint_spacing", "must be > 0"),
        (1 <= p.list_length[0] <= p.list_length[1], "list_length", "must satisfy 1 <= lo <= hi"),
        (p.list_length[1] <= max(len(sc.items), 1), "list_length", "exceeds the number of items"),
    ]
    for ok, key, msg in checks:
        if not ok:
            raise ScenarioInvalid(msg, f"sim_params.{key}")


# -- parsing -----------------------------------------------------------------


def _rect(v, where) -> Rect:
    try:
        x0, y0, x1, y1 = (float(c) for c in v)
    except (TypeError, ValueError):
        raise ScenarioInvalid("expected [xmin, ymin, xmax, ymax]", where) from None
    return Rect(x0, y0, x1, y1)


def _pair(v, where) -> tuple[float, float]:
    try:
        x, y = (float(c) for c in v)
    except (TypeError, ValueError):
        raise ScenarioInvalid("expected [x, y]", where) from None
    return (x, y)


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict):
        raise ScenarioInvalid("expected an object", where)
    if key not in d:
        raise ScenarioInvalid(f"missing key {key!r}", f"{where}.{key}" if where else key)
    return d[key]


def graph_from_dict(data, where="structural") -> StructuralGraph:
    from .policy import Node

    nodes = []
    for i, n in enumerate(_require(data, "nodes", where)):
        nid = str(_require(n, "id", f"{where}.nodes[{i}]"))
        nodes.append(Node(nid, _pair(_require(n, "pos", f"{where}.nodes[{nid}]"), f"{where}.nodes[{nid}].pos"),
                          n.get("kind", "junction")))
    edges = []
    for i, e in enumerate(_require(data, "edges", where)):
        w = f"{where}.edges[{i}]"
        try:
            state = EdgeState(_require(e, "state", w))
        except ValueError:
            raise ScenarioInvalid(f"unknown state {e['state']!r}", w + ".state") from None
        edges.append((str(_require(e, "u", w)), str(_require(e, "v", w)), state))
    try:
        return StructuralGraph.build(nodes, edges)
    except ValueError as exc:
        raise ScenarioInvalid(str(exc), where) from None


def scenario_from_dict(data: dict) -> Scenario:
    for key in REQUIRED_KEYS:
        _require(data, key, "")
    structural = graph_from_dict(data["structural"])
    items = []
    for i, it in enumerate(data["items"]):
        w = f"items[{i}]"
        edge = _require(it, "edge", w)
        if not (isinstance(edge, (list, tuple)) and len(edge) == 2):
            raise ScenarioInvalid("expected [u, v]", w + ".edge")
        items.append(Item(str(_require(it, "id", w)), _pair(_require(it, "pos", w), w + ".pos"),
                          (str(edge[0]), str(edge[1]))))
    checkouts = []
    for i, c in enumerate(data["checkouts"]):
        w = f"checkouts[{i}]"
        checkouts.append(Checkout(str(_require(c, "node", w)), _pair(_require(c, "queue_dir", w), w + ".queue_dir")))
    sp = data["sim_params"]
    if not isinstance(sp, dict):
        raise ScenarioInvalid("expected an object", "sim_params")
    known = SimParams.__dataclass_fields__
    unknown = set(sp) - set(known)
    if unknown:
        raise ScenarioInvalid(f"unknown key {sorted(unknown)[0]!r}", "sim_params")
    kw = dict(sp)
    try:
        if "list_length" in kw:
            lo, hi = kw["list_length"]
            kw["list_length"] = (int(lo), int(hi))
        if "occupancy_load" in kw:
            kw["occupancy_load"] = int(kw["occupancy_load"])
        for k in set(kw) - {"list_length", "occupancy_load"}:
            kw[k] = float(kw[k])
    except (TypeError, ValueError):
        raise ScenarioInvalid("non-numeric value", "sim_params") from None
    return Scenario(
        floor=_rect(data["floor"], "floor"),
        obstacles=tuple(_rect(o, f"obstacles[{i}]") for i, o in enumerate(data["obstacles"])),
        structural=structural,
        items=tuple(items),
        checkouts=tuple(checkouts),
        sim_params=SimParams(**kw),
        name=str(data.get("name", "scenario")),
    )


def load_scenario(path) -> Scenario:
    """Read and validate a scenario JSON file.

    Raises :class:`ScenarioInvalid` carrying a line/column for malformed JSON or
    the key path of the offending field.
    """
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioInvalid(f"malformed JSON: {exc.msg}", f"line {exc.lineno} col {exc.colno}") from None
    if not isinstance(data, dict):
        raise ScenarioInvalid("top level must be an object", "")
    return scenario_from_dict(data)


def load_graph(path) -> StructuralGraph:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioInvalid(f"malformed JSON: {exc.msg}", f"line {exc.lineno} col {exc.colno}") from None
    if isinstance(data, dict) and "structural" in data:
        data = data["structural"]
    return graph_from_dict(data, "graph")


BUNDLED = ("line", "grid3x3", "retail", "open_floor")


def bundled_path(name: str) -> Path:
    if name not in BUNDLED:
        raise KeyError(f"no bundled scenario {name!r}; choose from {BUNDLED}")
    return Path(str(resources.files("navpolicy") / "scenarios" / f"{name}.json"))


def load_bundled(name: str) -> Scenario:
    return load_scenario(bundled_path(name))
