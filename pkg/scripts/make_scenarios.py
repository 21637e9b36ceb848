"""Regenerate the bundled scenario JSON files under src/navpolicy/scenarios/."""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "navpolicy" / "scenarios"


def node(nid, x, y, kind="junction"):
    return {"id": nid, "pos": [x, y], "kind": kind}


def edge(u, v, state="both"):
    return {"u": u, "v": v, "state": state}


def grid_nodes(xs, ys, kinds):
    nodes = []
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            nid = f"n{i}{j}"
            nodes.append(node(nid, x, y, kinds.get(nid, "junction")))
    return nodes


def grid_edges(nx, ny, state_fn=lambda u, v, horizontal: "both"):
    edges = []
    for i in range(nx):
        for j in range(ny):
            if i + 1 < nx:
                u, v = f"n{i}{j}", f"n{i + 1}{j}"
                edges.append(edge(u, v, state_fn(u, v, True)))
            if j + 1 < ny:
                u, v = f"n{i}{j}", f"n{i}{j + 1}"
                edges.append(edge(u, v, state_fn(u, v, False)))
    return edges


def items_along(nodes, edges, obstacles, per_edge, offset, ts):
    pos = {n["id"]: n["pos"] for n in nodes}
    items = []
    for e in edges:
        (x0, y0), (x1, y1) = pos[e["u"]], pos[e["v"]]
        dx, dy = x1 - x0, y1 - y0
        L = (dx * dx + dy * dy) ** 0.5
        nx, ny = -dy / L, dx / L
        for k, t in enumerate(ts[:per_edge]):
            px, py = x0 + t * dx, y0 + t * dy
            side = 1 if k % 2 == 0 else -1
            # shelf side first when one is nearby
            for s in (side, -side):
                qx, qy = px + s * (offset + 0.9) * nx, py + s * (offset + 0.9) * ny
                if any(o[0] <= qx <= o[2] and o[1] <= qy <= o[3] for o in obstacles):
                    side = s
                    break
            ix, iy = round(px + side * offset * nx, 3), round(py + side * offset * ny, 3)
            items.append({"id": f"{e['u']}-{e['v']}-{k}", "pos": [ix, iy], "edge": [e["u"], e["v"]]})
    return items


def line():
    nodes = [node("E", 0.0, 0.0, "entrance"), node("J", 3.0, 0.0, "checkout"), node("X", 3.0, 4.0, "exit")]
    return {
        "name": "line",
        "floor": [-1.0, -1.0, 8.0, 6.0],
        "obstacles": [],
        "structural": {"nodes": nodes, "edges": [edge("E", "J"), edge("J", "X")]},
        "items": [
            {"id": "I1", "pos": [3.0, 0.0], "edge": ["E", "J"]},
            {"id": "I2", "pos": [3.0, 4.0], "edge": ["J", "X"]},
        ],
        "checkouts": [{"node": "J", "queue_dir": [1.0, 0.0]}],
        "sim_params": {"occupancy_load": 5, "spawn_interval": 1.0, "duration": 30.0,
                       "agent_radius": 0.3, "preferred_speed": 1.4, "list_length": [1, 2]},
    }


def grid3x3():
    xs = ys = [0.0, 5.0, 10.0]
    kinds = {"n00": "entrance", "n10": "checkout", "n20": "exit"}
    nodes = grid_nodes(xs, ys, kinds)

    # one-way policy: counter-clockwise perimeter, inner cross streets east- and northbound
    def one_way(u, v, horizontal):
        i, j = int(u[1]), int(u[2])
        if horizontal:
            return "backward" if j == 2 else "forward"
        return "backward" if i == 0 else "forward"

    edges = grid_edges(3, 3, one_way)
    obstacles = [[1.0, 1.0, 4.0, 4.0], [6.0, 1.0, 9.0, 4.0], [1.0, 6.0, 4.0, 9.0], [6.0, 6.0, 9.0, 9.0]]
    items = items_along(nodes, edges, obstacles, 1, 0.8, [0.5])
    return {
        "name": "grid3x3",
        "floor": [-2.0, -6.0, 12.0, 12.0],
        "obstacles": obstacles,
        "structural": {"nodes": nodes, "edges": edges},
        "items": items,
        "checkouts": [{"node": "n10", "queue_dir": [0.0, -1.0]}],
        "sim_params": {"occupancy_load": 10, "spawn_interval": 1.0, "duration": 60.0,
                       "agent_radius": 0.3, "preferred_speed": 1.4, "list_length": [5, 5]},
    }


def retail():
    xs = [2.0, 8.0, 14.0, 20.0]
    ys = [5.0, 11.0, 17.0]
    kinds = {"n00": "entrance", "n10": "checkout", "n20": "checkout", "n30": "exit"}
    nodes = grid_nodes(xs, ys, kinds)
    edges = grid_edges(4, 3)
    obstacles = []
    for x0 in (3.5, 9.5, 15.5):
        for y0 in (6.5, 12.5):
            obstacles.append([x0, y0, x0 + 3.0, y0 + 3.0])
    # wall shelves carry the stock; the central cross aisles are item-free shortcuts
    inner = {"n11", "n21"}
    stocked = [e for e in edges if not ({e["u"], e["v"]} & inner)]
    items = items_along(nodes, stocked, obstacles, 2, 0.8, [0.35, 0.65])
    return {
        "name": "retail",
        "floor": [0.0, 0.0, 22.0, 19.0],
        "obstacles": obstacles,
        "structural": {"nodes": nodes, "edges": edges},
        "items": items,
        "checkouts": [{"node": "n10", "queue_dir": [0.0, -1.0]}, {"node": "n20", "queue_dir": [0.0, -1.0]}],
        "sim_params": {"occupancy_load": 20, "spawn_interval": 1.0, "duration": 30.0,
                       "agent_radius": 0.3, "preferred_speed": 1.4, "list_length": [3, 6]},
    }


def open_floor():
    xs = ys = [5.0, 25.0, 45.0]
    kinds = {"n00": "entrance", "n10": "checkout", "n20": "exit", "n21": "checkout"}
    nodes = grid_nodes(xs, ys, kinds)
    edges = grid_edges(3, 3)
    items = items_along(nodes, edges, [], 2, 1.0, [0.3, 0.7])
    return {
        "name": "open_floor",
        "floor": [0.0, 0.0, 50.0, 50.0],
        "obstacles": [],
        "structural": {"nodes": nodes, "edges": edges},
        "items": items,
        "checkouts": [{"node": "n10", "queue_dir": [0.0, 1.0]}, {"node": "n21", "queue_dir": [-1.0, 0.0]}],
        "sim_params": {"occupancy_load": 100, "spawn_interval": 0.5, "duration": 120.0,
                       "agent_radius": 0.3, "preferred_speed": 1.4, "list_length": [3, 6]},
    }


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for fn in (line, grid3x3, retail, open_floor):
        data = fn()
        (OUT / f"{data['name']}.json").write_text(json.dumps(data, indent=1) + "\n")
        print("wrote", data["name"], len(data["structural"]["nodes"]), "nodes", len(data["items"]), "items")
