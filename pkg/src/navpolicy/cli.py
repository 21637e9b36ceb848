"""``navpolicy`` command line: simulate, score SDI sweeps, and optimize policies.

Every command writes fixed-name artifacts plus ``manifest.json`` into ``--out-dir``.
Exit codes: 0 success, 2 validation error, 3 optimization aborted.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .errors import ExhaustedAttempts, NavPolicyError
from .optimizer import OBJECTIVES, OptimizerConfig, default_workers, optimize
from .scenario import BUNDLED, bundled_path, load_graph, load_scenario
from .sdi import CellGrid, SdiParams, export_heatmap, occupancy_sweep
from .simulator import SimConfig, run

EXIT_OK, EXIT_INVALID, EXIT_ABORTED = 0, 2, 3


class CliError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


# -- helpers -----------------------------------------------------------------


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _resolve_scenario(spec: str) -> Path:
    p = Path(spec)
    if p.exists():
        return p
    if spec in BUNDLED:
        return bundled_path(spec)
    raise CliError(f"scenario {spec!r} is neither a file nor a bundled name {BUNDLED}")


def _parse_loads(text: str) -> list[int]:
    parts = [t.strip() for t in str(text).split(",") if t.strip()]
    if not parts:
        raise CliError("--loads: need at least one occupancy load")
    try:
        loads = [int(t) for t in parts]
    except ValueError:
        raise CliError(f"--loads: not a comma-separated list of integers: {text!r}") from None
    if any(v < 0 for v in loads):
        raise CliError("--loads: loads must be >= 0")
    return loads


def _merge(args, defaults: dict) -> dict:
    """defaults < --config file < explicit flags."""
    out = dict(defaults)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise CliError(f"--config: no such file {args.config}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"--config: malformed JSON at line {exc.lineno} col {exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise CliError("--config: top level must be an object")
        for k, v in data.items():
            key = k.replace("-", "_")
            if key not in defaults:
                raise CliError(f"--config: unknown key {k!r}")
            out[key] = v
    for key in defaults:
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


class _Run:
    """Collects inputs/outputs for the manifest."""

    def __init__(self, command: str, out_dir: str):
        self.command = command
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.t0 = time.perf_counter()

    def add_input(self, path: Path):
        self.inputs[str(path)] = _digest(path)

    def write(self, name: str, text: str):
        (self.out / name).write_text(text)
        self.outputs.append(name)

    def manifest(self, config: dict, seed: int, **extra):
        body = {
            "command": self.command,
            "version": __version__,
            "seed": seed,
            "config": config,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "duration_s": round(time.perf_counter() - self.t0, 3),
        }
        body.update(extra)
        (self.out / "manifest.json").write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")


def _load(args, r: _Run):
    path = _resolve_scenario(args.scenario)
    r.add_input(path)
    sc = load_scenario(path)
    g = sc.structural
    if getattr(args, "graph", None):
        gp = Path(args.graph)
        if not gp.exists():
            raise CliError(f"--graph: no such file {gp}")
        r.add_input(gp)
        g = load_graph(gp)
        sc = sc.with_graph(g)
    return sc, g


def _sim_config(sc, opts) -> SimConfig:
    return SimConfig.from_scenario(sc, seed=int(opts["seed"]), occupancy_load=opts.get("occupancy"),
                                   duration=opts.get("duration"))


def _sdi_params(opts) -> SdiParams:
    return SdiParams(mode=opts.get("sdi_mode") or "instantaneous", cell_size=float(opts.get("cell_size") or 1.0))


# -- commands ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    r = _Run("simulate", args.out_dir)
    sc, g = _load(args, r)
    opts = _merge(args, {"seed": 0, "occupancy": None, "duration": None})
    cfg = _sim_config(sc, opts)
    res = run(sc, g, cfg)
    r.write("trajectory.csv", res.trajectory_csv())
    r.write("summary.csv", res.summary_csv())
    r.manifest(asdict(cfg), cfg.seed, spawned=res.spawned, completed=res.completed)
    print(f"simulated {cfg.n_ticks} ticks: {res.spawned} spawned, {res.completed} completed -> {r.out}")
    return EXIT_OK


def cmd_sdi(args) -> int:
    r = _Run("sdi", args.out_dir)
    sc, g = _load(args, r)
    opts = _merge(args, {"seed": 0, "loads": None, "duration": None, "sdi_mode": None, "cell_size": None})
    loads = _parse_loads(opts["loads"]) if opts["loads"] is not None else [sc.sim_params.occupancy_load]
    cfg = _sim_config(sc, opts)
    params = _sdi_params(opts)
    series = occupancy_sweep(sc, g, cfg, params, loads)
    rows = ["O_L,SDI"] + [f"{load},{s.sdi:.9f}" for load, s in zip(loads, series)]
    r.write("sdi.csv", "\n".join(rows) + "\n")
    for load, s in zip(loads, series):
        r.write(f"e_series_{load}.csv", s.e_csv())
        export_heatmap(s.cell_mean, r.out / f"heatmap_{load}")
        r.outputs += [f"heatmap_{load}.pgm", f"heatmap_{load}.csv"]
    grid = CellGrid.for_scenario(sc, params)
    r.manifest({"sim": asdict(cfg), "sdi": asdict(params), "loads": loads, "cells": grid.n_cells}, cfg.seed)
    for load, s in zip(loads, series):
        print(f"O_L={load}: SDI={s.sdi:.6f}")
    return EXIT_OK


OPT_DEFAULTS = {
    "seed": 0,
    "objective": "sdi",
    "children": 5,
    "edit_distance": 1,
    "window": 20,
    "threshold": 1e-5,
    "sa_scalar": 1.0,
    "max_generations": 200,
    "occupancy": None,
    "duration": None,
    "include_checkout_legs": None,
    "n_lists": 50,
    "workers": None,
    "sdi_mode": None,
    "cell_size": None,
}


def cmd_optimize(args) -> int:
    r = _Run("optimize", args.out_dir)
    sc, g0 = _load(args, r)
    opts = _merge(args, OPT_DEFAULTS)
    if opts["objective"] not in OBJECTIVES:
        raise CliError(f"--objective: unknown objective {opts['objective']!r}; choose from {OBJECTIVES}")
    workers = int(opts["workers"]) if opts["workers"] is not None else default_workers()
    try:
        cfg = OptimizerConfig(
            children=int(opts["children"]),
            edit_distance=int(opts["edit_distance"]),
            window=int(opts["window"]),
            threshold=float(opts["threshold"]),
            sa_scalar=float(opts["sa_scalar"]),
            max_generations=int(opts["max_generations"]),
            seed=int(opts["seed"]),
            objective=opts["objective"],
            occupancy_load=None if opts["occupancy"] is None else int(opts["occupancy"]),
            duration=None if opts["duration"] is None else float(opts["duration"]),
            n_lists=int(opts["n_lists"]),
            include_checkout_legs=bool(opts["include_checkout_legs"]),
            workers=max(1, workers),
            sdi=_sdi_params(opts),
        )
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from None

    def log(rec):
        if args.verbose:
            print(f"gen {rec.n}: best child {rec.best_child_score:.6g} accepted={rec.accepted} "
                  f"parent {rec.parent_score:.6g}", file=sys.stderr)

    res = optimize(g0, sc, cfg, log=log)
    r.write("convergence.csv", res.convergence_csv())
    r.write("children.csv", res.children_csv())
    r.write("best_graph.json", json.dumps(res.best.to_dict(), indent=1) + "\n")
    r.write("best_graph.dot", res.best.to_dot("best"))
    resolved = {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name != "sdi"}
    resolved["sdi"] = asdict(cfg.sdi)
    final = res.accepted_scores[-1] if res.history else res.initial_score
    extra = {"initial_score": _num(res.initial_score), "best_score": _num(res.best_score),
             "final_score": _num(final), "generations": len(res.history)}
    if res.aborted is not None:
        extra["aborted"] = str(res.aborted)
    r.manifest(resolved, cfg.seed, **extra)
    print(f"{len(res.history)} generations: initial {res.initial_score:.6g}, best {res.best_score:.6g}")
    if res.aborted is not None:
        print(f"aborted: {res.aborted}", file=sys.stderr)
        return EXIT_ABORTED
    return EXIT_OK


def _num(x: float):
    return x if math.isfinite(x) else str(x)


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="navpolicy", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help=f"scenario JSON path or bundled name {BUNDLED}")
        p.add_argument("--graph", help="structural graph JSON replacing the scenario's embedded policy")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--config", help="JSON file of option overrides (flags win)")
        p.add_argument("--duration", type=float, help="simulated seconds (default: scenario)")

    p = sub.add_parser("simulate", help="run one simulation and log trajectories")
    common(p)
    p.add_argument("--occupancy", type=int, help="occupancy load O_L (default: scenario)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sdi", help="SDI per occupancy load with heatmaps")
    common(p)
    p.add_argument("--loads", help="comma-separated occupancy loads, e.g. 10,50,100")
    p.add_argument("--sdi-mode", choices=("instantaneous", "residual"))
    p.add_argument("--cell-size", type=float)
    p.set_defaults(func=cmd_sdi)

    p = sub.add_parser("optimize", help="search edge states that minimize an objective")
    common(p)
    p.add_argument("--objective", help=f"one of {OBJECTIVES} (default sdi)")
    p.add_argument("--children", type=int)
    p.add_argument("--edit-distance", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--sa-scalar", type=float)
    p.add_argument("--max-generations", type=int)
    p.add_argument("--occupancy", type=int)
    p.add_argument("--n-lists", type=int, help="shopping lists for the static-distance objective")
    p.add_argument("--include-checkout-legs", action="store_true", default=None)
    p.add_argument("--workers", type=int, help="parallel child evaluations (default: CPU count)")
    p.add_argument("--sdi-mode", choices=("instantaneous", "residual"))
    p.add_argument("--cell-size", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_optimize)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ExhaustedAttempts as exc:  # raised outside optimize's own handling
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except (CliError, NavPolicyError, KeyError, ValueError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
