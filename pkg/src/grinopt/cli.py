"""Command-line interface: ``grinopt {eigen,optimize,propagate}``.

Exit codes: 0 success (a stalled optimizer still counts), 1 user or
configuration error, 2 domain error such as a potential without a bound state.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from . import __version__
from .eigen import NoBoundStateError, ground_state
from .exports import (
    FormatError,
    read_column,
    read_field,
    read_matrix,
    read_table,
    write_controls,
    write_field,
    write_history,
    write_manifest,
    write_matrix,
    write_potentials,
)
from .objective import infidelity
from .pipeline import preset_config, problem_from_config, run_full, tophat_design
from .potentials import SeparableTimeline, TabulatedTimeline, poschl_teller, tophat_target
from .controls import Control
from .propagate import propagate_forward
from .spectral import AxialGrid, ContractError, Grid1D, norm

log = logging.getLogger("grinopt")

OUTPUT_ENV = "GRINOPT_OUTPUT_DIR"
EXIT_OK, EXIT_USER, EXIT_DOMAIN = 0, 1, 2


class UserError(Exception):
    pass


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUTPUT_ENV) or "grinopt-out")


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UserError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UserError(f"config {path} must hold a JSON object")
    return data


def _grid_dict(grid: Grid1D) -> dict:
    return {"x_min": grid.x_min, "x_max": grid.x_max, "n": grid.n}


def _grid_from(d) -> Grid1D:
    try:
        return Grid1D(float(d["x_min"]), float(d["x_max"]), int(d["n"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise UserError(f"bad grid description {d!r}: {exc}") from exc


class _Files:
    def __init__(self, root: Path):
        self.root = root
        self.entries = []

    def add(self, name, kind, writer, filename, *args):
        writer(self.root / filename, *args)
        self.entries.append({"name": name, "path": filename, "kind": kind})


# ---------------------------------------------------------------- eigen ----


def _eigen_config(args) -> dict:
    if args.config:
        cfg = _load_json(args.config)
        if "potential" not in cfg:
            raise UserError("eigen config needs a 'potential' entry")
        cfg.setdefault("grid", {"x_min": -5 * np.pi, "x_max": 5 * np.pi, "n": 1024})
        return cfg
    grid = {"x_min": -args.half_width, "x_max": args.half_width, "n": args.n}
    if args.preset == "poschl-teller":
        pot = {"kind": "poschl-teller", "sigma": args.sigma, "center": args.center}
    elif args.preset == "harmonic":
        pot = {"kind": "harmonic", "omega": args.omega}
    elif args.preset == "tophat-inverse":
        pot = {"kind": "tophat-inverse", "a": 1e-3, "m": 8}
    else:
        raise UserError("give --preset or --config")
    return {"grid": grid, "potential": pot}


def cmd_eigen(args) -> int:
    cfg = _eigen_config(args)
    grid = _grid_from(cfg["grid"])
    pot = cfg["potential"]
    kind = pot.get("kind")
    target = None
    if kind == "poschl-teller":
        v = poschl_teller(float(pot.get("sigma", 1.0)), float(pot.get("center", 0.0)), grid)
        pair = ground_state(v, grid)
    elif kind == "harmonic":
        v = 0.5 * float(pot.get("omega", 1.0)) ** 2 * grid.x**2
        pair = ground_state(v, grid)
    elif kind == "tophat-inverse":
        target = tophat_target(float(pot.get("a", 1e-3)), int(pot.get("m", 8)), grid)
        v, pair = tophat_design(grid, float(pot.get("a", 1e-3)), int(pot.get("m", 8)))
    elif kind == "file":
        v = read_column(pot["path"], pot.get("column", "re"), grid)
        pair = ground_state(v, grid)
    else:
        raise UserError(f"unknown potential kind {kind!r}")
    out = _out_dir(args)
    files = _Files(out)
    files.add("eigenfunction", "field", write_field, "eigenfunction.csv", grid, pair.phi)
    files.add("potential", "grid", write_potentials, "potential.csv", grid, v, v)
    result = {"lambda": pair.lam, "residual": pair.residual}
    if target is not None:
        files.add("target", "field", write_field, "target.csv", grid, target)
        result["misfit_l2"] = norm(np.sign(np.dot(target, pair.phi)) * pair.phi - target, grid)
    write_manifest(out / "manifest.json", {
        "version": __version__, "manifest_version": "1", "command": "eigen", "seed": None,
        "files": files.entries, "config": cfg, "results": result,
    })
    print(f"lambda = {pair.lam!r}")
    return EXIT_OK


# ------------------------------------------------------------- optimize ----


def _optimize_config(args) -> dict:
    if args.config:
        cfg = _load_json(args.config)
    elif args.preset:
        cfg = preset_config(args.preset, smoke=args.smoke, seed=args.seed if args.seed is not None else 7)
    else:
        raise UserError("give --preset or --config")
    if args.seed is not None:
        cfg["seed"] = args.seed
        cfg.setdefault("de", {})["seed"] = args.seed
    for key, attr in (("population", "population"), ("generations", "generations")):
        val = getattr(args, attr)
        if val is not None:
            cfg.setdefault("de", {})[key] = val
    if args.grape_iters is not None:
        cfg.setdefault("grape", {})["max_iters"] = args.grape_iters
    if args.grape2d_iters is not None and cfg.get("grape_2d") is not None:
        cfg["grape_2d"]["max_iters"] = args.grape2d_iters
    if args.no_refine:
        cfg["grape_2d"] = None
    return cfg


def _history_columns(hist):
    return hist.objective_per_iter, hist.infidelity_per_iter, hist.tikhonov_per_iter


def _intensity_matrix(result, stride):
    spec = result.problem
    grid = spec.grid
    if result.refine_history is not None:
        traj = propagate_forward(spec.stages[0].phi0, result.refined, grid, result.refine_axial,
                                 store=True, stride=stride)
        return np.abs(traj.snapshots) ** 2, traj.axial
    cols = []
    for i, s in enumerate(result.stages):
        traj = propagate_forward(s.phi0, SeparableTimeline(s.v0, s.vl, s.u, s.v), grid, s.axial,
                                 store=True, stride=stride)
        vals = np.abs(traj.snapshots) ** 2
        cols.append(vals if i == 0 else vals[:, 1:])
    first, last = result.stages[0].axial, result.stages[-1].axial
    total = sum(s.axial.n_steps for s in result.stages)
    return np.concatenate(cols, axis=1), AxialGrid(first.z0, last.z1, total).coarsen(stride)


def cmd_optimize(args) -> int:
    cfg = _optimize_config(args)
    try:
        spec = problem_from_config(cfg)
    except NoBoundStateError:
        raise
    except (ContractError, ValueError, KeyError, TypeError) as exc:
        raise UserError(str(exc)) from exc
    result = run_full(spec)
    grid = spec.grid
    out = _out_dir(args)
    files = _Files(out)
    replay_stages = []
    stage_info = []
    for i, s in enumerate(result.stages):
        files.add(f"stage{i}_controls", "control", write_controls, f"stage{i}_controls.csv",
                  s.axial.z, s.u.samples, s.v.samples)
        files.add(f"stage{i}_potentials", "grid", write_potentials, f"stage{i}_potentials.csv", grid, s.v0, s.vl)
        files.add(f"stage{i}_phi0", "field", write_field, f"stage{i}_phi0.csv", grid, s.phi0)
        files.add(f"stage{i}_phi_d", "field", write_field, f"stage{i}_phi_d.csv", grid, s.phi_d)
        files.add(f"stage{i}_terminal", "field", write_field, f"stage{i}_terminal.csv", grid, s.psi_terminal)
        if s.de_history is not None:
            h = s.de_history
            files.add(f"stage{i}_history_de", "history", write_history, f"stage{i}_history_de.csv",
                      h.best_value_per_generation, h.best_infidelity_per_generation, h.best_tikhonov_per_generation)
        files.add(f"stage{i}_history_grape", "history", write_history, f"stage{i}_history_grape.csv",
                  *_history_columns(s.grape_history))
        replay_stages.append({"z_interval": [s.axial.z0, s.axial.z1], "n_steps": s.axial.n_steps,
                              "controls": f"stage{i}_controls.csv", "potentials": f"stage{i}_potentials.csv"})
        stage_info.append({"baseline_infidelity": s.baseline_infidelity, "de_infidelity": s.de_infidelity,
                           "infidelity": s.infidelity, "tikhonov": s.tikhonov,
                           "grape_steps": s.grape_history.accepted_steps, "grape_stop": s.grape_history.reason,
                           "stalled": s.grape_history.stalled})
    replay = None
    if result.stages:
        replay = {"grid": _grid_dict(grid), "phi0": "stage0_phi0.csv",
                  "phi_d": f"stage{len(result.stages) - 1}_phi_d.csv",
                  "design": {"kind": "separable-stages", "stages": replay_stages}}
    if result.refined is not None:
        tab = result.refined
        files.add("potential_2d", "potential-2d", write_matrix, "potential_2d.csv", tab.values,
                  grid.x_min, grid.dx, tab.axial.z0, tab.axial.dz)
    if result.refine_history is not None:
        files.add("history_refine_2d", "history", write_history, "history_refine_2d.csv",
                  *_history_columns(result.refine_history))
        replay["design"] = {"kind": "tabulated", "potential": "potential_2d.csv",
                            "n_steps": result.refine_axial.n_steps}
    if result.terminal_field is not None:
        files.add("terminal_field", "field", write_field, "terminal_field.csv", grid, result.terminal_field)
        intensity, iax = _intensity_matrix(result, spec.snapshot_stride)
        files.add("intensity_2d", "potential-2d", write_matrix, "intensity_2d.csv", intensity,
                  grid.x_min, grid.dx, iax.z0, iax.dz)
    write_manifest(out / "manifest.json", {
        "version": __version__, "manifest_version": "1", "command": "optimize", "seed": spec.seed,
        "files": files.entries, "config": cfg, "replay": replay,
        "results": {"final_infidelity": result.final_infidelity, "continuity_gap": result.continuity_gap,
                    "stalled": result.stalled, "error": result.error, "stages": stage_info,
                    "timing": result.timing},
    })
    print(f"final infidelity = {result.final_infidelity!r}")
    if result.error:
        print(f"run aborted: {result.error}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


# ------------------------------------------------------------ propagate ----


def replay(cfg: dict, base: Path):
    """Propagate the stored design; returns ``(grid, terminal field, infidelity)``."""
    grid = _grid_from(cfg["grid"])
    phi0 = read_field(base / cfg["phi0"], grid)
    phi_d = read_field(base / cfg["phi_d"], grid)
    design = cfg["design"]
    kind = design.get("kind")
    if kind == "separable-stages":
        psi = phi0
        for i, st in enumerate(design["stages"]):
            axial = AxialGrid(float(st["z_interval"][0]), float(st["z_interval"][1]), int(st["n_steps"]))
            ctl = read_table(base / st["controls"])
            pots = read_table(base / st["potentials"])
            if pots["x"].shape != (grid.n,) or np.max(np.abs(pots["x"] - grid.x)) > 1e-9 * grid.length:
                raise FormatError(f"{st['potentials']}: grid mismatch")
            if ctl["z"].shape != (axial.n_steps + 1,):
                raise FormatError(f"{st['controls']}: expected {axial.n_steps + 1} rows")
            if i:
                psi = psi / norm(psi, grid)
            tl = SeparableTimeline(pots["v_initial"], pots["v_terminal"], Control(ctl["u"], axial),
                                   Control(ctl["v"], axial))
            psi = propagate_forward(psi, tl, grid, axial)
    elif kind == "tabulated":
        values, geom = read_matrix(base / design["potential"])
        if geom["nx"] != grid.n or abs(geom["x0"] - grid.x_min) > 1e-9 * grid.length:
            raise FormatError("potential matrix does not match the grid")
        tab_axial = AxialGrid(geom["z0"], geom["z0"] + geom["dz"] * (geom["nz"] - 1), geom["nz"] - 1)
        tl = TabulatedTimeline(values, tab_axial)
        n_steps = int(design.get("n_steps", tab_axial.n_steps))
        psi = propagate_forward(phi0, tl, grid, AxialGrid(tab_axial.z0, tab_axial.z1, n_steps))
    else:
        raise UserError(f"unknown design kind {kind!r}")
    return grid, psi, infidelity(psi, phi_d, grid)


def cmd_propagate(args) -> int:
    path = Path(args.config)
    cfg = _load_json(path)
    if "replay" in cfg:
        cfg = cfg["replay"]
    if not cfg:
        raise UserError("nothing to replay")
    try:
        grid, psi, inf = replay(cfg, path.parent)
    except (KeyError, TypeError) as exc:
        raise UserError(f"malformed replay config: {exc!r}") from exc
    out = _out_dir(args)
    files = _Files(out)
    files.add("terminal_field", "field", write_field, "terminal_field.csv", grid, psi)
    write_manifest(out / "manifest.json", {
        "version": __version__, "manifest_version": "1", "command": "propagate", "seed": None,
        "files": files.entries, "config": cfg, "infidelity": inf,
    })
    print(f"infidelity: {inf!r}")
    return EXIT_OK


# ----------------------------------------------------------------- main ----


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="grinopt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eigen", help="ground states and inverse design")
    e.add_argument("config", nargs="?", help="JSON config with 'grid' and 'potential'")
    e.add_argument("--preset", choices=["poschl-teller", "harmonic", "tophat-inverse"])
    e.add_argument("--sigma", type=float, default=1.0)
    e.add_argument("--center", type=float, default=0.0)
    e.add_argument("--omega", type=float, default=1.0)
    e.add_argument("--n", type=int, default=1024)
    e.add_argument("--half-width", type=float, default=5 * np.pi)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eigen)

    o = sub.add_parser("optimize", help="run the hybrid DE + GRAPE design")
    o.add_argument("config", nargs="?", help="JSON problem config (see README)")
    o.add_argument("--preset", choices=["tophat", "beam-addition"])
    o.add_argument("--smoke", action="store_true", help="reduced budget and resolution")
    o.add_argument("--seed", type=int)
    o.add_argument("--population", type=int)
    o.add_argument("--generations", type=int)
    o.add_argument("--grape-iters", type=int)
    o.add_argument("--grape2d-iters", type=int)
    o.add_argument("--no-refine", action="store_true", help="skip the 2D refinement")
    o.add_argument("--out")
    o.set_defaults(func=cmd_optimize)

    r = sub.add_parser("propagate", help="replay a stored design and report its infidelity")
    r.add_argument("config", help="optimize manifest or replay config")
    r.add_argument("--out")
    r.set_defaults(func=cmd_propagate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        with sfft.set_workers(max(1, args.threads)):
            return args.func(args)
    except NoBoundStateError as exc:
        print(f"error: no bound state: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (UserError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
