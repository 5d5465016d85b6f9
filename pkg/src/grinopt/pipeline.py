"""Hybrid DE + GRAPE runs, staged problems, and the two reshaping presets."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .controls import DEFAULT_MODES, Control, evaluate_ansatz
from .de import DEConfig, DEHistory, de_over_controls
from .eigen import EigenPair, ground_state, invert_potential, refine_terminal_potential
from .grape import DescentHistory, GrapeConfig, grape_descend_1d, grape_descend_2d
from .objective import ControlProblem, PotentialProblem
from .potentials import SeparableTimeline, TabulatedTimeline, beam_combine_initial, poschl_teller, tophat_target
from .propagate import propagate_forward
from .spectral import AxialGrid, ContractError, Grid1D, norm

log = logging.getLogger(__name__)

TOPHAT_A = 1e-3
TOPHAT_M = 8


class StageError(RuntimeError):
    def __init__(self, stage: int, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(eq=False)
class StageSpec:
    """One separable design stage. ``phi0=None`` takes the previous stage's terminal field."""

    z_interval: tuple[float, float]
    n_steps: int
    v_initial: np.ndarray
    v_terminal: np.ndarray
    phi_d: np.ndarray
    phi0: np.ndarray | None = None
    run_de: bool = True

    @property
    def axial(self) -> AxialGrid:
        return AxialGrid(self.z_interval[0], self.z_interval[1], self.n_steps)


@dataclass(eq=False)
class ProblemSpec:
    name: str
    grid: Grid1D
    stages: list
    gamma_1d: float
    gamma_2d: float = 1e-8
    de: DEConfig = field(default_factory=DEConfig)
    grape: GrapeConfig = field(default_factory=GrapeConfig)
    grape_2d: GrapeConfig | None = None
    seed: int = 7
    n_modes: int = DEFAULT_MODES
    snapshot_stride: int = 10
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        for a, b in zip(self.stages, self.stages[1:]):
            if abs(a.z_interval[1] - b.z_interval[0]) > 1e-12:
                raise ContractError("stage intervals must be contiguous")
            if np.max(np.abs(a.v_terminal - b.v_initial)) > 1e-12:
                raise ContractError("stage terminal potential must equal the next stage's initial potential")
        if self.stages and self.stages[0].phi0 is None:
            raise ContractError("the first stage needs an initial field")
        for s in self.stages:
            if s.phi0 is not None and abs(norm(s.phi0, self.grid) - 1) > 1e-10:
                raise ContractError("stage phi0 must have unit norm")
            if abs(norm(s.phi_d, self.grid) - 1) > 1e-10:
                raise ContractError("stage phi_d must have unit norm")


@dataclass(eq=False)
class StageResult:
    index: int
    axial: AxialGrid
    v0: np.ndarray
    vl: np.ndarray
    u: Control
    v: Control
    phi0: np.ndarray
    phi_d: np.ndarray
    psi_terminal: np.ndarray
    baseline_infidelity: float
    de_history: DEHistory | None
    de_infidelity: float
    grape_history: DescentHistory
    infidelity: float
    tikhonov: float

    @property
    def objective(self) -> float:
        return self.infidelity + self.tikhonov


@dataclass(eq=False)
class RunResult:
    problem: ProblemSpec
    stages: list = field(default_factory=list)
    refined: TabulatedTimeline | None = None
    refine_history: DescentHistory | None = None
    refine_axial: AxialGrid | None = None
    terminal_field: np.ndarray | None = None
    final_infidelity: float = float("nan")
    continuity_gap: float = float("nan")
    timing: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def stalled(self) -> bool:
        hists = [s.grape_history for s in self.stages]
        if self.refine_history is not None:
            hists.append(self.refine_history)
        return any(h.stalled for h in hists)


def run_hybrid_stage(problem: ControlProblem, de: DEConfig, grape: GrapeConfig, seed: int,
                     n_modes: int = DEFAULT_MODES, run_de: bool = True, index: int = 0):
    """DE over the ansatz, then GRAPE from the DE winner."""
    axial = problem.axial
    ramp_u = Control.ramp(*problem.u_boundary, axial)
    ramp_v = Control.ramp(*problem.v_boundary, axial)
    baseline, _ = problem.terms(ramp_u, ramp_v)
    de_hist = None
    u, v = ramp_u, ramp_v
    if run_de:
        t0 = time.perf_counter()
        cu, cv, de_hist = de_over_controls(problem, dataclasses.replace(de, seed=seed), n_modes)
        u, v = evaluate_ansatz(cu, axial), evaluate_ansatz(cv, axial)
        log.info("stage %d DE: %.6g -> %.6g in %.1fs", index, de_hist.best_value_per_generation[0],
                 de_hist.best_value, time.perf_counter() - t0)
    de_inf, _ = problem.terms(u, v)
    t0 = time.perf_counter()
    u, v, g_hist = grape_descend_1d(problem, u, v, grape)
    log.info("stage %d GRAPE: %.6g -> %.6g (%d steps, %s) in %.1fs", index, g_hist.objective_per_iter[0],
             g_hist.objective_per_iter[-1], g_hist.accepted_steps, g_hist.reason, time.perf_counter() - t0)
    psi_l = propagate_forward(problem.phi0, problem.timeline(u, v), problem.grid, axial)
    return StageResult(index, axial, problem.v0, problem.vl, u, v, problem.phi0, problem.phi_d, psi_l, baseline, de_hist, de_inf,
                       g_hist, g_hist.infidelity_per_iter[-1], g_hist.tikhonov_per_iter[-1])


def stage_problem(spec: ProblemSpec, stage: StageSpec, phi0) -> ControlProblem:
    return ControlProblem(spec.grid, stage.axial, stage.v_initial, stage.v_terminal, phi0, stage.phi_d,
                          spec.gamma_1d)


def assemble_tabulated(results, stride: int) -> tuple[TabulatedTimeline, AxialGrid, float]:
    """Tabulate the staged separable potentials on one axial grid.

    Returns the timeline, the full-resolution propagation grid, and the
    largest mismatch between the two slices meeting at each stage boundary.
    """
    dz = results[0].axial.dz
    for r in results:
        if abs(r.axial.dz - dz) > 1e-12 * dz or r.axial.n_steps % stride:
            raise ContractError("stages must share dz and be divisible by the snapshot stride")
    cols = []
    gap = 0.0
    for i, r in enumerate(results):
        sep = SeparableTimeline(r.v0, r.vl, r.u, r.v)
        vals = sep.tabulate(r.axial.coarsen(stride)).values
        if i:
            gap = max(gap, float(np.max(np.abs(cols[-1][:, -1] - vals[:, 0]))))
            vals = vals[:, 1:]
        cols.append(vals)
    values = np.concatenate(cols, axis=1)
    total = sum(r.axial.n_steps for r in results)
    full = AxialGrid(results[0].axial.z0, results[-1].axial.z1, total)
    return TabulatedTimeline(values, full.coarsen(stride)), full, gap


def run_full(spec: ProblemSpec, refine_2d: bool | None = None, callback=None) -> RunResult:
    """Run every stage in order, threading terminal fields, then the optional 2D refinement.

    Errors abort the run but the partial result is returned with ``error`` set.
    """
    result = RunResult(spec)
    refine_2d = spec.grape_2d is not None if refine_2d is None else refine_2d
    phi0 = spec.stages[0].phi0
    t_start = time.perf_counter()
    try:
        for i, stage in enumerate(spec.stages):
            if stage.phi0 is not None:
                phi0 = stage.phi0
            problem = stage_problem(spec, stage, phi0)
            t0 = time.perf_counter()
            try:
                res = run_hybrid_stage(problem, spec.de, spec.grape, spec.seed + i, spec.n_modes, stage.run_de, i)
            except Exception as exc:
                raise StageError(i, exc) from exc
            result.timing[f"stage{i}"] = time.perf_counter() - t0
            result.stages.append(res)
            if callback is not None:
                callback(result)
            phi0 = res.psi_terminal / norm(res.psi_terminal, spec.grid)
        result.terminal_field = result.stages[-1].psi_terminal
        result.final_infidelity = result.stages[-1].infidelity
        if len(result.stages) > 1 or refine_2d:
            tab, full_axial, gap = assemble_tabulated(result.stages, spec.snapshot_stride)
            result.continuity_gap = gap
            result.refined = tab
            result.refine_axial = full_axial
        if refine_2d:
            t0 = time.perf_counter()
            pproblem = PotentialProblem(spec.grid, result.refine_axial, spec.stages[0].phi0, spec.stages[-1].phi_d,
                                        spec.gamma_2d, spec.snapshot_stride)
            tab, hist = grape_descend_2d(pproblem, result.refined, spec.grape_2d)
            result.refined = tab
            result.refine_history = hist
            result.terminal_field = propagate_forward(pproblem.phi0, tab, spec.grid, result.refine_axial)
            result.final_infidelity = hist.infidelity_per_iter[-1]
            result.timing["refine_2d"] = time.perf_counter() - t0
    except Exception as exc:
        log.error("run aborted: %s", exc)
        result.error = f"{type(exc).__name__}: {exc}"
    result.timing["total"] = time.perf_counter() - t_start
    return result


# ------------------------------------------------------------ presets ----


def tophat_design(grid: Grid1D, a: float = TOPHAT_A, m: int = TOPHAT_M, refine_iters: int = 50,
                  tol: float = 1e-10) -> tuple[np.ndarray, EigenPair]:
    """Terminal potential with the top-hat mode as ground state, and its computed ground state."""
    target = tophat_target(a, m, grid)
    v_init = invert_potential(target, grid)
    v, pair, _ = refine_terminal_potential(v_init, target, grid, max_iters=refine_iters, tol=tol)
    return v, pair


def sech_state(grid: Grid1D) -> np.ndarray:
    phi = -np.sqrt(0.5) / np.cosh(np.clip(grid.x, -700, 700))
    return phi / norm(phi, grid)


def _dataclass_from(cls, data):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ContractError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def _potential(desc, grid: Grid1D, cache: dict) -> np.ndarray:
    key = repr(sorted(desc.items()))
    if key in cache:
        return cache[key][0]
    kind = desc.get("kind")
    pair = None
    if kind == "poschl-teller":
        v = poschl_teller(float(desc.get("sigma", 1.0)), float(desc.get("center", 0.0)), grid)
    elif kind == "tophat-inverse":
        v, pair = tophat_design(grid, float(desc.get("a", TOPHAT_A)), int(desc.get("m", TOPHAT_M)))
    elif kind == "beam-combine":
        v, _ = beam_combine_initial(float(desc["spacing"]), grid)
    elif kind == "harmonic":
        v = 0.5 * float(desc.get("omega", 1.0)) ** 2 * grid.x**2
    elif kind == "file":
        from .exports import read_column
        v = read_column(desc["path"], desc.get("column", "re"), grid)
    else:
        raise ContractError(f"unknown potential kind {kind!r}")
    cache[key] = (v, pair)
    return v


def _state(desc, potential_desc, grid: Grid1D, cache: dict) -> np.ndarray | None:
    if desc is None:
        return None
    if desc == "ground-state":
        v = _potential(potential_desc, grid, cache)
        pair = cache[repr(sorted(potential_desc.items()))][1]
        if pair is None:
            pair = ground_state(v, grid)
            cache[repr(sorted(potential_desc.items()))] = (v, pair)
        return pair.phi
    kind = desc.get("kind")
    if kind == "sech":
        return sech_state(grid)
    if kind == "beam-combine":
        return beam_combine_initial(float(desc["spacing"]), grid)[1]
    if kind == "file":
        from .exports import read_field
        phi = read_field(desc["path"], grid)
        return phi / norm(phi, grid)
    raise ContractError(f"unknown state kind {kind!r}")


def preset_config(name: str, smoke: bool = False, seed: int = 7) -> dict:
    """Fully resolved configuration dictionary for a named preset."""
    if name == "tophat":
        n_steps = 2000
        cfg = {
            "name": "tophat",
            "grid": {"x_min": -5 * np.pi, "x_max": 5 * np.pi, "n": 1024},
            "stages": [{
                "z_interval": [0.0, 7.0], "n_steps": n_steps,
                "v_initial": {"kind": "poschl-teller", "sigma": 1.0, "center": 0.0},
                "v_terminal": {"kind": "tophat-inverse", "a": TOPHAT_A, "m": TOPHAT_M},
                "phi0": {"kind": "sech"}, "phi_d": "ground-state", "run_de": True,
            }],
            "gamma_1d": 1e-6, "gamma_2d": 1e-8,
            "de": dataclasses.asdict(DEConfig(population=10, generations=20) if smoke else DEConfig()),
            "grape": dataclasses.asdict(GrapeConfig(max_iters=40) if smoke else GrapeConfig(max_iters=1000)),
            "grape_2d": None,
        }
    elif name == "beam-addition":
        n, per_unit = (2048, 50) if smoke else (4096, 200)
        top = {"kind": "tophat-inverse", "a": TOPHAT_A, "m": TOPHAT_M}
        cfg = {
            "name": "beam-addition",
            "grid": {"x_min": -15 * np.pi, "x_max": 15 * np.pi, "n": n},
            "stages": [
                {"z_interval": [0.0, 30.0], "n_steps": 30 * per_unit,
                 "v_initial": {"kind": "beam-combine", "spacing": 10.0}, "v_terminal": top,
                 "phi0": {"kind": "beam-combine", "spacing": 10.0}, "phi_d": "ground-state", "run_de": True},
                {"z_interval": [30.0, 70.0], "n_steps": 40 * per_unit,
                 "v_initial": top, "v_terminal": {"kind": "poschl-teller", "sigma": 3.0, "center": 0.0},
                 "phi0": None, "phi_d": "ground-state", "run_de": True},
            ],
            "gamma_1d": 1e-6, "gamma_2d": 1e-8,
            "de": dataclasses.asdict(DEConfig(population=6, generations=2) if smoke
                                     else DEConfig(population=30, generations=30)),
            "grape": dataclasses.asdict(GrapeConfig(max_iters=4) if smoke else GrapeConfig(max_iters=150)),
            "grape_2d": dataclasses.asdict(GrapeConfig(max_iters=4) if smoke else GrapeConfig(max_iters=30)),
        }
    else:
        raise ContractError(f"unknown preset {name!r}")
    cfg.update({"seed": seed, "n_modes": DEFAULT_MODES, "snapshot_stride": 10})
    cfg["de"]["seed"] = seed
    return cfg


def problem_from_config(cfg: dict) -> ProblemSpec:
    """Build a :class:`ProblemSpec` from a configuration dictionary (see ``preset_config``)."""
    try:
        grid = Grid1D(float(cfg["grid"]["x_min"]), float(cfg["grid"]["x_max"]), int(cfg["grid"]["n"]))
        cache: dict = {}
        stages = []
        for st in cfg["stages"]:
            v_init = _potential(st["v_initial"], grid, cache)
            v_term = _potential(st["v_terminal"], grid, cache)
            stages.append(StageSpec(
                tuple(float(z) for z in st["z_interval"]), int(st["n_steps"]), v_init, v_term,
                _state(st["phi_d"], st["v_terminal"], grid, cache),
                _state(st.get("phi0"), st["v_initial"], grid, cache),
                bool(st.get("run_de", True)),
            ))
        de = _dataclass_from(DEConfig, cfg.get("de") or {})
        grape = _dataclass_from(GrapeConfig, cfg.get("grape") or {})
        grape_2d = _dataclass_from(GrapeConfig, cfg["grape_2d"]) if cfg.get("grape_2d") is not None else None
        return ProblemSpec(cfg.get("name", "custom"), grid, stages, float(cfg["gamma_1d"]),
                           float(cfg.get("gamma_2d", 1e-8)), de, grape, grape_2d, int(cfg.get("seed", 7)),
                           int(cfg.get("n_modes", DEFAULT_MODES)), int(cfg.get("snapshot_stride", 10)), cfg)
    except (KeyError, TypeError) as exc:
        raise ContractError(f"malformed configuration: {exc!r}") from exc


def preset_tophat(smoke: bool = False, seed: int = 7) -> ProblemSpec:
    """Sech ground state of the sigma=1 well into the top-hat mode on [0, 7]."""
    return problem_from_config(preset_config("tophat", smoke, seed))


def preset_beam_addition(smoke: bool = False, seed: int = 7) -> ProblemSpec:
    """Three sech beams merged through the top-hat well into the sigma=3 ground state."""
    return problem_from_config(preset_config("beam-addition", smoke, seed))
