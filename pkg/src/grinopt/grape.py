"""GRAPE: Sobolev-projected gradient descent with Armijo backtracking.

The L2 gradients come from the continuous optimality system (state forward,
costate backward). Because each split step is exactly invertible, the
backward sweep carries the state along with the costate, so the control
gradient needs no stored trajectory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .controls import Control
from .objective import ControlProblem, PotentialProblem, infidelity, tikhonov_cost_1d, tikhonov_cost_2d
from .potentials import TabulatedTimeline
from .propagate import Trajectory, costate_terminal, iter_steps, midpoint_potentials, propagate_forward
from .spectral import (
    AxialGrid,
    ChebOperator,
    ContractError,
    Grid1D,
    interpolate_cheb_to_uniform,
    interpolate_uniform_to_cheb,
    solve_dirichlet_poisson_1d,
)

log = logging.getLogger(__name__)


@dataclass
class GrapeConfig:
    max_iters: int = 200
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    backtrack_ratio: float = 0.5
    initial_step: float = 1.0
    min_step: float = 1e-12
    cheb_nodes: int = 64

    def __post_init__(self):
        if not 0 < self.armijo_c < 1 or not 0 < self.backtrack_ratio < 1:
            raise ContractError("armijo_c and backtrack_ratio must lie in (0, 1)")
        if not 0 < self.min_step < self.initial_step:
            raise ContractError("need 0 < min_step < initial_step")


@dataclass
class DescentHistory:
    objective_per_iter: list = field(default_factory=list)
    infidelity_per_iter: list = field(default_factory=list)
    tikhonov_per_iter: list = field(default_factory=list)
    grad_norm_per_iter: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    required_decrease: list = field(default_factory=list)
    accepted_steps: int = 0
    stalled: bool = False
    reason: str = ""

    def record(self, obj, inf, tik):
        self.objective_per_iter.append(float(obj))
        self.infidelity_per_iter.append(float(inf))
        self.tikhonov_per_iter.append(float(tik))


def _second_difference(u: np.ndarray, dz: float) -> np.ndarray:
    out = np.zeros_like(u)
    out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / dz**2
    return out


def l2_control_gradient(psi_traj: Trajectory, p_traj: Trajectory, basis_potential, u: Control,
                        gamma: float, grid: Grid1D) -> np.ndarray:
    """-gamma u'' + Re<p, dV/du psi> on the control's z-grid, zero at the endpoints.

    Stored trajectories coarser than the control grid are bridged by linear
    interpolation of the overlap term.
    """
    if psi_traj.axial != p_traj.axial:
        raise ContractError("state and costate trajectories are on different axial grids")
    tax = psi_traj.axial
    if abs(tax.z0 - u.axial.z0) > 1e-12 or abs(tax.z1 - u.axial.z1) > 1e-12:
        raise ContractError("trajectories do not span the control interval")
    overlap = np.real(np.sum(np.conj(p_traj.fields) * basis_potential[None, :] * psi_traj.fields, axis=1)) * grid.dx
    if tax != u.axial:
        overlap = np.interp(u.axial.z, tax.z, overlap)
    g = -gamma * _second_difference(u.samples, u.axial.dz) + overlap
    g[0] = g[-1] = 0.0
    return g


def project_h10(l2_grad, axial: AxialGrid, cheb: ChebOperator | None = None) -> np.ndarray:
    """Solve -G'' = g with G = 0 at both ends via Chebyshev collocation."""
    cheb = cheb or ChebOperator((axial.z0, axial.z1))
    rhs = interpolate_uniform_to_cheb(l2_grad, axial, cheb)
    w = solve_dirichlet_poisson_1d(rhs, cheb)
    out = interpolate_cheb_to_uniform(w, cheb, axial)
    out[0] = out[-1] = 0.0
    return out


def h10_inner(f, g, axial: AxialGrid, cheb: ChebOperator) -> float:
    """int f' g' dz, evaluated spectrally on the Chebyshev nodes."""
    fc = interpolate_uniform_to_cheb(f, axial, cheb)
    gc = interpolate_uniform_to_cheb(g, axial, cheb)
    return cheb.integrate((cheb.d1 @ fc) * (cheb.d1 @ gc))


def control_gradients(problem: ControlProblem, u: Control, v: Control):
    """L2 gradients for (u, v) plus the objective terms at (u, v).

    Returns ``(g_u, g_v, infidelity, tikhonov)``.
    """
    grid, axial = problem.grid, problem.axial
    timeline = problem.timeline(u, v)
    psi_l = propagate_forward(problem.phi0, timeline, grid, axial)
    inf = infidelity(psi_l, problem.phi_d, grid)
    tik = tikhonov_cost_1d(u, problem.gamma) + tikhonov_cost_1d(v, problem.gamma)
    pair = np.stack([psi_l, costate_terminal(problem.phi_d, psi_l, grid)])
    n = axial.n_steps
    h0 = np.empty(n + 1)
    hl = np.empty(n + 1)

    def overlaps(k, fields):
        prod = np.conj(fields[1]) * fields[0]
        h0[k] = np.real(np.dot(problem.v0, prod)) * grid.dx
        hl[k] = np.real(np.dot(problem.vl, prod)) * grid.dx

    overlaps(n, pair)
    for k, fields in iter_steps(pair, midpoint_potentials(timeline, axial, reverse=True), grid, axial, -1):
        overlaps(n - k, fields)
    gu = -problem.gamma * _second_difference(u.samples, axial.dz) + h0
    gv = -problem.gamma * _second_difference(v.samples, axial.dz) + hl
    gu[0] = gu[-1] = gv[0] = gv[-1] = 0.0
    return gu, gv, inf, float(tik)


def _trapz_dot(a, b, dz):
    w = np.full(a.shape[-1], dz)
    w[0] = w[-1] = 0.5 * dz
    return float(np.sum(a * b * w))


def grape_descend_1d(problem: ControlProblem, u_init: Control, v_init: Control,
                     config: GrapeConfig | None = None, callback=None):
    """Joint projected gradient descent on (u, v) with one shared Armijo line search."""
    config = config or GrapeConfig()
    axial = problem.axial
    if u_init.axial != axial or v_init.axial != axial:
        raise ContractError("initial controls are not on the problem's axial grid")
    cheb = ChebOperator((axial.z0, axial.z1), config.cheb_nodes)
    u, v = u_init, v_init
    hist = DescentHistory()
    step = None
    gu, gv, inf, tik = control_gradients(problem, u, v)
    obj = inf + tik
    hist.record(obj, inf, tik)
    for _ in range(config.max_iters):
        pu = project_h10(gu, axial, cheb)
        pv = project_h10(gv, axial, cheb)
        slope = _trapz_dot(gu, pu, axial.dz) + _trapz_dot(gv, pv, axial.dz)
        gnorm = float(np.sqrt(max(slope, 0.0)))
        hist.grad_norm_per_iter.append(gnorm)
        if gnorm < config.grad_tol:
            hist.reason = "grad_tol"
            break
        if slope <= 0.0:
            hist.stalled, hist.reason = True, "projected gradient is not a descent direction"
            break
        gmax = max(np.max(np.abs(pu)), np.max(np.abs(pv)))
        cap = config.initial_step / gmax
        step = cap if step is None else min(2.0 * step, cap)
        accepted = False
        while step >= config.min_step:
            tu = Control(u.samples - step * pu, axial)
            tv = Control(v.samples - step * pv, axial)
            t_inf, t_tik = problem.terms(tu, tv)
            t_obj = t_inf + t_tik
            required = config.armijo_c * step * slope
            if t_obj <= obj - required:
                accepted = True
                break
            step *= config.backtrack_ratio
        if not accepted:
            hist.stalled, hist.reason = True, "step underflow"
            break
        u, v = tu, tv
        hist.steps.append(step)
        hist.required_decrease.append(required)
        hist.accepted_steps += 1
        gu, gv, inf, tik = control_gradients(problem, u, v)
        obj = inf + tik
        hist.record(obj, inf, tik)
        if callback is not None:
            callback(hist)
    else:
        hist.reason = "max_iters"
    return u, v, hist


# ---------------------------------------------------------------- 2D ----


def laplacian_2d(values: np.ndarray, dx: float, dz: float) -> np.ndarray:
    """5-point Laplacian, periodic in x, one-sided (copied) closure at the z ends."""
    lap_x = (np.roll(values, -1, axis=0) - 2 * values + np.roll(values, 1, axis=0)) / dx**2
    lap_z = np.empty_like(values)
    lap_z[:, 1:-1] = (values[:, 2:] - 2 * values[:, 1:-1] + values[:, :-2]) / dz**2
    lap_z[:, 0] = lap_z[:, 1]
    lap_z[:, -1] = lap_z[:, -2]
    return lap_x + lap_z


def potential_gradient_2d(psi_traj: Trajectory, p_traj: Trajectory, v: TabulatedTimeline,
                          gamma: float, grid: Grid1D) -> np.ndarray:
    """Pointwise -gamma lap V + Re(conj(p) psi) on the tabulated grid."""
    if psi_traj.axial != v.axial or p_traj.axial != v.axial:
        raise ContractError("trajectories must be stored on the tabulated axial grid")
    if v.values.shape[0] != grid.n:
        raise ContractError("tabulated potential does not match the transverse grid")
    overlap = np.real(np.conj(p_traj.snapshots) * psi_traj.snapshots)
    return -gamma * laplacian_2d(v.values, grid.dx, v.axial.dz) + overlap


def _overlap_2d(problem: PotentialProblem, timeline: TabulatedTimeline):
    """Hat-weighted Re(conj(p) psi) on the tabulated nodes, plus the infidelity.

    Each propagation step's overlap (averaged over its two end samples) is
    split between the two tabulated slices bracketing the step midpoint with
    the same linear weights the propagator uses, then divided by the node
    quadrature weight, so the result is an L2 gradient density.
    """
    grid, axial, tab = problem.grid, problem.axial, timeline.axial
    psi_l = propagate_forward(problem.phi0, timeline, grid, axial)
    inf = infidelity(psi_l, problem.phi_d, grid)
    pair = np.stack([psi_l, costate_terminal(problem.phi_d, psi_l, grid)])
    acc = np.zeros((tab.n_steps + 1, grid.n))
    mids = axial.z[:-1] + 0.5 * axial.dz
    t = (mids - tab.z0) / tab.dz
    j = np.minimum(np.floor(t).astype(int), tab.n_steps - 1)
    w = t - j
    prev = np.real(np.conj(pair[1]) * pair[0])
    n = axial.n_steps
    for k, fields in iter_steps(pair, midpoint_potentials(timeline, axial, reverse=True), grid, axial, -1):
        cur = np.real(np.conj(fields[1]) * fields[0])
        s = n - k  # step index whose end samples are (s, s + 1)
        contrib = 0.5 * axial.dz * (cur + prev)
        acc[j[s]] += (1.0 - w[s]) * contrib
        acc[j[s] + 1] += w[s] * contrib
        prev = cur
    node_w = np.full(tab.n_steps + 1, tab.dz)
    node_w[0] = node_w[-1] = 0.5 * tab.dz
    return (acc / node_w[:, None]).T, inf


def solve_dirichlet_poisson_2d(rhs: np.ndarray, hx: float, hz: float) -> np.ndarray:
    """Solve -lap w = rhs on interior nodes (5-point stencil, zero Dirichlet data) by DST-I."""
    nx, nz = rhs.shape
    lam_x = (2.0 - 2.0 * np.cos(np.pi * np.arange(1, nx + 1) / (nx + 1))) / hx**2
    lam_z = (2.0 - 2.0 * np.cos(np.pi * np.arange(1, nz + 1) / (nz + 1))) / hz**2
    coef = sfft.dstn(rhs, type=1)
    coef /= lam_x[:, None] + lam_z[None, :]
    return sfft.idstn(coef, type=1)


def project_h10_2d(l2_grad: np.ndarray, dx: float, dz: float) -> np.ndarray:
    """Riesz representer in H1_0 of the rectangle; row 0 is the x = x_min (= x_max) edge."""
    out = np.zeros_like(l2_grad)
    out[1:, 1:-1] = solve_dirichlet_poisson_2d(l2_grad[1:, 1:-1], dx, dz)
    return out


def potential_gradients(problem: PotentialProblem, timeline: TabulatedTimeline):
    """``(l2_gradient, infidelity, tikhonov)`` for a tabulated design."""
    overlap, inf = _overlap_2d(problem, timeline)
    grid = problem.grid
    g = -problem.gamma * laplacian_2d(timeline.values, grid.dx, timeline.axial.dz) + overlap
    return g, inf, tikhonov_cost_2d(timeline, problem.gamma, grid)


def _node_weights(n_x, axial: AxialGrid, dx):
    w = np.full(axial.n_steps + 1, axial.dz * dx)
    w[0] = w[-1] = 0.5 * axial.dz * dx
    return np.broadcast_to(w[None, :], (n_x, axial.n_steps + 1))


def grape_descend_2d(problem: PotentialProblem, v_init: TabulatedTimeline,
                     config: GrapeConfig | None = None, callback=None):
    """Projected gradient descent on V(x, z); boundary slices and the x edge stay fixed."""
    config = config or GrapeConfig()
    grid = problem.grid
    tab = v_init.axial
    weights = _node_weights(grid.n, tab, grid.dx)
    v = v_init
    hist = DescentHistory()
    step = None
    g, inf, tik = potential_gradients(problem, v)
    obj = inf + tik
    hist.record(obj, inf, tik)
    for _ in range(config.max_iters):
        gp = project_h10_2d(g, grid.dx, tab.dz)
        slope = float(np.sum(g * gp * weights))
        gnorm = float(np.sqrt(max(slope, 0.0)))
        hist.grad_norm_per_iter.append(gnorm)
        if gnorm < config.grad_tol:
            hist.reason = "grad_tol"
            break
        if slope <= 0.0:
            hist.stalled, hist.reason = True, "projected gradient is not a descent direction"
            break
        cap = config.initial_step / np.max(np.abs(gp))
        step = cap if step is None else min(2.0 * step, cap)
        accepted = False
        while step >= config.min_step:
            trial = TabulatedTimeline(v.values - step * gp, tab)
            t_inf, t_tik = problem.terms(trial)
            t_obj = t_inf + t_tik
            required = config.armijo_c * step * slope
            if t_obj <= obj - required:
                accepted = True
                break
            step *= config.backtrack_ratio
        if not accepted:
            hist.stalled, hist.reason = True, "step underflow"
            break
        v = trial
        hist.steps.append(step)
        hist.required_decrease.append(required)
        hist.accepted_steps += 1
        g, inf, tik = potential_gradients(problem, v)
        obj = inf + tik
        hist.record(obj, inf, tik)
        if callback is not None:
            callback(hist)
    else:
        hist.reason = "max_iters"
    return v, hist
