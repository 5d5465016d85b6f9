"""Infidelity, Tikhonov running costs, and the reduced objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controls import Control
from .potentials import SeparableTimeline, TabulatedTimeline
from .propagate import propagate_forward, propagate_separable_batch
from .spectral import ContractError, Grid1D, inner_product, norm


def infidelity(psi_l, phi_d, grid: Grid1D) -> float:
    """1/2 (||phi_d||^4 - |<phi_d, psi_l>|^2)."""
    return 0.5 * (norm(phi_d, grid) ** 4 - abs(inner_product(phi_d, psi_l, grid)) ** 2)


def infidelity_batch(psi_l, phi_d, grid: Grid1D) -> np.ndarray:
    psi_l = np.atleast_2d(psi_l)
    overlap = (np.conj(phi_d)[None, :] * psi_l).sum(axis=1) * grid.dx
    return 0.5 * (norm(phi_d, grid) ** 4 - np.abs(overlap) ** 2)


def tikhonov_cost_1d(u, gamma: float, dz: float | None = None) -> float:
    """(gamma/2) sum |du/dz|^2 dz over first differences of the samples."""
    if isinstance(u, Control):
        dz = u.axial.dz
        u = u.samples
    if dz is None:
        raise ContractError("dz is required for raw samples")
    d = np.diff(np.asarray(u, dtype=float), axis=-1)
    return 0.5 * gamma * np.sum(d**2, axis=-1) / dz


def tikhonov_cost_2d(timeline: TabulatedTimeline, gamma: float, grid: Grid1D) -> float:
    """(gamma/2) integral of |dV/dx|^2 + |dV/dz|^2 by forward differences.

    The x-differences include the wrap from the last sample to ``x_max``,
    which is identified with the first sample.
    """
    values = timeline.values
    if values.shape[0] != grid.n:
        raise ContractError("timeline does not match the transverse grid")
    dx, dz = grid.dx, timeline.axial.dz
    gx = np.diff(values, axis=0, append=values[:1]) / dx
    gz = np.diff(values, axis=1) / dz
    # trapezoid weights in z for the x-differences, midpoint rule for the z-differences
    wz = np.full(values.shape[1], dz)
    wz[0] = wz[-1] = 0.5 * dz
    return 0.5 * gamma * (np.sum(gx**2 * wz[None, :]) * dx + np.sum(gz**2) * dz * dx)


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """One separable design stage: steer ``phi0`` into ``phi_d`` under u V0 + v Vl."""

    grid: Grid1D
    axial: "object"
    v0: np.ndarray
    vl: np.ndarray
    phi0: np.ndarray
    phi_d: np.ndarray
    gamma: float
    u_boundary: tuple[float, float] = (1.0, 0.0)
    v_boundary: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.gamma < 0:
            raise ContractError("gamma must be non-negative")

    def timeline(self, u: Control, v: Control) -> SeparableTimeline:
        return SeparableTimeline(self.v0, self.vl, u, v)

    def terms(self, u: Control, v: Control) -> tuple[float, float]:
        """(infidelity, tikhonov) at the given controls."""
        psi_l = propagate_forward(self.phi0, self.timeline(u, v), self.grid)
        tik = tikhonov_cost_1d(u, self.gamma) + tikhonov_cost_1d(v, self.gamma)
        return infidelity(psi_l, self.phi_d, self.grid), float(tik)

    def batch_terms(self, u_samples, v_samples) -> tuple[np.ndarray, np.ndarray]:
        psi_l = propagate_separable_batch(self.phi0, self.v0, self.vl, u_samples, v_samples, self.grid, self.axial)
        dz = self.axial.dz
        tik = tikhonov_cost_1d(u_samples, self.gamma, dz) + tikhonov_cost_1d(v_samples, self.gamma, dz)
        return infidelity_batch(psi_l, self.phi_d, self.grid), np.atleast_1d(tik)


@dataclass(frozen=True, eq=False)
class PotentialProblem:
    """Design over a tabulated V(x, z) with the 2D Tikhonov penalty."""

    grid: Grid1D
    axial: "object"
    phi0: np.ndarray
    phi_d: np.ndarray
    gamma: float
    stride: int = 1

    def terms(self, timeline: TabulatedTimeline) -> tuple[float, float]:
        psi_l = propagate_forward(self.phi0, timeline, self.grid, self.axial)
        return infidelity(psi_l, self.phi_d, self.grid), tikhonov_cost_2d(timeline, self.gamma, self.grid)


def reduced_objective(problem, *design) -> float:
    """Propagate from phi0 and return infidelity plus the matching Tikhonov cost."""
    inf, tik = problem.terms(*design)
    return inf + tik
