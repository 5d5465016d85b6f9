"""Potentials, target fields and potential timelines V(x, z)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controls import Control
from .spectral import AxialGrid, ContractError, Grid1D, norm


def _sech(x):
    # 1/cosh overflows to 0 cleanly; avoid the RuntimeWarning
    with np.errstate(over="ignore"):
        return 1.0 / np.cosh(x)


def poschl_teller(sigma: float, center: float, grid: Grid1D) -> np.ndarray:
    """-sigma (sigma + 1) / 2 * sech^2(x - center)."""
    if not sigma > 0:
        raise ContractError("sigma must be positive")
    return -0.5 * sigma * (sigma + 1) * _sech(grid.x - center) ** 2


def tophat_target(a: float, m: int, grid: Grid1D) -> np.ndarray:
    """Normalized A exp(-a x^m) with even m."""
    if not a > 0:
        raise ContractError("a must be positive")
    if m < 2 or m % 2:
        raise ContractError("m must be a positive even integer")
    x = grid.x
    with np.errstate(over="ignore", under="ignore"):
        arg = a * x**m
        phi = np.where(arg < 745.0, np.exp(-np.minimum(arg, 745.0)), 0.0)
    if grid.x_min == -grid.x_max:
        # vectorized exp may differ by an ulp between mirrored positions
        h = grid.n // 2
        phi[1:h] = phi[h + 1:][::-1]
    return phi / norm(phi, grid)


def beam_combine_initial(a: float, grid: Grid1D) -> tuple[np.ndarray, np.ndarray]:
    """Three separated sigma=1 wells and the summed sech input beam (renormalized)."""
    if not a > 0:
        raise ContractError("a must be positive")
    x = grid.x
    v0 = -(_sech(x - a) ** 2 + _sech(x + a) ** 2 + _sech(x) ** 2)
    phi0 = -(_sech(x - a) + _sech(x + a) + _sech(x)) / np.sqrt(6.0)
    return v0, phi0 / norm(phi0, grid)


@dataclass(frozen=True, eq=False)
class SeparableTimeline:
    """V(x, z) = u(z) v0(x) + v(z) vl(x)."""

    v0: np.ndarray
    vl: np.ndarray
    u: Control
    v: Control

    def __post_init__(self):
        if self.u.axial != self.v.axial:
            raise ContractError("u and v must share an axial grid")
        if np.shape(self.v0) != np.shape(self.vl):
            raise ContractError("v0 and vl must be sampled on the same grid")

    @property
    def axial(self) -> AxialGrid:
        return self.u.axial

    def slice(self, z: float) -> np.ndarray:
        _check_range(z, self.axial)
        return self.u(z) * self.v0 + self.v(z) * self.vl

    def tabulate(self, axial: AxialGrid | None = None) -> "TabulatedTimeline":
        axial = axial or self.axial
        u = self.u(axial.z)
        v = self.v(axial.z)
        values = self.v0[:, None] * u[None, :] + self.vl[:, None] * v[None, :]
        return TabulatedTimeline(values, axial)


@dataclass(frozen=True, eq=False)
class TabulatedTimeline:
    """V sampled as an ``(n_x, n_z + 1)`` matrix on its own axial grid."""

    values: np.ndarray
    axial: AxialGrid

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != self.axial.n_steps + 1:
            raise ContractError("tabulated values must be (n_x, n_steps + 1)")
        if not np.all(np.isfinite(vals)):
            raise ContractError("tabulated potential contains non-finite values")
        object.__setattr__(self, "values", vals)

    def slice(self, z: float) -> np.ndarray:
        _check_range(z, self.axial)
        t = (z - self.axial.z0) / self.axial.dz
        j = min(int(np.floor(t)), self.axial.n_steps - 1)
        w = t - j
        if w == 0.0:
            return self.values[:, j].copy()
        if w == 1.0:
            return self.values[:, j + 1].copy()
        return (1.0 - w) * self.values[:, j] + w * self.values[:, j + 1]


def assemble_slice(timeline, z: float) -> np.ndarray:
    return timeline.slice(z)


def _check_range(z, axial: AxialGrid):
    tol = 1e-12 * max(1.0, abs(axial.z1))
    if z < axial.z0 - tol or z > axial.z1 + tol:
        raise ContractError(f"z={z} outside [{axial.z0}, {axial.z1}]")
