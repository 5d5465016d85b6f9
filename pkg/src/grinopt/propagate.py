"""Strang split-step Fourier integration of i psi_z = -1/2 psi_xx + V psi.

Each step applies the potential phase for dz/2, the kinetic propagator for
dz in Fourier space, and the potential phase for dz/2 again, with V frozen at
the step midpoint. Backward propagation applies the exact inverse of each step
in reverse order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .potentials import SeparableTimeline, TabulatedTimeline
from .spectral import AxialGrid, ContractError, Grid1D, inner_product


class PropagationError(RuntimeError):
    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Fields stored every ``stride`` steps; ``fields[j]`` sits at ``axial.z[j]``."""

    fields: np.ndarray
    axial: AxialGrid
    stride: int = 1

    @property
    def snapshots(self) -> np.ndarray:
        """``(n_x, n_stored)`` view."""
        return self.fields.T

    @property
    def terminal(self) -> np.ndarray:
        return self.fields[-1]

    @property
    def initial(self) -> np.ndarray:
        return self.fields[0]


def midpoint_potentials(timeline, axial: AxialGrid, reverse: bool = False):
    """Iterator over V(x, z_k + dz/2) for k = 0..n_steps-1 (or in reverse)."""
    order = range(axial.n_steps - 1, -1, -1) if reverse else range(axial.n_steps)
    if isinstance(timeline, SeparableTimeline) and timeline.axial == axial:
        um = timeline.u.midpoints()
        vm = timeline.v.midpoints()
        return (um[k] * timeline.v0 + vm[k] * timeline.vl for k in order)
    if isinstance(timeline, (SeparableTimeline, TabulatedTimeline)):
        tl = timeline.axial
        tol = 1e-12 * max(1.0, abs(tl.z1))
        if axial.z0 < tl.z0 - tol or axial.z1 > tl.z1 + tol:
            raise ContractError("timeline does not cover the propagation interval")
        mids = axial.z[:-1] + 0.5 * axial.dz
        return (timeline.slice(mids[k]) for k in order)
    raise ContractError(f"unsupported timeline type {type(timeline).__name__}")


def _kinetic(grid: Grid1D, dz: float) -> np.ndarray:
    return np.exp(-0.5j * dz * grid.k**2)


def iter_steps(psi, potentials, grid: Grid1D, axial: AxialGrid, sign: int = 1):
    """Yield ``(k, field)`` after each step; ``k`` counts completed steps."""
    dz = axial.dz
    kin = _kinetic(grid, sign * dz)
    half = -0.5j * sign * dz
    for k, v in enumerate(potentials, start=1):
        phase = np.exp(half * v)
        psi = phase * sfft.ifft(kin * sfft.fft(phase * psi, axis=-1), axis=-1)
        yield k, psi


def _run(psi, potentials, grid, axial, sign, store, stride):
    out = None
    if store:
        if axial.n_steps % stride:
            raise ContractError(f"stride {stride} does not divide n_steps={axial.n_steps}")
        out = np.empty((axial.n_steps // stride + 1,) + psi.shape, dtype=complex)
        out[0] = psi
    for k, psi in iter_steps(psi, potentials, grid, axial, sign):
        if k % stride == 0:
            if not np.all(np.isfinite(psi)):
                raise PropagationError(f"non-finite field after step {k}", step=k)
            if store:
                out[k // stride] = psi
    if not np.all(np.isfinite(psi)):
        raise PropagationError("non-finite terminal field", step=axial.n_steps)
    return psi, out


def _prepare(psi, grid):
    psi = np.asarray(grid.check(psi), dtype=complex)
    if not np.any(psi):
        raise ContractError("initial field must be nonzero")
    return psi


def propagate_forward(psi0, timeline, grid: Grid1D, axial: AxialGrid | None = None,
                      store: bool = False, stride: int = 1):
    """Propagate from ``axial.z0`` to ``axial.z1``.

    Returns a :class:`Trajectory` when ``store`` is set, otherwise the terminal field.
    """
    axial = axial or timeline.axial
    psi = _prepare(psi0, grid)
    end, out = _run(psi, midpoint_potentials(timeline, axial), grid, axial, +1, store, stride)
    if store:
        return Trajectory(out, axial.coarsen(stride), stride)
    return end


def propagate_backward(p_terminal, timeline, grid: Grid1D, axial: AxialGrid | None = None,
                       store: bool = True, stride: int = 1):
    """Integrate the same equation from ``axial.z1`` down to ``axial.z0``."""
    axial = axial or timeline.axial
    p = _prepare(p_terminal, grid)
    pots = midpoint_potentials(timeline, axial, reverse=True)
    start, out = _run(p, pots, grid, axial, -1, store, stride)
    if store:
        return Trajectory(out[::-1].copy(), axial.coarsen(stride), stride)
    return start


def costate_terminal(phi_d, psi_l, grid: Grid1D) -> np.ndarray:
    """p(l) with i p(l) = <phi_d, psi(l)> phi_d."""
    return -1j * inner_product(phi_d, psi_l, grid) * np.asarray(phi_d, dtype=complex)


def propagate_separable_batch(psi0, v0, vl, u_samples, v_samples, grid: Grid1D, axial: AxialGrid) -> np.ndarray:
    """Terminal fields for a batch of separable control pairs, shape ``(batch, n_x)``.

    ``u_samples`` and ``v_samples`` are ``(batch, n_steps + 1)``; rows propagate
    independently, so each row equals the corresponding unbatched run.
    """
    u = np.atleast_2d(u_samples)
    v = np.atleast_2d(v_samples)
    if u.shape != v.shape or u.shape[1] != axial.n_steps + 1:
        raise ContractError("control batch does not match the axial grid")
    um = 0.5 * (u[:, 1:] + u[:, :-1])
    vm = 0.5 * (v[:, 1:] + v[:, :-1])
    psi = np.broadcast_to(_prepare(psi0, grid), (u.shape[0], grid.n)).copy()
    pots = (um[:, k, None] * v0[None, :] + vm[:, k, None] * vl[None, :] for k in range(axial.n_steps))
    end, _ = _run(psi, pots, grid, axial, +1, False, 1)
    return end
