"""Ground states of -1/2 d^2/dx^2 + V and inverse design of a potential from its ground state."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import sparse
from scipy.sparse import linalg as spla

from .spectral import ContractError, Grid1D, inner_product, norm, second_derivative_fourier

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8


class NoBoundStateError(RuntimeError):
    """The potential has no eigenvalue below its asymptotic value."""


class RefinementDiverged(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EigenPair:
    lam: float
    phi: np.ndarray
    residual: float = float("nan")


def apply_hamiltonian(phi, v, grid: Grid1D) -> np.ndarray:
    return -0.5 * second_derivative_fourier(phi, grid) + v * phi


def eigen_residual(phi, lam, v, grid: Grid1D) -> float:
    return norm(apply_hamiltonian(phi, v, grid) - lam * phi, grid)


def _fd_hamiltonian(v, grid: Grid1D):
    n = grid.n
    h = 0.5 / grid.dx**2
    main = 2 * h + v
    off = -h * np.ones(n - 1)
    mat = sparse.diags([off, main, off], [-1, 0, 1], shape=(n, n), format="lil")
    mat[0, n - 1] = -h
    mat[n - 1, 0] = -h
    return mat.tocsc()


def _kinetic_preconditioner(grid: Grid1D, shift: float):
    denom = 0.5 * grid.k**2 + shift

    def apply(r):
        return sfft.ifft(sfft.fft(r) / denom).real

    return spla.LinearOperator((grid.n, grid.n), matvec=apply, dtype=float)


def _fix_sign(phi):
    if phi[np.argmax(np.abs(phi))] > 0:
        phi = -phi
    return phi


def ground_state(v, grid: Grid1D, tol: float = RESIDUAL_TOL, max_iters: int = 50) -> EigenPair:
    """Lowest eigenpair: periodic second-order FD solve, then spectral inverse iteration.

    The FD kinetic operator is dominated by the spectral one, so its lowest
    eigenvalue bounds the spectral one from below and any shift beneath it
    keeps ``H - shift`` positive definite for the CG solves.
    """
    v = np.asarray(grid.check(v), dtype=float)
    if not np.all(np.isfinite(v)):
        raise ContractError("potential has non-finite samples")
    h_fd = _fd_hamiltonian(v, grid)
    # fixed start vector: ARPACK's default draws from process-global state
    start = np.exp(-0.5 * ((grid.x - grid.x[np.argmin(v)]) / (0.1 * grid.length)) ** 2)
    vals, vecs = spla.eigsh(h_fd, k=2, sigma=v.min() - 1.0, which="LM", v0=start)
    order = np.argsort(vals)
    lam0, lam1 = vals[order]
    asymptote = min(v[0], v[-1])
    if lam0 >= asymptote - 1e-12:
        raise NoBoundStateError(
            f"lowest eigenvalue {lam0:.6g} is not below the asymptotic potential {asymptote:.6g}"
        )
    phi = vecs[:, order[0]]
    phi /= norm(phi, grid)

    gap = max(lam1 - lam0, 1e-6)
    shift = lam0 - min(0.05 * gap, 0.05)
    a_op = spla.LinearOperator(
        (grid.n, grid.n), matvec=lambda y: apply_hamiltonian(y, v, grid) - shift * y, dtype=float
    )
    precond = _kinetic_preconditioner(grid, max(float(np.median(v)) - shift, 1.0))
    lam = float(np.real(inner_product(phi, apply_hamiltonian(phi, v, grid), grid)))
    res = eigen_residual(phi, lam, v, grid)
    it = 0
    while res > tol and it < max_iters:
        y, info = spla.cg(a_op, phi, x0=phi / max(lam - shift, 1e-12), rtol=1e-13, atol=0.0, M=precond, maxiter=5000)
        phi = y / norm(y, grid)
        lam = float(np.real(inner_product(phi, apply_hamiltonian(phi, v, grid), grid)))
        res = eigen_residual(phi, lam, v, grid)
        it += 1
    if res > tol:
        log.warning("inverse iteration stopped at residual %.3g after %d iterations", res, it)
    return EigenPair(lam, _fix_sign(phi), res)


def _resolvent_solve(pair: EigenPair, v, rhs, grid: Grid1D):
    """Solve (H - lam) y = rhs on the orthogonal complement of the ground state."""
    phi = pair.phi

    def proj(y):
        return y - np.dot(phi, y) * grid.dx * phi

    a_op = spla.LinearOperator(
        (grid.n, grid.n), matvec=lambda y: proj(apply_hamiltonian(proj(y), v, grid) - pair.lam * proj(y)), dtype=float
    )
    pre = _kinetic_preconditioner(grid, max(float(np.median(v)) - pair.lam, 1.0))
    m_op = spla.LinearOperator((grid.n, grid.n), matvec=lambda y: proj(pre.matvec(proj(y))), dtype=float)
    y, _ = spla.cg(a_op, proj(rhs), rtol=1e-12, atol=0.0, M=m_op, maxiter=5000)
    return proj(y)


def invert_potential(target, grid: Grid1D, lambda_gauge: float | None = None, floor: float = 1e-6) -> np.ndarray:
    """Potential whose ground state is ``target``: V = lam + (1/2) target'' / target.

    Evaluated where ``|target| >= floor * max|target|`` and continued as a
    constant beyond. With ``lambda_gauge=None`` the gauge is chosen so that
    min V = -1.
    """
    target = np.asarray(grid.check(target))
    if np.iscomplexobj(target):
        if np.max(np.abs(target.imag)) > 1e-12 * np.max(np.abs(target)):
            raise ContractError("target must be real-valued")
        target = target.real
    mask = np.abs(target) >= floor * np.max(np.abs(target))
    idx = np.flatnonzero(mask)
    lo, hi = idx[0], idx[-1]
    core = target[lo : hi + 1]
    if np.any(np.sign(core) != np.sign(core[0])):
        raise ContractError("target changes sign inside the floor region; ground states are nodeless")
    shape = np.empty_like(target)
    shape[lo : hi + 1] = 0.5 * second_derivative_fourier(target, grid)[lo : hi + 1] / core
    shape[:lo] = shape[lo]
    shape[hi + 1 :] = shape[hi]
    if lambda_gauge is None:
        lambda_gauge = -1.0 - shape.min()
    return lambda_gauge + shape


def _aligned_misfit(target, phi, grid):
    if np.dot(target, phi) < 0:
        phi = -phi
    r = target - phi
    return 0.5 * norm(r, grid) ** 2, r, phi


def refine_terminal_potential(v_init, target, grid: Grid1D, max_iters: int = 100, tol: float = 1e-8,
                              armijo_c: float = 1e-4, min_step: float = 1e-14):
    """Gradient descent on 1/2 ||target - ground_state(V)||^2 over V.

    The gradient follows from first-order eigenvector perturbation:
    dphi = -(H - lam)^+ (dV phi), so dJ/dV = phi * (H - lam)^+ (target - phi).
    Returns ``(V, EigenPair, misfit_history)``.
    """
    target = np.asarray(grid.check(target), dtype=float)
    v = np.asarray(v_init, dtype=float).copy()
    pair = ground_state(v, grid)
    misfit, r, phi = _aligned_misfit(target, pair.phi, grid)
    history = [misfit]
    step = None
    rises = 0
    for _ in range(max_iters):
        if misfit < tol:
            break
        signed = EigenPair(pair.lam, phi, pair.residual)
        grad = phi * _resolvent_solve(signed, v, r, grid)
        g2 = float(np.sum(grad**2) * grid.dx)
        if g2 == 0.0:
            break
        step = step * 2.0 if step else misfit / g2
        while step > min_step:
            trial_v = v - step * grad
            trial = ground_state(trial_v, grid)
            trial_misfit, trial_r, trial_phi = _aligned_misfit(target, trial.phi, grid)
            if trial_misfit <= misfit - armijo_c * step * g2:
                break
            step *= 0.5
        else:
            log.info("refinement line search underflow at misfit %.3g", misfit)
            break
        rises = rises + 1 if trial_misfit > misfit else 0
        if rises >= 5:
            raise RefinementDiverged("misfit increased for 5 consecutive accepted steps")
        v, pair, misfit, r, phi = trial_v, trial, trial_misfit, trial_r, trial_phi
        history.append(misfit)
    return v, pair, np.array(history)
