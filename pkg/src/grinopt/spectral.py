"""Grids, quadrature, Fourier second derivatives and Chebyshev collocation."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft
from scipy.interpolate import CubicSpline


class ContractError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic transverse grid; ``x_max`` is identified with ``x_min``."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1):
            raise ContractError(f"n must be a power of two >= 8, got {self.n}")
        if not self.x_max > self.x_min:
            raise ContractError("x_max must exceed x_min")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n

    @cached_property
    def x(self) -> np.ndarray:
        # offsets from the centre so a symmetric domain gives x_{n-j} == -x_j exactly
        centre = 0.5 * (self.x_min + self.x_max)
        return centre + self.dx * (np.arange(self.n) - self.n // 2)

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        return 2 * np.pi * sfft.fftfreq(self.n, d=self.dx)

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[-1] != self.n:
            raise ContractError(f"expected {self.n} samples on the last axis, got {f.shape[-1]}")
        return f


@dataclass(frozen=True)
class AxialGrid:
    z0: float
    z1: float
    n_steps: int

    def __post_init__(self):
        if not self.z1 > self.z0:
            raise ContractError("z1 must exceed z0")
        if self.n_steps < 1:
            raise ContractError("n_steps must be positive")

    @property
    def length(self) -> float:
        return self.z1 - self.z0

    @property
    def dz(self) -> float:
        return self.length / self.n_steps

    @cached_property
    def z(self) -> np.ndarray:
        z = self.z0 + self.dz * np.arange(self.n_steps + 1)
        z[-1] = self.z1
        return z

    def coarsen(self, stride: int) -> "AxialGrid":
        if stride < 1 or self.n_steps % stride:
            raise ContractError(f"stride {stride} does not divide n_steps={self.n_steps}")
        return AxialGrid(self.z0, self.z1, self.n_steps // stride)


def second_derivative_fourier(f, grid: Grid1D) -> np.ndarray:
    """Periodic spectral second derivative along the last axis."""
    f = grid.check(f)
    out = sfft.ifft(-(grid.k**2) * sfft.fft(f, axis=-1), axis=-1)
    if np.isrealobj(f):
        return out.real
    return out


def inner_product(f, g, grid: Grid1D) -> complex:
    """Riemann-sum L2 inner product, conjugate-linear in the first argument."""
    f = grid.check(f)
    g = grid.check(g)
    return complex(np.vdot(f, g) * grid.dx)


def norm(f, grid: Grid1D) -> float:
    f = grid.check(f)
    return float(np.sqrt(np.sum(np.abs(f) ** 2) * grid.dx))


def _cheb_diff(n: int):
    """Nodes cos(pi j / n), j = 0..n, and the first-derivative matrix on [-1, 1]."""
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))
    return x, d


def _clenshaw_curtis(n: int) -> np.ndarray:
    """Clenshaw-Curtis weights on [-1, 1] for nodes cos(pi j / n)."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    inner = np.arange(1, n)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
        v -= np.cos(n * theta[inner]) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
    w[inner] = 2 * v / n
    return w


@dataclass(frozen=True)
class ChebOperator:
    """Chebyshev-Gauss-Lobatto collocation on ``interval`` with ``n_nodes`` points.

    ``nodes`` increase from ``interval[0]`` to ``interval[1]``. ``d2`` is the
    interior block of the second-derivative matrix, i.e. the Dirichlet
    operator acting on interior unknowns.
    """

    interval: tuple[float, float]
    n_nodes: int = 64
    nodes: np.ndarray = field(init=False, repr=False)
    d1: np.ndarray = field(init=False, repr=False)
    d2: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a, b = map(float, self.interval)
        if not b > a or self.n_nodes < 4:
            raise ContractError("need b > a and at least 4 nodes")
        n = self.n_nodes - 1
        t, d = _cheb_diff(n)
        # reverse so that nodes increase
        t = t[::-1].copy()
        d = d[::-1, ::-1].copy()
        scale = 2.0 / (b - a)
        nodes = a + (t + 1.0) / scale
        nodes[0], nodes[-1] = a, b
        d1 = d * scale
        d2full = d1 @ d1
        w = _clenshaw_curtis(n)[::-1] / scale
        object.__setattr__(self, "interval", (a, b))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "d2", d2full[1:-1, 1:-1].copy())
        object.__setattr__(self, "weights", w)
        # barycentric weights for CGL points (sign pattern unaffected by the reversal up to a global sign)
        bw = (-1.0) ** np.arange(n + 1)
        bw[0] *= 0.5
        bw[-1] *= 0.5
        object.__setattr__(self, "_bary", bw)

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f))

    def evaluate(self, values, points) -> np.ndarray:
        """Barycentric interpolation of node ``values`` at arbitrary ``points``."""
        values = np.asarray(values, dtype=float)
        points = np.atleast_1d(np.asarray(points, dtype=float))
        a, b = self.interval
        tol = 1e-12 * (b - a)
        if np.any(points < a - tol) or np.any(points > b + tol):
            raise ContractError("evaluation point outside the Chebyshev interval")
        diff = points[:, None] - self.nodes[None, :]
        exact = diff == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            c = self._bary[None, :] / diff
            out = (c @ values) / c.sum(axis=1)
        rows, cols = np.nonzero(exact)
        out[rows] = values[cols]
        return out


def solve_dirichlet_poisson_1d(rhs, op: ChebOperator) -> np.ndarray:
    """Solve -w'' = rhs at interior nodes with w = 0 at both ends."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != op.nodes.shape:
        raise ContractError("rhs must be sampled at the Chebyshev nodes")
    w = np.zeros_like(rhs)
    try:
        w[1:-1] = np.linalg.solve(-op.d2, rhs[1:-1])
    except np.linalg.LinAlgError as exc:  # pragma: no cover - op is always invertible
        raise RuntimeError("singular Chebyshev collocation matrix") from exc
    return w


def interpolate_uniform_to_cheb(samples, axial: AxialGrid, op: ChebOperator) -> np.ndarray:
    """Not-a-knot cubic spline from the uniform z-grid to the Chebyshev nodes."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-1] != axial.n_steps + 1:
        raise ContractError("samples do not match the axial grid")
    a, b = op.interval
    tol = 1e-12 * (b - a)
    if a < axial.z0 - tol or b > axial.z1 + tol:
        raise ContractError("Chebyshev nodes fall outside the sampled interval")
    spline = CubicSpline(axial.z, samples, axis=-1, bc_type="not-a-knot")
    out = spline(np.clip(op.nodes, axial.z0, axial.z1))
    return out


def interpolate_cheb_to_uniform(values, op: ChebOperator, axial: AxialGrid) -> np.ndarray:
    """Barycentric interpolation from the Chebyshev nodes to the uniform z-grid."""
    return op.evaluate(values, axial.z)
