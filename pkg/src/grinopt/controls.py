"""Sine-series-plus-ramp control ansatz and sampled controls."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import AxialGrid, ContractError

DEFAULT_MODES = 15


@dataclass(frozen=True, eq=False)
class Control:
    """A real control sampled on ``axial.z`` with pinned endpoint values."""

    samples: np.ndarray
    axial: AxialGrid

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.shape != (self.axial.n_steps + 1,):
            raise ContractError("control samples do not match the axial grid")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def u0(self) -> float:
        return float(self.samples[0])

    @property
    def ul(self) -> float:
        return float(self.samples[-1])

    def __call__(self, z):
        """Linear interpolation between samples."""
        return np.interp(z, self.axial.z, self.samples)

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.samples[1:] + self.samples[:-1])

    @classmethod
    def ramp(cls, u0: float, ul: float, axial: AxialGrid) -> "Control":
        return evaluate_ansatz(AnsatzCoefficients(np.zeros(0), (u0, ul)), axial)


@dataclass(frozen=True, eq=False)
class AnsatzCoefficients:
    eps: np.ndarray
    boundary: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "eps", np.asarray(self.eps, dtype=float))

    @property
    def n_modes(self) -> int:
        return self.eps.size


def _sine_basis(n_modes: int, axial: AxialGrid) -> np.ndarray:
    """Rows sin(j pi (z - z0) / l) / j**2 for j = 1..n_modes, endpoints zeroed."""
    j = np.arange(1, n_modes + 1)[:, None]
    t = (axial.z - axial.z0) / axial.length
    basis = np.sin(j * np.pi * t[None, :]) / j**2
    basis[:, 0] = 0.0
    basis[:, -1] = 0.0
    return basis


def ramp_samples(u0: float, ul: float, axial: AxialGrid) -> np.ndarray:
    t = (axial.z - axial.z0) / axial.length
    out = u0 + (ul - u0) * t
    out[0], out[-1] = u0, ul
    return out


def evaluate_ansatz(coeffs: AnsatzCoefficients, axial: AxialGrid) -> Control:
    u0, ul = coeffs.boundary
    samples = ramp_samples(u0, ul, axial)
    if coeffs.n_modes:
        samples = samples + coeffs.eps @ _sine_basis(coeffs.n_modes, axial)
    return Control(samples, axial)


def evaluate_ansatz_batch(eps: np.ndarray, boundary, axial: AxialGrid) -> np.ndarray:
    """Samples for a stack of coefficient vectors, shape ``(batch, n_steps + 1)``."""
    eps = np.atleast_2d(eps)
    return ramp_samples(*boundary, axial)[None, :] + eps @ _sine_basis(eps.shape[1], axial)


def sample_random_coefficients(seed, n_modes: int = DEFAULT_MODES, boundary=(0.0, 0.0)) -> AnsatzCoefficients:
    """Independent Uniform[-1, 1] amplitudes; the 1/j**2 decay is applied on evaluation."""
    if n_modes < 1:
        raise ContractError("n_modes must be positive")
    rng = np.random.default_rng(seed)
    return AnsatzCoefficients(rng.uniform(-1.0, 1.0, n_modes), boundary)


def control_to_coefficients(control: Control, n_modes: int = DEFAULT_MODES) -> AnsatzCoefficients:
    """Project ``control - ramp`` onto the first ``n_modes`` sine modes.

    Uses the discrete sine transform on the sample grid, so an in-span control
    round-trips to machine precision.
    """
    axial = control.axial
    n = axial.n_steps
    if n_modes > n - 1:
        raise ContractError("more modes than interior samples")
    resid = control.samples - ramp_samples(control.u0, control.ul, axial)
    j = np.arange(1, n_modes + 1)[:, None]
    k = np.arange(1, n)[None, :]
    sines = np.sin(np.pi * j * k / n)
    amps = (2.0 / n) * sines @ resid[1:-1]
    return AnsatzCoefficients(amps * np.arange(1, n_modes + 1) ** 2, (control.u0, control.ul))
