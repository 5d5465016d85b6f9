import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grinopt.controls import Control, evaluate_ansatz, AnsatzCoefficients
from grinopt.eigen import ground_state
from grinopt.potentials import SeparableTimeline, TabulatedTimeline, poschl_teller
from grinopt.propagate import (
    PropagationError,
    costate_terminal,
    propagate_backward,
    propagate_forward,
    propagate_separable_batch,
)
from grinopt.spectral import AxialGrid, ContractError, Grid1D, inner_product, norm

GRID = Grid1D(-5 * np.pi, 5 * np.pi, 1024)
SMALL = Grid1D(-5 * np.pi, 5 * np.pi, 256)


def static(v, axial):
    return TabulatedTimeline(np.column_stack([v, v]), AxialGrid(axial.z0, axial.z1, 1))


def random_timeline(grid, axial, seed):
    r = np.random.default_rng(seed)
    v0 = -2 * r.random() / np.cosh(grid.x - r.uniform(-2, 2)) ** 2
    vl = 0.1 * grid.x**2 / (1 + 0.01 * grid.x**4)
    u = evaluate_ansatz(AnsatzCoefficients(r.uniform(-1, 1, 5), (1.0, 0.0)), axial)
    w = evaluate_ansatz(AnsatzCoefficients(r.uniform(-1, 1, 5), (0.0, 1.0)), axial)
    return SeparableTimeline(v0, vl, u, w)


def test_free_gaussian_dispersion():
    z = 1.0
    axial = AxialGrid(0.0, z, 1000)  # dz = 1e-3
    psi0 = np.pi**-0.25 * np.exp(-GRID.x**2 / 2)
    psi = propagate_forward(psi0, static(np.zeros(GRID.n), axial), GRID, axial)
    w2 = 1 + z**2
    exact = np.exp(-GRID.x**2 / w2) / np.sqrt(np.pi * w2)
    assert np.max(np.abs(np.abs(psi) ** 2 - exact)) < 1e-6


def test_stationary_poschl_teller_state():
    v = poschl_teller(1.0, 0.0, GRID)
    pair = ground_state(v, GRID)
    axial = AxialGrid(0.0, 7.0, 7000)
    psi = propagate_forward(pair.phi, static(v, axial), GRID, axial)
    assert np.max(np.abs(np.abs(psi) - np.abs(pair.phi))) < 1e-6
    overlap = inner_product(pair.phi, psi, GRID)
    phase_err = abs(np.angle(overlap * np.exp(1j * pair.lam * 7.0)))
    assert phase_err < 1e-4
    assert abs(abs(overlap) - 1.0) < 1e-8


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_norm_conservation(seed):
    axial = AxialGrid(0.0, 3.0, 1000)
    r = np.random.default_rng(seed)
    psi0 = (r.standard_normal(SMALL.n) + 1j * r.standard_normal(SMALL.n)) * np.exp(-SMALL.x**2 / 8)
    psi = propagate_forward(psi0, random_timeline(SMALL, axial, seed), SMALL, axial)
    assert abs(norm(psi, SMALL) - norm(psi0, SMALL)) < 1e-10 * norm(psi0, SMALL)


def test_trajectory_column_norms():
    axial = AxialGrid(0.0, 2.0, 400)
    psi0 = np.exp(-(SMALL.x - 1) ** 2) + 0j
    traj = propagate_forward(psi0, random_timeline(SMALL, axial, 3), SMALL, axial, store=True)
    norms = np.sqrt(np.sum(np.abs(traj.snapshots) ** 2, axis=0) * SMALL.dx)
    assert traj.snapshots.shape == (SMALL.n, 401)
    assert np.ptp(norms) < 1e-8


def test_stride_storage_matches_full():
    axial = AxialGrid(0.0, 2.0, 400)
    tl = random_timeline(SMALL, axial, 4)
    psi0 = np.exp(-SMALL.x**2) + 0j
    full = propagate_forward(psi0, tl, SMALL, axial, store=True)
    coarse = propagate_forward(psi0, tl, SMALL, axial, store=True, stride=10)
    assert coarse.snapshots.shape == (SMALL.n, 41)
    assert np.array_equal(coarse.snapshots, full.snapshots[:, ::10])
    assert coarse.axial.n_steps == 40
    with pytest.raises(ContractError):
        propagate_forward(psi0, tl, SMALL, axial, store=True, stride=7)


def test_backward_recovers_initial():
    axial = AxialGrid(0.0, 7.0, 2000)
    tl = random_timeline(GRID, axial, 5)
    psi0 = (1 / np.sqrt(2)) / np.cosh(GRID.x) + 0j
    psi_l = propagate_forward(psi0, tl, GRID, axial)
    back = propagate_backward(psi_l, tl, GRID, axial, store=False)
    assert np.max(np.abs(back - psi0)) < 1e-8
    traj = propagate_backward(psi_l, tl, GRID, axial, store=True)
    assert np.max(np.abs(traj.initial - psi0)) < 1e-8
    assert np.array_equal(traj.terminal, psi_l)


def test_pairing_conserved():
    axial = AxialGrid(0.0, 5.0, 10_000)
    tl = random_timeline(SMALL, axial, 6)
    psi0 = np.exp(-SMALL.x**2 / 2) + 0j
    psi = propagate_forward(psi0, tl, SMALL, axial, store=True, stride=100)
    phi_d = np.exp(-(SMALL.x - 0.5) ** 2) + 0j
    phi_d /= norm(phi_d, SMALL)
    p = propagate_backward(costate_terminal(phi_d, psi.terminal, SMALL), tl, SMALL, axial, store=True, stride=100)
    pairing = np.array([inner_product(a, b, SMALL) for a, b in zip(p.fields, psi.fields)])
    assert np.max(np.abs(pairing - pairing[-1])) < 1e-8


def test_costate_terminal_condition():
    phi_d = np.exp(-GRID.x**2) + 0j
    phi_d /= norm(phi_d, GRID)
    psi_l = np.exp(1j * GRID.x - (GRID.x - 0.3) ** 2)
    p = costate_terminal(phi_d, psi_l, GRID)
    assert np.array_equal(1j * p, inner_product(phi_d, psi_l, GRID) * phi_d)


@settings(max_examples=10, deadline=None)
@given(st.complex_numbers(max_magnitude=3), st.complex_numbers(max_magnitude=3), st.integers(0, 2**32 - 1))
def test_linearity(a, b, seed):
    axial = AxialGrid(0.0, 1.0, 200)
    tl = random_timeline(SMALL, axial, seed)
    psi1 = np.exp(-SMALL.x**2) + 0j
    psi2 = np.exp(-(SMALL.x - 2) ** 2) * np.exp(1j * SMALL.x)
    if a * psi1 + b * psi2 is None or not np.any(a * psi1 + b * psi2):
        return
    lhs = propagate_forward(a * psi1 + b * psi2, tl, SMALL, axial)
    rhs = a * propagate_forward(psi1, tl, SMALL, axial) + b * propagate_forward(psi2, tl, SMALL, axial)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_batch_matches_single():
    axial = AxialGrid(0.0, 2.0, 300)
    tl = random_timeline(SMALL, axial, 8)
    other = random_timeline(SMALL, axial, 9)
    psi0 = np.exp(-SMALL.x**2) + 0j
    us = np.stack([tl.u.samples, other.u.samples])
    vs = np.stack([tl.v.samples, other.v.samples])
    batch = propagate_separable_batch(psi0, tl.v0, tl.vl, us, vs, SMALL, axial)
    for row, (u, v) in zip(batch, zip(us, vs)):
        single = propagate_forward(psi0, SeparableTimeline(tl.v0, tl.vl, Control(u, axial), Control(v, axial)),
                                   SMALL, axial)
        assert np.max(np.abs(row - single)) < 1e-12


def test_nonfinite_field_aborts_with_step():
    axial = AxialGrid(0.0, 1.0, 20)
    psi0 = np.exp(-SMALL.x**2) + 0j
    psi0[5] = np.nan
    with pytest.raises(PropagationError) as info:
        propagate_forward(psi0, static(np.zeros(SMALL.n), axial), SMALL, axial)
    assert info.value.step == 1


def test_contracts():
    axial = AxialGrid(0.0, 1.0, 20)
    with pytest.raises(ContractError):
        propagate_forward(np.zeros(SMALL.n), static(np.zeros(SMALL.n), axial), SMALL, axial)
    with pytest.raises(ContractError):
        propagate_forward(np.ones(SMALL.n), static(np.zeros(SMALL.n), axial), SMALL, AxialGrid(0.0, 2.0, 20))
    with pytest.raises(ContractError):
        propagate_forward(np.ones(10), static(np.zeros(SMALL.n), axial), SMALL, axial)


def test_second_order_on_tophat_ramps(tophat_parts, tophat_grid):
    v0, vl, phi0, _ = tophat_parts

    def terminal(n):
        ax = AxialGrid(0.0, 7.0, n)
        tl = SeparableTimeline(v0, vl, Control.ramp(1.0, 0.0, ax), Control.ramp(0.0, 1.0, ax))
        return propagate_forward(phi0, tl, tophat_grid, ax)

    ref = terminal(8000)
    e1 = norm(terminal(2000) - ref, tophat_grid)
    e2 = norm(terminal(4000) - ref, tophat_grid)
    assert 3.5 <= e1 / e2 <= 4.5
