import numpy as np
import pytest
from scipy.integrate import quad

from grinopt.controls import AnsatzCoefficients, Control, evaluate_ansatz
from grinopt.grape import (
    GrapeConfig,
    control_gradients,
    grape_descend_1d,
    grape_descend_2d,
    h10_inner,
    l2_control_gradient,
    laplacian_2d,
    potential_gradients,
    project_h10,
    project_h10_2d,
    solve_dirichlet_poisson_2d,
)
from grinopt.objective import ControlProblem, PotentialProblem, reduced_objective
from grinopt.potentials import SeparableTimeline, TabulatedTimeline
from grinopt.propagate import Trajectory
from grinopt.spectral import AxialGrid, ChebOperator, ContractError, Grid1D

AX = AxialGrid(0.0, 7.0, 2000)
SMALL = Grid1D(-5 * np.pi, 5 * np.pi, 64)


def zero_costate_gradient(u_samples, gamma=1.0, axial=AX):
    fields = np.zeros((axial.n_steps + 1, SMALL.n), complex)
    traj = Trajectory(fields, axial)
    return l2_control_gradient(traj, traj, np.ones(SMALL.n), Control(u_samples, axial), gamma, SMALL)


def mode(j, axial):
    return np.sin(j * np.pi * (axial.z - axial.z0) / axial.length)


# ---- L2 gradient ----

def test_linear_control_zero_costate_has_zero_gradient():
    g = zero_costate_gradient(np.linspace(0.3, -1.0, AX.n_steps + 1))
    assert np.max(np.abs(g)) < 1e-8


def test_sine_control_zero_costate():
    g = zero_costate_gradient(mode(1, AX), gamma=1.0)
    exact = (np.pi / 7.0) ** 2 * mode(1, AX)
    assert np.max(np.abs(g - exact)) < 1e-6
    assert g[0] == 0.0 and g[-1] == 0.0


@pytest.fixture(scope="module")
def full_tophat(tophat_parts, tophat_grid):
    v0, vl, phi0, phi_d = tophat_parts
    ax = AxialGrid(0.0, 7.0, 2000)
    return ControlProblem(tophat_grid, ax, v0, vl, phi0, phi_d, 1e-6)


def test_gradient_matches_finite_differences(full_tophat):
    prob = full_tophat
    ax = prob.axial
    u, v = Control.ramp(1.0, 0.0, ax), Control.ramp(0.0, 1.0, ax)
    gu, gv, _, _ = control_gradients(prob, u, v)
    r = np.random.default_rng(11)
    w = np.full(ax.n_steps + 1, ax.dz)
    w[0] = w[-1] = 0.5 * ax.dz
    eps = 1e-5
    for _ in range(5):
        du = evaluate_ansatz(AnsatzCoefficients(r.uniform(-1, 1, 15), (0.0, 0.0)), ax).samples
        dv = evaluate_ansatz(AnsatzCoefficients(r.uniform(-1, 1, 15), (0.0, 0.0)), ax).samples
        jp = reduced_objective(prob, Control(u.samples + eps * du, ax), Control(v.samples + eps * dv, ax))
        jm = reduced_objective(prob, Control(u.samples - eps * du, ax), Control(v.samples - eps * dv, ax))
        fd = (jp - jm) / (2 * eps)
        analytic = np.sum(gu * du * w) + np.sum(gv * dv * w)
        assert abs(analytic - fd) < 1e-3 * abs(fd)


def test_gradient_contracts():
    fields = np.zeros((11, SMALL.n), complex)
    a = Trajectory(fields, AxialGrid(0.0, 1.0, 10))
    b = Trajectory(fields, AxialGrid(0.0, 2.0, 10))
    with pytest.raises(ContractError):
        l2_control_gradient(a, b, np.ones(SMALL.n), Control.ramp(0, 1, AxialGrid(0.0, 1.0, 10)), 1.0, SMALL)
    with pytest.raises(ContractError):
        l2_control_gradient(b, b, np.ones(SMALL.n), Control.ramp(0, 1, AxialGrid(0.0, 1.0, 10)), 1.0, SMALL)


# ---- H1_0 projection ----

def test_project_sine():
    k = np.pi / 7.0
    out = project_h10(mode(1, AX), AX)
    assert np.max(np.abs(out - mode(1, AX) / k**2)) < 1e-8


def test_project_constant():
    out = project_h10(np.ones(AX.n_steps + 1), AX)
    assert np.max(np.abs(out - AX.z * (7.0 - AX.z) / 2)) < 1e-8


def test_project_endpoints_exactly_zero():
    g = np.exp(AX.z / 3) * np.cos(5 * AX.z)
    out = project_h10(g, AX)
    assert out[0] == 0.0 and out[-1] == 0.0


def test_h10_riesz_pairing():
    cheb = ChebOperator((0.0, 7.0), 64)
    g_fn = lambda z: np.exp(-((z - 2.0) ** 2)) + 0.3 * z
    big = project_h10(g_fn(AX.z), AX, cheb)
    r = np.random.default_rng(2)
    for _ in range(3):
        coeffs = AnsatzCoefficients(r.uniform(-1, 1, 15), (0.0, 0.0))
        phi = evaluate_ansatz(coeffs, AX).samples
        phi_fn = lambda z: sum(e * np.sin(j * np.pi * z / 7.0) / j**2 for j, e in enumerate(coeffs.eps, 1))
        l2 = quad(lambda z: g_fn(z) * phi_fn(z), 0.0, 7.0, limit=200, epsabs=1e-14)[0]
        assert abs(h10_inner(big, phi, AX, cheb) - l2) < 1e-6


# ---- 1D descent ----

@pytest.fixture(scope="module")
def short_tophat(tophat_parts, tophat_grid):
    v0, vl, phi0, phi_d = tophat_parts
    return ControlProblem(tophat_grid, AxialGrid(0.0, 7.0, 400), v0, vl, phi0, phi_d, 1e-6)


def test_zero_iterations_at_tolerance(short_tophat):
    ax = short_tophat.axial
    u, v = Control.ramp(1.0, 0.0, ax), Control.ramp(0.0, 1.0, ax)
    uu, vv, hist = grape_descend_1d(short_tophat, u, v, GrapeConfig(grad_tol=1e6))
    assert hist.accepted_steps == 0 and hist.reason == "grad_tol"
    assert np.array_equal(uu.samples, u.samples) and np.array_equal(vv.samples, v.samples)


@pytest.fixture(scope="module")
def descent_run(short_tophat):
    ax = short_tophat.axial
    r = np.random.default_rng(3)
    u = evaluate_ansatz(AnsatzCoefficients(r.uniform(-1, 1, 15), (1.0, 0.0)), ax)
    v = evaluate_ansatz(AnsatzCoefficients(r.uniform(-1, 1, 15), (0.0, 1.0)), ax)
    return u, v, grape_descend_1d(short_tophat, u, v, GrapeConfig(max_iters=8))


def test_descent_strictly_decreases(descent_run):
    hist = descent_run[2][2]
    obj = np.array(hist.objective_per_iter)
    assert hist.accepted_steps >= 1
    assert np.all(np.diff(obj) < 0)


def test_armijo_condition_each_step(descent_run):
    hist = descent_run[2][2]
    obj = hist.objective_per_iter
    for k, (req, step) in enumerate(zip(hist.required_decrease, hist.steps)):
        slope = hist.grad_norm_per_iter[k] ** 2
        assert req == pytest.approx(1e-4 * step * slope, rel=1e-12)
        assert obj[k] - obj[k + 1] >= req


def test_endpoints_preserved_bit_exact(descent_run):
    u, v, (uu, vv, _) = descent_run
    assert uu.samples[0] == u.samples[0] and uu.samples[-1] == u.samples[-1]
    assert vv.samples[0] == v.samples[0] and vv.samples[-1] == v.samples[-1]


def test_descent_rejects_mismatched_grid(short_tophat):
    other = AxialGrid(0.0, 7.0, 100)
    with pytest.raises(ContractError):
        grape_descend_1d(short_tophat, Control.ramp(1, 0, other), Control.ramp(0, 1, other))


# ---- 2D ----

def test_laplacian_of_harmonic_function_vanishes():
    g = Grid1D(-np.pi, np.pi, 64)
    ax = AxialGrid(0.0, 1.0, 40)
    vals = np.add.outer(np.zeros(g.n), 2.0 * ax.z + 1.0)
    assert np.max(np.abs(laplacian_2d(vals, g.dx, ax.dz))) < 1e-9


def test_laplacian_of_periodic_sine():
    g = Grid1D(-np.pi, np.pi, 256)
    ax = AxialGrid(0.0, 1.0, 10)
    vals = np.repeat(np.sin(3 * g.x)[:, None], ax.n_steps + 1, axis=1)
    lap = laplacian_2d(vals, g.dx, ax.dz)
    assert np.max(np.abs(lap + 9 * vals)) < 1e-2
    assert np.max(np.abs(lap + 9 * vals)) < 9 * (3 * g.dx) ** 2 / 12 * 1.01


def test_poisson_manufactured_solution():
    n = 256
    x = np.linspace(0, 1, n + 2)[1:-1]
    z = np.linspace(0, 2, n + 2)[1:-1]
    hx, hz = x[1] - x[0], z[1] - z[0]
    X, Z = np.meshgrid(x, z, indexing="ij")
    exact = np.sin(np.pi * X) * np.sin(np.pi * Z / 2) * np.exp(X)
    # -lap of exact, by hand
    rhs = -(np.exp(X) * np.sin(np.pi * Z / 2)
            * ((1 - np.pi**2) * np.sin(np.pi * X) + 2 * np.pi * np.cos(np.pi * X))
            - (np.pi / 2) ** 2 * exact)
    w = solve_dirichlet_poisson_2d(rhs, hx, hz)
    assert np.max(np.abs(w - exact)) < 1e-4


def test_project_2d_boundaries_zero():
    r = np.random.default_rng(0)
    out = project_h10_2d(r.standard_normal((32, 20)), 0.1, 0.2)
    assert np.all(out[0] == 0.0) and np.all(out[:, 0] == 0.0) and np.all(out[:, -1] == 0.0)


@pytest.fixture(scope="module")
def potential_problem(tophat_parts, tophat_grid):
    v0, vl, phi0, phi_d = tophat_parts
    ax = AxialGrid(0.0, 2.0, 400)
    ctl = ControlProblem(tophat_grid, ax, v0, vl, phi0, phi_d, 1e-6)
    tab = SeparableTimeline(v0, vl, Control.ramp(1.0, 0.0, ax), Control.ramp(0.0, 1.0, ax)).tabulate(ax.coarsen(10))
    return PotentialProblem(tophat_grid, ax, phi0, phi_d, 1e-8), tab


def test_2d_gradient_matches_finite_differences(potential_problem):
    prob, tab = potential_problem
    g, _, _ = potential_gradients(prob, tab)
    x, z = prob.grid.x, tab.axial.z
    w = np.full(z.size, tab.axial.dz * prob.grid.dx)
    w[0] = w[-1] = 0.5 * tab.axial.dz * prob.grid.dx
    eps = 1e-4
    for c, s in ((0.0, 1.0), (1.0, 0.6), (-0.7, 1.5)):
        bump = np.exp(-((x[:, None] - c) / s) ** 2) * np.sin(np.pi * z[None, :] / tab.axial.length)
        jp = reduced_objective(prob, TabulatedTimeline(tab.values + eps * bump, tab.axial))
        jm = reduced_objective(prob, TabulatedTimeline(tab.values - eps * bump, tab.axial))
        fd = (jp - jm) / (2 * eps)
        analytic = np.sum(g * bump * w)
        assert abs(analytic - fd) < 1e-2 * abs(fd)


def test_2d_descent_keeps_boundaries_and_decreases(potential_problem):
    prob, tab = potential_problem
    out, hist = grape_descend_2d(prob, tab, GrapeConfig(max_iters=3))
    assert hist.accepted_steps >= 1
    assert np.all(np.diff(hist.objective_per_iter) < 0)
    assert np.array_equal(out.values[:, 0], tab.values[:, 0])
    assert np.array_equal(out.values[:, -1], tab.values[:, -1])
    assert np.array_equal(out.values[0], tab.values[0])
