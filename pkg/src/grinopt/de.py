"""Differential evolution (rand/1/bin) and its use over the control ansatz."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .controls import DEFAULT_MODES, AnsatzCoefficients, evaluate_ansatz_batch
from .objective import ControlProblem
from .spectral import ContractError

log = logging.getLogger(__name__)


@dataclass
class DEConfig:
    population: int = 30
    weight_f: float = 0.8
    crossover_cr: float = 0.9
    generations: int = 150
    seed: int = 0
    bounds: list | None = None  # per-coordinate (lo, hi); None means [-1, 1] everywhere

    def __post_init__(self):
        if self.population < 4:
            raise ContractError("population must be at least 4")
        if not 0 < self.weight_f <= 2:
            raise ContractError("weight_f must lie in (0, 2]")
        if not 0 <= self.crossover_cr <= 1:
            raise ContractError("crossover_cr must lie in [0, 1]")
        if self.generations < 0:
            raise ContractError("generations must be non-negative")

    def bounds_array(self, dim: int) -> np.ndarray:
        if self.bounds is None:
            return np.tile([-1.0, 1.0], (dim, 1))
        b = np.asarray(self.bounds, dtype=float)
        if b.shape != (dim, 2) or np.any(b[:, 0] > b[:, 1]):
            raise ContractError(f"bounds must be {dim} (lo, hi) pairs")
        return b


@dataclass
class DEHistory:
    best_value_per_generation: list = field(default_factory=list)
    best_agent_per_generation: list = field(default_factory=list)
    best_infidelity_per_generation: list = field(default_factory=list)
    best_tikhonov_per_generation: list = field(default_factory=list)
    best_agent: np.ndarray | None = None
    evaluations: int = 0
    nonfinite: int = 0
    population: np.ndarray | None = None
    values: np.ndarray | None = None

    @property
    def best_value(self) -> float:
        return self.best_value_per_generation[-1]


def _evaluate(objective, agents, vectorized, workers):
    if vectorized:
        vals = np.asarray(objective(agents), dtype=float).reshape(len(agents))
    elif workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = np.fromiter(pool.map(objective, agents), dtype=float, count=len(agents))
    else:
        vals = np.fromiter(map(objective, agents), dtype=float, count=len(agents))
    bad = ~np.isfinite(vals)
    vals[bad] = np.inf
    return vals, int(bad.sum())


def differential_evolution(objective, dim: int, config: DEConfig, *, initial=None,
                           vectorized: bool = False, workers: int = 1, callback=None) -> DEHistory:
    """Minimize ``objective`` over the bounded box.

    A whole generation of trial vectors is drawn before any is evaluated and
    selection runs serially afterwards, so results depend only on the seed,
    never on ``workers``. ``initial`` rows replace the first random agents.
    With ``vectorized`` the objective receives a ``(m, dim)`` array.
    """
    rng = np.random.default_rng(config.seed)
    bounds = config.bounds_array(dim)
    lo, hi = bounds[:, 0], bounds[:, 1]
    npop = config.population
    pop = lo + (hi - lo) * rng.random((npop, dim))
    if initial is not None:
        initial = np.atleast_2d(np.asarray(initial, dtype=float))
        pop[: len(initial)] = np.clip(initial, lo, hi)
    hist = DEHistory()
    vals, bad = _evaluate(objective, pop, vectorized, workers)
    hist.evaluations += npop
    hist.nonfinite += bad
    best = int(np.argmin(vals))
    hist.best_value_per_generation.append(float(vals[best]))
    hist.best_agent_per_generation.append(pop[best].copy())
    others = np.arange(npop)
    for gen in range(config.generations):
        trials = np.empty_like(pop)
        for i in range(npop):
            a, b, c = rng.choice(others[others != i], 3, replace=False)
            mutant = pop[a] + config.weight_f * (pop[b] - pop[c])
            cross = rng.random(dim) < config.crossover_cr
            cross[rng.integers(dim)] = True
            trials[i] = np.clip(np.where(cross, mutant, pop[i]), lo, hi)
        tvals, bad = _evaluate(objective, trials, vectorized, workers)
        hist.evaluations += npop
        hist.nonfinite += bad
        for i in range(npop):
            if tvals[i] < vals[i]:
                pop[i] = trials[i]
                vals[i] = tvals[i]
        best = int(np.argmin(vals))
        hist.best_value_per_generation.append(float(vals[best]))
        hist.best_agent_per_generation.append(pop[best].copy())
        log.debug("DE generation %d best %.6g", gen + 1, vals[best])
        if callback is not None:
            callback(gen + 1, hist)
    hist.best_agent = pop[best].copy()
    hist.population = pop
    hist.values = vals
    return hist


def control_objective(problem: ControlProblem, n_modes: int = DEFAULT_MODES, terms: dict | None = None):
    """Vectorized reduced objective over stacked ``(eps_u, eps_v)`` coefficient vectors.

    If ``terms`` is given, the (infidelity, tikhonov) split of every evaluated
    agent is stored there keyed by the agent's bytes.
    """

    def objective(agents):
        agents = np.atleast_2d(agents)
        us = evaluate_ansatz_batch(agents[:, :n_modes], problem.u_boundary, problem.axial)
        vs = evaluate_ansatz_batch(agents[:, n_modes:], problem.v_boundary, problem.axial)
        inf, tik = problem.batch_terms(us, vs)
        if terms is not None:
            for a, fi, ti in zip(agents, inf, tik):
                terms[a.tobytes()] = (float(fi), float(ti))
        return inf + tik

    return objective


def de_over_controls(problem: ControlProblem, config: DEConfig, n_modes: int = DEFAULT_MODES,
                     batch_size: int | None = None, callback=None):
    """DE over the 2 * n_modes ansatz coefficients with the ramp pair injected as agent 0.

    Returns ``(u_coeffs, v_coeffs, history)``.
    """
    dim = 2 * n_modes
    seen: dict = {}
    batched = control_objective(problem, n_modes, seen)
    if batch_size:
        def objective(agents):
            return np.concatenate([batched(agents[i : i + batch_size]) for i in range(0, len(agents), batch_size)])
    else:
        objective = batched
    hist = differential_evolution(objective, dim, config, initial=np.zeros(dim), vectorized=True, callback=callback)
    for agent in hist.best_agent_per_generation:
        fi, ti = seen.get(agent.tobytes(), (np.nan, np.nan))
        hist.best_infidelity_per_generation.append(fi)
        hist.best_tikhonov_per_generation.append(ti)
    seen.clear()
    best = hist.best_agent
    return (AnsatzCoefficients(best[:n_modes], problem.u_boundary),
            AnsatzCoefficients(best[n_modes:], problem.v_boundary), hist)
