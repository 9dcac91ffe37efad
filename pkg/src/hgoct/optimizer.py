"""Relaxation iteration for the driving-field spectrum.

Each iteration solves the costate under the current field, forms the field
demanded by the stationarity condition, and mixes it with the current field
with weight ``K``.  ``K`` is halved until the objective improves and the
reduced value is kept for later iterations.
"""

import logging
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from . import spectral
from .functional import (
    FunctionalWeights,
    GammaSchedule,
    JBreakdown,
    control_overlap,
    evaluate_terms,
    solve_costate,
)
from .problems import ProblemSpec, confine
from .quantum import HamiltonianModel, Trajectory, propagate_forward

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
K_UNDERFLOW = "K_underflow"


@dataclass(frozen=True)
class RelaxationConfig:
    K_init: float
    tau: float
    max_iterations: int = 500
    K_floor: float = 1e-12
    max_backtracks: int = 60
    gamma_schedule: GammaSchedule | None = None

    def __post_init__(self):
        if not 0 < self.K_init <= 1:
            raise ValueError("K_init must lie in (0, 1]")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")

    @classmethod
    def for_problem(cls, problem: ProblemSpec, **overrides) -> "RelaxationConfig":
        kwargs = {"K_init": problem.K_init, "tau": problem.tau, "gamma_schedule": problem.gamma_schedule}
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)


@dataclass(frozen=True)
class IterationRecord:
    index: int
    terms: JBreakdown
    K: float
    metric: float
    backtracks: int
    gamma_scale: float = 1.0

    @property
    def j_total(self) -> float:
        return self.terms.j_total

    def as_dict(self) -> dict:
        return {"index": self.index, **self.terms.as_dict(), "metric": self.metric, "K": self.K,
                "backtracks": self.backtracks, "gamma_scale": self.gamma_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        terms = JBreakdown(d["j_max"], d["j_penal"], d["j_forb"], d["j_bound"])
        return cls(int(d["index"]), terms, d["K"], d["metric"], int(d["backtracks"]), d.get("gamma_scale", 1.0))


@dataclass
class OptimizerState:
    """Enough to continue a run: the accepted field, current ``K`` and the history."""

    iteration: int
    field_spectrum: np.ndarray
    K: float
    history: list = dc_field(default_factory=list)
    termination: str | None = None


@dataclass
class OptimizationResult:
    field_spectrum: np.ndarray
    field_signal: np.ndarray
    trajectory: Trajectory
    terms: JBreakdown
    weights: FunctionalWeights
    history: list
    termination: str
    K: float

    @property
    def converged(self) -> bool:
        return self.termination == CONVERGED

    @property
    def iterations(self) -> int:
        return self.history[-1].index if self.history else 0


def euler_lagrange_field(psi_traj: Trajectory, chi_traj: Trajectory, model: HamiltonianModel,
                         field_filter) -> np.ndarray:
    """``f_eps * C[-Im <chi|mu|psi>]``, zero on bins where the filter vanishes."""
    drive = spectral.cosine_forward(control_overlap(model, psi_traj, chi_traj), psi_traj.tgrid)
    return spectral.apply_filter(field_filter, drive)


def field_update(eps_old, eps_el, K: float) -> np.ndarray:
    if not 0 < K <= 1:
        raise ValueError(f"mixing parameter must lie in (0, 1], got {K}")
    eps_old = np.asarray(eps_old, dtype=float)
    eps_el = np.asarray(eps_el, dtype=float)
    if eps_old.shape != eps_el.shape:
        raise ValueError("spectra live on different grids")
    if K == 1:
        return eps_el.copy()
    return eps_old + K * (eps_el - eps_old)


def convergence_metric(eps_new, eps_old) -> float:
    """``|new - old| / |new|`` on the bin vectors."""
    eps_new = np.asarray(eps_new, dtype=float)
    norm = np.linalg.norm(eps_new)
    if norm == 0:
        raise ValueError("convergence metric is undefined for a zero field")
    return float(np.linalg.norm(eps_new - np.asarray(eps_old, dtype=float)) / norm)


def _weights_at(problem: ProblemSpec, config: RelaxationConfig, iteration: int):
    if config.gamma_schedule is None:
        return problem.weights, 1.0
    scale = config.gamma_schedule.scale(iteration)
    if scale == 1.0:
        return problem.weights, scale
    return problem.weights.with_subspace(problem.weights.subspace.scaled_forbidden(scale)), scale


def optimize(problem: ProblemSpec, config: RelaxationConfig | None = None,
             observer: Callable[[IterationRecord], None] | None = None, *,
             start: OptimizerState | None = None,
             on_accept: Callable[[OptimizerState], None] | None = None) -> OptimizationResult:
    """Run the relaxation scheme until the field stops changing.

    ``observer`` sees every record as it is produced.  ``on_accept`` receives
    the state after each accepted iteration (used for checkpoints).  Passing
    ``start`` resumes from a saved state.
    """
    config = config or RelaxationConfig.for_problem(problem)
    model, tgrid = problem.model, problem.tgrid

    def forward(spectrum, weights):
        traj = propagate_forward(model, spectral.cosine_inverse(spectrum, tgrid), problem.psi0, tgrid)
        return traj, evaluate_terms(traj, spectrum, weights, model)

    if start is None:
        k = 0
        eps = confine(problem.initial_field, problem.weights.field_filter)
        K = config.K_init
        history = []
    else:
        k = start.iteration
        eps = np.array(start.field_spectrum, dtype=float)
        K = start.K
        history = list(start.history)

    weights, scale = _weights_at(problem, config, k)
    if np.any(eps[~weights.support] != 0):
        raise ValueError("field outside filter support")
    psi, terms = forward(eps, weights)
    if start is None:
        rec = IterationRecord(0, terms, K, float("nan"), 0, scale)
        history.append(rec)
        if observer:
            observer(rec)

    termination = start.termination if start is not None else None
    while termination is None:
        if k >= config.max_iterations:
            termination = MAX_ITERATIONS
            break
        new_weights, new_scale = _weights_at(problem, config, k)
        if new_scale != scale:
            weights, scale = new_weights, new_scale
            terms = evaluate_terms(psi, eps, weights, model)
            log.info("iteration %d: forbidden penalties scaled by %g", k, scale)

        chi = solve_costate(model, weights, psi)
        eps_el = euler_lagrange_field(psi, chi, model, weights.field_filter)
        if np.array_equal(eps_el, eps):
            k += 1
            rec = IterationRecord(k, terms, K, 0.0, 0, scale)
            history.append(rec)
            if observer:
                observer(rec)
            termination = CONVERGED
            break

        backtracks = 0
        while True:
            trial = field_update(eps, eps_el, K)
            psi_trial, trial_terms = forward(trial, weights)
            if trial_terms.j_total > terms.j_total:
                break
            K *= 0.5
            backtracks += 1
            if K < config.K_floor or backtracks > config.max_backtracks:
                termination = K_UNDERFLOW
                break
        if termination is not None:
            log.warning("no improving step found at iteration %d (K=%.3g)", k, K)
            break

        metric = convergence_metric(trial, eps)
        eps, psi, terms = trial, psi_trial, trial_terms
        k += 1
        rec = IterationRecord(k, terms, K, metric, backtracks, scale)
        history.append(rec)
        log.debug("iteration %d: J=%.12g metric=%.3e K=%.3g", k, terms.j_total, metric, K)
        if observer:
            observer(rec)
        if metric < config.tau:
            termination = CONVERGED
        if on_accept:
            on_accept(OptimizerState(k, eps.copy(), K, list(history), termination))

    return OptimizationResult(
        field_spectrum=eps,
        field_signal=spectral.cosine_inverse(eps, tgrid),
        trajectory=psi,
        terms=terms,
        weights=weights,
        history=history,
        termination=termination,
        K=K,
    )
