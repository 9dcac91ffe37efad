"""Terms of the harmonic-generation objective and its adjoint equations.

The objective is

    J = J_max + J_penal + J_forb + J_bound

with the dynamics enforced through the costate ``chi``.  Time integrals are
midpoint sums over the nodes and frequency integrals use the weights of
:class:`~hgoct.spectral.FrequencyGrid`.  With the propagation scheme of
:mod:`hgoct.quantum` these discrete pieces fit together so that
:func:`gradient_spectrum` is the exact derivative of the discrete ``J``.
"""

from dataclasses import dataclass, field as dc_field, replace
from functools import cached_property

import numpy as np
import scipy.linalg

from . import spectral
from .quantum import HamiltonianModel, OperatorSpec, Trajectory, propagate_backward_inhomogeneous, \
    step_averaged_overlap
from .spectral import FrequencyGrid


class UnsupportedConfiguration(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SubspaceSpec:
    """Weighted projector onto the allowed subspace and skewed forbidden projector.

    Weights are either per eigenstate (``basis`` holds the eigenvectors as
    columns) or per grid point (``basis`` is ``None``).  Unset weights mean the
    identity for the allowed projector and zero for the forbidden one.
    """

    allowed_weights: np.ndarray | None = None
    forbidden_weights: np.ndarray | None = None
    basis: np.ndarray | None = None

    def __post_init__(self):
        for name in ("allowed_weights", "forbidden_weights"):
            w = getattr(self, name)
            if w is not None:
                w = np.asarray(w, dtype=float)
                if not np.all(np.isfinite(w)):
                    raise ValueError(f"{name} must be finite")
                object.__setattr__(self, name, w)
        s, g = self.allowed_weights, self.forbidden_weights
        if s is not None and np.any((s < 0) | (s > 1)):
            raise ValueError("allowed weights must lie in [0, 1]")
        if g is not None and np.any(g < 0):
            raise ValueError("forbidden penalties must be nonnegative")

    @classmethod
    def energy(cls, eigvecs, allowed=None, forbidden=None) -> "SubspaceSpec":
        """Weights ``s_n``, ``gamma_n`` on the eigenstates in ``eigvecs`` columns."""
        return cls(allowed, forbidden, np.asarray(eigvecs))

    @classmethod
    def energy_functions(cls, energies, eigvecs, s=None, gamma=None) -> "SubspaceSpec":
        """``P_a = s(H0)`` and ``P_f = gamma(H0)`` through the eigendecomposition."""
        energies = np.asarray(energies)
        return cls.energy(
            eigvecs,
            None if s is None else s(energies),
            None if gamma is None else gamma(energies),
        )

    @classmethod
    def spatial(cls, s=None, gamma=None) -> "SubspaceSpec":
        """``P_a = s(X)`` and ``P_f = gamma(X)`` sampled on the grid."""
        return cls(s, gamma, None)

    def _matrix(self, weights, dim):
        if self.basis is None:
            if len(weights) != dim:
                raise ValueError("spatial weights do not match the basis size")
            return np.diag(weights)
        basis = self.basis
        if basis.shape[0] != dim or basis.shape[1] != len(weights):
            raise ValueError("eigenstate weights do not match the eigenbasis")
        mat = (basis * weights[None, :]) @ basis.conj().T
        return 0.5 * (mat + mat.conj().T)

    def allowed_projector(self, dim):
        if self.allowed_weights is None:
            return None
        return self._matrix(self.allowed_weights, dim)

    def forbidden_projector(self, dim):
        if self.forbidden_weights is None:
            return None
        return self._matrix(self.forbidden_weights, dim)

    def scaled_forbidden(self, factor: float) -> "SubspaceSpec":
        if self.forbidden_weights is None:
            return self
        return replace(self, forbidden_weights=self.forbidden_weights * factor)


@dataclass(frozen=True)
class GammaSchedule:
    """Multiply the forbidden-subspace penalties by ``factor`` every ``every`` iterations."""

    every: int
    factor: float

    def __post_init__(self):
        if self.every < 1 or not self.factor > 0:
            raise ValueError("schedule needs every >= 1 and factor > 0")

    def scale(self, iteration: int) -> float:
        return float(self.factor ** (iteration // self.every))


@dataclass(frozen=True, eq=False)
class FunctionalWeights:
    """Scaled filters, boundary weight, subspace restriction and target operator.

    The scaled filters already contain the penalty and target coefficients.
    """

    field_filter: np.ndarray
    target_filter: np.ndarray
    target: OperatorSpec
    kappa: float = 0.0
    subspace: SubspaceSpec = dc_field(default_factory=SubspaceSpec)

    def __post_init__(self):
        ff = np.asarray(self.field_filter, dtype=float)
        tf = np.asarray(self.target_filter, dtype=float)
        if ff.shape != tf.shape or ff.ndim != 1:
            raise ValueError("field and target filters must be vectors on the same grid")
        if np.any(ff < 0) or not np.all(np.isfinite(ff)):
            raise ValueError("field filter must be finite and nonnegative")
        if np.any(tf < 0) or not np.all(np.isfinite(tf)):
            raise ValueError("target filter must be finite and nonnegative")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        object.__setattr__(self, "field_filter", ff)
        object.__setattr__(self, "target_filter", tf)

    @property
    def dim(self) -> int:
        return self.target.dim

    @cached_property
    def support(self) -> np.ndarray:
        """Bins where the field is free to vary."""
        return self.field_filter > 0

    @cached_property
    def target_matrix(self) -> np.ndarray:
        return self.target.to_dense()

    @cached_property
    def o_allowed(self) -> np.ndarray:
        """``P_a O P_a``."""
        p = self.subspace.allowed_projector(self.dim)
        if p is None:
            return self.target_matrix
        mat = p @ self.target_matrix @ p
        return 0.5 * (mat + mat.conj().T)

    @cached_property
    def p_forbidden(self) -> np.ndarray | None:
        return self.subspace.forbidden_projector(self.dim)

    def with_subspace(self, subspace: SubspaceSpec) -> "FunctionalWeights":
        return replace(self, subspace=subspace)


@dataclass(frozen=True)
class JBreakdown:
    j_max: float
    j_penal: float
    j_forb: float
    j_bound: float

    @property
    def j_total(self) -> float:
        return self.j_max + self.j_penal + self.j_forb + self.j_bound

    def as_dict(self) -> dict:
        return {"j_max": self.j_max, "j_penal": self.j_penal, "j_forb": self.j_forb,
                "j_bound": self.j_bound, "j_total": self.j_total}


def _sandwich(states, mat):
    return np.einsum("ki,ij,kj->k", states.conj(), mat, states)


def projected_expectation_signal(traj: Trajectory, weights: FunctionalWeights) -> np.ndarray:
    """``<psi(t_j)| P_a O P_a |psi(t_j)>`` at every node."""
    if traj.states.shape[1] != weights.dim:
        raise ValueError("trajectory and target operator have different dimensions")
    return _sandwich(traj.nodes, weights.o_allowed).real


def target_spectrum(traj: Trajectory, weights: FunctionalWeights) -> np.ndarray:
    """Cosine spectrum of the projected target expectation."""
    return spectral.cosine_forward(projected_expectation_signal(traj, weights), traj.tgrid)


def _fgrid(traj, fgrid):
    if fgrid is None:
        return FrequencyGrid.for_time_grid(traj.tgrid)
    if fgrid.n != traj.tgrid.n or fgrid.T != traj.tgrid.T:
        raise ValueError("frequency grid does not match the trajectory")
    return fgrid


def commutator_h0(model: HamiltonianModel, weights: FunctionalWeights) -> np.ndarray:
    h0 = model.h0_matrix
    o = weights.target_matrix
    return h0 @ o - o @ h0


def penalty_term(field_spectrum, weights: FunctionalWeights, fgrid: FrequencyGrid) -> float:
    eps = np.asarray(field_spectrum, dtype=float)
    if eps.shape != weights.field_filter.shape:
        raise ValueError("field spectrum does not match the filter grid")
    mask = weights.support
    if np.any(eps[~mask] != 0):
        raise ValueError("field has nonzero components where the field filter is zero")
    return -float(np.sum(fgrid.weights[mask] * eps[mask] ** 2 / weights.field_filter[mask]))


def evaluate_terms(traj: Trajectory, field_spectrum, weights: FunctionalWeights, model: HamiltonianModel,
                   fgrid: FrequencyGrid | None = None) -> JBreakdown:
    fgrid = _fgrid(traj, fgrid)
    o_bar = target_spectrum(traj, weights)
    j_max = 0.5 * float(np.sum(fgrid.weights * weights.target_filter * o_bar**2))
    j_penal = penalty_term(field_spectrum, weights, fgrid)
    j_forb = 0.0
    if weights.p_forbidden is not None:
        j_forb = -traj.tgrid.dt * float(np.sum(_sandwich(traj.nodes, weights.p_forbidden).real))
    j_bound = 0.0
    if weights.kappa > 0:
        psi_t = traj.final
        c = np.vdot(psi_t, commutator_h0(model, weights) @ psi_t)
        j_bound = float((0.5 * weights.kappa * c**2).real)
    return JBreakdown(j_max, j_penal, j_forb, j_bound)


def adjoint_source(traj: Trajectory, weights: FunctionalWeights, fgrid: FrequencyGrid | None = None) -> np.ndarray:
    """Node values of the costate source ``-(c(t) O_a - P_f) psi(t)``.

    ``c = C^-1[f_O * C[<O_a>]]`` is computed once for the whole sweep.
    """
    fgrid = _fgrid(traj, fgrid)
    tgrid = traj.tgrid
    o_bar = target_spectrum(traj, weights)
    c = spectral.cosine_inverse(spectral.apply_filter(weights.target_filter, o_bar), tgrid, fgrid)
    psi = traj.nodes
    src = -c[:, None] * (psi @ weights.o_allowed.T)
    if weights.p_forbidden is not None:
        src = src + psi @ weights.p_forbidden.T
    return src


def chi_terminal(psi_T, weights: FunctionalWeights, model: HamiltonianModel) -> np.ndarray:
    """Terminal costate ``kappa <[H0,O]> [H0,O] psi(T)``; zero when ``kappa = 0``."""
    psi_T = np.asarray(psi_T, dtype=complex)
    if weights.kappa == 0:
        return np.zeros_like(psi_T)
    mu = model.mu_matrix
    o = weights.target_matrix
    if np.max(np.abs(mu @ o - o @ mu)) > 1e-10:
        raise UnsupportedConfiguration("boundary penalty requires the dipole and target operators to commute")
    comm = commutator_h0(model, weights)
    c_psi = comm @ psi_T
    return weights.kappa * np.vdot(psi_T, c_psi) * c_psi


def solve_costate(model: HamiltonianModel, weights: FunctionalWeights, psi_traj: Trajectory) -> Trajectory:
    """Costate trajectory under the same field as ``psi_traj``."""
    return propagate_backward_inhomogeneous(
        model,
        psi_traj.field,
        adjoint_source(psi_traj, weights),
        chi_terminal(psi_traj.final, weights, model),
        psi_traj.tgrid,
    )


def control_overlap(model: HamiltonianModel, psi_traj: Trajectory, chi_traj: Trajectory) -> np.ndarray:
    """``-Im <chi|mu|psi>`` averaged over each step."""
    return -step_averaged_overlap(model, chi_traj, psi_traj).imag


def gradient_spectrum(psi_traj: Trajectory, chi_traj: Trajectory, model: HamiltonianModel,
                      weights: FunctionalWeights, field_spectrum) -> np.ndarray:
    """Functional derivative ``dJ/d eps_bar(omega_k)``; zero on excluded bins.

    The derivative of the discrete ``J`` with respect to the bin value itself
    is this times the frequency quadrature weight of the bin.
    """
    eps = np.asarray(field_spectrum, dtype=float)
    if eps.shape != weights.field_filter.shape:
        raise ValueError("field spectrum does not match the filter grid")
    drive = spectral.cosine_forward(control_overlap(model, psi_traj, chi_traj), psi_traj.tgrid)
    mask = weights.support
    g = np.zeros_like(eps)
    g[mask] = -2.0 * eps[mask] / weights.field_filter[mask] + 2.0 * drive[mask]
    return g


def constraint_residual(model: HamiltonianModel, traj: Trajectory) -> float:
    """Largest defect of ``traj`` against independently computed half-step exponentials.

    Zero (to rounding) means the stored states satisfy the discretized
    Schrodinger equation, so the constraint term of ``J`` vanishes.
    """
    h0, mu = model.h0_matrix, model.mu_matrix
    half = 0.5 * traj.tgrid.dt
    us = [scipy.linalg.expm(-1j * half * (h0 - eps * mu)) for eps in traj.field]
    nodes = traj.nodes
    defects = [
        np.linalg.norm(nodes[0] - us[0] @ traj.initial),
        np.linalg.norm(traj.final - us[-1] @ nodes[-1]),
    ]
    for j in range(len(us) - 1):
        # both sides should land on the step boundary between node j and j+1
        defects.append(np.linalg.norm(us[j] @ nodes[j] - us[j + 1].conj().T @ nodes[j + 1]))
    return float(max(defects))
