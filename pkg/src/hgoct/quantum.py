"""States, Hermitian operators and Schrodinger propagation.

States are plain complex numpy vectors.  Operators come in three flavours: a
dense Hermitian matrix, a function of position (diagonal on the spatial grid)
and a function of momentum (diagonal after an FFT on the periodic grid).

Propagation holds the field constant over each time step at its value on the
step's midpoint node (exponential midpoint rule).  Each half step is the full
matrix exponential of ``H0 - eps_j * mu``, so unitarity is kept to rounding and
the forward/backward sweeps are exact adjoints of each other.  Inhomogeneous
costate sources act as impulses ``dt * source_j`` at the nodes (midpoint
Duhamel quadrature).
"""

import hashlib
from collections import OrderedDict
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
import scipy.linalg

from .spectral import TimeGrid

DENSE = "dense"
SPATIAL = "spatial"
MOMENTUM = "momentum"
_KINDS = (DENSE, SPATIAL, MOMENTUM)

# per-field eigensystems are cached only below this many bytes
_EIG_CACHE_BYTES = 96 * 2**20
_EIG_CHUNK = 256


class PropagationError(RuntimeError):
    pass


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic grid ``x_j = x_min + j dx`` on the half-open box ``[x_min, x_max)``."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.n < 2:
            raise ValueError("grid needs at least two points")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @cached_property
    def p(self) -> np.ndarray:
        """Momenta in FFT ordering."""
        return 2 * np.pi * np.fft.fftfreq(self.n, self.dx)


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """A Hermitian operator in one of the representations above.

    ``payload`` is a square matrix for ``dense`` and a real vector of grid
    values (position or FFT-ordered momentum) for the diagonal kinds.
    """

    kind: str
    payload: np.ndarray

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        payload = np.asarray(self.payload)
        if self.kind == DENSE:
            if payload.ndim != 2 or payload.shape[0] != payload.shape[1]:
                raise ValueError("dense operator must be a square matrix")
            payload = payload.astype(complex if np.iscomplexobj(payload) else float)
        else:
            if payload.ndim != 1:
                raise ValueError("diagonal operator payload must be a vector")
            if np.iscomplexobj(payload):
                if np.any(payload.imag != 0):
                    raise ValueError("diagonal operator payload must be real")
                payload = payload.real
            payload = payload.astype(float)
        payload.setflags(write=False)
        object.__setattr__(self, "payload", payload)

    @classmethod
    def dense(cls, matrix) -> "OperatorSpec":
        return cls(DENSE, np.asarray(matrix))

    @classmethod
    def spatial(cls, values) -> "OperatorSpec":
        return cls(SPATIAL, np.asarray(values))

    @classmethod
    def momentum(cls, values) -> "OperatorSpec":
        return cls(MOMENTUM, np.asarray(values))

    @property
    def dim(self) -> int:
        return self.payload.shape[0]

    def hermiticity_residual(self) -> float:
        if self.kind != DENSE:
            return 0.0
        return float(np.max(np.abs(self.payload - self.payload.conj().T), initial=0.0))

    def to_dense(self) -> np.ndarray:
        if self.kind == DENSE:
            return np.array(self.payload)
        if self.kind == SPATIAL:
            return np.diag(self.payload)
        n = self.dim
        mat = np.fft.ifft(self.payload[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0)
        mat = 0.5 * (mat + mat.conj().T)
        # a momentum function that is even in p gives a real symmetric matrix
        if np.max(np.abs(mat.imag)) <= 1e-14 * max(1.0, np.max(np.abs(mat.real))):
            mat = mat.real
        return mat


def kinetic(grid: SpatialGrid, mass: float = 1.0) -> OperatorSpec:
    return OperatorSpec.momentum(grid.p**2 / (2.0 * mass))


def position(grid: SpatialGrid) -> OperatorSpec:
    return OperatorSpec.spatial(grid.x)


def apply_operator(op: OperatorSpec, psi, grid: SpatialGrid | None = None) -> np.ndarray:
    psi = np.asarray(psi)
    if psi.shape[-1] != op.dim:
        raise ValueError(f"operator of dimension {op.dim} applied to state of length {psi.shape[-1]}")
    if op.kind == DENSE:
        return psi @ op.payload.T
    if op.kind == SPATIAL:
        return op.payload * psi
    if grid is None:
        raise ValueError("momentum-diagonal operator needs a spatial grid basis")
    if grid.n != op.dim:
        raise ValueError("grid size does not match operator dimension")
    return np.fft.ifft(op.payload * np.fft.fft(psi, axis=-1), axis=-1)


def expectation(op: OperatorSpec, psi, grid: SpatialGrid | None = None) -> float:
    psi = np.asarray(psi)
    value = np.vdot(psi, apply_operator(op, psi, grid))
    norm2 = np.vdot(psi, psi).real
    if abs(value.imag) > 1e-10 * max(norm2, 1e-300):
        raise ValueError(f"operator is not Hermitian on this state (Im = {value.imag:.3e})")
    return float(value.real)


@dataclass(eq=False)
class HamiltonianModel:
    """``H(t) = H0 - mu * eps(t)`` with ``H0`` a single operator or a sum of terms."""

    h0: tuple
    mu: OperatorSpec
    grid: SpatialGrid | None = None
    _eig_cache: OrderedDict = dc_field(default_factory=OrderedDict, init=False, repr=False)

    def __post_init__(self):
        if isinstance(self.h0, OperatorSpec):
            self.h0 = (self.h0,)
        self.h0 = tuple(self.h0)
        if not self.h0:
            raise ValueError("H0 needs at least one term")
        dims = {t.dim for t in self.h0} | {self.mu.dim}
        if len(dims) != 1:
            raise ValueError(f"inconsistent operator dimensions {sorted(dims)}")
        needs_grid = any(t.kind == MOMENTUM for t in self.h0) or self.mu.kind == MOMENTUM
        if needs_grid and self.grid is None:
            raise ValueError("momentum-diagonal terms need a spatial grid")

    @property
    def dim(self) -> int:
        return self.mu.dim

    @cached_property
    def h0_matrix(self) -> np.ndarray:
        mat = sum(t.to_dense() for t in self.h0)
        return 0.5 * (mat + mat.conj().T)

    @cached_property
    def mu_matrix(self) -> np.ndarray:
        mat = self.mu.to_dense()
        return 0.5 * (mat + mat.conj().T)

    def apply_h0(self, psi) -> np.ndarray:
        return sum(apply_operator(t, psi, self.grid) for t in self.h0)

    def apply(self, psi, eps: float) -> np.ndarray:
        """``H(t) psi`` for field value ``eps``."""
        return self.apply_h0(psi) - eps * apply_operator(self.mu, psi, self.grid)

    def step_eigensystem(self, field) -> "StepEigensystem":
        """Eigendecompositions of every step Hamiltonian (used for step averages)."""
        return self._cached(("eig",), field, lambda f: StepEigensystem(self.h0_matrix, self.mu_matrix, f))

    def step_propagators(self, field, tau: float) -> "StepPropagators":
        """``exp(-i tau H_j)`` for every step (used to advance states)."""
        return self._cached(("expm", float(tau)), field,
                            lambda f: StepPropagators(self.h0_matrix, self.mu_matrix, f, tau))

    def _cached(self, kind, field, make):
        field = np.ascontiguousarray(field, dtype=float)
        key = kind + (hashlib.sha1(field.tobytes()).hexdigest(),)
        hit = self._eig_cache.get(key)
        if hit is not None and np.array_equal(hit.field, field):
            self._eig_cache.move_to_end(key)
            return hit
        steps = make(field)
        if steps.nbytes <= _EIG_CACHE_BYTES:
            self._eig_cache[key] = steps
            while len(self._eig_cache) > 4:
                self._eig_cache.popitem(last=False)
        return steps


class _StepSeries:
    """Per-step matrices for a sampled field, computed in chunks and kept if small."""

    def __init__(self, h0, mu, field, itemsize):
        field = np.array(field, dtype=float)
        if not np.all(np.isfinite(field)):
            raise PropagationError("field has non-finite samples")
        self.h0, self.mu, self.field = h0, mu, field
        self.n = len(field)
        self.nbytes = self.n * h0.shape[0] ** 2 * itemsize
        self._keep = self.nbytes <= _EIG_CACHE_BYTES
        self._chunks = {}

    def _compute(self, hams):
        raise NotImplementedError

    def chunk(self, start: int):
        """Results for steps ``start:start+_EIG_CHUNK``."""
        got = self._chunks.get(start)
        if got is not None:
            return got
        eps = self.field[start:start + _EIG_CHUNK]
        got = self._compute(self.h0[None, :, :] - eps[:, None, None] * self.mu[None, :, :])
        if self._keep:
            self._chunks[start] = got
        return got

    def __iter__(self):
        for start in range(0, self.n, _EIG_CHUNK):
            got = self.chunk(start)
            for i in range(len(got[0])):
                yield (start + i,) + tuple(a[i] for a in got)

    def reversed(self):
        for start in reversed(range(0, self.n, _EIG_CHUNK)):
            got = self.chunk(start)
            for i in reversed(range(len(got[0]))):
                yield (start + i,) + tuple(a[i] for a in got)


class StepEigensystem(_StepSeries):
    """Eigendecompositions ``(w, V)`` of ``H0 - eps_j mu`` for every step."""

    def __init__(self, h0, mu, field):
        real = np.isrealobj(h0) and np.isrealobj(mu)
        super().__init__(h0, mu, field, 8 if real else 16)

    def _compute(self, hams):
        return np.linalg.eigh(hams)


class StepPropagators(_StepSeries):
    """Step exponentials ``exp(-i tau (H0 - eps_j mu))``.

    Scaling-and-squaring Pade is used rather than the eigendecomposition: its
    rounding error varies smoothly with the field, which keeps finite
    differences of the objective clean.
    """

    def __init__(self, h0, mu, field, tau):
        self.tau = float(tau)
        super().__init__(h0, mu, field, 16)

    def _compute(self, hams):
        return (scipy.linalg.expm(-1j * self.tau * hams),)


@dataclass(eq=False)
class Trajectory:
    """States at ``t = 0``, at every midpoint node, and at ``t = T``.

    For costates ``source`` holds the node impulses, and the stored node value
    is the mean of the one-sided limits across the impulse.
    """

    states: np.ndarray
    field: np.ndarray
    tgrid: TimeGrid
    source: np.ndarray | None = None

    def __post_init__(self):
        if self.states.shape[0] != self.tgrid.n + 2:
            raise ValueError("trajectory must hold n_t + 2 states")

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def nodes(self) -> np.ndarray:
        return self.states[1:-1]

    def __len__(self):
        return self.states.shape[0]

    def one_sided(self):
        """Node states just before and just after each impulse."""
        if self.source is None:
            return self.nodes, self.nodes
        half = 0.5 * self.tgrid.dt * self.source
        return self.nodes - half, self.nodes + half


def eigensolve(h0, n_states: int | None = None, grid: SpatialGrid | None = None):
    """Lowest eigenpairs of ``H0``.

    ``h0`` may be a :class:`HamiltonianModel`, an :class:`OperatorSpec` or a
    dense matrix.  Returns ``(energies, vectors)`` with eigenvectors in the
    columns, each phased so its largest component is real and positive.
    """
    if isinstance(h0, HamiltonianModel):
        mat = h0.h0_matrix
    elif isinstance(h0, OperatorSpec):
        mat = h0.to_dense()
    else:
        mat = np.asarray(h0)
    n = mat.shape[0]
    if n_states is None:
        n_states = n
    if not 1 <= n_states <= n:
        raise ValueError(f"cannot compute {n_states} states of a {n}-dimensional operator")
    try:
        energies, vecs = scipy.linalg.eigh(mat, subset_by_index=[0, n_states - 1])
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(str(exc)) from exc
    idx = np.argmax(np.abs(vecs), axis=0)
    phase = vecs[idx, np.arange(n_states)]
    vecs = vecs * (np.abs(phase) / phase)[None, :]
    resid = np.linalg.norm(mat @ vecs - vecs * energies[None, :], axis=0)
    bad = resid > 1e-8 * np.abs(energies) + 1e-10
    if np.any(bad):
        raise EigensolverError(f"eigenpair residual too large: {resid.max():.3e}")
    return energies, vecs


def _check_field(field, tgrid):
    field = np.asarray(field, dtype=float)
    if field.shape != (tgrid.n,):
        raise ValueError(f"field must have {tgrid.n} samples, got shape {field.shape}")
    return field


def propagate_forward(model: HamiltonianModel, field, psi0, tgrid: TimeGrid, tol: float = 1e-9) -> Trajectory:
    """Solve ``i dpsi/dt = H(t) psi`` from ``psi(0) = psi0``."""
    field = _check_field(field, tgrid)
    psi = np.asarray(psi0, dtype=complex)
    if psi.shape != (model.dim,):
        raise ValueError("initial state does not match the model dimension")
    half = 0.5 * tgrid.dt
    states = np.empty((tgrid.n + 2, model.dim), dtype=complex)
    states[0] = psi
    for j, u in model.step_propagators(field, half):
        states[j + 1] = u @ psi
        psi = u @ states[j + 1]
    states[-1] = psi
    _check_states(states, tol, normalized=True)
    return Trajectory(states, field, tgrid)


def propagate_backward_inhomogeneous(model: HamiltonianModel, field, source, chi_T, tgrid: TimeGrid,
                                     tol: float = 1e-9) -> Trajectory:
    """Solve ``dchi/dt = -i H(t) chi + source(t)`` backward from ``chi(T)``.

    ``source`` has one row per node; ``None`` means the homogeneous equation.
    """
    field = _check_field(field, tgrid)
    chi = np.asarray(chi_T, dtype=complex)
    if chi.shape != (model.dim,):
        raise ValueError("terminal state does not match the model dimension")
    if source is None:
        source = np.zeros((tgrid.n, model.dim), dtype=complex)
    source = np.asarray(source, dtype=complex)
    if source.shape != (tgrid.n, model.dim):
        raise ValueError(f"source must have shape {(tgrid.n, model.dim)}, got {source.shape}")
    dt = tgrid.dt
    half = 0.5 * dt
    states = np.empty((tgrid.n + 2, model.dim), dtype=complex)
    states[-1] = chi
    for j, u in model.step_propagators(field, half).reversed():
        u_back = u.conj().T
        after = u_back @ chi
        states[j + 1] = after - half * source[j]
        chi = u_back @ (after - dt * source[j])
    states[0] = chi
    _check_states(states, tol, normalized=False)
    return Trajectory(states, field, tgrid, source=source)


def _check_states(states, tol, normalized):
    if not np.all(np.isfinite(states)):
        raise PropagationError("non-finite amplitudes during propagation")
    if normalized:
        norms = np.linalg.norm(states, axis=1)
        drift = np.max(np.abs(norms - norms[0]))
        if drift > tol * max(norms[0], 1.0):
            raise PropagationError(f"norm drift {drift:.3e} exceeds tolerance {tol:.1e}")


def _phi1_imag(y):
    """``(exp(iy) - 1) / (iy)`` for real ``y``, stable at 0."""
    return np.sinc(y / np.pi) + 1j * np.sin(0.5 * y) * np.sinc(y / (2 * np.pi))


def step_averaged_overlap(model: HamiltonianModel, chi_traj: Trajectory, psi_traj: Trajectory,
                          op_matrix=None) -> np.ndarray:
    """Average of ``<chi(t)|A|psi(t)>`` over each time step (``A = mu`` by default).

    Both trajectories must come from the same field.  The integral inside a
    step is done in closed form in the eigenbasis of the step Hamiltonian,
    using the one-sided costate limits on either side of the node impulse.
    """
    if not np.array_equal(chi_traj.field, psi_traj.field):
        raise ValueError("costate and state were propagated under different fields")
    a_mat = model.mu_matrix if op_matrix is None else np.asarray(op_matrix)
    tgrid = psi_traj.tgrid
    half = 0.5 * tgrid.dt
    chi_minus, chi_plus = chi_traj.one_sided()
    psi = psi_traj.nodes
    out = np.empty(tgrid.n, dtype=complex)
    steps = model.step_eigensystem(psi_traj.field)
    for start in range(0, tgrid.n, _EIG_CHUNK):
        w, v = steps.chunk(start)
        sl = slice(start, start + len(w))
        vh = np.conj(np.swapaxes(v, 1, 2))
        a_t = vh @ a_mat @ v
        f = _phi1_imag((w[:, :, None] - w[:, None, :]) * half)
        b = np.einsum("kmn,kn->km", vh, psi[sl])
        cm = np.einsum("kmn,kn->km", vh, chi_minus[sl])
        cp = np.einsum("kmn,kn->km", vh, chi_plus[sl])
        left = np.einsum("km,kmn,kn->k", cm.conj(), a_t * f.conj(), b)
        right = np.einsum("km,kmn,kn->k", cp.conj(), a_t * f, b)
        out[sl] = 0.5 * (left + right)
    return out
