"""The four benchmark problems: two- and eleven-level systems, HCl, soft-core Coulomb."""

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .functional import FunctionalWeights, GammaSchedule, SubspaceSpec
from .quantum import HamiltonianModel, OperatorSpec, SpatialGrid, eigensolve, kinetic, position
from .spectral import FrequencyGrid, TimeGrid, sech, theta

HCL_MASS = 1785.0
MORSE_D0 = 0.171
MORSE_A = 0.975
HCL_DIPOLE = (0.19309, 0.17069 + 0.056854j, 0.10630, 1.8977)


@dataclass(eq=False)
class ProblemSpec:
    name: str
    model: HamiltonianModel
    weights: FunctionalWeights
    psi0: np.ndarray
    tgrid: TimeGrid
    initial_field: np.ndarray
    K_init: float
    tau: float
    energies: np.ndarray | None = None
    eigvecs: np.ndarray | None = None
    gamma_schedule: GammaSchedule | None = None
    info: dict = dc_field(default_factory=dict)

    @property
    def fgrid(self) -> FrequencyGrid:
        return FrequencyGrid.for_time_grid(self.tgrid)

    @property
    def grid(self) -> SpatialGrid | None:
        return self.model.grid

    def violations(self) -> list[str]:
        """Problems that would make the optimization ill-posed; empty when valid."""
        found = []
        n_t = self.tgrid.n
        for label, op in [("H0", t) for t in self.model.h0] + [("dipole", self.model.mu),
                                                               ("target", self.weights.target)]:
            if op.hermiticity_residual() > 1e-12:
                found.append(f"{label} operator is not Hermitian")
        norm = np.linalg.norm(self.psi0)
        if not np.isfinite(norm) or abs(norm - 1) > 1e-9:
            found.append("initial state is not normalized")
        if self.psi0.shape != (self.model.dim,):
            found.append("initial state does not match the basis size")
        ff, tf = self.weights.field_filter, self.weights.target_filter
        for label, values in (("field filter", ff), ("target filter", tf), ("initial field", self.initial_field)):
            if len(values) != n_t:
                found.append(f"{label} has {len(values)} bins, expected {n_t}")
        if len(ff) == n_t and np.any(ff < 0):
            found.append("field filter must be nonnegative")
        if len(tf) == n_t and np.any(tf < 0):
            found.append("target filter must be nonnegative")
        if len(ff) == n_t and len(self.initial_field) == n_t:
            if np.any(self.initial_field[ff == 0] != 0):
                found.append("field outside filter support")
            if not np.any(self.initial_field != 0):
                found.append("initial field is identically zero")
        if not 0 < self.K_init <= 1:
            found.append("K_init must lie in (0, 1]")
        if not self.tau > 0:
            found.append("tau must be positive")
        return found

    def with_time_grid(self, T: float | None = None, n_t: int | None = None) -> "ProblemSpec":
        """Rebuild filters and initial field on a different time grid (needs ``info['filters']``)."""
        make = self.info.get("filters")
        if make is None:
            raise ValueError("problem does not know how to resample its filters")
        tgrid = TimeGrid(T or self.tgrid.T, n_t or self.tgrid.n)
        omega = FrequencyGrid.for_time_grid(tgrid).nodes
        ff, tf, eps0 = make(omega)
        weights = replace(self.weights, field_filter=ff, target_filter=tf)
        return replace(self, weights=weights, tgrid=tgrid, initial_field=confine(eps0, ff))


def confine(spectrum, field_filter):
    """Zero the spectrum wherever the field filter vanishes."""
    out = np.array(spectrum, dtype=float)
    out[np.asarray(field_filter) == 0] = 0.0
    return out


def _finish(name, model, target, psi0, T, n_t, filters, K_init, tau, kappa=0.0, subspace=None,
            energies=None, eigvecs=None, gamma_schedule=None):
    tgrid = TimeGrid(T, n_t)
    omega = FrequencyGrid.for_time_grid(tgrid).nodes
    ff, tf, eps0 = filters(omega)
    weights = FunctionalWeights(ff, tf, target, kappa, subspace or SubspaceSpec())
    return ProblemSpec(name, model, weights, np.asarray(psi0, dtype=complex), tgrid, confine(eps0, ff),
                       K_init, tau, energies, eigvecs, gamma_schedule, {"filters": filters})


def tls_filters(omega):
    return 20 * sech(20 * (omega - 1) ** 4), np.exp(-10 * (omega - 3) ** 2), sech(20 * (omega - 1) ** 4)


def build_tls(T: float = 100.0, n_t: int = 1024, kappa: float = 0.0) -> ProblemSpec:
    """Frequency tripling in a two-level system."""
    h0 = OperatorSpec.dense(np.diag([1.0, 4.0]))
    mu = OperatorSpec.dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
    model = HamiltonianModel(h0, mu)
    energies, vecs = eigensolve(model)
    return _finish("tls", model, mu, [1.0, 0.0], T, n_t, tls_filters, 0.5, 1e-3, kappa,
                   energies=energies, eigvecs=vecs)


ELEVEN_LEVELS = (1.0, 2.1, 3.0, 3.9, 5.0, 6.1, 7.0, 8.1, 9.0, 9.9, 11.0)


def eleven_level_dipole() -> np.ndarray:
    n = len(ELEVEN_LEVELS)
    mu = np.eye(n, k=1) + np.eye(n, k=-1)
    mu[0, -1] = mu[-1, 0] = 1.0
    return mu


def eleven_level_filters(omega):
    return 50 * theta(1.3 - omega), theta(omega - 9.9) * theta(10.1 - omega), theta(1.3 - omega)


def build_11ls(T: float = 100.0, n_t: int = 2048, kappa: float = 0.0) -> ProblemSpec:
    """Resonance-mediated generation of the tenth harmonic in an eleven-level ladder."""
    h0 = OperatorSpec.dense(np.diag(ELEVEN_LEVELS))
    mu = OperatorSpec.dense(eleven_level_dipole())
    model = HamiltonianModel(h0, mu)
    energies, vecs = eigensolve(model)
    psi0 = np.zeros(len(ELEVEN_LEVELS))
    psi0[0] = 1.0
    return _finish("11ls", model, mu, psi0, T, n_t, eleven_level_filters, 1.0, 1e-3, kappa,
                   energies=energies, eigvecs=vecs)


def morse_potential(x, D0: float = MORSE_D0, a: float = MORSE_A):
    return D0 * (np.exp(-a * np.asarray(x, dtype=float)) - 1.0) ** 2


def hcl_dipole(x):
    """Real part of the complex tanh dipole fit; principal branch for the power."""
    a1, a2, a3, a4 = HCL_DIPOLE
    x = np.asarray(x, dtype=float)
    z = a2 * np.power((x - a3).astype(complex), a4)
    return a1 * x * (1.0 - np.tanh(z).real)


def hcl_filters(omega):
    ff = 2500 * theta(0.015 - omega)
    tf = 100 * theta(omega - 0.025) * theta(0.027 - omega)
    return ff, tf, theta(0.015 - omega)


HCL_GRID = SpatialGrid(-0.69407, 3.51178, 32)
HCL_LAST_ALLOWED = 19


def build_hcl(T: float = 1e4, n_t: int = 2048, kappa: float = 0.0) -> ProblemSpec:
    """Second-harmonic generation in a Morse model of HCl, dissociation suppressed."""
    grid = HCL_GRID
    model = HamiltonianModel(
        (kinetic(grid, HCL_MASS), OperatorSpec.spatial(morse_potential(grid.x))),
        OperatorSpec.spatial(hcl_dipole(grid.x)),
        grid,
    )
    energies, vecs = eigensolve(model)
    n = np.arange(grid.n)
    allowed = np.where(n <= HCL_LAST_ALLOWED, 1.0, 0.0)
    gamma = np.where(n <= HCL_LAST_ALLOWED, 0.0, (n - HCL_LAST_ALLOWED) ** 2.0)
    subspace = SubspaceSpec.energy(vecs, allowed, gamma)
    return _finish("hcl", model, model.mu, vecs[:, 0], T, n_t, hcl_filters, 1.0, 1e-3, kappa, subspace,
                   energies, vecs)


def soft_coulomb(x):
    x = np.asarray(x, dtype=float)
    return 1.0 - 1.0 / np.sqrt(x**2 + 1.0)


def coulomb_allowed(x):
    return 0.5 * (np.tanh(x + 35) - np.tanh(x - 35))


def coulomb_forbidden(x):
    return 1e-3 * (1.0 - coulomb_allowed(x))


def coulomb_filters(omega):
    edge = 1.0 - np.tanh(100 * (omega - 0.07))
    return 5e4 * edge, theta(omega - 0.61) * theta(0.63 - omega), 0.3 * edge


COULOMB_GRID = SpatialGrid(-40.0, 40.0, 128)
# raise the edge penalty as the run goes on, before boundary reflections build up
COULOMB_GAMMA_SCHEDULE = GammaSchedule(every=100, factor=2.0)


def build_coulomb(T: float = 2000.0, n_t: int = 2048, kappa: float = 0.0) -> ProblemSpec:
    """High-harmonic emission at the 5-0 Bohr frequency of a soft-core Coulomb atom."""
    grid = COULOMB_GRID
    model = HamiltonianModel((kinetic(grid), OperatorSpec.spatial(soft_coulomb(grid.x))), position(grid), grid)
    energies, vecs = eigensolve(model)
    subspace = SubspaceSpec.spatial(coulomb_allowed(grid.x), coulomb_forbidden(grid.x))
    return _finish("coulomb", model, model.mu, vecs[:, 0], T, n_t, coulomb_filters, 1e-6, 5e-4, kappa,
                   subspace, energies, vecs, COULOMB_GAMMA_SCHEDULE)


BUILDERS = {
    "tls": build_tls,
    "11ls": build_11ls,
    "hcl": build_hcl,
    "coulomb": build_coulomb,
}


def build(name: str, **kwargs) -> ProblemSpec:
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(BUILDERS)}") from None
    return builder(**kwargs)
