import numpy as np
import pytest

from hgoct import build
from hgoct.functional import (
    FunctionalWeights,
    SubspaceSpec,
    UnsupportedConfiguration,
    adjoint_source,
    chi_terminal,
    constraint_residual,
    control_overlap,
    evaluate_terms,
    gradient_spectrum,
    penalty_term,
    projected_expectation_signal,
    solve_costate,
)
from hgoct.optimizer import euler_lagrange_field
from hgoct.quantum import OperatorSpec, Trajectory, propagate_forward
from hgoct.spectral import SQRT_2_OVER_PI, FrequencyGrid, TimeGrid, cosine_inverse

SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def direct_cos(g, tg):
    fg = FrequencyGrid.for_time_grid(tg)
    return SQRT_2_OVER_PI * tg.dt * np.cos(np.outer(fg.nodes, tg.nodes)) @ g


def direct_icos(eps_bar, tg):
    fg = FrequencyGrid.for_time_grid(tg)
    return SQRT_2_OVER_PI * np.cos(np.outer(tg.nodes, fg.nodes)) @ (fg.weights * eps_bar)


def random_admissible(problem, rng, scale=0.3):
    return problem.initial_field * (0.5 + rng.random(problem.tgrid.n)) * scale


def forward(problem, eps_bar, weights=None):
    weights = weights or problem.weights
    traj = propagate_forward(problem.model, cosine_inverse(eps_bar, problem.tgrid), problem.psi0, problem.tgrid)
    return traj, evaluate_terms(traj, eps_bar, weights, problem.model)


def fd_check(problem, eps_bar, bins, weights=None, delta=1e-6):
    weights = weights or problem.weights
    traj, _ = forward(problem, eps_bar, weights)
    chi = solve_costate(problem.model, weights, traj)
    g = gradient_spectrum(traj, chi, problem.model, weights, eps_bar)
    w = problem.fgrid.weights
    errs = []
    for k in bins:
        up, dn = eps_bar.copy(), eps_bar.copy()
        up[k] += delta
        dn[k] -= delta
        fd = (forward(problem, up, weights)[1].j_total - forward(problem, dn, weights)[1].j_total) / (2 * delta)
        errs.append(abs(fd / w[k] - g[k]) / abs(g[k]))
    return max(errs)


def effective_bins(problem, rng, count=10):
    ff = problem.weights.field_filter
    return rng.choice(np.flatnonzero(ff >= 1e-6 * ff.max()), count, replace=False)


# ---------------------------------------------------------------- terms


def test_trivial_terms(tls):
    tg = tls.tgrid
    traj = propagate_forward(tls.model, np.zeros(tg.n), tls.psi0, tg)
    terms = evaluate_terms(traj, np.zeros(tg.n), tls.weights, tls.model)
    assert terms.as_dict() == {"j_max": 0.0, "j_penal": 0.0, "j_forb": 0.0, "j_bound": 0.0, "j_total": 0.0}


def test_single_bin_penalty():
    tg = TimeGrid(10.0, 16)
    fg = FrequencyGrid.for_time_grid(tg)
    w = FunctionalWeights(np.full(16, 2.5), np.ones(16), OperatorSpec.dense(SX))
    eps_bar = np.zeros(16)
    eps_bar[3] = 0.7
    assert penalty_term(eps_bar, w, fg) == pytest.approx(-0.49 * fg.domega / 2.5, rel=1e-15)
    eps_bar[0] = 1.0
    eps_bar[3] = 0.0
    # the omega = 0 bin has half quadrature weight
    assert penalty_term(eps_bar, w, fg) == pytest.approx(-0.5 * fg.domega / 2.5, rel=1e-15)


def test_field_on_excluded_bin_rejected(tls):
    eps_bar = np.zeros(tls.tgrid.n)
    eps_bar[np.flatnonzero(~tls.weights.support)[0]] = 1e-3
    with pytest.raises(ValueError):
        penalty_term(eps_bar, tls.weights, tls.fgrid)


def test_j_max_direct_sum(tls, rng):
    eps_bar = random_admissible(tls, rng)
    traj, terms = forward(tls, eps_bar)
    sx = np.einsum("ti,ij,tj->t", traj.nodes.conj(), SX, traj.nodes).real
    o_bar = direct_cos(sx, tls.tgrid)
    ref = 0.5 * np.sum(tls.fgrid.weights * tls.weights.target_filter * o_bar**2)
    assert terms.j_max == pytest.approx(ref, rel=1e-10)


def test_reduction_to_unconstrained(ells, rng):
    """Default subspace, kappa = 0: term-by-term agreement with a plain evaluator."""
    eps_bar = random_admissible(ells, rng)
    traj, terms = forward(ells, eps_bar)
    mu = ells.model.mu_matrix
    fg, w = ells.fgrid, ells.weights
    o_bar = direct_cos(np.einsum("ti,ij,tj->t", traj.nodes.conj(), mu, traj.nodes).real, ells.tgrid)
    j_max = 0.5 * np.sum(fg.weights * w.target_filter * o_bar**2)
    m = w.field_filter > 0
    j_penal = -np.sum(fg.weights[m] * eps_bar[m] ** 2 / w.field_filter[m])
    assert terms.j_max == pytest.approx(j_max, rel=1e-12)
    assert terms.j_penal == pytest.approx(j_penal, rel=1e-12)
    assert terms.j_forb == 0.0 and terms.j_bound == 0.0


# ---------------------------------------------------------------- projections


def test_projected_signal_trivial(tls):
    tg = tls.tgrid
    traj = propagate_forward(tls.model, np.zeros(tg.n), tls.psi0, tg)
    assert not np.any(projected_expectation_signal(traj, tls.weights))
    none = tls.weights.with_subspace(SubspaceSpec.energy(tls.eigvecs, np.zeros(2)))
    traj = propagate_forward(tls.model, np.zeros(tg.n), np.array([0.6, 0.8]), tg)
    assert not np.any(projected_expectation_signal(traj, none))


def test_hcl_projection_dense_oracle(hcl, rng):
    v = hcl.eigvecs
    coeff = np.zeros(32, dtype=complex)
    coeff[:25] = rng.standard_normal(25) + 1j * rng.standard_normal(25)
    coeff /= np.linalg.norm(coeff)
    assert np.sum(np.abs(coeff[20:]) ** 2) > 0.05
    states = np.tile(v @ coeff, (4, 1))
    tg = TimeGrid(1.0, 2)
    traj = Trajectory(states, np.zeros(2), tg)
    p = v[:, :20] @ v[:, :20].conj().T
    mu = np.diag(hcl.model.mu.payload)
    ref = np.vdot(p @ states[1], mu @ (p @ states[1])).real
    got = projected_expectation_signal(traj, hcl.weights)
    assert got[0] == pytest.approx(ref, rel=1e-12, abs=1e-15)
    # forbidden projector is diagonal in the eigenbasis with (n - 19)^2 above level 19
    d = v.conj().T @ hcl.weights.p_forbidden @ v
    np.testing.assert_allclose(np.diag(d).real, np.r_[np.zeros(20), np.arange(1, 13) ** 2.0], atol=1e-10)


# ---------------------------------------------------------------- adjoint source and terminal condition


def test_adjoint_source_trivial(tls, rng):
    w = FunctionalWeights(tls.weights.field_filter, np.zeros(tls.tgrid.n), tls.weights.target)
    traj, _ = forward(tls, random_admissible(tls, rng))
    assert not np.any(adjoint_source(traj, w))
    gamma = SubspaceSpec.energy(tls.eigvecs, None, np.array([0.0, 0.7]))
    wg = w.with_subspace(gamma)
    np.testing.assert_allclose(adjoint_source(traj, wg), traj.nodes @ np.diag([0.0, 0.7]), atol=1e-15)


def test_adjoint_source_direct_sum(tls, rng):
    traj, _ = forward(tls, random_admissible(tls, rng))
    sx = np.einsum("ti,ij,tj->t", traj.nodes.conj(), SX, traj.nodes).real
    c = direct_icos(tls.weights.target_filter * direct_cos(sx, tls.tgrid), tls.tgrid)
    ref = -c[:, None] * (traj.nodes @ SX.T)
    got = adjoint_source(traj, tls.weights)
    assert np.max(np.abs(got - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_chi_terminal_cases(tls):
    w1 = FunctionalWeights(tls.weights.field_filter, tls.weights.target_filter, tls.weights.target, kappa=1.0)
    assert not np.any(chi_terminal(np.array([1.0, 0.0]), tls.weights, tls.model))
    assert not np.any(chi_terminal(np.array([1.0, 0.0]), w1, tls.model))
    psi = np.array([1.0, 1j]) / np.sqrt(2)
    # [H0, sx] = [[0, -3], [3, 0]], <psi|[H0, sx]|psi> = -3i
    np.testing.assert_allclose(chi_terminal(psi, w1, tls.model), np.array([-9.0, -9.0j]) / np.sqrt(2), atol=1e-14)
    diag = FunctionalWeights(w1.field_filter, w1.target_filter, OperatorSpec.dense(np.diag([0.0, 1.0])), 1.0)
    with pytest.raises(UnsupportedConfiguration):
        chi_terminal(psi, diag, tls.model)


def test_j_bound_value(tls):
    w1 = FunctionalWeights(tls.weights.field_filter, tls.weights.target_filter, tls.weights.target, kappa=2.0)
    tg = TimeGrid(1.0, 4)
    psi = np.array([1.0, 1j]) / np.sqrt(2)
    traj = Trajectory(np.tile(psi, (6, 1)), np.zeros(4), tg)
    terms = evaluate_terms(traj, np.zeros(4), FunctionalWeights(np.ones(4), np.zeros(4), w1.target, 2.0), tls.model)
    assert terms.j_bound == pytest.approx(-9.0, rel=1e-14)


# ---------------------------------------------------------------- gradient


def test_gradient_trivial(tls, rng):
    tg = tls.tgrid
    traj = propagate_forward(tls.model, np.zeros(tg.n), tls.psi0, tg)
    zero_chi = Trajectory(np.zeros_like(traj.states), traj.field, tg, np.zeros((tg.n, 2)))
    assert not np.any(gradient_spectrum(traj, zero_chi, tls.model, tls.weights, np.zeros(tg.n)))
    eps_bar = random_admissible(tls, rng)
    traj = propagate_forward(tls.model, cosine_inverse(eps_bar, tg), tls.psi0, tg)
    zero_chi = Trajectory(np.zeros_like(traj.states), traj.field, tg, np.zeros((tg.n, 2)))
    g = gradient_spectrum(traj, zero_chi, tls.model, tls.weights, eps_bar)
    m = tls.weights.support
    np.testing.assert_array_equal(g[m], -2 * eps_bar[m] / tls.weights.field_filter[m])
    assert not np.any(g[~m])


def test_gradient_matches_finite_differences_tls(tls, rng):
    eps_bar = random_admissible(tls, rng)
    assert fd_check(tls, eps_bar, effective_bins(tls, rng)) <= 1e-4


def test_gradient_with_subspace_and_boundary_terms(tls, rng):
    """All four terms active on the two-level system."""
    sub = SubspaceSpec.energy(tls.eigvecs, np.array([1.0, 0.6]), np.array([0.0, 0.05]))
    w = FunctionalWeights(tls.weights.field_filter, tls.weights.target_filter, tls.weights.target, 0.3, sub)
    eps_bar = random_admissible(tls, rng)
    _, terms = forward(tls, eps_bar, w)
    assert terms.j_forb < 0 and terms.j_bound != 0
    assert fd_check(tls, eps_bar, effective_bins(tls, rng, 6), w) <= 1e-4


def test_stationarity_identity(tls, rng):
    eps_bar = random_admissible(tls, rng)
    traj, _ = forward(tls, eps_bar)
    chi = solve_costate(tls.model, tls.weights, traj)
    el = euler_lagrange_field(traj, chi, tls.model, tls.weights.field_filter)
    g = gradient_spectrum(traj, chi, tls.model, tls.weights, el)
    m = tls.weights.support
    assert np.max(np.abs(g[m] * tls.weights.field_filter[m])) <= 1e-8 * np.max(np.abs(el))


def test_euler_lagrange_direct_sum(tls, rng):
    eps_bar = random_admissible(tls, rng)
    traj, _ = forward(tls, eps_bar)
    chi = solve_costate(tls.model, tls.weights, traj)
    el = euler_lagrange_field(traj, chi, tls.model, tls.weights.field_filter)
    ref = tls.weights.field_filter * direct_cos(control_overlap(tls.model, traj, chi), tls.tgrid)
    assert np.max(np.abs(el - ref)) <= 1e-12 * np.max(np.abs(ref))
    # chi = psi: the overlap with a Hermitian operator is real
    same = Trajectory(traj.states, traj.field, traj.tgrid, np.zeros((tls.tgrid.n, 2)))
    assert np.max(np.abs(euler_lagrange_field(traj, same, tls.model, tls.weights.field_filter))) <= 1e-14
    zero = Trajectory(np.zeros_like(traj.states), traj.field, traj.tgrid, np.zeros((tls.tgrid.n, 2)))
    assert not np.any(euler_lagrange_field(traj, zero, tls.model, tls.weights.field_filter))


def test_constraint_residual_vanishes(tls, rng):
    eps_bar = random_admissible(tls, rng)
    traj, terms = forward(tls, eps_bar)
    assert constraint_residual(tls.model, traj) <= 1e-8 * abs(terms.j_total)


def test_weights_validation():
    with pytest.raises(ValueError):
        FunctionalWeights(np.ones(4), -np.ones(4), OperatorSpec.dense(SX))
    with pytest.raises(ValueError):
        FunctionalWeights(np.ones(4), np.ones(3), OperatorSpec.dense(SX))
    with pytest.raises(ValueError):
        SubspaceSpec(np.array([1.2, 0.0]))
    with pytest.raises(ValueError):
        SubspaceSpec(None, np.array([-1.0, 0.0]))
