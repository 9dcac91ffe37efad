from dataclasses import replace

import mpmath
import numpy as np
import pytest

from hgoct import build
from hgoct.problems import (
    BUILDERS,
    HCL_MASS,
    MORSE_A,
    MORSE_D0,
    coulomb_allowed,
    coulomb_forbidden,
    eleven_level_dipole,
    hcl_dipole,
    morse_potential,
    soft_coulomb,
    tls_filters,
)
from hgoct.quantum import propagate_forward
from hgoct.spectral import TimeGrid


def mp_dipole(x):
    mpmath.mp.dps = 50
    x = mpmath.mpf(x)
    z = mpmath.mpc("0.17069", "0.056854") * mpmath.power(mpmath.mpc(x - mpmath.mpf("0.10630")), mpmath.mpf("1.8977"))
    return float(mpmath.re(mpmath.mpf("0.19309") * x * (1 - mpmath.tanh(z))))


@pytest.mark.parametrize("name", sorted(BUILDERS))
def test_builtins_validate(name):
    p = build(name)
    assert p.violations() == []
    assert np.linalg.norm(p.psi0) == pytest.approx(1.0, abs=1e-12)
    assert not np.any(p.initial_field[p.weights.field_filter == 0])


@pytest.mark.parametrize("name", sorted(BUILDERS))
def test_ground_state_has_stationary_dipole(name):
    p = build(name)
    tg = TimeGrid(1.0, 8)
    traj = propagate_forward(p.model, np.zeros(tg.n), p.psi0, tg)
    o = p.weights.target_matrix
    vals = np.einsum("ti,ij,tj->t", traj.states.conj(), o, traj.states).real
    # i <[H0, O]> is the time derivative of <O>
    h0 = p.model.h0_matrix
    deriv = np.vdot(p.psi0, (h0 @ o - o @ h0) @ p.psi0)
    assert abs(deriv) <= 1e-8
    assert np.max(np.abs(vals - vals[0])) <= 1e-8


def test_tls_table():
    p = build("tls")
    assert p.energies[1] - p.energies[0] == 3.0
    om = p.fgrid.nodes
    assert (p.tgrid.T, p.tgrid.n, p.K_init, p.tau, p.weights.kappa) == (100.0, 1024, 0.5, 1e-3, 0.0)
    with np.errstate(over="ignore"):
        ref = 20 / np.cosh(20 * (om - 1) ** 4)
    np.testing.assert_allclose(p.weights.field_filter, ref, rtol=1e-14, atol=1e-300)
    np.testing.assert_allclose(p.weights.target_filter, np.exp(-10 * (om - 3) ** 2), rtol=1e-15)
    k = p.fgrid.cutoff_index(3.0)
    assert p.weights.target_filter[k] == pytest.approx(np.exp(-10 * (om[k] - 3) ** 2))
    # exact at the peaks themselves
    ff, tf, e0 = tls_filters(np.array([1.0, 3.0]))
    assert tf[1] == 1.0 and e0[0] == 1.0 and ff[0] == 20.0
    np.testing.assert_array_equal(p.psi0, [1, 0])


def test_eleven_level_table():
    p = build("11ls")
    assert p.energies[10] - p.energies[0] == 10.0
    mu = eleven_level_dipole()
    assert mu[0, 10] == 1.0 and mu[0, 2] == 0.0
    assert np.max(np.abs(mu - mu.T)) == 0.0
    assert np.count_nonzero(mu) == 22
    om = p.fgrid.nodes
    np.testing.assert_array_equal(p.weights.field_filter, np.where(om <= 1.3, 50.0, 0.0))
    np.testing.assert_array_equal(p.weights.target_filter, np.where((om >= 9.9) & (om <= 10.1), 1.0, 0.0))
    assert (p.K_init, p.tau) == (1.0, 1e-3)


def test_morse():
    assert morse_potential(0.0) == 0.0
    assert morse_potential(60.0) == pytest.approx(MORSE_D0, rel=1e-15)
    assert MORSE_A * np.sqrt(2 * MORSE_D0 / HCL_MASS) == pytest.approx(1.35e-2, abs=1e-4)


def test_hcl_dipole_values():
    assert hcl_dipole(0.0) == 0.0
    for x in (1.0, -0.5, 0.05, 2.7, 3.5):
        assert hcl_dipole(x) == pytest.approx(mp_dipole(x), rel=1e-13, abs=1e-16)
    assert np.all(np.isfinite(hcl_dipole(build("hcl").grid.x)))


def test_hcl_dipole_continuity():
    a3 = 0.10630
    for h in (1e-9, 1e-11):
        assert abs(hcl_dipole(a3 - h) - hcl_dipole(a3 + h)) <= 1e-8
    xs = np.linspace(a3 - 1e-4, a3 + 1e-4, 2001)
    assert np.max(np.abs(np.diff(hcl_dipole(xs)))) <= 1e-6


def test_hcl_table():
    p = build("hcl")
    assert p.energies[2] - p.energies[0] == pytest.approx(2.54e-2, abs=2e-4)
    sub = p.weights.subspace
    assert sub.forbidden_weights[20] == 1.0 and sub.forbidden_weights[25] == 36.0
    assert sub.allowed_weights[19] == 1.0 and sub.allowed_weights[20] == 0.0
    assert not np.any(sub.forbidden_weights[:20])
    om = p.fgrid.nodes
    np.testing.assert_array_equal(p.weights.field_filter, np.where(om <= 0.015, 2500.0, 0.0))
    np.testing.assert_array_equal(p.weights.target_filter, np.where((om >= 0.025) & (om <= 0.027), 100.0, 0.0))
    assert (p.tgrid.T, p.K_init, p.tau) == (1e4, 1.0, 1e-3)
    assert p.grid.x[0] == -0.69407 and p.grid.n == 32


def test_coulomb_table():
    p = build("coulomb")
    e = p.energies
    assert e[1] - e[0] == pytest.approx(0.395, abs=0.01)
    assert e[5] - e[0] == pytest.approx(0.624, abs=0.01)
    assert soft_coulomb(0.0) == 0.0
    assert soft_coulomb(1e9) == pytest.approx(1.0, abs=1e-8)
    assert abs(coulomb_allowed(0.0) - np.tanh(35.0)) <= 1e-15
    assert coulomb_forbidden(0.0) == pytest.approx(0.0, abs=1e-15)
    assert (p.tgrid.T, p.K_init, p.tau) == (2000.0, 1e-6, 5e-4)
    assert p.grid.x[0] == -40.0 and p.grid.n == 128
    om = p.fgrid.nodes
    np.testing.assert_allclose(p.initial_field, 0.3 * (1 - np.tanh(100 * (om - 0.07))), rtol=1e-15)
    assert p.gamma_schedule is not None


def test_violations_detected():
    p = build("tls")
    bad = p.initial_field.copy()
    bad[-1] = 1.0
    assert p.weights.field_filter[-1] == 0
    assert "field outside filter support" in replace(p, initial_field=bad).violations()
    assert "initial state is not normalized" in replace(p, psi0=2 * p.psi0).violations()
    assert "initial field is identically zero" in replace(p, initial_field=0 * bad).violations()


def test_with_time_grid():
    p = build("tls").with_time_grid(T=50.0, n_t=256)
    assert p.tgrid.T == 50.0 and p.tgrid.n == 256
    assert len(p.weights.field_filter) == 256
    assert p.violations() == []


def test_unknown_problem():
    with pytest.raises(ValueError):
        build("h2o")
