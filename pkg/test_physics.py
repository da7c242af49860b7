"""Constitutive terms and the absorption operators"""

import math

import numpy as np
import pytest

from kwk.exceptions import InputValidationError
from kwk.grid_ops import build_bases, grid_operators
from kwk.media import MediumFields
from kwk.models import Grid
from kwk.physics import (Absorber, AbsorptionKind, InitialData, a_of, apply_absorption, b_of, g_of, h_of,
                         ltilde_prefactors)


def test_nonlinear_coefficients():
    sigma = np.array([-0.25, 0.0, 0.1])
    np.testing.assert_allclose(a_of(sigma), [0.5, 1.0, 1.2])
    np.testing.assert_allclose(b_of(sigma, 4.0), [0.5, 1.0, 1.2])
    np.testing.assert_allclose(b_of(sigma, np.array([0.0, 1.0, 10.0])), [1.0, 1.0, 1.5])


def test_couplings_vanish_for_constant_density(grid2d, rng):
    media = MediumFields.uniform(grid2d)
    F = grid_operators(grid2d).n_faces
    assert not np.any(g_of(rng.normal(size=F), media))
    assert not np.any(h_of(rng.normal(size=F), rng.normal(size=F), media))


def test_g_for_exponential_density():
    grid = Grid(dims=(10,), spacing=(0.1,))
    x = grid.axes()[0]
    media = MediumFields(grid, np.exp(x), 1.0, 0.0)
    F = grid_operators(grid).n_faces
    g = g_of(np.ones(F), media)
    # grad ln rho0 = 1 on every face; interior cells average two faces, the walls one
    np.testing.assert_allclose(g[1:-1], -1.0)
    np.testing.assert_allclose(g[[0, -1]], -0.5)


def test_h_scales_with_sound_speed():
    grid = Grid(dims=(10,), spacing=(0.1,))
    rho0 = 1.0 + grid.axes()[0]
    F = grid_operators(grid).n_faces
    Iu = np.full(F, 0.5)
    d0 = np.full(F, 0.25)
    slow = h_of(Iu, d0, MediumFields(grid, rho0, 1.0, 0.0))
    fast = h_of(Iu, d0, MediumFields(grid, rho0, 4.0, 0.0))
    np.testing.assert_allclose(fast, 4.0 * slow)
    np.testing.assert_allclose(slow[1:-1], 0.75)


def test_ltilde_prefactors():
    grid = Grid(dims=(4,), spacing=(1.0,))
    media = MediumFields(grid, 1.0, 4.0, 0.0, y=1.5)
    damping, dispersion = ltilde_prefactors(media)
    np.testing.assert_allclose(damping, -math.sqrt(2.0))
    np.testing.assert_allclose(dispersion, 2.0 ** 1.5 * math.tan(0.75 * math.pi))
    with pytest.raises(InputValidationError, match="pole"):
        ltilde_prefactors(media, 2.0)


def test_absorber_inactive_without_alpha(grid2d, rng):
    media = MediumFields.uniform(grid2d, 1.0, 1.0)
    bases = build_bases(grid2d, media.rho0, 8)
    absorber = Absorber(AbsorptionKind.MODIFIED, media, bases)
    assert not absorber.active
    assert not np.any(absorber.apply(rng.normal(size=8), rng.normal(size=8)))
    none = Absorber(AbsorptionKind.NONE, MediumFields.uniform(grid2d, 1.0, 1.0, alpha0=1.0), bases)
    assert not none.active


def test_modified_absorber_on_cosine_modes(grid2d, rng):
    y, alpha0, tau, eta = 1.5, 0.05, 2.0, 3.0
    media = MediumFields.uniform(grid2d, 1.0, 1.0, alpha0=alpha0, y=y, tau=tau, eta=eta)
    bases = build_bases(grid2d, media.rho0, 8)
    mu = bases.neumann.eigenvalues[:8]
    xi, xi_t = rng.normal(size=8), rng.normal(size=8)
    expected = -2.0 * alpha0 / mu * (tau * mu ** (y / 2) * xi_t + eta * mu ** ((y + 1) / 2) * xi)
    np.testing.assert_allclose(apply_absorption("modified", xi, xi_t, media, bases), expected, rtol=1e-12)


def test_modified_absorber_heterogeneous_is_linear(grid2d, rng):
    rho0 = 1.0 + 0.2 * np.sin(np.arange(grid2d.n_points))
    media = MediumFields(grid2d, rho0, 1.0, 0.0, alpha0=0.1, y=2.5)
    absorber = Absorber(AbsorptionKind.MODIFIED, media, build_bases(grid2d, rho0, 10))
    assert absorber.K_s.shape == (10, 10)
    a, at, b, bt = (rng.normal(size=10) for _ in range(4))
    np.testing.assert_allclose(absorber.apply(a + 2 * b, at + 2 * bt),
                               absorber.apply(a, at) + 2 * absorber.apply(b, bt), atol=1e-12)


def test_original_absorber_is_linear_and_finite(grid2d, rng):
    media = MediumFields.uniform(grid2d, 1.0, 1.0, alpha0=0.1, y=1.5)
    absorber = Absorber(AbsorptionKind.ORIGINAL, media, build_bases(grid2d, media.rho0, 12))
    xi, xi_t = rng.normal(size=12), rng.normal(size=12)
    out = absorber.apply(xi, xi_t)
    assert out.shape == (12,) and np.all(np.isfinite(out))
    np.testing.assert_allclose(absorber.apply(3 * xi, 3 * xi_t), 3 * out, rtol=1e-10, atol=1e-14)


def test_initial_data(grid2d):
    zero = InitialData.zeros(grid2d)
    assert zero.is_zero
    F = grid_operators(grid2d).n_faces
    data = InitialData(np.ones(grid2d.n_points), np.ones(F), np.zeros(F))
    assert not data.is_zero
    half = data.scaled(0.5)
    np.testing.assert_allclose(half.sigma0, 0.5)
    np.testing.assert_allclose(half.u0, 0.5)


def test_couplings_nonzero_for_varying_density(grid2d):
    x = grid2d.mesh()[0].ravel()
    media = MediumFields(grid2d, 1.0 + 0.1 * x, 1.0, 0.0)
    F = grid_operators(grid2d).n_faces
    assert np.any(g_of(np.ones(F), media))
    assert np.any(h_of(np.ones(F), np.zeros(F), media))


def test_modified_absorber_commutes_with_fractional_powers(grid2d):
    media = MediumFields.uniform(grid2d, 1.0, 1.0, alpha0=0.05, y=2.5)
    bases = build_bases(grid2d, media.rho0, 10)
    absorber = Absorber(AbsorptionKind.MODIFIED, media, bases)
    L = np.column_stack([absorber.apply(e, np.zeros(10)) for e in np.eye(10)])
    P = np.diag(bases.weighted.eigenvalues ** 0.7)
    np.testing.assert_allclose(L @ P, P @ L, atol=1e-9)
