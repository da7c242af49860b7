"""Media fields, absorption unit conversion, phantoms and the validity report"""

import math

import numpy as np
import pytest

from kwk.exceptions import InputValidationError
from kwk.media import (MediumFields, db_to_internal_alpha, default_tau_eta, gaussian_blob, phantom_field,
                       random_smooth, validate_media)
from kwk.models import Grid, PhantomSpec


def test_db_conversion_reference_value():
    assert db_to_internal_alpha(0.5, 1.5) == pytest.approx(3.65494e-10, rel=1e-5)


def test_db_conversion_is_linear_in_magnitude():
    assert db_to_internal_alpha(1.0, 2.5) == pytest.approx(2.0 * db_to_internal_alpha(0.5, 2.5))
    assert db_to_internal_alpha(0.0, 1.5) == 0.0


@pytest.mark.parametrize("y", [1.0, 3.0, 0.5])
def test_db_conversion_rejects_y_outside_window(y):
    with pytest.raises(InputValidationError, match="y out of"):
        db_to_internal_alpha(0.5, y)


def test_default_tau_eta_for_water():
    te = default_tau_eta(1500.0, 1.5)
    assert te.tau == pytest.approx(math.sqrt(1500.0))
    assert te.eta == pytest.approx(1500.0 ** 1.5)
    assert not te.ill_conditioned
    assert te.note is None


def test_default_tau_eta_flips_sign_above_two():
    te = default_tau_eta(1.0, 2.5)
    assert te.eta > 0
    assert "flipped" in te.note


def test_default_tau_eta_pole():
    with pytest.raises(InputValidationError, match="pole"):
        default_tau_eta(1500.0, 2.0)


def test_medium_rejects_nonpositive_density(grid2d):
    rho0 = np.ones(grid2d.n_points)
    rho0[grid2d.flat_index((1, 4))] = 0.0
    with pytest.raises(InputValidationError, match=r"rho0 must be > 0 at grid index \(1, 4\)"):
        MediumFields(grid2d, rho0, 1.0, 0.0)


def test_medium_rejects_wrong_size(grid2d):
    with pytest.raises(InputValidationError, match="c0sq"):
        MediumFields(grid2d, 1.0, np.ones(3), 0.0)


def test_medium_broadcasts_scalars_and_freezes(grid2d):
    m = MediumFields(grid2d, 1000.0, 1500.0 ** 2, 7.0)
    assert m.rho0.shape == (grid2d.n_points,)
    assert m.constant_density
    np.testing.assert_allclose(m.c0, 1500.0)
    with pytest.raises(ValueError):
        m.rho0[0] = 2.0


def test_digest_tracks_coefficients(grid2d):
    a = MediumFields.uniform(grid2d, alpha0=0.1)
    b = MediumFields.uniform(grid2d, alpha0=0.1)
    c = MediumFields.uniform(grid2d, alpha0=0.2)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_constant_medium_is_small(grid2d):
    report = validate_media(MediumFields.uniform(grid2d, y=2.5))
    assert report.delta_rc == pytest.approx(0.0, abs=1e-12)
    assert report.below_threshold
    assert report.energy_window_ok
    assert report.vanishing_viscosity_window_ok


def test_window_notes_for_low_y(grid2d):
    report = validate_media(MediumFields.uniform(grid2d, y=1.5), tau_eta_auto=True)
    assert not report.energy_window_ok
    assert not report.vanishing_viscosity_window_ok
    assert report.experiment_window_ok
    assert any("existence window" in n for n in report.notes)
    assert any("convention" in n for n in report.notes)


def test_strong_density_contrast_is_flagged():
    grid = Grid(dims=(16, 16), spacing=(0.1, 0.1))
    rho0 = phantom_field(grid, 1000.0, PhantomSpec(kind="gaussian-blob", field="rho0", amplitude=0.5))
    report = validate_media(MediumFields(grid, rho0, 1500.0 ** 2, 0.0), threshold=0.1)
    assert report.delta_rc > 0.1
    assert not report.below_threshold
    assert report.grad_c2_grad_rho > 0 and report.c2_grad_rho_l3 > 0 and report.grad_ln_rho_h > 0


def test_phantoms(grid2d):
    assert np.all(phantom_field(grid2d, 2.0, None) == 2.0)
    blob = gaussian_blob(grid2d, center=[1.25, 0.625], width=0.3)
    assert np.argmax(blob) == grid2d.flat_index((2, 2))
    field = phantom_field(grid2d, 1.0, PhantomSpec(kind="sinusoid", amplitude=0.1, wavelength=1.0))
    assert np.all(np.abs(field - 1.0) <= 0.1 + 1e-12)


def test_random_smooth_is_seeded(grid2d):
    a = random_smooth(grid2d, seed=4)
    np.testing.assert_array_equal(a, random_smooth(grid2d, seed=4))
    assert not np.array_equal(a, random_smooth(grid2d, seed=5))
    assert np.abs(a).max() == pytest.approx(1.0)


def test_log_density_term_ignores_global_scale(grid2d):
    rho0 = 1.0 + 0.2 * random_smooth(grid2d, seed=9)
    base = validate_media(MediumFields(grid2d, rho0, 1.0, 0.0, y=2.5))
    scaled = validate_media(MediumFields(grid2d, 7.0 * rho0, 1.0, 0.0, y=2.5))
    assert scaled.grad_ln_rho_h == pytest.approx(base.grad_ln_rho_h, rel=1e-10)
    assert scaled.grad_c2_grad_rho == pytest.approx(7.0 * base.grad_c2_grad_rho, rel=1e-10)
