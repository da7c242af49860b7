"""Time stepping: velocity substep, Picard (sigma, p) substep, retries and the run driver"""

import dataclasses
import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from kwk.config import serialize_config
from kwk.exceptions import InputValidationError, NumericalFailure
from kwk.grid_ops import grid_operators, inner
from kwk.models import ProbeSpec, SourceSpec
from kwk.physics import InitialData, g_of, h_of
from kwk.solver import SimState, build_simulation, run
from kwk.sources import SourceManager, TabulatedSource, point_mask
from kwk.utils import digest_text

ONE_D = {
    "grid": {"dims": [16], "spacing": [0.0625]},
    "media": {"BoverA": 0.0},
    "probes": {"cells": [[4]]},
    "initial": {"sigma0": {"kind": "mode", "index": 1, "amplitude": 1e-3}},
}


def test_zero_data_stays_at_rest(make_config):
    config = make_config(initial={"sigma0": {"kind": "zero"}})
    traj = run(config)
    assert not np.any(traj.traces)
    assert not np.any(traj.final.u)
    assert not np.any(traj.final.sigma_modal)


def test_single_mode_oscillates_at_its_frequency(make_config):
    config = make_config(**ONE_D, solver={"dt": 1e-3, "t_end": 1.0, "n_modes": 1, "linear_mode": True})
    sim, initial = build_simulation(config)
    traj = sim.run(initial, config.probes)
    omega = math.sqrt(sim.bases.weighted.eigenvalues[0])
    xi = np.array([s.sigma_modal[0] for s in traj.states])
    np.testing.assert_allclose(xi, 1e-3 * np.cos(omega * traj.state_times), atol=5e-6)
    # c0 = rho0 = 1 and b = 1: the modal pressure equals the modal density at t = 0
    np.testing.assert_allclose(traj.states[0].p_modal, traj.states[0].sigma_modal)


def test_sigma_pressure_substep_linear_constant_medium(make_config):
    config = make_config(solver={"linear_mode": True, "n_modes": 6})
    sim, initial = build_simulation(config)
    state = sim.init_state(initial)
    ops = grid_operators(config.grid)
    u_new = ops.grad(sim.bases.weighted.synthesize(np.eye(6)[1]))
    dt = config.solver.dt
    result = sim.sigma_pressure_substep(state, u_new, state.Iu + dt * u_new, dt)
    expected = state.sigma_modal - dt * sim.bases.weighted.analyze(ops.divergence(u_new))
    np.testing.assert_allclose(result.sigma_modal, expected, atol=1e-14)
    np.testing.assert_allclose(result.p_modal, result.sigma_modal, atol=1e-14)
    assert result.iterations <= 2


def test_one_mode_nonlinear_absorbing_run_matches_ode(make_config):
    # mu = 0 and u0 = 0 keep u = zeta * grad(w1) / rho_f, so (xi, zeta, I_t zeta) close into an ODE
    config = make_config(
        grid={"dims": [16], "spacing": [0.0625]},
        media={"phantom": {"kind": "gaussian-blob", "field": "rho0", "amplitude": 0.3,
                           "center": [0.3], "width": 0.15}},
        absorption={"kind": "modified", "alpha0": 0.02, "y": 1.5, "tau": 1.0, "eta": 1.0},
        initial={"sigma0": {"kind": "mode", "index": 1, "amplitude": 1e-3}},
        probes={"cells": [[4]]},
        solver={"dt": 1e-4, "t_end": 0.5, "n_modes": 1},
    )
    sim, initial = build_simulation(config)
    traj = sim.run(initial, config.probes)
    grid, m = sim.grid, sim.media
    w1 = sim.bases.weighted.synthesize(np.ones(1))
    v = sim.ops.grad(w1) / sim.rho_faces
    lam = sim.bases.weighted.eigenvalues[0]
    kappa = inner(grid, w1 ** 2, w1)
    k1 = inner(grid, m.c0sq * m.rho0 * w1, w1)
    k2 = inner(grid, m.c0sq * m.rho0 * 0.5 * m.BoverA * w1 ** 2, w1)
    gamma_g = inner(grid, g_of(v, m), w1)
    gamma_h = inner(grid, h_of(v, np.zeros_like(v), m), w1)
    A_s = sim.absorber.apply(np.ones(1), np.zeros(1))[0]
    A_t = sim.absorber.apply(np.zeros(1), np.ones(1))[0]
    assert abs(kappa) > 1e-4 and A_t < 0.0

    def rhs(t, z):
        xi, zeta, I = z
        xi_t = lam * zeta * (1.0 + 2.0 * kappa * xi) + gamma_g * zeta
        p = k1 * xi + k2 * xi ** 2 - A_s * xi - A_t * xi_t + gamma_h * I
        return [xi_t, -p, zeta]

    times = traj.state_times
    ref = solve_ivp(rhs, (0.0, times[-1]), [1e-3, 0.0, 0.0], method="DOP853", t_eval=times,
                    rtol=1e-11, atol=1e-15)
    assert ref.success
    xi = np.array([s.sigma_modal[0] for s in traj.states])
    np.testing.assert_allclose(xi, ref.y[0], atol=1e-6)
    xi_t = lam * ref.y[1] * (1.0 + 2.0 * kappa * ref.y[0]) + gamma_g * ref.y[1]
    p_ref = k1 * ref.y[0] + k2 * ref.y[0] ** 2 - A_s * ref.y[0] - A_t * xi_t + gamma_h * ref.y[2]
    np.testing.assert_allclose([s.p_modal[0] for s in traj.states], p_ref, atol=1e-6)


def test_run_is_deterministic(make_config):
    config = make_config(
        media={"phantom": {"kind": "sinusoid", "field": "rho0", "amplitude": 0.1}},
        sources=[{"kind": "tone", "cells": [[6, 6]], "amplitude": 0.01, "frequency": 0.5}],
        solver={"mu": 0.01},
    )
    a, b = run(config), run(config)
    np.testing.assert_array_equal(a.traces, b.traces)
    assert a.media_digest == b.media_digest
    assert a.config_digest == digest_text(serialize_config(config))


def test_trace_sampling_and_history(make_config):
    config = make_config(probes={"stride": 2})
    traj = run(config)
    np.testing.assert_allclose(traj.trace_times, [0.1, 0.2, 0.3, 0.4, 0.5])
    assert traj.traces.shape == (2, 5)
    np.testing.assert_allclose(traj.state_times, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    assert len(traj.min_a) == 6
    assert traj.final.t == pytest.approx(0.5)


def test_viscous_velocity_solves_backward_euler_system(make_config, rng):
    config = make_config(solver={"mu": 0.05, "cg_tol": 1e-12})
    sim, initial = build_simulation(config)
    ops = grid_operators(config.grid)
    state = sim.init_state(InitialData(initial.sigma0, ops.grad(rng.normal(size=config.grid.n_points)),
                                       np.zeros(ops.n_faces)))
    force = rng.normal(size=ops.n_faces)
    dt = config.solver.dt
    u = sim.velocity_substep(state, force, dt)
    G = ops.gradient
    A = sp.diags(sim.rho_faces) + 0.05 * dt * (G @ G.T)
    b = sim.rho_faces * state.u + dt * (force - G @ sim.bases.weighted.synthesize(state.p_modal))
    assert np.linalg.norm(A @ u - b) <= 1e-9 * np.linalg.norm(b)


def test_inviscid_velocity_is_explicit(make_config):
    config = make_config()
    sim, initial = build_simulation(config)
    state = sim.init_state(initial)
    u = sim.velocity_substep(state, np.zeros(sim.ops.n_faces))
    expected = -config.solver.dt * sim.ops.grad(sim.bases.weighted.synthesize(state.p_modal)) / sim.rho_faces
    np.testing.assert_allclose(u, expected)


def test_viscous_velocity_is_first_order_in_time(make_config):
    # manufactured u = cos(pi x) exp(-t) on the faces, forced so the semi-discrete solution is exact
    n, mu = 32, 0.01
    config = make_config(grid={"dims": [n], "spacing": [1.0 / n]}, probes={"cells": []},
                         initial={"sigma0": {"kind": "zero"}},
                         solver={"mu": mu, "dt": 0.02, "t_end": 1.0})
    sim, _ = build_simulation(config)
    G = sim.ops.gradient
    U = np.cos(np.pi * np.arange(1, n) / n)
    shape = -sim.rho_faces * U + mu * (G @ (G.T @ U))
    zeros = np.zeros(sim.bases.n)
    state = SimState(u=U.copy(), sigma_modal=zeros, p_modal=zeros, Iu=np.zeros_like(U), d0=np.zeros_like(U))

    errors = []
    for dt in (0.02, 0.01, 0.005):
        u = U.copy()
        for k in range(1, int(round(1.0 / dt)) + 1):
            u = sim.velocity_substep(dataclasses.replace(state, u=u), shape * math.exp(-k * dt), dt)
        errors.append(np.linalg.norm(u - U * math.exp(-1.0)))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(np.abs(orders - 1.0) <= 0.2), orders


def test_picard_failure_retries_once_then_fails(make_config):
    config = make_config(solver={"picard_max_iters": 1})
    sim, initial = build_simulation(config)
    with pytest.raises(NumericalFailure, match="dt-halving"):
        sim.run(initial)
    assert sim.retries == 1


def test_nondegeneracy_loss_aborts(make_config):
    config = make_config(initial={"sigma0": {"amplitude": -5.0}})
    with pytest.raises(NumericalFailure, match="nondegeneracy"):
        run(config)


def test_linear_mode_skips_nondegeneracy(make_config):
    config = make_config(initial={"sigma0": {"amplitude": -5.0}},
                         solver={"linear_mode": True, "t_end": 0.1})
    traj = run(config)
    np.testing.assert_array_equal(traj.min_a, 1.0)


def test_driver_input_checks(make_config):
    sim, initial = build_simulation(make_config())
    with pytest.raises(InputValidationError, match="stride"):
        sim.run(initial, ProbeSpec(stride=3))
    with pytest.raises(InputValidationError, match="outside grid"):
        sim.run(initial, ProbeSpec(cells=[[20, 0]]))
    F = sim.ops.n_faces
    with pytest.raises(InputValidationError, match="mean"):
        sim.run(InitialData(np.ones(sim.grid.n_points), np.zeros(F), np.zeros(F)))


def test_source_must_cover_window(make_config):
    config = make_config()
    short = TabulatedSource(point_mask(config.grid, [(6, 6)]), [0.0, 0.2], [1.0, 1.0])
    sim, initial = build_simulation(config, source=short)
    with pytest.raises(InputValidationError, match="cover"):
        sim.run(initial)


def test_absorption_enters_the_initial_pressure(make_config):
    lossless, initial = build_simulation(make_config())
    lossy, _ = build_simulation(make_config(absorption={"kind": "modified", "alpha0": 0.05}))
    s0, s1 = lossless.init_state(initial), lossy.init_state(initial)
    np.testing.assert_allclose(s1.p_modal - s0.p_modal,
                               -lossy.absorber.apply(s0.sigma_modal, np.zeros_like(s0.sigma_modal)),
                               atol=1e-15)
    assert np.any(s1.p_modal != s0.p_modal)


def test_strong_absorption_damps_an_impulse_monotonically(make_config):
    # alpha0 = 1 overdamps every retained mode; the pulse is off from t = 0.1
    config = make_config(
        grid={"dims": [16], "spacing": [0.0625]},
        absorption={"kind": "modified", "alpha0": 1.0, "y": 2.5, "tau": 1.0, "eta": 1.0},
        sources=[{"kind": "tabulated", "cells": [[4]], "times": [0.0, 0.05, 0.1, 1.5],
                  "values": [0.0, 1.0, 0.0, 0.0]}],
        initial={"sigma0": {"kind": "zero"}},
        probes={"cells": [[4]]},
        solver={"dt": 5e-4, "t_end": 1.5, "n_modes": 4, "linear_mode": True},
    )
    traj = run(config)
    norms = np.array([np.linalg.norm(s.sigma_modal) for s in traj.states])
    assert norms.max() > 0
    tail = norms[traj.state_times >= 0.5]
    assert np.all(np.diff(tail) <= 1e-12 * tail[:-1])
    assert tail[-1] < 0.05 * norms.max()


def test_linear_mode_superposes_sources(make_config):
    config = make_config(initial={"sigma0": {"kind": "zero"}},
                         solver={"linear_mode": True, "mu": 0.01},
                         media={"phantom": {"kind": "sinusoid", "field": "rho0", "amplitude": 0.1}})
    manager = SourceManager(config.grid)
    A = manager.build(SourceSpec(kind="tone", cells=[[3, 3]], amplitude=1.0, frequency=0.5))
    B = manager.build(SourceSpec(kind="tone", cells=[[8, 7]], amplitude=1.0, frequency=0.5))
    traces = []
    for source in (A, B, A + B):
        sim, initial = build_simulation(config, source=source)
        traces.append(sim.run(initial, config.probes).traces)
    scale = np.abs(traces[2]).max()
    assert scale > 0
    assert np.abs(traces[2] - traces[0] - traces[1]).max() <= 1e-9 * scale


def test_heterogeneous_viscous_absorbing_run(make_config):
    config = make_config(
        media={"phantom": {"kind": "random-smooth", "field": "rho0", "amplitude": 0.1}},
        absorption={"kind": "modified", "alpha0": 0.01, "y": 2.5},
        sources=[{"kind": "tone", "cells": [[6, 6]], "amplitude": 0.01, "frequency": 0.5}],
        solver={"mu": 0.01},
    )
    traj = run(config)
    assert np.all(np.isfinite(traj.traces))
    assert traj.retries == 0
    assert min(traj.picard_iterations) >= 1
    assert np.all(traj.min_a > 0) and np.all(traj.min_b > 0)
