"""
Diagnostics

Energy and dissipation functionals, the discrete energy identity with its
right-hand sides, the smallness monitor, the weak-form residual, and the
spectral checks (eigenvalue sandwich, Ritz projection stability).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import InputValidationError
from .grid_ops import (GalerkinBases, build_bases, build_laplacian, cosine_basis, eigenbasis, inner,
                       lp_norm, norm)
from .media import MediumFields, random_smooth
from .models import CheckResult, ChecksSpec, Grid, ProbeSpec, RunConfig, SourceSpec
from .physics import AbsorptionKind, InitialData, a_of, b_of, g_of, h_of
from .solver import GalerkinSimulation, SimState, Trajectory, build_simulation
from .sources import SourceManager

logger = logging.getLogger(__name__)


def _quad(K: np.ndarray, x: np.ndarray) -> float:
    """x^T K x for a diagonal (vector) or dense K"""
    return float(x @ (K * x if K.ndim == 1 else K @ x))


def _require_history(trajectory: Trajectory, what: str, stride_one: bool = True):
    if not trajectory.states:
        raise InputValidationError(f"{what} needs the stored state history")
    if stride_one and trajectory.stride != 1:
        raise InputValidationError(f"{what} needs a stride-1 history")


def _cumulative_trapezoid(values: Sequence[np.ndarray], times: np.ndarray) -> List[np.ndarray]:
    out = [np.zeros_like(values[0])]
    for k in range(1, len(values)):
        out.append(out[-1] + 0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]))
    return out


# ---------------------------------------------------------------------------
# energy, dissipation


def energy(sim: GalerkinSimulation, state: SimState) -> float:
    """E = |u|^2 + |div u|^2 + |grad sigma|^2 + |sigma|^2_{H^{(y+1)/2}}"""
    grid, ops, bases = sim.grid, sim.ops, sim.bases
    xi = state.sigma_modal
    sigma = bases.weighted.synthesize(xi)
    zeta = bases.to_neumann(xi)
    frac = float(bases.neumann.eigenvalues ** ((sim.media.y + 1.0) / 2.0) @ zeta ** 2)
    return (norm(grid, state.u) ** 2 + norm(grid, ops.divergence(state.u)) ** 2
            + norm(grid, ops.grad(sigma)) ** 2 + float(xi @ xi) + frac)


@dataclass
class EnergyReport:
    """Per-sample energy diagnostics; the identity columns are NaN when not applicable"""

    times: np.ndarray
    E: np.ndarray
    D: np.ndarray
    L_monitor: np.ndarray
    residual: np.ndarray
    rhs1: np.ndarray
    rhs2: np.ndarray

    COLUMNS = ("t [s]", "E [1]", "D [1]", "L_monitor [1]", "residual [1/s]", "rhs1 [1/s]", "rhs2 [1/s]")

    def rows(self):
        return zip(self.times, self.E, self.D, self.L_monitor, self.residual, self.rhs1, self.rhs2)

    @property
    def sup_E(self) -> float:
        return float(self.E.max(initial=0.0))


def energy_dissipation(trajectory: Trajectory, sim: GalerkinSimulation, r: float = 0.25) -> EnergyReport:
    """E(t), the running dissipation D(t), the monitor L(t) and, on stride-1 runs, the identity defect"""
    _require_history(trajectory, "energy_dissipation", stride_one=False)
    grid, ops, W = sim.grid, sim.ops, sim.bases.weighted
    states = trajectory.states
    times = trajectory.state_times
    mu = sim.config.mu
    K_t = sim.absorber.K_t

    E = np.array([energy(sim, s) for s in states])
    Ip = _cumulative_trapezoid([W.synthesize(s.p_modal) for s in states], times)
    smooth = [mu * norm(grid, ops.grad(ops.divergence(s.u))) ** 2 + norm(grid, ops.grad(ip)) ** 2
              for s, ip in zip(states, Ip)]

    D = np.zeros(len(states))
    for k in range(1, len(states)):
        dt = times[k] - times[k - 1]
        xi_t = (states[k].sigma_modal - states[k - 1].sigma_modal) / dt
        rough = float(xi_t @ xi_t) + _quad(K_t, xi_t)
        D[k] = D[k - 1] + 0.5 * dt * (smooth[k] + smooth[k - 1]) + dt * rough

    L = smallness_monitor(trajectory, sim, r).values
    nan = np.full(len(states), np.nan)
    residual, rhs1, rhs2 = nan, nan.copy(), nan.copy()
    supported = not (sim.absorption is AbsorptionKind.ORIGINAL and sim.absorber.active)
    if trajectory.stride == 1 and supported and len(states) > 1:
        ident = energy_identity_residual(trajectory, sim)
        residual = np.concatenate([[0.0], ident.residual])
        rhs1 = np.concatenate([[0.0], ident.rhs1])
        rhs2 = np.concatenate([[0.0], ident.rhs2])
    return EnergyReport(times, E, D, L, residual, rhs1, rhs2)


def energy_bound_ratio(report: EnergyReport, data: float) -> float:
    """sup E over the data aggregate"""
    if not data > 0:
        raise InputValidationError("data aggregate must be > 0")
    return report.sup_E / data


# ---------------------------------------------------------------------------
# energy identity


@dataclass
class IdentityReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs1: np.ndarray
    rhs2: np.ndarray
    residual: np.ndarray
    rhs2_parts: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def integrated(self) -> float:
        return float(np.sum(self.residual * np.diff(np.concatenate([[0.0], self.times]))))

    @property
    def integrated_abs(self) -> float:
        return float(np.sum(np.abs(self.residual) * np.diff(np.concatenate([[0.0], self.times]))))


def energy_identity_residual(trajectory: Trajectory, sim: GalerkinSimulation) -> IdentityReport:
    """Per-step defect of the energy identity, backward differences in time"""
    _require_history(trajectory, "energy_identity_residual")
    if sim.absorption is AbsorptionKind.ORIGINAL and sim.absorber.active:
        raise InputValidationError("the energy identity is stated for the modified absorption operator")

    grid, ops, W, m = sim.grid, sim.ops, sim.bases.weighted, sim.media
    linear = sim.config.linear_mode
    mu = sim.config.mu
    lam = W.eigenvalues
    wf = sim.bases.laplacian.face_weights
    c2f = ops.to_faces(m.c0sq)
    Bf = ops.to_faces(m.BoverA)
    absorber = sim.absorber
    alpha = m.alpha0 if absorber.active else 0.0
    heterogeneous = not m.constant_density

    def fields(s: SimState):
        sigma = W.synthesize(s.sigma_modal)
        D = ops.divergence(s.u)
        a = np.ones_like(sigma) if linear else a_of(sigma)
        K = c2f if linear else c2f * b_of(ops.to_faces(sigma), Bf)
        Gs = ops.grad(sigma)
        quadratic = 0.5 * (inner(grid, a * D, D) + inner(grid, K * Gs, Gs))
        return sigma, D, a, Gs, quadratic

    states = trajectory.states
    steps = len(states) - 1
    out = {name: np.zeros(steps) for name in ("lhs", "rhs1", "rhs2", "h", "gp", "gh", "ga")}
    prev = fields(states[0])
    for k in range(1, steps + 1):
        s0, s1 = states[k - 1], states[k]
        dt = s1.t - s0.t
        _, _, _, _, q0 = prev
        sigma, D, a, Gs, q1 = cur = fields(s1)
        xi_t = (s1.sigma_modal - s0.sigma_modal) / dt
        sig_t = W.synthesize(xi_t)
        G_sig_t = ops.grad(sig_t)
        GD = ops.grad(D)
        a_f = ops.to_faces(a)

        lhs = (q1 - q0) / dt + mu * inner(grid, a_f * wf * GD, GD)
        if alpha:
            lhs += alpha * (2.0 * m.tau * _quad(absorber.K_t, xi_t)
                            + m.eta * (_quad(absorber.K_s, s1.sigma_modal) - _quad(absorber.K_s, s0.sigma_modal)) / dt)

        b = 1.0 if linear else b_of(sigma, m.BoverA)
        K = c2f if linear else c2f * b_of(ops.to_faces(sigma), Bf)
        force = sim.source.evaluate(s1.t)
        rhs1 = inner(grid, ops.divergence(wf * force), a * D)
        if not linear:
            rhs1 += inner(grid, sig_t, D ** 2)
            rhs1 += 0.5 * inner(grid, c2f * 0.5 * Bf * ops.to_faces(sig_t), Gs ** 2)
        stress = m.c0sq * m.rho0 * b * sigma
        rhs1 -= inner(grid, wf * ops.grad(stress) - K * Gs, G_sig_t)
        if mu:
            rhs1 -= mu * inner(grid, wf * GD, ops.grad(a * D) - a_f * GD)

        h_part = gp = gh = ga = 0.0
        if heterogeneous:
            h = h_of(s1.Iu, s1.d0, m)
            h_part = -inner(grid, wf * ops.grad(h), G_sig_t)
            Pg = W.analyze(g_of(s1.u, m))
            gp = float(np.sum(lam * Pg * W.analyze(stress)))
            gh = float(np.sum(lam * Pg * W.analyze(h)))
            if alpha:
                ga = 2.0 * alpha * float(Pg @ absorber.fractional_load(s1.sigma_modal, xi_t))

        out["lhs"][k - 1] = lhs
        out["rhs1"][k - 1] = rhs1
        out["rhs2"][k - 1] = h_part + gp + gh + ga
        out["h"][k - 1], out["gp"][k - 1], out["gh"][k - 1], out["ga"][k - 1] = h_part, gp, gh, ga
        prev = cur

    residual = out["lhs"] - out["rhs1"] - out["rhs2"]
    return IdentityReport(
        times=trajectory.state_times[1:], lhs=out["lhs"], rhs1=out["rhs1"], rhs2=out["rhs2"],
        residual=residual,
        rhs2_parts={"h_coupling": out["h"], "g_pressure": out["gp"], "g_h": out["gh"],
                    "g_absorption": out["ga"]},
    )


class RefinementReport(NamedTuple):
    dts: List[float]
    values: List[float]
    ratios: List[float]
    passed: bool


def _stride_one(sim: GalerkinSimulation, initial: InitialData, progress: bool = False) -> Trajectory:
    return sim.run(initial, ProbeSpec(stride=1, store_states=True), progress=progress)


def identity_refinement(config: RunConfig, refinements: int = 3, tolerance: float = 0.3,
                        progress: bool = False) -> RefinementReport:
    """Integrated |identity defect| under successive dt-halvings; each ratio should be 2 +- tolerance"""
    dts, values = [], []
    for j in range(refinements + 1):
        dt = config.solver.dt / 2 ** j
        solver = config.solver.model_copy(update={"dt": dt})
        sim, initial = build_simulation(config, solver=solver)
        report = energy_identity_residual(_stride_one(sim, initial, progress), sim)
        dts.append(dt)
        values.append(report.integrated_abs)
        logger.info("identity refinement dt=%.3e integrated |residual|=%.3e", dt, values[-1])
    return _ratios(dts, values, tolerance)


def _ratios(dts, values, tolerance) -> RefinementReport:
    ratios = []
    for coarse, fine in zip(values, values[1:]):
        ratios.append(coarse / fine if fine > 0 else math.inf)
    if max(values, default=0.0) == 0.0:
        return RefinementReport(dts, values, [], True)
    passed = all(abs(r - 2.0) <= tolerance for r in ratios)
    return RefinementReport(dts, values, ratios, passed)


# ---------------------------------------------------------------------------
# conservative core


class DriftReport(NamedTuple):
    times: np.ndarray
    energy: np.ndarray
    drift: float
    relative: float


def conservative_drift(trajectory: Trajectory, sim: GalerkinSimulation) -> DriftReport:
    """max |E_c(t) - E_c(0)| with E_c = 1/2 (|div u|^2 + |c0 grad sigma|^2)"""
    _require_history(trajectory, "conservative_drift", stride_one=False)
    grid, ops, W = sim.grid, sim.ops, sim.bases.weighted
    c2f = ops.to_faces(sim.media.c0sq)
    values = []
    for s in trajectory.states:
        D = ops.divergence(s.u)
        Gs = ops.grad(W.synthesize(s.sigma_modal))
        values.append(0.5 * (inner(grid, D, D) + inner(grid, c2f * Gs, Gs)))
    values = np.array(values)
    drift = float(np.abs(values - values[0]).max())
    return DriftReport(trajectory.state_times, values, drift, drift / values[0] if values[0] > 0 else math.inf)


# ---------------------------------------------------------------------------
# smallness


class SmallnessReport(NamedTuple):
    times: np.ndarray
    values: np.ndarray
    r: float
    sup: float
    first_violation: Optional[float]

    @property
    def below(self) -> bool:
        return self.first_violation is None


def smallness_monitor(trajectory: Trajectory, sim: GalerkinSimulation, r: float = 0.25) -> SmallnessReport:
    """The six-term aggregate L(sigma, u)(t) and its first crossing of r"""
    _require_history(trajectory, "smallness_monitor", stride_one=False)
    grid, ops, W, m = sim.grid, sim.ops, sim.bases.weighted, sim.media
    grad_ln_rho = ops.cell_gradient(m.ln_rho0)
    states = trajectory.states
    times = trajectory.state_times

    values = np.zeros(len(states))
    acc3 = acc6 = 0.0
    prev_sigma = None
    for k, s in enumerate(states):
        sigma = W.synthesize(s.sigma_modal)
        if prev_sigma is not None:
            dt = times[k] - times[k - 1]
            sig_t = (sigma - prev_sigma) / dt
            acc3 += dt * lp_norm(grid, sig_t, 3) ** 2
            acc6 += dt * lp_norm(grid, m.BoverA * m.c0sq * sig_t, 6) ** 2
        prev_sigma = sigma
        c2b = m.c0sq * (1.0 if sim.config.linear_mode else b_of(sigma, m.BoverA))
        values[k] = (np.abs(sigma).max() + 2.0 * math.sqrt(acc3)
                     + 2.0 * lp_norm(grid, ops.cell_gradient(sigma), 3)
                     + 0.5 * math.sqrt(acc6)
                     + norm(grid, ops.cell_gradient(c2b))
                     + norm(grid, c2b * grad_ln_rho))

    over = np.flatnonzero(values > r)
    first = float(times[over[0]]) if over.size else None
    if first is not None:
        logger.warning("smallness monitor exceeded r=%g at t=%.6g", r, first)
    return SmallnessReport(times, values, r, float(values.max()), first)


def data_size(initial: InitialData, sim: GalerkinSimulation) -> float:
    """|sigma0|^2_{H^{(y+1)/2}} + |u0|^2_{H(div)} + |d0|^2_{Linf cap H1} + |f|^2 over the run window"""
    grid, ops, m = sim.grid, sim.ops, sim.media
    neu = sim.bases.neumann
    sigma0 = np.asarray(initial.sigma0, dtype=float)
    zeta = neu.analyze(sigma0 - sigma0.mean())
    total = float(zeta @ zeta + neu.eigenvalues ** ((m.y + 1.0) / 2.0) @ zeta ** 2)
    total += norm(grid, initial.u0) ** 2 + norm(grid, ops.divergence(initial.u0)) ** 2
    # d0 is a face gradient field, so its H1 seminorm is the norm of its divergence
    total += float(np.abs(initial.d0).max(initial=0.0)) ** 2
    total += norm(grid, initial.d0) ** 2 + norm(grid, ops.divergence(initial.d0)) ** 2
    if not sim.source.is_zero:
        cfg = sim.config
        times = np.arange(cfg.steps + 1) * cfg.dt
        forces = [sim.source.evaluate(t) for t in times]
        If = _cumulative_trapezoid(forces, times)
        wf = sim.bases.laplacian.face_weights
        integrand = np.array([norm(grid, ops.divergence(wf * f)) ** 2 + norm(grid, i) ** 2
                              for f, i in zip(forces, If)])
        total += float(np.sum(0.5 * np.diff(times) * (integrand[1:] + integrand[:-1])))
    return total


def scale_initial(initial: InitialData, sim: GalerkinSimulation, delta: float) -> InitialData:
    """Rescale sigma0, u0, d0 so that the data aggregate equals delta (the source is kept)"""
    if not delta > 0:
        raise InputValidationError("delta must be > 0")
    zero = InitialData.zeros(sim.grid)
    forcing = data_size(zero, sim)
    own = data_size(initial, sim) - forcing
    if own <= 0:
        raise InputValidationError("initial data is zero; nothing to scale")
    if forcing >= delta:
        raise InputValidationError(f"source alone has data size {forcing:.3e} >= delta={delta}")
    # the d0 sup-norm term is quadratic in the scale as well, so one factor fits all
    return initial.scaled(math.sqrt((delta - forcing) / own))


# ---------------------------------------------------------------------------
# weak form


class WeakFormReport(NamedTuple):
    momentum: float
    mass: float
    pressure: float
    groups: Dict[str, np.ndarray]


def _hats(times: np.ndarray, t_end: float, count: int) -> np.ndarray:
    width = t_end / (count + 1)
    centers = width * np.arange(1, count + 1)
    return np.maximum(0.0, 1.0 - np.abs(times[None, :] - centers[:, None]) / width)


def weak_form_residual(trajectory: Trajectory, sim: GalerkinSimulation, n_modes: int = 10,
                       n_hats: int = 5) -> WeakFormReport:
    """Momentum (time-integrated), mass and pressure-density (time-integrated) residuals
    tested against the first modes times temporal hat functions"""
    _require_history(trajectory, "weak_form_residual")
    grid, ops, W, m = sim.grid, sim.ops, sim.bases.weighted, sim.media
    linear = sim.config.linear_mode
    mu = sim.config.mu
    states = trajectory.states
    times = trajectory.state_times
    t_end = float(times[-1])
    M = min(n_modes, W.n)
    lam = W.eigenvalues[:M]
    rho_f = sim.rho_faces

    sigmas = [W.synthesize(s.sigma_modal) for s in states]
    forces = [sim.source.evaluate(t) for t in times]
    If = _cumulative_trapezoid(forces, times)
    Ip = _cumulative_trapezoid([W.synthesize(s.p_modal) for s in states], times)
    b = [np.ones(grid.n_points) if linear else b_of(sg, m.BoverA) for sg in sigmas]
    Ibs = _cumulative_trapezoid([bi * sg for bi, sg in zip(b, sigmas)], times)
    Isig = _cumulative_trapezoid([s.sigma_modal for s in states], times)
    hs = [h_of(s.Iu, s.d0, m) for s in states]
    Ih = _cumulative_trapezoid(hs, times)

    u0 = states[0].u
    mom, mass, pres = [], [], []
    for k, s in enumerate(states):
        R = rho_f * (s.u - u0) + ops.grad(Ip[k]) - If[k]
        if mu:
            R -= mu * ops.grad(ops.divergence(s.Iu))
        mom.append(W.analyze(-ops.divergence(R))[:M])

        if k == 0:
            mass.append(np.zeros(M))
        else:
            dt = times[k] - times[k - 1]
            a = np.ones(grid.n_points) if linear else a_of(sigmas[k])
            load = W.analyze(a * ops.divergence(s.u) - g_of(s.u, m))
            mass.append(((s.sigma_modal - states[k - 1].sigma_modal) / dt + load)[:M])

        pd = (W.analyze(Ip[k]) - W.analyze(m.c0sq * m.rho0 * Ibs[k]) - W.analyze(Ih[k])
              + sim.absorber.apply(Isig[k], s.sigma_modal - states[0].sigma_modal))
        pres.append(lam * pd[:M])

    phi = _hats(times, t_end, n_hats)
    steps = np.diff(times)
    trap_w = np.zeros(len(times))
    trap_w[1:] += 0.5 * steps
    trap_w[:-1] += 0.5 * steps
    rect_w = np.concatenate([[0.0], steps])

    groups = {
        "momentum": (phi * trap_w) @ np.array(mom),
        "mass": (phi * rect_w) @ np.array(mass),
        "pressure": (phi * trap_w) @ np.array(pres),
    }
    return WeakFormReport(
        momentum=float(np.linalg.norm(groups["momentum"])),
        mass=float(np.linalg.norm(groups["mass"])),
        pressure=float(np.linalg.norm(groups["pressure"])),
        groups=groups,
    )


# ---------------------------------------------------------------------------
# spectral checks


class SandwichRow(NamedTuple):
    k: int
    lam: float
    mu: float
    lower: float
    upper: float
    ok: bool


class SandwichReport(NamedTuple):
    rows: List[SandwichRow]

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def violations(self) -> int:
        return sum(not r.ok for r in self.rows)


def check_eigen_sandwich(grid: Grid, rho0: np.ndarray, k_max: int = 50, shrink: float = 1.0,
                         rtol: float = 1e-10, eigenvalues: Optional[np.ndarray] = None) -> SandwichReport:
    """mu_k / max(rho0) <= lambda_k <= max(1/rho0) mu_k for the first k_max pairs

    shrink < 1 tightens the lower bound. eigenvalues replaces the computed
    lambda_k, e.g. to check values from another solver.
    """
    rho0 = np.asarray(rho0, dtype=float).ravel()
    k_max = min(k_max, grid.n_points - 1)
    if eigenvalues is None:
        lam = eigenbasis(build_laplacian(grid, 1.0 / rho0), k_max, method="dense").eigenvalues
    else:
        lam = np.asarray(eigenvalues, dtype=float).ravel()
        if len(lam) < k_max:
            raise InputValidationError(f"need {k_max} eigenvalues, got {len(lam)}")
    mu = cosine_basis(grid, k_max).eigenvalues
    hi = float(np.max(1.0 / rho0))
    lo = 1.0 / (shrink * float(rho0.max()))
    rows = []
    for k in range(k_max):
        lower, upper = lo * mu[k], hi * mu[k]
        ok = lower * (1 - rtol) <= lam[k] <= upper * (1 + rtol)
        rows.append(SandwichRow(k + 1, float(lam[k]), float(mu[k]), lower, upper, bool(ok)))
    return SandwichReport(rows)


class StabilityReport(NamedTuple):
    ratios: Tuple[float, float, float]
    bounds: Tuple[float, float, float]

    @property
    def passed(self) -> bool:
        return all(r <= b * (1 + 1e-10) for r, b in zip(self.ratios, self.bounds))


def projection_stability(g: np.ndarray, bases: GalerkinBases, rho0: np.ndarray, y: float) -> StabilityReport:
    """Norm ratios |P g| / |g| of the Ritz projection in grad, (-Lap_N)^{y/4}, (-Lap_N)^{(y+1)/4}"""
    grid, ops = bases.grid, bases.ops
    g = np.asarray(g, dtype=float).ravel()
    g = g - g.mean()
    Pg = bases.weighted.synthesize(bases.weighted.analyze(g))
    neu = bases.neumann

    def frac(v, gamma):
        zeta = neu.analyze(v)
        return math.sqrt(float(neu.eigenvalues ** (2 * gamma) @ zeta ** 2))

    def ratio(num, den):
        return num / den if den > 0 else 0.0

    rho0 = np.asarray(rho0, dtype=float)
    kappa = float(rho0.max() * (1.0 / rho0).max())
    ratios = (
        ratio(norm(grid, ops.grad(Pg)), norm(grid, ops.grad(g))),
        ratio(frac(Pg, y / 4.0), frac(g, y / 4.0)),
        ratio(frac(Pg, (y + 1.0) / 4.0), frac(g, (y + 1.0) / 4.0)),
    )
    bounds = (kappa ** 0.5, kappa ** (y / 4.0), kappa ** ((y + 1.0) / 4.0))
    return StabilityReport(ratios, bounds)


# ---------------------------------------------------------------------------
# invariant suite


def _random_density(grid: Grid, seed: int, base: float = 1000.0, spread: float = 0.2) -> np.ndarray:
    return base * (1.0 + spread * random_smooth(grid, seed))


def _tone(cells, amplitude: float, frequency: float) -> SourceSpec:
    return SourceSpec(kind="tone", cells=[list(c) for c in cells], amplitude=amplitude, frequency=frequency)


def superposition_check(config: RunConfig) -> Tuple[float, CheckResult]:
    """Linear-mode run(A) + run(B) against run(A + B), zero initial data"""
    grid = config.grid
    tones = [s for s in config.sources if s.kind != "zero" and s.cells]
    if len(tones) < 2:
        h = min(grid.spacing)
        freq = (tones[0].frequency if tones else 0.0) or config.media.c0 / (8.0 * h)
        amp = (tones[0].amplitude if tones else 0.0) or 1.0
        a = tuple(n // 3 for n in grid.dims)
        b = tuple((2 * n) // 3 for n in grid.dims)
        tones = [_tone([a], amp, freq), _tone([b], amp, freq)]
    probes = config.probes.cells or [[n // 2 for n in grid.dims]]
    solver = config.solver.model_copy(update={"linear_mode": True})
    manager = SourceManager(grid)
    A, B = manager.build(tones[0]), manager.build(tones[1])
    spec = ProbeSpec(cells=probes, stride=1, store_states=False)

    traces = []
    for source in (A, B, A + B):
        sim, _ = build_simulation(config, source=source, solver=solver)
        traces.append(sim.run(InitialData.zeros(grid), spec).traces)
    scale = float(np.abs(traces[2]).max())
    defect = float(np.abs(traces[2] - traces[0] - traces[1]).max()) / scale if scale > 0 else 0.0
    return defect, CheckResult(name="superposition", passed=defect <= 1e-8, value=defect,
                               detail="max relative deviation of run(A+B) from run(A)+run(B)")


def conservative_check(config: RunConfig, tolerance: float = 0.3) -> CheckResult:
    """Drift of the conservative energy halves with dt (constant media, no loss, no forcing)"""
    grid = config.grid
    media = MediumFields.uniform(grid, config.media.rho0, config.media.c0, 0.0)
    base = config.solver.model_copy(update={"mu": 0.0, "linear_mode": True})
    drifts, dts = [], []
    for j in range(2):
        solver = base.model_copy(update={"dt": base.dt / 2 ** j})
        sim = GalerkinSimulation(media, solver, AbsorptionKind.NONE)
        xi = np.zeros(sim.bases.n)
        xi[0] = 1e-3
        initial = InitialData(sim.bases.weighted.synthesize(xi), np.zeros(sim.ops.n_faces),
                              np.zeros(sim.ops.n_faces))
        drifts.append(conservative_drift(_stride_one(sim, initial), sim).drift)
        dts.append(solver.dt)
    report = _ratios(dts, drifts, tolerance)
    value = report.ratios[0] if report.ratios else 0.0
    return CheckResult(name="conservative_drift", passed=report.passed, value=value,
                       detail=f"drift {drifts[0]:.3e} -> {drifts[1]:.3e} under dt-halving")


def invariant_suite(config: RunConfig, progress: bool = False) -> List[CheckResult]:
    """Sandwich, projection stability, superposition, identity refinement and conservative drift"""
    checks: ChecksSpec = config.checks
    grid = config.grid
    y = config.absorption.y
    results: List[CheckResult] = []

    worst = 0
    for i in range(checks.random_fields):
        report = check_eigen_sandwich(grid, _random_density(grid, config.seed + i), checks.k_max)
        worst = max(worst, report.violations)
    results.append(CheckResult(name="eigen_sandwich", passed=worst == 0, value=float(worst),
                               detail=f"{checks.random_fields} random densities, k <= {checks.k_max}"))

    rho0 = _random_density(grid, config.seed)
    n = max(1, (grid.n_points - 1) // 4)
    bases = build_bases(grid, rho0, n)
    failures, largest = 0, 0.0
    for i in range(checks.stability_samples):
        g = random_smooth(grid, seed=config.seed + 1000 + i, modes=6)
        report = projection_stability(g, bases, rho0, y)
        failures += not report.passed
        largest = max(largest, max(r / b for r, b in zip(report.ratios, report.bounds)))
    results.append(CheckResult(name="projection_stability", passed=failures == 0, value=largest,
                               detail=f"{checks.stability_samples} inputs; value is the largest ratio/bound"))

    _, result = superposition_check(config)
    results.append(result)

    if config.absorption.kind == "original":
        results.append(CheckResult(name="identity_refinement", passed=True,
                                   detail="skipped: the identity needs the modified operator"))
    else:
        ref = identity_refinement(config, checks.refinements, checks.ratio_tolerance, progress)
        results.append(CheckResult(
            name="identity_refinement", passed=ref.passed,
            value=min(ref.ratios, default=None, key=lambda r: -abs(r - 2.0)),
            detail="ratios " + ", ".join(f"{r:.3f}" for r in ref.ratios)))

    results.append(conservative_check(config, checks.ratio_tolerance))
    for r in results:
        logger.info("check %s: %s (%s)", r.name, "pass" if r.passed else "FAIL", r.value)
    return results
