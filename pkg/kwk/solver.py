"""
Solver

Time integration of the Galerkin system: a backward-Euler velocity substep
(conjugate gradients when mu > 0) followed by a Picard fixed point for the
modal density and pressure coefficients.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .config import (build_grid, build_initial, build_medium, build_probes, build_sources, resolve_absorption,
                     serialize_config)
from .exceptions import InputValidationError, NumericalFailure, StepFailure
from .grid_ops import GalerkinBases, build_bases, remove_mean
from .media import MediumFields
from .models import Grid, ProbeSpec, RunConfig, SolverConfig
from .physics import Absorber, AbsorptionKind, InitialData, a_of, b_of, g_of, h_of
from .sources import SourceTerm, ZeroSource
from .utils import ProgressBar, digest_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SimState:
    u: np.ndarray
    sigma_modal: np.ndarray
    p_modal: np.ndarray
    Iu: np.ndarray
    d0: np.ndarray
    t: float = 0.0


class PicardResult(NamedTuple):
    sigma_modal: np.ndarray
    p_modal: np.ndarray
    iterations: int


@dataclass
class Trajectory:
    """Detector traces at t = stride*dt, ..., t_end and the sampled state history from t = 0"""

    grid: Grid
    dt: float
    stride: int
    probe_cells: List[Tuple[int, ...]]
    trace_times: np.ndarray
    traces: np.ndarray
    final: SimState
    initial: InitialData
    states: List[SimState] = field(default_factory=list)
    min_a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    min_b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    picard_iterations: List[int] = field(default_factory=list)
    retries: int = 0
    config_digest: Optional[str] = None
    media_digest: Optional[str] = None

    @property
    def sample_times(self) -> np.ndarray:
        return np.arange(len(self.min_a)) * self.stride * self.dt

    @property
    def state_times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


class GalerkinSimulation:
    """One medium, one source, one solver configuration"""

    def __init__(self, media: MediumFields, config: SolverConfig,
                 absorption: AbsorptionKind = AbsorptionKind.MODIFIED,
                 source: Optional[SourceTerm] = None, bases: Optional[GalerkinBases] = None):
        self.media = media
        self.grid = media.grid
        self.config = config
        self.bases = bases or build_bases(self.grid, media.rho0, config.n_modes)
        if self.bases.grid != self.grid:
            raise InputValidationError("bases live on a different grid")
        self.ops = self.bases.ops
        self.source = source or ZeroSource(self.ops.n_faces)
        if self.source.n_faces != self.ops.n_faces:
            raise InputValidationError(
                f"source has {self.source.n_faces} faces, grid has {self.ops.n_faces}")
        self.absorption = AbsorptionKind(absorption)
        self.absorber = Absorber(self.absorption, media, self.bases)
        # face density: inverse of the harmonic face weight of 1/rho0
        self.rho_faces = 1.0 / self.bases.laplacian.face_weights
        self.cg_maxiter = int(math.ceil(10.0 * math.sqrt(self.grid.n_points)))
        self._systems: Dict[float, Tuple[sp.csr_matrix, sp.dia_matrix]] = {}
        self.retries = 0
        self.iterations: List[int] = []

    # state ------------------------------------------------------------

    def _synth(self, modal: np.ndarray) -> np.ndarray:
        return self.bases.weighted.synthesize(modal)

    def _project(self, v: np.ndarray) -> np.ndarray:
        return self.bases.weighted.analyze(v)

    def pressure(self, sigma_star: np.ndarray, sigma_modal: np.ndarray, sigma_t_modal: np.ndarray,
                 Iu: np.ndarray, d0: np.ndarray) -> np.ndarray:
        """Modal pressure from the pressure-density relation; b is frozen at sigma_star"""
        m = self.media
        b = 1.0 if self.config.linear_mode else b_of(sigma_star, m.BoverA)
        p = self._project(m.c0sq * m.rho0 * b * self._synth(sigma_modal))
        p -= self.absorber.apply(sigma_modal, sigma_t_modal)
        if not m.constant_density:
            p += self._project(h_of(Iu, d0, m))
        return p

    def init_state(self, initial: InitialData) -> SimState:
        N, F = self.grid.n_points, self.ops.n_faces
        for name, arr, size in (("sigma0", initial.sigma0, N), ("u0", initial.u0, F), ("d0", initial.d0, F)):
            if np.size(arr) != size:
                raise InputValidationError(f"{name} has {np.size(arr)} values, expected {size}")
        sigma0 = remove_mean(initial.sigma0, "sigma0")
        xi = self._project(sigma0)
        Iu = np.zeros(F)
        d0 = np.asarray(initial.d0, dtype=float).ravel()
        p = self.pressure(self._synth(xi), xi, np.zeros_like(xi), Iu, d0)
        return SimState(u=np.asarray(initial.u0, dtype=float).ravel().copy(), sigma_modal=xi,
                        p_modal=p, Iu=Iu, d0=d0, t=0.0)

    # substeps ---------------------------------------------------------

    def _velocity_system(self, dt: float):
        if dt not in self._systems:
            G = self.ops.gradient
            A = (sp.diags(self.rho_faces) + self.config.mu * dt * (G @ G.T)).tocsr()
            M = sp.diags(1.0 / A.diagonal())
            self._systems[dt] = (A, M)
        return self._systems[dt]

    def velocity_substep(self, state: SimState, force: np.ndarray, dt: Optional[float] = None) -> np.ndarray:
        """rho0 u_t + G p + mu G G^T u = f, backward Euler in u, p lagged"""
        dt = self.config.dt if dt is None else dt
        rhs = force - self.ops.grad(self._synth(state.p_modal))
        if self.config.mu == 0.0:
            return state.u + dt * rhs / self.rho_faces

        A, M = self._velocity_system(dt)
        b = self.rho_faces * state.u + dt * rhs
        u, info = cg(A, b, x0=state.u, rtol=self.config.cg_tol, atol=0.0, maxiter=self.cg_maxiter, M=M)
        if info != 0:
            residual = float(np.linalg.norm(A @ u - b) / max(np.linalg.norm(b), np.finfo(float).tiny))
            raise NumericalFailure(
                f"velocity CG did not converge within {self.cg_maxiter} iterations", residual=residual)
        return u

    def sigma_pressure_substep(self, state: SimState, u_new: np.ndarray, Iu_new: np.ndarray,
                               dt: Optional[float] = None) -> PicardResult:
        """Picard iteration of (sigma*, p*) -> (sigma, p)"""
        cfg = self.config
        m = self.media
        dt = cfg.dt if dt is None else dt
        div_u = self.ops.divergence(u_new)
        Pg = None if m.constant_density else self._project(g_of(u_new, m))
        Pdiv = self._project(div_u) if cfg.linear_mode else None

        sigma_k = state.sigma_modal
        sigma_star, p_star = sigma_k, state.p_modal
        change = math.inf
        for it in range(1, cfg.picard_max_iters + 1):
            star = self._synth(sigma_star)
            load = Pdiv if cfg.linear_mode else self._project(a_of(star) * div_u)
            if Pg is not None:
                load = load - Pg
            sigma_new = sigma_k - dt * load
            p_new = self.pressure(star, sigma_new, (sigma_new - sigma_k) / dt, Iu_new, state.d0)

            change = max(_relative_change(sigma_new, sigma_star), _relative_change(p_new, p_star))
            sigma_star, p_star = sigma_new, p_new
            if change <= cfg.picard_tol:
                logger.debug("Picard converged in %d iterations at t=%.6g", it, state.t + dt)
                return PicardResult(sigma_new, p_new, it)
        raise StepFailure(f"Picard iteration did not converge in {cfg.picard_max_iters} iterations",
                          residual=change)

    def step(self, state: SimState, dt: Optional[float] = None) -> SimState:
        """Velocity, then (sigma, p), then the trapezoidal I_t u update"""
        dt = self.config.dt if dt is None else dt
        t_new = state.t + dt
        u_new = self.velocity_substep(state, self.source.evaluate(t_new), dt)
        Iu_new = state.Iu + 0.5 * dt * (state.u + u_new)
        result = self.sigma_pressure_substep(state, u_new, Iu_new, dt)
        self.iterations.append(result.iterations)
        return SimState(u=u_new, sigma_modal=result.sigma_modal, p_modal=result.p_modal,
                        Iu=Iu_new, d0=state.d0, t=t_new)

    def advance(self, state: SimState) -> SimState:
        """One step of size dt, retried once as two half steps"""
        dt = self.config.dt
        try:
            return self.step(state, dt)
        except StepFailure as e:
            logger.warning("Step at t=%.6g failed (%s); retrying with dt/2", state.t, e)
            self.retries += 1
            try:
                return self.step(self.step(state, 0.5 * dt), 0.5 * dt)
            except StepFailure as e2:
                raise NumericalFailure(f"step at t={state.t:.6g} failed after a dt-halving retry",
                                       residual=e2.residual) from e2

    def nondegeneracy(self, state: SimState) -> Tuple[float, float]:
        """(min a(sigma), min b(sigma)) over the grid"""
        if self.config.linear_mode:
            return 1.0, 1.0
        sigma = self._synth(state.sigma_modal)
        min_a = float(a_of(sigma).min())
        min_b = float(b_of(sigma, self.media.BoverA).min())
        if not (min_a > 0.0 and min_b > 0.0):
            raise NumericalFailure(
                f"nondegeneracy lost at t={state.t:.6g}: min a={min_a:.3e}, min b={min_b:.3e}")
        return min_a, min_b

    # driver -----------------------------------------------------------

    def run(self, initial: Optional[InitialData] = None, probes: Optional[ProbeSpec] = None,
            progress: bool = False, config_digest: Optional[str] = None) -> Trajectory:
        cfg = self.config
        grid = self.grid
        probes = probes or ProbeSpec()
        initial = initial or InitialData.zeros(grid)
        steps = cfg.steps
        if steps % probes.stride:
            raise InputValidationError(f"probe stride {probes.stride} does not divide {steps} steps")
        if not self.source.covers(0.0, cfg.t_end):
            raise InputValidationError("source does not cover the simulation window")
        try:
            cells = [tuple(int(c) for c in cell) for cell in probes.cells]
            flat = np.array([grid.flat_index(c) for c in cells], dtype=int)
        except ValueError as e:
            raise InputValidationError(str(e)) from e

        self.retries = 0
        self.iterations = []
        state = self.init_state(initial)
        mins = [self.nondegeneracy(state)]
        states = [state] if probes.store_states else []
        times, traces = [], []

        with ProgressBar(steps, "Simulating", enabled=progress) as bar:
            for k in range(1, steps + 1):
                state = replace(self.advance(state), t=k * cfg.dt)
                monitor = self.nondegeneracy(state)
                bar.update()
                if k % probes.stride:
                    continue
                mins.append(monitor)
                times.append(state.t)
                traces.append(self._synth(state.p_modal)[flat])
                if probes.store_states:
                    states.append(state)

        logger.info("Run finished: %d steps, max %d Picard iterations, %d retries",
                    steps, max(self.iterations, default=0), self.retries)
        mins = np.array(mins)
        return Trajectory(
            grid=grid, dt=cfg.dt, stride=probes.stride, probe_cells=cells,
            trace_times=np.array(times),
            traces=np.array(traces).T.reshape(len(cells), len(times)),
            final=state, initial=initial, states=states,
            min_a=mins[:, 0], min_b=mins[:, 1],
            picard_iterations=list(self.iterations), retries=self.retries,
            config_digest=config_digest, media_digest=self.media.digest(),
        )


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    diff = float(np.linalg.norm(new - old))
    if diff == 0.0:
        return 0.0
    return diff / max(float(np.linalg.norm(new)), float(np.linalg.norm(old)))


def build_simulation(config: RunConfig, source: Optional[SourceTerm] = None,
                     solver: Optional[SolverConfig] = None) -> Tuple[GalerkinSimulation, InitialData]:
    """Simulation and initial data for a run configuration"""
    media = build_medium(config)
    setup = resolve_absorption(config, float(np.mean(media.c0)))
    solver = solver or config.solver
    bases = build_bases(build_grid(config), media.rho0, solver.n_modes)
    sim = GalerkinSimulation(media, solver, setup.kind,
                             source if source is not None else build_sources(config), bases)
    return sim, build_initial(config, bases)


def run(config: RunConfig, progress: bool = False) -> Trajectory:
    """Deterministic run of a validated configuration"""
    sim, initial = build_simulation(config)
    return sim.run(initial, build_probes(config), progress=progress,
                   config_digest=digest_text(serialize_config(config)))
