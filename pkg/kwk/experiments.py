"""
Experiments

Ring-array tomography runs stacked into a data matrix with its singular
value spectrum, and the vanishing-viscosity sweep.
"""

import asyncio
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .config import build_medium, build_probes, resolve_absorption
from .diagnostics import energy_dissipation
from .exceptions import InputValidationError, KwkError, NumericalFailure
from .grid_ops import build_bases
from .media import MediumFields
from .models import (AbsorptionSpec, Grid, MediaSpec, PhantomSpec, ProbeSpec, RingSpec, RunConfig,
                     SolverConfig, SweepSpec)
from .physics import InitialData
from .solver import GalerkinSimulation, Trajectory, build_simulation
from .sources import CompositeSource, SourceTerm, ToneSource, point_mask
from .utils import ProgressBar, thread_limit

logger = logging.getLogger(__name__)

MIN_POINTS_PER_WAVELENGTH = 6


@dataclass(frozen=True)
class TransducerArray:
    """Elements on a ring; detectors are point samples at the element cells"""

    grid: Grid
    center: Tuple[float, ...]
    radius: float
    positions: Tuple[Tuple[float, ...], ...]
    cells: Tuple[Tuple[int, ...], ...]
    source_elements: Tuple[int, ...]
    frequency: float
    amplitude: float
    pattern: str = "radial"

    @property
    def n_elements(self) -> int:
        return len(self.positions)

    def drive(self, elements: Sequence[int]) -> SourceTerm:
        """In-phase tones on the given elements"""
        tones = [ToneSource(point_mask(self.grid, [self.cells[e]], self.pattern), self.amplitude, self.frequency)
                 for e in elements]
        return tones[0] if len(tones) == 1 else CompositeSource(tones)


def ring_array(grid: Grid, n_elements: int, radius: float, center: Optional[Sequence[float]] = None,
               source_elements: Sequence[int] = (0, 2, 4, 6), frequency: float = 1.0,
               amplitude: float = 1.0, pattern: str = "radial") -> TransducerArray:
    """Equally spaced elements on a circle in the (x0, x1) plane"""
    if grid.ndim < 2:
        raise InputValidationError("a ring array needs a grid with at least 2 axes")
    center = tuple(L / 2 for L in grid.lengths) if center is None else tuple(center)
    if len(center) != grid.ndim:
        raise InputValidationError(f"ring centre needs {grid.ndim} coordinates")
    if any(not 0 <= s < n_elements for s in source_elements):
        raise InputValidationError("source element index out of range")

    positions, cells = [], []
    for j in range(n_elements):
        theta = 2.0 * math.pi * j / n_elements
        pos = list(center)
        pos[0] += radius * math.cos(theta)
        pos[1] += radius * math.sin(theta)
        if not grid.contains(pos):
            raise InputValidationError(f"ring element {j} at {tuple(round(p, 6) for p in pos)} is outside the domain")
        positions.append(tuple(pos))
        cells.append(grid.nearest_cell(pos))
    if len(set(cells)) != n_elements:
        raise InputValidationError("ring elements share grid cells; refine the grid or enlarge the radius")
    return TransducerArray(grid, center, radius, tuple(positions), tuple(cells), tuple(source_elements),
                           frequency, amplitude, pattern)


class PlannedRun(NamedTuple):
    label: str
    sources: Tuple[int, ...]
    detectors: Tuple[int, ...]


@dataclass(frozen=True)
class RunPlan:
    array: TransducerArray
    runs: Tuple[PlannedRun, ...]

    @property
    def n_rows(self) -> int:
        return sum(len(r.detectors) for r in self.runs)

    @property
    def single_rows(self) -> int:
        return sum(len(r.detectors) for r in self.runs if len(r.sources) == 1)


def plan_runs(array: TransducerArray) -> RunPlan:
    """Every single source, then every pair; each run records all non-driving elements"""
    sets = [(s,) for s in array.source_elements]
    sets += list(itertools.combinations(array.source_elements, 2))
    runs = []
    for s in sets:
        label = "+".join(f"S{e}" for e in s)
        detectors = tuple(e for e in range(array.n_elements) if e not in s)
        runs.append(PlannedRun(label, tuple(s), detectors))
    return RunPlan(array, tuple(runs))


def build_ring_experiment(config: RunConfig) -> Tuple[MediumFields, TransducerArray, RunPlan]:
    """Medium, ring array and run plan of a configuration with a ring experiment block"""
    ring = config.experiment
    if ring is None:
        raise InputValidationError("config has no experiment block")
    grid = config.grid
    media = build_medium(config)
    ppw = float(media.c0.min()) / ring.frequency / max(grid.spacing)
    if ppw < MIN_POINTS_PER_WAVELENGTH:
        logger.warning("grid resolves %.2f points per wavelength at %.4g Hz (< %d)",
                       ppw, ring.frequency, MIN_POINTS_PER_WAVELENGTH)
    array = ring_array(grid, ring.n_elements, ring.radius, ring.center, ring.source_elements,
                       ring.frequency, ring.amplitude, ring.pattern)
    return media, array, plan_runs(array)


@dataclass
class DataMatrix:
    rows: np.ndarray
    labels: List[Tuple[str, int]]
    times: np.ndarray

    def row(self, label: str, detector: int) -> np.ndarray:
        return self.rows[self.labels.index((label, detector))]


async def _gather_runs(jobs: Sequence[Tuple[str, Callable[[], Trajectory]]], progress: bool) -> List[Trajectory]:
    """Run blocking jobs in worker threads, at most KWK_THREADS at a time, results in job order"""
    semaphore = asyncio.Semaphore(thread_limit())
    bar = ProgressBar(len(jobs), "Runs", unit="runs", enabled=progress)

    async def one(label, job):
        async with semaphore:
            try:
                result = await asyncio.to_thread(job)
            except InputValidationError as e:
                raise InputValidationError(f"run {label}: {e}") from e
            except KwkError as e:
                raise NumericalFailure(f"run {label} failed: {e}") from e
            bar.update()
            return result

    try:
        return await asyncio.gather(*(one(label, job) for label, job in jobs))
    finally:
        bar.close()


def run_experiment(plan: RunPlan, config: RunConfig, linear_mode: bool,
                   progress: bool = False) -> DataMatrix:
    """Execute every planned run and stack the detector traces in label order"""
    solver = config.solver.model_copy(update={"linear_mode": linear_mode})
    media = build_medium(config)
    setup = resolve_absorption(config, float(np.mean(media.c0)))
    bases = build_bases(config.grid, media.rho0, solver.n_modes)
    array = plan.array

    def job(run: PlannedRun) -> Callable[[], Trajectory]:
        def simulate() -> Trajectory:
            sim = GalerkinSimulation(media, solver, setup.kind, array.drive(run.sources), bases)
            probes = ProbeSpec(cells=[list(array.cells[d]) for d in run.detectors], stride=1, store_states=False)
            return sim.run(InitialData.zeros(config.grid), probes)
        return simulate

    trajectories = asyncio.run(_gather_runs([(r.label, job(r)) for r in plan.runs], progress))
    rows, labels = [], []
    for run, traj in zip(plan.runs, trajectories):
        rows.append(traj.traces)
        labels.extend((run.label, d) for d in run.detectors)
    return DataMatrix(np.vstack(rows), labels, trajectories[0].trace_times)


def singular_values(m: DataMatrix) -> np.ndarray:
    """Raw singular values, descending"""
    if not np.any(m.rows):
        raise InputValidationError("data matrix is all zero")
    return scipy.linalg.svdvals(m.rows)


def svd_spectrum(m: DataMatrix) -> np.ndarray:
    """Singular values, descending, normalized by the largest"""
    s = singular_values(m)
    return s / s[0]


def cliff_ratio(spectrum: np.ndarray, k: int = 29) -> float:
    """sigma_k / sigma_1 (1-based k)"""
    if not 1 <= k <= len(spectrum):
        raise InputValidationError(f"spectrum has {len(spectrum)} values; cannot read sigma_{k}")
    return float(spectrum[k - 1] / spectrum[0])


def superposition_defect(m: DataMatrix, plan: RunPlan) -> float:
    """Largest relative deviation of a pair row from the sum of its two single rows"""
    singles = {r.sources[0]: r.label for r in plan.runs if len(r.sources) == 1}
    worst = 0.0
    for run in plan.runs:
        if len(run.sources) != 2:
            continue
        i, j = run.sources
        for d in run.detectors:
            pair = m.row(run.label, d)
            summed = m.row(singles[i], d) + m.row(singles[j], d)
            scale = max(np.abs(pair).max(), np.abs(summed).max())
            if scale > 0:
                worst = max(worst, float(np.abs(pair - summed).max() / scale))
    return worst


def ring_preset(name: str) -> RunConfig:
    """Named ring experiments: 'desk' (nondimensional, laptop scale) or 'water' (SI, 250 kHz in water)"""
    if name == "desk":
        h = 0.3125
        return RunConfig(
            grid=Grid(dims=(96, 96), spacing=(h, h)),
            media=MediaSpec(rho0=1.0, c0=1.0, BoverA=7.0,
                            phantom=PhantomSpec(kind="gaussian-blob", field="c0", amplitude=0.1, width=3.0)),
            absorption=AbsorptionSpec(kind="modified", alpha0=0.02, y=1.5, c0_ref=1.0),
            solver=SolverConfig(dt=0.125, t_end=25.0),
            experiment=RingSpec(radius=10.0, frequency=1.0 / (8 * h), amplitude=0.1),
            output_dir="kwk_output/ring_desk",
        )
    if name == "water":
        return RunConfig(
            grid=Grid(dims=(120, 120), spacing=(1e-3, 1e-3)),
            media=MediaSpec(rho0=1000.0, c0=1500.0, BoverA=7.0,
                            phantom=PhantomSpec(kind="gaussian-blob", field="c0", amplitude=0.05, width=0.015)),
            absorption=AbsorptionSpec(kind="modified", alpha_db=0.5, y=1.5, c0_ref=1500.0),
            solver=SolverConfig(dt=2e-7, t_end=8e-5),
            experiment=RingSpec(radius=0.05, frequency=0.25e6, amplitude=5e9),
            output_dir="kwk_output/ring_water",
        )
    raise InputValidationError(f"unknown ring preset {name!r} (expected 'desk' or 'water')")


@dataclass
class SweepReport:
    mus: List[float]
    distance_to_next: List[float]
    distance_to_inviscid: List[float]
    sup_E: List[float]
    notes: List[str] = field(default_factory=list)

    COLUMNS = ("mu [Pa s]", "distance_to_next [1]", "distance_to_inviscid [1]", "sup_E [1]")

    def rows(self):
        nxt = self.distance_to_next + [0.0]
        return zip(self.mus, nxt, self.distance_to_inviscid, self.sup_E)

    @property
    def energy_variation(self) -> float:
        top = max(self.sup_E)
        return (top - min(self.sup_E)) / top if top > 0 else 0.0

    @property
    def monotone(self) -> bool:
        d = self.distance_to_inviscid[:-1]
        return all(a > b for a, b in zip(d, d[1:]))


def trajectory_distance(a: Trajectory, b: Trajectory) -> float:
    """|u_a - u_b|_{Linf(L2)} + |sigma_a - sigma_b|_{Linf(L2)}"""
    if len(a.states) != len(b.states):
        raise InputValidationError("trajectories have different sample counts")
    grid = a.grid
    du = max(math.sqrt(grid.cell_volume) * float(np.linalg.norm(x.u - y.u)) for x, y in zip(a.states, b.states))
    ds = max(float(np.linalg.norm(x.sigma_modal - y.sigma_modal)) for x, y in zip(a.states, b.states))
    return du + ds


def viscosity_sweep(config: RunConfig, mus: Optional[Sequence[float]] = None,
                    progress: bool = False) -> SweepReport:
    """Runs for each mu (descending) plus mu = 0 on a constant-density medium"""
    if mus is None:
        if config.sweep is None:
            raise InputValidationError("config has no sweep block and no viscosities were given")
        mus = config.sweep.mus
    mus = list(SweepSpec(mus=list(mus)).mus) + [0.0]
    media = build_medium(config)
    if not media.constant_density:
        raise InputValidationError("viscosity sweep needs a constant rho0 (g = h = 0)")
    notes = []
    if not media.y > config.grid.ndim:
        notes.append(f"y={media.y} outside the vanishing-viscosity window (y > d) for d={config.grid.ndim}")
        logger.warning(notes[-1])

    probes = build_probes(config, store_states=True).model_copy(update={"stride": 1})
    sims = []

    def job(mu: float) -> Callable[[], Trajectory]:
        solver = config.solver.model_copy(update={"mu": mu})
        sim, initial = build_simulation(config, solver=solver)
        sims.append(sim)
        return lambda: sim.run(initial, probes)

    jobs = [(f"mu={mu:g}", job(mu)) for mu in mus]
    runs = asyncio.run(_gather_runs(jobs, progress))
    sup_E = [energy_dissipation(t, s).sup_E for t, s in zip(runs, sims)]
    return SweepReport(
        mus=mus,
        distance_to_next=[trajectory_distance(a, b) for a, b in zip(runs, runs[1:])],
        distance_to_inviscid=[trajectory_distance(r, runs[-1]) for r in runs],
        sup_E=sup_E,
        notes=notes,
    )
