"""
Data Models

Pydantic models for grids, solver settings, run configuration and reports.
All physical quantities are SI unless a field says otherwise.
"""

import math
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Grid(_Strict):
    dims: Tuple[int, ...] = Field(..., description="Cell count per axis, d = len(dims) in {1, 2, 3}")
    spacing: Tuple[float, ...] = Field(..., description="Cell width per axis [m]")

    @field_validator("dims")
    @classmethod
    def _check_dims(cls, v):
        if not 1 <= len(v) <= 3:
            raise ValueError("grid must have 1, 2 or 3 axes")
        if any(n < 2 for n in v):
            raise ValueError("every extent must be >= 2")
        return tuple(v)

    @field_validator("spacing")
    @classmethod
    def _check_spacing(cls, v):
        if any(not (h > 0 and math.isfinite(h)) for h in v):
            raise ValueError("every spacing must be > 0")
        return tuple(float(h) for h in v)

    @model_validator(mode="after")
    def _check_rank(self):
        if len(self.dims) != len(self.spacing):
            raise ValueError("dims and spacing must have the same length")
        return self

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.dims))

    @property
    def lengths(self) -> Tuple[float, ...]:
        return tuple(n * h for n, h in zip(self.dims, self.spacing))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> List[np.ndarray]:
        """Cell-centre coordinates per axis"""
        return [(np.arange(n) + 0.5) * h for n, h in zip(self.dims, self.spacing)]

    def mesh(self) -> List[np.ndarray]:
        """Cell-centre coordinate arrays, 'ij' indexing"""
        return np.meshgrid(*self.axes(), indexing="ij")

    def reshape(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v).reshape(self.dims)

    def flat_index(self, cell) -> int:
        cell = tuple(int(c) for c in cell)
        if len(cell) != self.ndim or any(not 0 <= c < n for c, n in zip(cell, self.dims)):
            raise ValueError(f"cell {cell} outside grid {self.dims}")
        return int(np.ravel_multi_index(cell, self.dims))

    def nearest_cell(self, point) -> Tuple[int, ...]:
        return tuple(int(min(n - 1, max(0, math.floor(x / h))))
                     for x, n, h in zip(point, self.dims, self.spacing))

    def contains(self, point) -> bool:
        return all(0.0 <= x <= L for x, L in zip(point, self.lengths))


class SolverConfig(_Strict):
    mu: float = Field(default=0.0, ge=0.0, description="Viscosity [Pa s]")
    dt: float = Field(..., gt=0.0, description="Time step [s]")
    t_end: float = Field(..., gt=0.0, description="Final time [s]")
    n_modes: Optional[int] = Field(default=None, ge=1, description="Galerkin dimension n; null keeps all N-1 modes")
    picard_tol: float = Field(default=1e-10, gt=0.0, description="Relative Picard tolerance")
    picard_max_iters: int = Field(default=50, ge=1, description="Picard iteration cap per step")
    linear_mode: bool = Field(default=False, description="Freeze a = b = 1 (superposition experiments)")
    cg_tol: float = Field(default=1e-12, gt=0.0, description="Relative tolerance of the implicit velocity solve")

    @model_validator(mode="after")
    def _check_window(self):
        if self.t_end < self.dt * (1.0 - 1e-12):
            raise ValueError("t_end must be >= dt")
        ratio = self.t_end / self.dt
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ValueError("t_end must be an integer multiple of dt")
        return self

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


class PhantomSpec(_Strict):
    kind: Literal["constant", "gaussian-blob", "sinusoid", "random-smooth"] = Field(
        default="constant", description="Phantom generator")
    field: Literal["rho0", "c0", "BoverA"] = Field(default="c0", description="Field the phantom perturbs")
    amplitude: float = Field(default=0.0, description="Relative perturbation amplitude [1]")
    center: Optional[List[float]] = Field(default=None, description="Blob centre [m]; default domain centre")
    width: Optional[float] = Field(default=None, gt=0.0, description="Blob standard deviation [m]")
    wavelength: Optional[float] = Field(default=None, gt=0.0, description="Sinusoid wavelength [m]")
    modes: int = Field(default=4, ge=1, description="Cosine modes per axis for random-smooth")


class MediaSpec(_Strict):
    rho0: float = Field(default=1000.0, gt=0.0, description="Background density [kg/m^3]")
    c0: float = Field(default=1500.0, gt=0.0, description="Sound speed [m/s]")
    BoverA: float = Field(default=0.0, ge=0.0, description="Nonlinearity parameter B/A [1]")
    phantom: Optional[PhantomSpec] = Field(default=None, description="Optional phantom on top of the constants")


class AbsorptionSpec(_Strict):
    kind: Literal["modified", "original", "none"] = Field(default="modified", description="Absorption operator")
    alpha0: Optional[float] = Field(default=None, ge=0.0, description="Internal alpha0 [Np (rad/s)^-y m^-1]")
    alpha_db: Optional[float] = Field(default=None, ge=0.0, description="alpha0 in dB/cm/MHz^y")
    y: float = Field(default=1.5, description="Power-law exponent [1]")
    tau: Union[float, Literal["auto"]] = Field(default="auto", description="Modified-operator tau, or 'auto'")
    eta: Union[float, Literal["auto"]] = Field(default="auto", description="Modified-operator eta, or 'auto'")
    c0_ref: Optional[float] = Field(default=None, gt=0.0, description="Reference speed for auto tau/eta [m/s]")

    @field_validator("y")
    @classmethod
    def _check_y(cls, v):
        if not 1.0 < v < 3.0:
            raise ValueError("y out of (1,3)")
        return v

    @field_validator("tau", "eta")
    @classmethod
    def _check_positive(cls, v):
        if v != "auto" and not v > 0.0:
            raise ValueError("tau and eta must be > 0")
        return v

    @model_validator(mode="after")
    def _check_alpha(self):
        if self.alpha0 is not None and self.alpha_db is not None:
            raise ValueError("give alpha0 or alpha_db, not both")
        if self.kind == "original" and self.y == 2.0:
            raise ValueError("original operator has a tan pole at y = 2")
        return self


class SourceSpec(_Strict):
    kind: Literal["zero", "tone", "tabulated"] = Field(default="tone", description="Source kind")
    cells: List[List[int]] = Field(default_factory=list, description="Driven cells (multi-indices)")
    pattern: Literal["radial", "axis0", "axis1", "axis2"] = Field(
        default="radial", description="Force direction on the faces around each cell")
    amplitude: float = Field(default=0.0, description="Force density amplitude [Pa/m]")
    frequency: float = Field(default=0.0, ge=0.0, description="Tone frequency [Hz]")
    phase: float = Field(default=0.0, description="Tone phase [rad]")
    times: List[float] = Field(default_factory=list, description="Tabulated sample times [s]")
    values: List[float] = Field(default_factory=list, description="Tabulated force density [Pa/m]")

    @model_validator(mode="after")
    def _check_table(self):
        if self.kind == "tabulated":
            if len(self.times) < 2 or len(self.times) != len(self.values):
                raise ValueError("tabulated source needs matching times/values with >= 2 samples")
            if any(b <= a for a, b in zip(self.times, self.times[1:])):
                raise ValueError("tabulated times must increase")
        return self


class InitialFieldSpec(_Strict):
    kind: Literal["zero", "mode", "gaussian"] = Field(default="zero", description="Initial field pattern")
    index: int = Field(default=1, ge=1, description="Weighted eigenmode index (1-based) for kind='mode'")
    amplitude: float = Field(default=0.0, description="Pattern amplitude (sigma [1], u [m/s], d [m])")
    center: Optional[List[float]] = Field(default=None, description="Gaussian centre [m]")
    width: Optional[float] = Field(default=None, gt=0.0, description="Gaussian standard deviation [m]")


class InitialSpec(_Strict):
    sigma0: InitialFieldSpec = Field(default_factory=InitialFieldSpec, description="Relative density at t=0")
    u0: InitialFieldSpec = Field(default_factory=InitialFieldSpec,
                                 description="Velocity at t=0, as the gradient of the pattern")
    d0: InitialFieldSpec = Field(default_factory=InitialFieldSpec,
                                 description="Initial displacement, as the gradient of the pattern")


class ProbeSpec(_Strict):
    cells: List[List[int]] = Field(default_factory=list, description="Pressure sample cells")
    stride: int = Field(default=1, ge=1, description="Sampling stride in steps")
    store_states: bool = Field(default=True, description="Keep the state history for diagnostics")


class RingSpec(_Strict):
    kind: Literal["ring"] = "ring"
    n_elements: int = Field(default=8, ge=2, description="Elements on the ring")
    source_elements: List[int] = Field(default_factory=lambda: [0, 2, 4, 6],
                                       description="Indices of source-capable elements")
    radius: float = Field(..., gt=0.0, description="Ring radius [m]")
    center: Optional[List[float]] = Field(default=None, description="Ring centre [m]; default domain centre")
    frequency: float = Field(..., gt=0.0, description="Drive frequency [Hz]")
    amplitude: float = Field(..., ge=0.0, description="Drive force density [Pa/m]")
    pattern: Literal["radial", "axis0", "axis1", "axis2"] = "radial"

    @model_validator(mode="after")
    def _check_sources(self):
        if len(set(self.source_elements)) != len(self.source_elements):
            raise ValueError("source_elements must be distinct")
        if any(not 0 <= s < self.n_elements for s in self.source_elements):
            raise ValueError("source element index out of range")
        return self


class SweepSpec(_Strict):
    mus: List[float] = Field(..., min_length=1, description="Viscosities, descending [Pa s]; 0 is appended")

    @field_validator("mus")
    @classmethod
    def _check_desc(cls, v):
        if any(m <= 0 for m in v):
            raise ValueError("sweep viscosities must be > 0 (the inviscid run is added)")
        if any(b > a for a, b in zip(v, v[1:])):
            raise ValueError("sweep viscosities must be descending")
        return v


class ChecksSpec(_Strict):
    k_max: int = Field(default=50, ge=1, description="Eigenvalue pairs checked by the sandwich test")
    random_fields: int = Field(default=5, ge=1, description="Random smooth rho0 fields for the sandwich test")
    stability_samples: int = Field(default=20, ge=1, description="Random inputs for projection stability")
    refinements: int = Field(default=3, ge=1, description="dt-halvings in the identity residual study")
    ratio_tolerance: float = Field(default=0.3, gt=0.0, description="Allowed deviation of refinement ratios from 2")


class RunConfig(_Strict):
    grid: Grid
    media: MediaSpec = Field(default_factory=MediaSpec)
    absorption: AbsorptionSpec = Field(default_factory=AbsorptionSpec)
    solver: SolverConfig
    sources: List[SourceSpec] = Field(default_factory=list)
    initial: InitialSpec = Field(default_factory=InitialSpec)
    probes: ProbeSpec = Field(default_factory=ProbeSpec)
    experiment: Optional[RingSpec] = None
    sweep: Optional[SweepSpec] = None
    checks: ChecksSpec = Field(default_factory=ChecksSpec)
    smallness_r: float = Field(default=0.25, gt=0.0, description="Smallness monitor threshold r")
    delta_rc: float = Field(default=0.1, gt=0.0, description="Media smallness threshold")
    output_dir: str = Field(default="kwk_output", description="Directory for output artifacts")
    seed: int = Field(default=0, description="Seed for randomized phantoms")

    @model_validator(mode="after")
    def _check_cells(self):
        problems = []
        cells = [("probes", c) for c in self.probes.cells]
        cells += [(f"sources[{i}]", c) for i, s in enumerate(self.sources) for c in s.cells]
        for where, c in cells:
            if len(c) != self.grid.ndim or any(not 0 <= x < n for x, n in zip(c, self.grid.dims)):
                problems.append(f"{where}: cell {c} outside grid {list(self.grid.dims)}")
        n = self.solver.n_modes
        if n is not None and n >= self.grid.n_points:
            problems.append(f"solver.n_modes must be < {self.grid.n_points}")
        if self.solver.steps % self.probes.stride:
            problems.append("probes.stride must divide the step count")
        if problems:
            raise ValueError("; ".join(problems))
        return self


class MediaValidityReport(BaseModel):
    delta_rc: float = Field(..., ge=0.0, description="Smallness aggregate of rho0, c0")
    grad_c2_grad_rho: float = Field(..., description="L2 norm of grad(c0^2 grad rho0)")
    c2_grad_rho_l3: float = Field(..., description="L3 norm of c0^2 grad rho0")
    grad_ln_rho_h: float = Field(..., description="H^{(y+1)/2} norm of grad ln rho0")
    threshold: float = Field(default=0.1, description="delta_{rho0,c0} knob")
    below_threshold: bool
    y: float
    ndim: int
    energy_window_ok: bool = Field(..., description="y > d-1 and 2 <= y <= 3")
    vanishing_viscosity_window_ok: bool = Field(..., description="y > d")
    experiment_window_ok: bool = Field(..., description="1 < y < 3")
    notes: List[str] = Field(default_factory=list)


class CheckResult(BaseModel):
    name: str
    passed: bool
    value: Optional[float] = None
    detail: str = ""
