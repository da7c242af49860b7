"""
Media

Material-coefficient fields (rho0, c0^2, B/A, absorption parameters), unit
conversion of the absorption magnitude, phantom generators and the
validity/smallness report.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .exceptions import InputValidationError
from .grid_ops import cosine_basis, frac_apply, lp_norm, norm
from .models import Grid, MediaValidityReport, PhantomSpec
from .utils import digest_arrays

logger = logging.getLogger(__name__)

NEPER_PER_DB = 100.0 / 8.686  # dB/cm -> Np/m

TAU_ETA_NOTE = ("tau = c0^(y-1) and eta = -c0^y tan(pi y/2) is a convention of this simulator, "
                "not a calibration against the k-Wave alpha0")


def _check_y(y: float):
    if not 1.0 < y < 3.0:
        raise InputValidationError(f"y out of (1,3): {y}")


@dataclass(frozen=True, eq=False)
class MediumFields:
    """Gridded coefficients of the (u, sigma, p) system; flat C-ordered cell arrays"""

    grid: Grid
    rho0: np.ndarray
    c0sq: np.ndarray
    BoverA: np.ndarray
    alpha0: float = 0.0
    y: float = 1.5
    tau: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        N = self.grid.n_points
        for name in ("rho0", "c0sq", "BoverA"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.size == 1:
                arr = np.full(N, float(arr))
            if arr.size != N:
                raise InputValidationError(f"{name} has {arr.size} values, grid has {N}")
            arr = arr.ravel().copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("rho0", "c0sq"):
            arr = getattr(self, name)
            if np.any(~(arr > 0)):
                idx = np.unravel_index(int(np.argmax(~(arr > 0))), self.grid.dims)
                raise InputValidationError(f"{name} must be > 0 at grid index {tuple(int(i) for i in idx)}")
        if not (self.tau > 0 and self.eta > 0):
            raise InputValidationError("tau and eta must be > 0")
        if self.alpha0 < 0:
            raise InputValidationError("alpha0 must be >= 0")
        _check_y(self.y)

    @classmethod
    def uniform(cls, grid: Grid, rho0: float = 1000.0, c0: float = 1500.0, BoverA: float = 0.0,
                **absorption) -> "MediumFields":
        return cls(grid, np.full(grid.n_points, rho0), np.full(grid.n_points, c0 ** 2),
                   np.full(grid.n_points, BoverA), **absorption)

    @property
    def c0(self) -> np.ndarray:
        return np.sqrt(self.c0sq)

    @property
    def ln_rho0(self) -> np.ndarray:
        return np.log(self.rho0)

    @property
    def constant_density(self) -> bool:
        return bool(np.ptp(self.rho0) <= 1e-14 * self.rho0.max())

    def digest(self) -> str:
        scalars = np.array([self.alpha0, self.y, self.tau, self.eta])
        return digest_arrays([self.rho0, self.c0sq, self.BoverA, scalars])


def db_to_internal_alpha(alpha_db: float, y: float) -> float:
    """dB/cm/MHz^y -> Np/m per (rad/s)^y"""
    _check_y(y)
    if alpha_db < 0:
        raise InputValidationError("alpha_db must be >= 0")
    return alpha_db * NEPER_PER_DB * (2.0 * math.pi * 1e6) ** (-y)


class TauEta(NamedTuple):
    tau: float
    eta: float
    ill_conditioned: bool
    note: Optional[str]


def default_tau_eta(c0_ref: float, y: float, alpha0: float = 0.0) -> TauEta:
    """Coefficients of the modified operator matched to the k-Wave prefactors"""
    if not c0_ref > 0:
        raise InputValidationError("c0_ref must be > 0")
    if alpha0 < 0:
        raise InputValidationError("alpha0 must be >= 0")
    _check_y(y)
    if y == 2.0:
        raise InputValidationError("tan(pi y/2) has a pole at y = 2; set eta explicitly")
    t = math.tan(math.pi * y / 2.0)
    tau = c0_ref ** (y - 1.0)
    eta = -(c0_ref ** y) * t
    note = None
    if not eta > 0:
        eta = c0_ref ** y * abs(t)
        note = f"eta sign flipped for y={y} (tan(pi y/2) > 0); eta must be positive"
        logger.warning(note)
    ill = abs(t) > 1e3
    if ill:
        logger.warning("eta is ill-conditioned near the tan pole (y=%s)", y)
    return TauEta(tau, eta, ill, note)


def _gradient(grid: Grid, f: np.ndarray) -> List[np.ndarray]:
    """Centred differences, one-sided at the walls"""
    g = np.gradient(grid.reshape(f), *grid.spacing)
    if grid.ndim == 1:
        g = [g]
    return [np.asarray(c).ravel() for c in g]


def validate_media(m: MediumFields, grid: Optional[Grid] = None, y: Optional[float] = None,
                   threshold: float = 0.1, tau_eta_auto: bool = False) -> MediaValidityReport:
    """Discrete smallness terms of rho0, c0 and the theory windows for y"""
    grid = grid or m.grid
    y = m.y if y is None else y
    if grid != m.grid:
        raise InputValidationError("media fields live on a different grid")

    grad_rho = _gradient(grid, m.rho0)
    flux = [m.c0sq * g for g in grad_rho]
    jac = np.stack([c for f in flux for c in _gradient(grid, f)])
    term1 = norm(grid, jac)
    term2 = lp_norm(grid, np.stack(flux), 3)

    neumann = cosine_basis(grid, grid.n_points - 1)
    gamma = (y + 1.0) / 4.0
    sq = 0.0
    for comp in _gradient(grid, m.ln_rho0):
        frac = frac_apply(neumann, gamma, comp - comp.mean())
        sq += norm(grid, comp) ** 2 + norm(grid, frac) ** 2
    term3 = math.sqrt(sq)

    d = grid.ndim
    total = term1 + term2 + term3
    notes: List[str] = []
    s2 = (y > d - 1) and (2.0 <= y <= 3.0)
    vv = y > d
    if not s2:
        notes.append(f"y={y} outside the existence window (y > d-1 and 2 <= y <= 3) for d={d}")
    if not vv:
        notes.append(f"y={y} outside the vanishing-viscosity window (y > d) for d={d}")
    if total >= threshold:
        notes.append(f"media smallness aggregate {total:.3e} >= {threshold}")
    if tau_eta_auto:
        notes.append(TAU_ETA_NOTE)
    return MediaValidityReport(
        delta_rc=total, grad_c2_grad_rho=term1, c2_grad_rho_l3=term2, grad_ln_rho_h=term3,
        threshold=threshold, below_threshold=total < threshold, y=y, ndim=d,
        energy_window_ok=s2, vanishing_viscosity_window_ok=vv,
        experiment_window_ok=1.0 < y < 3.0, notes=notes,
    )


def gaussian_blob(grid: Grid, center: Optional[Sequence[float]] = None,
                  width: Optional[float] = None) -> np.ndarray:
    center = [L / 2 for L in grid.lengths] if center is None else center
    width = min(grid.lengths) / 8 if width is None else width
    r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh(), center))
    return np.exp(-r2 / (2 * width ** 2)).ravel()


def sinusoid(grid: Grid, wavelength: Optional[float] = None) -> np.ndarray:
    wavelength = min(grid.lengths) / 2 if wavelength is None else wavelength
    return np.mean([np.sin(2 * np.pi * x / wavelength) for x in grid.mesh()], axis=0).ravel()


def random_smooth(grid: Grid, seed: int = 0, modes: int = 4) -> np.ndarray:
    """Seeded sum of low cosine modes scaled to [-1, 1]"""
    rng = np.random.default_rng(seed)
    mesh = grid.mesh()
    field = np.zeros(grid.dims)
    for multi in np.ndindex(*([modes + 1] * grid.ndim)):
        if not any(multi):
            continue
        shape = np.ones(grid.dims)
        for x, k, L in zip(mesh, multi, grid.lengths):
            shape = shape * np.cos(np.pi * k * x / L)
        field += rng.normal() / (1.0 + sum(multi)) * shape
    field = field.ravel()
    return field / np.abs(field).max()


def phantom_field(grid: Grid, base: float, spec: Optional[PhantomSpec], seed: int = 0) -> np.ndarray:
    """base * (1 + amplitude * shape) for the named generator"""
    if spec is None or spec.kind == "constant" or spec.amplitude == 0.0:
        return np.full(grid.n_points, float(base))
    if spec.kind == "gaussian-blob":
        shape = gaussian_blob(grid, spec.center, spec.width)
    elif spec.kind == "sinusoid":
        shape = sinusoid(grid, spec.wavelength)
    else:
        shape = random_smooth(grid, seed, spec.modes)
    return base * (1.0 + spec.amplitude * shape)
