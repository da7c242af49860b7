"""
Configuration

JSON run configurations: parsing with every violation reported, canonical
serialization, and builders turning config blocks into runtime objects.
"""

import json
import logging
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np
from pydantic import ValidationError

from .exceptions import ConfigError, InputValidationError
from .grid_ops import GalerkinBases, grid_operators
from .media import MediumFields, db_to_internal_alpha, default_tau_eta, gaussian_blob, phantom_field
from .models import Grid, InitialFieldSpec, ProbeSpec, RunConfig
from .physics import AbsorptionKind, InitialData
from .sources import SourceManager, SourceTerm

logger = logging.getLogger(__name__)


def _location(loc) -> str:
    path = ""
    for part in loc:
        path += f"[{part}]" if isinstance(part, int) else (f".{part}" if path else str(part))
    return path or "<root>"


def parse_config(text: Union[str, bytes]) -> RunConfig:
    """Validate JSON text into a RunConfig, collecting all violations"""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ConfigError([f"config is not UTF-8: {e}"]) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"line {e.lineno}, column {e.colno}: {e.msg}"]) from e
    if not isinstance(data, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        violations = []
        for err in e.errors():
            msg = err["msg"]
            if msg.startswith("Value error, "):
                msg = msg[len("Value error, "):]
            violations.append(f"{_location(err['loc'])}: {msg}")
        raise ConfigError(violations) from e


def serialize_config(config: RunConfig) -> str:
    """Canonical JSON form (sorted keys) with defaults filled in"""
    return json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError as e:
        raise ConfigError([f"{path}: config file not found"]) from e
    except OSError as e:
        raise ConfigError([f"{path}: {e.strerror}"]) from e
    try:
        return parse_config(raw)
    except ConfigError as e:
        raise ConfigError([f"{path}: {v}" for v in e.violations]) from e


class AbsorptionSetup(NamedTuple):
    kind: AbsorptionKind
    alpha0: float
    y: float
    tau: float
    eta: float
    note: Optional[str]


def resolve_absorption(config: RunConfig, c0_ref: float) -> AbsorptionSetup:
    """alpha0 in internal units and concrete tau/eta"""
    spec = config.absorption
    kind = AbsorptionKind(spec.kind)
    if spec.alpha0 is not None:
        alpha0 = spec.alpha0
    elif spec.alpha_db is not None:
        alpha0 = db_to_internal_alpha(spec.alpha_db, spec.y)
    else:
        alpha0 = 0.0

    tau = 1.0 if spec.tau == "auto" else float(spec.tau)
    eta = 1.0 if spec.eta == "auto" else float(spec.eta)
    note = None
    if kind is AbsorptionKind.MODIFIED and "auto" in (spec.tau, spec.eta):
        auto = default_tau_eta(spec.c0_ref or c0_ref, spec.y, alpha0)
        note = auto.note
        if spec.tau == "auto":
            tau = auto.tau
        if spec.eta == "auto":
            eta = auto.eta
    return AbsorptionSetup(kind, alpha0, spec.y, tau, eta, note)


def build_grid(config: RunConfig) -> Grid:
    return config.grid


def build_probes(config: RunConfig, store_states: Optional[bool] = None) -> ProbeSpec:
    """Probe block checked against the grid; store_states may be overridden"""
    grid = build_grid(config)
    probes = config.probes
    for cell in probes.cells:
        if len(cell) != grid.ndim or any(not 0 <= c < n for c, n in zip(cell, grid.dims)):
            raise InputValidationError(f"probe cell {cell} outside grid {grid.dims}")
    if store_states is None:
        return probes.model_copy(deep=True)
    return probes.model_copy(update={"store_states": store_states}, deep=True)


def build_medium(config: RunConfig) -> MediumFields:
    """Gridded coefficients; the phantom perturbs the field it names"""
    grid = build_grid(config)
    spec = config.media
    phantom = spec.phantom
    fields = {}
    for name, base in (("rho0", spec.rho0), ("c0", spec.c0), ("BoverA", spec.BoverA)):
        active = phantom if phantom is not None and phantom.field == name else None
        fields[name] = phantom_field(grid, base, active, config.seed)
    setup = resolve_absorption(config, float(np.mean(fields["c0"])))
    return MediumFields(grid, fields["rho0"], fields["c0"] ** 2, fields["BoverA"],
                        alpha0=setup.alpha0, y=setup.y, tau=setup.tau, eta=setup.eta)


def build_sources(config: RunConfig) -> SourceTerm:
    return SourceManager(config.grid).build_all(config.sources)


def _pattern(spec: InitialFieldSpec, grid: Grid, bases: GalerkinBases, what: str) -> np.ndarray:
    if spec.kind == "zero" or spec.amplitude == 0.0:
        return np.zeros(grid.n_points)
    if spec.kind == "mode":
        if spec.index > bases.n:
            raise InputValidationError(f"{what}: mode index {spec.index} exceeds n={bases.n}")
        coeffs = np.zeros(bases.n)
        coeffs[spec.index - 1] = 1.0
        shape = bases.weighted.synthesize(coeffs)
    else:
        shape = gaussian_blob(grid, spec.center, spec.width)
        shape = shape - shape.mean()
    return spec.amplitude * shape


def build_initial(config: RunConfig, bases: GalerkinBases) -> InitialData:
    """sigma0 from its pattern; u0 and d0 as face gradients of theirs"""
    grid = config.grid
    ops = grid_operators(grid)
    init = config.initial
    sigma0 = _pattern(init.sigma0, grid, bases, "initial.sigma0")
    u0 = ops.grad(_pattern(init.u0, grid, bases, "initial.u0"))
    d0 = ops.grad(_pattern(init.d0, grid, bases, "initial.d0"))
    return InitialData(sigma0, u0, d0)
