"""
Source Terms

Time-dependent force densities f(x, t) on the interior velocity faces
"""

from typing import Iterable, Sequence

import numpy as np

from ..exceptions import InputValidationError
from ..grid_ops import grid_operators
from ..models import Grid


def point_mask(grid: Grid, cells: Iterable[Sequence[int]], pattern: str = "radial") -> np.ndarray:
    """Face weights around the given cells

    'radial' points every face of a cell outward (a compact monopole);
    'axisK' pushes both faces normal to axis K in +x_K.
    """
    if pattern != "radial" and pattern not in {f"axis{k}" for k in range(grid.ndim)}:
        raise InputValidationError(f"unknown source pattern {pattern!r} for a {grid.ndim}-D grid")
    ops = grid_operators(grid)
    mask = np.zeros(ops.n_faces)
    for cell in cells:
        cell = tuple(int(c) for c in cell)
        grid.flat_index(cell)
        for k in range(grid.ndim):
            if pattern != "radial" and pattern != f"axis{k}":
                continue
            face_dims = list(grid.dims)
            face_dims[k] -= 1
            for pos, sign in ((cell[k] - 1, -1.0), (cell[k], 1.0)):
                if not 0 <= pos < face_dims[k]:
                    continue
                idx = list(cell)
                idx[k] = pos
                flat = ops.face_slices[k].start + int(np.ravel_multi_index(idx, face_dims))
                mask[flat] += sign if pattern == "radial" else 1.0
    return mask


class SourceTerm:
    """Base class: evaluate(t) returns the face force density [Pa/m]"""

    def __init__(self, n_faces: int):
        self.n_faces = n_faces

    def evaluate(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def covers(self, t0: float, t1: float) -> bool:
        return True

    @property
    def is_zero(self) -> bool:
        return False

    def __add__(self, other: "SourceTerm") -> "SourceTerm":
        return CompositeSource([self, other])


class ZeroSource(SourceTerm):
    def evaluate(self, t):
        return np.zeros(self.n_faces)

    @property
    def is_zero(self) -> bool:
        return True


class ToneSource(SourceTerm):
    """f(t) = A sin(2 pi f t + phase) on a face mask"""

    def __init__(self, mask: np.ndarray, amplitude: float, frequency: float, phase: float = 0.0):
        super().__init__(len(mask))
        if not np.all(np.isfinite(mask)) or not np.isfinite(amplitude):
            raise InputValidationError("tone source must be finite")
        self.mask = np.asarray(mask, dtype=float)
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)
        self.phase = float(phase)

    def evaluate(self, t):
        return self.mask * (self.amplitude * np.sin(2 * np.pi * self.frequency * t + self.phase))

    @property
    def is_zero(self) -> bool:
        return self.amplitude == 0.0 or not np.any(self.mask)


class TabulatedSource(SourceTerm):
    """Linearly interpolated drive series on a face mask"""

    def __init__(self, mask: np.ndarray, times: Sequence[float], values: Sequence[float]):
        super().__init__(len(mask))
        self.mask = np.asarray(mask, dtype=float)
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.shape != self.values.shape or self.times.size < 2:
            raise InputValidationError("tabulated source needs matching times/values")
        if not (np.all(np.isfinite(self.values)) and np.all(np.diff(self.times) > 0)):
            raise InputValidationError("tabulated source needs finite values at increasing times")

    def covers(self, t0, t1):
        return self.times[0] <= t0 and t1 <= self.times[-1] * (1 + 1e-12)

    def evaluate(self, t):
        if not self.times[0] <= t <= self.times[-1] * (1 + 1e-12):
            raise InputValidationError(f"t={t} outside the tabulated source window")
        return self.mask * float(np.interp(t, self.times, self.values))

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.values) and np.any(self.mask))


class CompositeSource(SourceTerm):
    """Sum of sources (pair drives)"""

    def __init__(self, parts: Sequence[SourceTerm]):
        if not parts:
            raise InputValidationError("composite source needs at least one part")
        super().__init__(parts[0].n_faces)
        self.parts = list(parts)

    def evaluate(self, t):
        total = np.zeros(self.n_faces)
        for part in self.parts:
            total += part.evaluate(t)
        return total

    def covers(self, t0, t1):
        return all(p.covers(t0, t1) for p in self.parts)

    @property
    def is_zero(self) -> bool:
        return all(p.is_zero for p in self.parts)
