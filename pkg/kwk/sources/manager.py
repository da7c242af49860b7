"""
Source Manager

Builds source terms from configuration blocks
"""

from typing import Callable, Dict, List

from ..exceptions import InputValidationError
from ..grid_ops import grid_operators
from ..models import Grid, SourceSpec
from .base import CompositeSource, SourceTerm, TabulatedSource, ToneSource, ZeroSource, point_mask


class SourceManager:
    """Registry of source kinds for one grid"""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.n_faces = grid_operators(grid).n_faces
        self.builders: Dict[str, Callable[[SourceSpec], SourceTerm]] = {
            'zero': self._build_zero,
            'tone': self._build_tone,
            'tabulated': self._build_tabulated,
        }

    def build(self, spec: SourceSpec) -> SourceTerm:
        """Build one source term"""
        if spec.kind not in self.builders:
            raise InputValidationError(f"Unknown source kind: {spec.kind}")
        return self.builders[spec.kind](spec)

    def build_all(self, specs: List[SourceSpec]) -> SourceTerm:
        """Sum of all configured sources (zero when none)"""
        terms = [self.build(s) for s in specs]
        terms = [t for t in terms if not t.is_zero]
        if not terms:
            return ZeroSource(self.n_faces)
        return terms[0] if len(terms) == 1 else CompositeSource(terms)

    def _build_zero(self, spec: SourceSpec) -> SourceTerm:
        return ZeroSource(self.n_faces)

    def _build_tone(self, spec: SourceSpec) -> SourceTerm:
        mask = point_mask(self.grid, spec.cells, spec.pattern)
        return ToneSource(mask, spec.amplitude, spec.frequency, spec.phase)

    def _build_tabulated(self, spec: SourceSpec) -> SourceTerm:
        mask = point_mask(self.grid, spec.cells, spec.pattern)
        return TabulatedSource(mask, spec.times, spec.values)
