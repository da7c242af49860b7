"""
Source Terms Module

Force-density sources driving the momentum equation
"""

from .base import (CompositeSource, SourceTerm, TabulatedSource, ToneSource, ZeroSource,
                   point_mask)
from .manager import SourceManager

__all__ = [
    'SourceManager',
    'SourceTerm',
    'ZeroSource',
    'ToneSource',
    'TabulatedSource',
    'CompositeSource',
    'point_mask',
]
