"""
Physics

Constitutive terms of the (u, sigma, p) system: a(sigma), b(sigma), the
density-gradient couplings g(u), h(u), and the two absorption operators.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from .exceptions import InputValidationError
from .grid_ops import GalerkinBases, grid_operators
from .media import MediumFields
from .models import Grid


class AbsorptionKind(str, Enum):
    MODIFIED = "modified"
    ORIGINAL = "original"
    NONE = "none"


def a_of(sigma):
    return 1.0 + 2.0 * np.asarray(sigma, dtype=float)


def b_of(sigma, BoverA):
    return 1.0 + 0.5 * np.asarray(BoverA, dtype=float) * np.asarray(sigma, dtype=float)


def g_of(u: np.ndarray, media: MediumFields) -> np.ndarray:
    """g(u) = -u . grad ln rho0, face products averaged to cell centres"""
    if media.constant_density:
        return np.zeros(media.grid.n_points)
    ops = grid_operators(media.grid)
    return -ops.to_cells(u * ops.grad(media.ln_rho0)).sum(axis=0)


def h_of(u_time_integral: np.ndarray, d0: np.ndarray, media: MediumFields) -> np.ndarray:
    """h(u) = c0^2 (I_t u + d0) . grad rho0"""
    if media.constant_density:
        return np.zeros(media.grid.n_points)
    ops = grid_operators(media.grid)
    return media.c0sq * ops.to_cells((u_time_integral + d0) * ops.grad(media.rho0)).sum(axis=0)


def ltilde_prefactors(media: MediumFields, y: float = None) -> Tuple[np.ndarray, np.ndarray]:
    """Pointwise prefactors of the rho_t and rho terms of the original operator"""
    y = media.y if y is None else y
    if y == 2.0:
        raise InputValidationError("original absorption operator has a tan pole at y = 2")
    c0 = media.c0
    return -c0 ** (y - 1.0), c0 ** y * math.tan(math.pi * y / 2.0)


class Absorber:
    """Absorption contribution in weighted modal coordinates

    p = P[c0^2 rho0 b sigma] - apply(sigma, sigma_t) + P[h].
    MODIFIED returns L sigma; ORIGINAL returns c0^2 Ltilde(rho0 sigma).
    """

    def __init__(self, kind: AbsorptionKind, media: MediumFields, bases: GalerkinBases):
        self.kind = AbsorptionKind(kind)
        self.media = media
        self.bases = bases
        y = media.y
        if self.kind is AbsorptionKind.ORIGINAL:
            self.damping, self.dispersion = ltilde_prefactors(media, y)
        self.inv_lambda = 1.0 / bases.weighted.eigenvalues
        self.K_t = bases.neumann_power(y / 2.0)
        self.K_s = bases.neumann_power((y + 1.0) / 2.0)

    @property
    def active(self) -> bool:
        return self.kind is not AbsorptionKind.NONE and self.media.alpha0 > 0.0

    def _mul(self, K, xi):
        return K * xi if K.ndim == 1 else K @ xi

    def fractional_load(self, sigma_modal, sigma_t_modal) -> np.ndarray:
        """(tau (-Lap_N)^{y/2} sigma_t + eta (-Lap_N)^{(y+1)/2} sigma, w_i)"""
        m = self.media
        return m.tau * self._mul(self.K_t, sigma_t_modal) + m.eta * self._mul(self.K_s, sigma_modal)

    def _neumann_power(self, v: np.ndarray, gamma: float) -> np.ndarray:
        neu = self.bases.neumann
        return neu.synthesize(neu.eigenvalues ** gamma * neu.analyze(v - v.mean()))

    def apply(self, sigma_modal: np.ndarray, sigma_t_modal: np.ndarray) -> np.ndarray:
        if not self.active:
            return np.zeros(self.bases.n)
        m = self.media
        if self.kind is AbsorptionKind.MODIFIED:
            return -2.0 * m.alpha0 * self.inv_lambda * self.fractional_load(sigma_modal, sigma_t_modal)

        # c0 varies pointwise between the fractional powers; commutators are dropped
        W = self.bases.weighted
        rho = m.rho0 * W.synthesize(sigma_modal)
        rho_t = m.rho0 * W.synthesize(sigma_t_modal)
        y = m.y
        ltilde = 2.0 * m.alpha0 * (self.damping * self._neumann_power(rho_t, y / 2.0 - 1.0)
                                   + self.dispersion * self._neumann_power(rho, (y - 1.0) / 2.0))
        return W.analyze(m.c0sq * ltilde)


def apply_absorption(kind: AbsorptionKind, sigma_modal, sigma_t_modal, media: MediumFields,
                     bases: GalerkinBases) -> np.ndarray:
    """One-shot absorption contribution (builds the operator matrices each call)"""
    return Absorber(kind, media, bases).apply(np.asarray(sigma_modal, dtype=float),
                                              np.asarray(sigma_t_modal, dtype=float))


@dataclass(frozen=True, eq=False)
class InitialData:
    """sigma0 on cells; u0 and d0 on interior faces"""

    sigma0: np.ndarray
    u0: np.ndarray
    d0: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid) -> "InitialData":
        n_faces = grid_operators(grid).n_faces
        return cls(np.zeros(grid.n_points), np.zeros(n_faces), np.zeros(n_faces))

    def scaled(self, factor: float) -> "InitialData":
        return InitialData(factor * self.sigma0, factor * self.u0, factor * self.d0)

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.sigma0) or np.any(self.u0) or np.any(self.d0))
