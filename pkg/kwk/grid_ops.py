"""
Grid Operators

Staggered finite-difference operators on rectangular grids, eigenbases of the
Neumann and weighted Neumann Laplacians, spectral fractional powers and the
Ritz projection.

Scalars live at cell centres; velocity component k lives on the interior faces
normal to axis k, so u.nu = 0 on the boundary by construction. With the cell
volume V as the discrete L2 weight on both cells and faces, Div = -G^T holds
exactly and -Laplacian_{1/rho0} = G^T W G is symmetric.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache, reduce
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse as sp

from .exceptions import InputValidationError, NumericalFailure
from .models import Grid

logger = logging.getLogger(__name__)

MEAN_TOL = 1e-8
TIE_RTOL = 1e-10


def _kron_all(mats):
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats)


def _difference_1d(n: int, h: float):
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr") / h


def _average_1d(n: int):
    return sp.diags([0.5 * np.ones(n - 1), 0.5 * np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


@dataclass(frozen=True, eq=False)
class GridOperators:
    """Sparse staggered operators for one grid"""

    grid: Grid
    gradient: sp.csr_matrix
    face_average: sp.csr_matrix
    axis_gradients: Tuple[sp.csr_matrix, ...]
    axis_to_cells: Tuple[sp.csr_matrix, ...]
    face_slices: Tuple[slice, ...]

    @property
    def n_faces(self) -> int:
        return self.gradient.shape[0]

    def grad(self, v: np.ndarray) -> np.ndarray:
        """Cell field -> face field"""
        return self.gradient @ v

    def divergence(self, u: np.ndarray) -> np.ndarray:
        """Face field -> cell field, Div = -G^T"""
        return -(self.gradient.T @ u)

    def to_faces(self, v: np.ndarray) -> np.ndarray:
        """Arithmetic average of a cell field onto interior faces"""
        return self.face_average @ v

    def to_cells(self, u: np.ndarray) -> np.ndarray:
        """Per-axis face->cell averages, shape (d, N); boundary faces count as zero"""
        return np.stack([A @ u[s] for A, s in zip(self.axis_to_cells, self.face_slices)])

    def cell_gradient(self, v: np.ndarray) -> np.ndarray:
        """Cell-centred gradient components, shape (d, N)"""
        return self.to_cells(self.grad(v))

    def axis_field(self, u: np.ndarray, axis: int) -> np.ndarray:
        shape = list(self.grid.dims)
        shape[axis] -= 1
        return u[self.face_slices[axis]].reshape(shape)


@lru_cache(maxsize=32)
def grid_operators(grid: Grid) -> GridOperators:
    """Build (and cache) the staggered operators of a grid"""
    grads, avgs, to_cells, slices = [], [], [], []
    start = 0
    for k, (n, h) in enumerate(zip(grid.dims, grid.spacing)):
        eye = [sp.identity(m, format="csr") for m in grid.dims]
        D = _kron_all(eye[:k] + [_difference_1d(n, h)] + eye[k + 1:])
        S = _kron_all(eye[:k] + [_average_1d(n)] + eye[k + 1:])
        grads.append(D)
        avgs.append(S)
        to_cells.append(S.T.tocsr())
        slices.append(slice(start, start + D.shape[0]))
        start += D.shape[0]
    return GridOperators(
        grid=grid,
        gradient=sp.vstack(grads, format="csr"),
        face_average=sp.vstack(avgs, format="csr"),
        axis_gradients=tuple(grads),
        axis_to_cells=tuple(to_cells),
        face_slices=tuple(slices),
    )


def inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """Discrete L2 inner product (cells or faces)"""
    return float(grid.cell_volume * np.dot(np.ravel(a), np.ravel(b)))


def norm(grid: Grid, a: np.ndarray) -> float:
    return float(np.sqrt(grid.cell_volume * np.sum(np.square(a))))


def lp_norm(grid: Grid, a: np.ndarray, p: float) -> float:
    """Discrete L^p norm with cell-volume weights; a may be (d, N) for vector fields"""
    a = np.asarray(a, dtype=float)
    mag = np.sqrt(np.sum(a * a, axis=0)) if a.ndim > 1 else np.abs(a)
    if np.isinf(p):
        return float(mag.max(initial=0.0))
    return float((grid.cell_volume * np.sum(mag ** p)) ** (1.0 / p))


def remove_mean(v: np.ndarray, what: str = "input") -> np.ndarray:
    """Subtract the mean; a mean above the zero-mean tolerance is an error"""
    v = np.asarray(v, dtype=float).ravel()
    m = float(v.mean())
    if abs(m) > MEAN_TOL * max(1.0, float(np.abs(v).max(initial=0.0))):
        raise InputValidationError(f"{what} mean {m:.3e} exceeds the zero-mean tolerance")
    return v - m


@dataclass(frozen=True, eq=False)
class LinOperator:
    """Symmetric nonnegative operator -div(w grad) on cell fields"""

    grid: Grid
    matrix: sp.csr_matrix
    face_weights: np.ndarray
    scale: Optional[float] = None

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def is_constant(self) -> bool:
        return self.scale is not None


def build_laplacian(grid: Grid, weight: Optional[np.ndarray] = None) -> LinOperator:
    """Build -div(weight grad) with reflecting closure; weight is the cell field 1/rho0"""
    ops = grid_operators(grid)
    if weight is None:
        return LinOperator(grid, (ops.gradient.T @ ops.gradient).tocsr(), np.ones(ops.n_faces), 1.0)

    w = np.asarray(weight, dtype=float)
    if w.size == 1:
        w = np.full(grid.n_points, float(w))
    w = w.reshape(grid.dims)
    bad = np.argwhere(~(w > 0))
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        raise InputValidationError(f"weight must be > 0; got {w[idx]!r} at grid index {idx}")

    faces = []
    for k in range(grid.ndim):
        lo = np.take(w, np.arange(grid.dims[k] - 1), axis=k)
        hi = np.take(w, np.arange(1, grid.dims[k]), axis=k)
        faces.append((2.0 * lo * hi / (lo + hi)).ravel())
    wf = np.concatenate(faces)

    scale = None
    if np.ptp(w) <= 1e-14 * np.abs(w).max():
        scale = float(w.flat[0])
    A = (ops.gradient.T @ sp.diags(wf) @ ops.gradient).tocsr()
    return LinOperator(grid, A, wf, scale)


class SpectralBasis(ABC):
    """Eigenpairs of a Neumann-type Laplacian on zero-mean functions, M-orthonormal columns"""

    grid: Grid
    eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @abstractmethod
    def analyze(self, v: np.ndarray) -> np.ndarray:
        """Coefficients (v, w_i) in the discrete L2 inner product"""

    @abstractmethod
    def synthesize(self, c: np.ndarray) -> np.ndarray:
        """Grid field sum_i c_i w_i"""

    def matrix(self) -> np.ndarray:
        return self.synthesize(np.eye(self.n))


@dataclass(frozen=True, eq=False)
class DenseBasis(SpectralBasis):
    grid: Grid
    eigenvalues: np.ndarray
    vectors: np.ndarray

    def analyze(self, v):
        return self.grid.cell_volume * (self.vectors.T @ v)

    def synthesize(self, c):
        return self.vectors @ c

    def matrix(self):
        return self.vectors


@dataclass(frozen=True, eq=False)
class CosineBasis(SpectralBasis):
    """Cell-centred cosine modes, diagonalized by the orthonormal DCT-II"""

    grid: Grid
    eigenvalues: np.ndarray
    flat_index: np.ndarray
    scale: float = 1.0

    @property
    def neumann_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues / self.scale

    def analyze(self, v):
        v = np.asarray(v, dtype=float)
        dims = self.grid.dims
        extra = v.shape[1:]
        coeffs = scipy.fft.dctn(v.reshape(dims + extra), type=2, norm="ortho", axes=tuple(range(len(dims))))
        coeffs = coeffs.reshape((self.grid.n_points,) + extra)
        return np.sqrt(self.grid.cell_volume) * coeffs[self.flat_index]

    def synthesize(self, c):
        c = np.asarray(c, dtype=float)
        dims = self.grid.dims
        extra = c.shape[1:]
        full = np.zeros((self.grid.n_points,) + extra)
        full[self.flat_index] = c
        v = scipy.fft.idctn(full.reshape(dims + extra), type=2, norm="ortho", axes=tuple(range(len(dims))))
        return v.reshape((self.grid.n_points,) + extra) / np.sqrt(self.grid.cell_volume)


def _sign_normalize(vec: np.ndarray) -> np.ndarray:
    big = np.flatnonzero(np.abs(vec) > 1e-12 * np.abs(vec).max())
    if big.size and vec[big[0]] < 0:
        return -vec
    return vec


def _ordered(values: np.ndarray, vector_of: Callable[[int], np.ndarray], limit: int) -> List[int]:
    """Ascending order; ties broken by lexicographic order of sign-normalized vectors"""
    order = np.argsort(values, kind="stable")
    tol = TIE_RTOL * float(np.abs(values).max())
    result: List[int] = []
    i = 0
    while i < len(order) and len(result) < limit:
        j = i + 1
        while j < len(order) and values[order[j]] - values[order[i]] <= tol:
            j += 1
        group = order[i:j]
        if len(group) > 1:
            vecs = np.stack([_sign_normalize(vector_of(int(g))) for g in group])
            group = group[np.lexsort(vecs.T[::-1])]
        result.extend(int(g) for g in group)
        i = j
    return result[:limit]


def _cosine_tables(grid: Grid) -> List[np.ndarray]:
    tables = []
    for n in grid.dims:
        j = np.arange(n) + 0.5
        m = np.arange(n)[:, None]
        T = np.cos(np.pi * m * j / n) * np.sqrt(2.0 / n)
        T[0] /= np.sqrt(2.0)
        tables.append(T)
    return tables


def cosine_basis(grid: Grid, n: int, scale: float = 1.0) -> CosineBasis:
    """Fast path: the n smallest nonzero modes of scale * (-Laplacian_N)"""
    per_axis = [(2.0 / h ** 2) * (1.0 - np.cos(np.pi * np.arange(m) / m))
                for m, h in zip(grid.dims, grid.spacing)]
    mu = reduce(np.add.outer, per_axis).ravel()
    candidates = np.arange(1, grid.n_points)
    tables = _cosine_tables(grid)

    def vector_of(pos: int) -> np.ndarray:
        multi = np.unravel_index(candidates[pos], grid.dims)
        return reduce(np.multiply.outer, [T[m] for T, m in zip(tables, multi)]).ravel()

    picked = _ordered(mu[candidates], vector_of, n)
    flat = candidates[picked]
    return CosineBasis(grid=grid, eigenvalues=scale * mu[flat], flat_index=flat, scale=scale)


def dense_basis(op: LinOperator, n: int) -> DenseBasis:
    """Dense symmetric eigensolve of op, zero mode excluded"""
    grid = op.grid
    vals, vecs = scipy.linalg.eigh(op.dense())
    top = max(1.0, float(abs(vals[-1])))
    if abs(vals[0]) > 1e-9 * top:
        raise NumericalFailure("operator does not annihilate constants", residual=float(vals[0]))
    vals, vecs = vals[1:], vecs[:, 1:]
    picked = _ordered(vals, lambda p: vecs[:, p], n)
    lam = vals[picked]
    W = np.stack([_sign_normalize(vecs[:, p]) for p in picked], axis=1) / np.sqrt(grid.cell_volume)

    residual = np.linalg.norm(op.matrix @ W - W * lam, axis=0)
    limit = 1e-8 * top * np.linalg.norm(W, axis=0)
    worst = int(np.argmax(residual - limit))
    if residual[worst] > limit[worst]:
        raise NumericalFailure(f"eigensolve residual above tolerance for mode {worst + 1}",
                               residual=float(residual[worst]))
    logger.debug("dense eigenbasis: N=%d n=%d lambda in [%.3e, %.3e]", grid.n_points, n, lam[0], lam[-1])
    return DenseBasis(grid=grid, eigenvalues=lam, vectors=W)


def eigenbasis(op: LinOperator, n: Optional[int] = None, method: str = "auto") -> SpectralBasis:
    """The n smallest nonzero eigenpairs of op"""
    N = op.grid.n_points
    n = N - 1 if n is None else int(n)
    if not 1 <= n < N:
        raise InputValidationError(f"mode count must satisfy 1 <= n < N={N}; got {n}")
    if method not in ("auto", "dense", "cosine"):
        raise InputValidationError(f"unknown eigensolver method {method!r}")
    if method == "cosine" or (method == "auto" and op.is_constant):
        if not op.is_constant:
            raise InputValidationError("cosine fast path needs a constant weight")
        return cosine_basis(op.grid, n, op.scale)
    return dense_basis(op, n)


def frac_apply(basis: SpectralBasis, gamma: float, v: np.ndarray) -> np.ndarray:
    """A^gamma v = sum_i lambda_i^gamma (v, w_i) w_i over the retained modes"""
    lam = basis.eigenvalues
    if gamma < 0 and lam.min() < 1e-14:
        raise InputValidationError("negative power needs strictly positive eigenvalues")
    v0 = remove_mean(v)
    return basis.synthesize(lam ** gamma * basis.analyze(v0))


def ritz_project(g: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    """Modal coefficients of the Ritz projection onto span(basis)"""
    return basis.analyze(remove_mean(g))


@dataclass(frozen=True, eq=False)
class GalerkinBases:
    """Weighted basis W^n, full Neumann cosine basis and the change of basis between them"""

    grid: Grid
    ops: GridOperators
    laplacian: LinOperator
    weighted: SpectralBasis
    neumann: CosineBasis
    change_of_basis: Optional[np.ndarray] = field(default=None)

    @property
    def n(self) -> int:
        return self.weighted.n

    def to_neumann(self, xi: np.ndarray) -> np.ndarray:
        """Neumann-basis coefficients of sum_i xi_i w_i"""
        if self.change_of_basis is not None:
            return self.change_of_basis @ xi
        out = np.zeros((self.neumann.n,) + np.shape(xi)[1:])
        out[: self.n] = xi
        return out

    def neumann_power(self, gamma: float) -> np.ndarray:
        """(xi -> ((-Laplacian_N)^gamma sigma, w_i)) as an n x n matrix, or its diagonal"""
        mu = self.neumann.eigenvalues ** gamma
        if self.change_of_basis is None:
            return mu[: self.n]
        C = self.change_of_basis
        return C.T @ (mu[:, None] * C)


def build_bases(grid: Grid, rho0: Optional[np.ndarray] = None, n_modes: Optional[int] = None,
                method: str = "auto") -> GalerkinBases:
    """Assemble the Galerkin bases for a density field"""
    weight = None
    if rho0 is not None:
        rho0 = np.asarray(rho0, dtype=float).ravel()
        if np.any(~(rho0 > 0)):
            bad = np.unravel_index(int(np.argmax(~(rho0 > 0))), grid.dims)
            raise InputValidationError(f"rho0 must be > 0 at grid index {tuple(int(i) for i in bad)}")
        weight = 1.0 / rho0
    lap = build_laplacian(grid, weight)
    weighted = eigenbasis(lap, n_modes, method)
    neumann = cosine_basis(grid, grid.n_points - 1)
    C = None
    if isinstance(weighted, CosineBasis):
        if not np.array_equal(weighted.flat_index, neumann.flat_index[: weighted.n]):
            raise InputValidationError("weighted and Neumann cosine bases disagree on mode order")
    else:
        C = neumann.analyze(weighted.matrix())
    return GalerkinBases(grid=grid, ops=grid_operators(grid), laplacian=lap,
                         weighted=weighted, neumann=neumann, change_of_basis=C)
