#!/usr/bin/env python3
"""
Graded linear algebra for holab.

Finite-dimensional graded vector spaces, degree-homogeneous block maps,
cochain complexes, and the least-squares exactness solver that decides
equality in End^{-1}(V) modulo the exact elements ∂k − k∂.

Maps are stored blockwise (degree k -> matrix V^k -> W^{k+d}); the dense
embedding orders the basis by ascending degree and is used for the heavy
numerics downstream.
"""

import logging
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
import scipy.linalg as spla

logger = logging.getLogger(__name__)

DEFAULT_EXACTNESS_TOL = 1e-8  # relative, see solve_exactness
ALGEBRAIC_TOL = 1e-10         # exact identities at representative level
SQUARE_ZERO_TOL = 1e-12       # ∂∘∂ tolerance relative to norm(∂)²


class StructuralError(ValueError):
    """Shape, degree or space mismatch between graded objects."""


class GradedVectorSpace:
    """Finite-dimensional ℤ-graded vector space given by dims per degree."""

    def __init__(self, dims: Mapping[int, int]):
        cleaned = {}
        for degree, dim in dims.items():
            degree, dim = int(degree), int(dim)
            if dim < 0:
                raise StructuralError(f"Negative dimension {dim} in degree {degree}")
            if dim > 0:
                cleaned[degree] = dim
        self._dims: Tuple[Tuple[int, int], ...] = tuple(sorted(cleaned.items()))

    @property
    def dims(self) -> Dict[int, int]:
        return dict(self._dims)

    @property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(k for k, _ in self._dims)

    def dim(self, degree: int) -> int:
        return self.dims.get(degree, 0)

    @cached_property
    def total_dim(self) -> int:
        return sum(d for _, d in self._dims)

    @cached_property
    def offsets(self) -> Dict[int, int]:
        offsets, start = {}, 0
        for degree, dim in self._dims:
            offsets[degree] = start
            start += dim
        return offsets

    def slice(self, degree: int) -> slice:
        """Index range of V^degree inside the dense embedding (empty if absent)."""
        if degree not in self.offsets:
            return slice(0, 0)
        start = self.offsets[degree]
        return slice(start, start + self.dim(degree))

    def block_mask(self, target: "GradedVectorSpace", degree: int) -> np.ndarray:
        """Boolean mask of the dense entries a degree-``degree`` map may occupy."""
        mask = np.zeros((target.total_dim, self.total_dim), dtype=bool)
        for k in self.degrees:
            mask[target.slice(k + degree), self.slice(k)] = True
        return mask

    def __eq__(self, other) -> bool:
        return isinstance(other, GradedVectorSpace) and self._dims == other._dims

    def __hash__(self) -> int:
        return hash(self._dims)

    def __repr__(self) -> str:
        return f"GradedVectorSpace({self.dims})"


class GradedLinearMap:
    """Degree-d map between graded spaces, stored as one matrix per source degree."""

    def __init__(self, source: GradedVectorSpace, target: GradedVectorSpace,
                 degree: int, blocks: Optional[Mapping[int, np.ndarray]] = None):
        self.source = source
        self.target = target
        self.degree = int(degree)
        stored = {}
        for k, block in (blocks or {}).items():
            k = int(k)
            rows, cols = target.dim(k + self.degree), source.dim(k)
            if rows == 0 or cols == 0:
                continue
            arr = np.array(block, dtype=float)
            if arr.shape != (rows, cols):
                raise StructuralError(
                    f"Block for degree {k} has shape {arr.shape}, expected ({rows}, {cols})"
                )
            arr.setflags(write=False)
            stored[k] = arr
        self.blocks: Dict[int, np.ndarray] = stored

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, source: GradedVectorSpace, target: GradedVectorSpace, degree: int) -> "GradedLinearMap":
        return cls(source, target, degree, {})

    @classmethod
    def identity(cls, space: GradedVectorSpace) -> "GradedLinearMap":
        return cls(space, space, 0, {k: np.eye(d) for k, d in space.dims.items()})

    @classmethod
    def from_dense(cls, source: GradedVectorSpace, target: GradedVectorSpace,
                   degree: int, matrix: np.ndarray) -> "GradedLinearMap":
        """Extract the degree-``degree`` blocks of a dense matrix; other entries are dropped."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (target.total_dim, source.total_dim):
            raise StructuralError(
                f"Dense matrix has shape {matrix.shape}, expected {(target.total_dim, source.total_dim)}"
            )
        blocks = {}
        for k in source.degrees:
            if target.dim(k + degree):
                blocks[k] = matrix[target.slice(k + degree), source.slice(k)]
        return cls(source, target, degree, blocks)

    # -- views ------------------------------------------------------------

    def block(self, k: int) -> np.ndarray:
        if k in self.blocks:
            return self.blocks[k]
        return np.zeros((self.target.dim(k + self.degree), self.source.dim(k)))

    @cached_property
    def dense(self) -> np.ndarray:
        out = np.zeros((self.target.total_dim, self.source.total_dim))
        for k, block in self.blocks.items():
            out[self.target.slice(k + self.degree), self.source.slice(k)] = block
        out.setflags(write=False)
        return out

    def to_table(self) -> Dict[str, List[List[float]]]:
        """Row-major block table keyed by source degree (report format)."""
        return {str(k): self.block(k).tolist() for k in self.source.degrees
                if self.target.dim(k + self.degree)}

    # -- arithmetic -------------------------------------------------------

    def _check_same_shape(self, other: "GradedLinearMap") -> None:
        if (self.source, self.target, self.degree) != (other.source, other.target, other.degree):
            raise StructuralError(
                f"Cannot combine degree {self.degree} map {self.source}->{self.target} "
                f"with degree {other.degree} map {other.source}->{other.target}"
            )

    def __add__(self, other: "GradedLinearMap") -> "GradedLinearMap":
        self._check_same_shape(other)
        keys = set(self.blocks) | set(other.blocks)
        return GradedLinearMap(self.source, self.target, self.degree,
                               {k: self.block(k) + other.block(k) for k in keys})

    def __sub__(self, other: "GradedLinearMap") -> "GradedLinearMap":
        return self + (-other)

    def __neg__(self) -> "GradedLinearMap":
        return self.scale(-1.0)

    def scale(self, factor: float) -> "GradedLinearMap":
        return GradedLinearMap(self.source, self.target, self.degree,
                               {k: factor * b for k, b in self.blocks.items()})

    def __mul__(self, factor: float) -> "GradedLinearMap":
        return self.scale(factor)

    __rmul__ = __mul__

    def __matmul__(self, other: "GradedLinearMap") -> "GradedLinearMap":
        return compose(self, other)

    def norm(self) -> float:
        return norm(self)

    def allclose(self, other: "GradedLinearMap", atol: float = ALGEBRAIC_TOL) -> bool:
        self._check_same_shape(other)
        return norm(self - other) <= atol

    def __repr__(self) -> str:
        return f"GradedLinearMap(degree={self.degree}, blocks={sorted(self.blocks)})"


def compose(f: GradedLinearMap, g: GradedLinearMap) -> GradedLinearMap:
    """f∘g; degrees add and blocks multiply."""
    if g.target != f.source:
        raise StructuralError(f"Cannot compose: target {g.target} of g differs from source {f.source} of f")
    degree = f.degree + g.degree
    blocks = {}
    for k, gb in g.blocks.items():
        mid = k + g.degree
        if mid in f.blocks:
            blocks[k] = f.blocks[mid] @ gb
    return GradedLinearMap(g.source, f.target, degree, blocks)


def norm(X: GradedLinearMap) -> float:
    """Frobenius norm over all blocks."""
    return float(np.sqrt(sum(float(np.sum(b * b)) for b in X.blocks.values())))


class ExactnessResult:
    """Outcome of solving ∂k − k∂ = X in least squares."""

    __slots__ = ("witness", "residual", "is_exact", "tolerance")

    def __init__(self, witness: GradedLinearMap, residual: float, is_exact: bool, tolerance: float):
        self.witness = witness
        self.residual = residual
        self.is_exact = is_exact
        self.tolerance = tolerance

    def __repr__(self) -> str:
        return f"ExactnessResult(residual={self.residual:.3e}, is_exact={self.is_exact})"


class CochainComplex:
    """A graded space with a degree +1 differential squaring to zero.

    The exactness operator k ↦ ∂k − k∂ on End^{-2}(V) and its pseudoinverse are
    built eagerly so that later solves are pure matrix-vector products.
    """

    def __init__(self, space: GradedVectorSpace, differential: GradedLinearMap):
        if differential.source != space or differential.target != space:
            raise StructuralError("Differential must be an endomorphism of the complex's space")
        if differential.degree != 1:
            raise StructuralError(f"Differential must have degree +1, got {differential.degree}")
        self.space = space
        self.differential = differential
        self.D = differential.dense

        square = norm(compose(differential, differential))
        scale = 1.0 + norm(differential) ** 2
        if square > SQUARE_ZERO_TOL * scale:
            raise StructuralError(f"∂∘∂ ≠ 0 (norm {square:.3e})")
        if square > 0:
            logger.debug(f"∂∘∂ has round-off norm {square:.3e}")

        self._mask_m1 = space.block_mask(space, -1)
        self._mask_m2 = space.block_mask(space, -2)
        self._build_exactness_operator()

    @classmethod
    def from_blocks(cls, dims: Mapping[int, int],
                    differential: Mapping[int, np.ndarray]) -> "CochainComplex":
        space = GradedVectorSpace(dims)
        return cls(space, GradedLinearMap(space, space, 1, differential))

    @property
    def total_dim(self) -> int:
        return self.space.total_dim

    def identity(self) -> GradedLinearMap:
        return GradedLinearMap.identity(self.space)

    def zero(self, degree: int) -> GradedLinearMap:
        return GradedLinearMap.zero(self.space, self.space, degree)

    def from_dense(self, degree: int, matrix: np.ndarray) -> GradedLinearMap:
        return GradedLinearMap.from_dense(self.space, self.space, degree, matrix)

    def mask(self, degree: int) -> np.ndarray:
        if degree == -1:
            return self._mask_m1
        if degree == -2:
            return self._mask_m2
        return self.space.block_mask(self.space, degree)

    # -- exactness ----------------------------------------------------------

    def _build_exactness_operator(self) -> None:
        n = self.total_dim
        m2 = np.flatnonzero(self._mask_m2.ravel())
        m1 = np.flatnonzero(self._mask_m1.ravel())
        columns = []
        for flat in m2:
            E = np.zeros(n * n)
            E[flat] = 1.0
            E = E.reshape(n, n)
            columns.append((self.D @ E - E @ self.D).ravel()[m1])
        self._coords_m2 = m2
        self._coords_m1 = m1
        if columns:
            self._L = np.column_stack(columns)
            self._L_pinv = spla.pinv(self._L)
        else:
            self._L = np.zeros((len(m1), 0))
            self._L_pinv = np.zeros((0, len(m1)))
        logger.debug(f"Exactness operator: {self._L.shape[0]}x{self._L.shape[1]}")

    def exact_residual_dense(self, X: np.ndarray) -> Tuple[float, np.ndarray]:
        """Least-squares residual of a dense degree −1 matrix and the dense witness."""
        x = np.asarray(X, dtype=float).ravel()[self._coords_m1]
        kvec = self._L_pinv @ x
        residual = float(np.linalg.norm(x - self._L @ kvec))
        witness = np.zeros(self.total_dim * self.total_dim)
        witness[self._coords_m2] = kvec
        return residual, witness.reshape(self.total_dim, self.total_dim)

    def solve_exactness(self, X: GradedLinearMap, tol: float = DEFAULT_EXACTNESS_TOL) -> ExactnessResult:
        if X.degree != -1 or X.source != self.space or X.target != self.space:
            raise StructuralError("solve_exactness expects a degree −1 endomorphism of the complex")
        residual, witness = self.exact_residual_dense(X.dense)
        return ExactnessResult(
            witness=self.from_dense(-2, witness),
            residual=residual,
            is_exact=residual <= tol * (1.0 + norm(X)),
            tolerance=tol,
        )

    def commutator(self, X: GradedLinearMap) -> GradedLinearMap:
        """∂X − (−1)^d X∂."""
        sign = -1.0 if X.degree % 2 == 0 else 1.0
        return compose(self.differential, X) + compose(X, self.differential).scale(sign)

    def commutator_dense(self, X: np.ndarray, degree: int) -> np.ndarray:
        sign = -1.0 if degree % 2 == 0 else 1.0
        return self.D @ X + sign * (X @ self.D)

    # -- chain maps -------------------------------------------------------

    def chain_map_residual(self, X: np.ndarray) -> float:
        return float(np.linalg.norm(self.D @ X - X @ self.D))

    @cached_property
    def chain_map_basis(self) -> List[np.ndarray]:
        """Orthonormal basis of degree-0 chain maps as dense matrices."""
        n = self.total_dim
        mask0 = np.flatnonzero(self.mask(0).ravel())
        columns = []
        for flat in mask0:
            E = np.zeros(n * n)
            E[flat] = 1.0
            E = E.reshape(n, n)
            columns.append((self.D @ E - E @ self.D).ravel())
        op = np.column_stack(columns)
        kernel = spla.null_space(op)
        basis = []
        for col in kernel.T:
            M = np.zeros(n * n)
            M[mask0] = col
            basis.append(M.reshape(n, n))
        logger.debug(f"Chain-map space has dimension {len(basis)}")
        return basis

    def __repr__(self) -> str:
        return f"CochainComplex({self.space.dims})"


def graded_commutator_with_differential(complex_: CochainComplex, X: GradedLinearMap) -> GradedLinearMap:
    return complex_.commutator(X)


def solve_exactness(complex_: CochainComplex, X: GradedLinearMap,
                    tol: float = DEFAULT_EXACTNESS_TOL) -> ExactnessResult:
    return complex_.solve_exactness(X, tol)


def _unimodular(rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Random integer matrix with integer inverse (products of elementary moves)."""
    S, S_inv = np.eye(n), np.eye(n)
    if n < 2:
        return S, S_inv
    for _ in range(2 * n):
        i, j = rng.choice(n, size=2, replace=False)
        c = float(rng.choice([-1, 1]))
        E = np.zeros((n, n))
        E[i, j] = c
        S = S @ (np.eye(n) + E)
        S_inv = (np.eye(n) - E) @ S_inv
    return S, S_inv


def random_complex(rng: np.random.Generator, degrees: Iterable[int] = (0, 1, 2),
                   max_dim: int = 3, max_total_dim: int = 12) -> CochainComplex:
    """Seeded random complex with integer differential, so ∂∘∂ vanishes exactly.

    The differential is a normal form J conjugated by unimodular integer
    matrices per degree.
    """
    degrees = sorted(degrees)
    dims: Dict[int, int] = {}
    budget = max_total_dim
    for k in degrees:
        d = int(rng.integers(1, max_dim + 1))
        d = max(1, min(d, budget - (len(degrees) - len(dims) - 1)))
        dims[k] = d
        budget -= d

    ranks: Dict[int, int] = {}
    previous = 0
    for k in degrees[:-1]:
        bound = min(dims[k] - previous, dims.get(k + 1, 0))
        ranks[k] = int(rng.integers(0, bound + 1)) if bound > 0 else 0
        previous = ranks[k]

    changes = {k: _unimodular(rng, dims[k]) for k in degrees}
    blocks = {}
    for k, r in ranks.items():
        if k + 1 not in dims:
            continue
        J = np.zeros((dims[k + 1], dims[k]))
        for i in range(r):
            J[i, dims[k] - r + i] = 1.0
        S_next, _ = changes[k + 1]
        _, S_inv = changes[k]
        blocks[k] = S_next @ J @ S_inv
    return CochainComplex.from_blocks(dims, blocks)
