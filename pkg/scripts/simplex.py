#!/usr/bin/env python3
"""
Parameter-domain geometry for holonomy.

Paths are chains of polynomial segments [0,1] → chart. 2-simplices are
polynomial maps on Δ₂ = {1 ≥ t₁ ≥ t₂ ≥ 0} with vertices v₀ = (0,0),
v₁ = (1,0), v₂ = (1,1). Folding the square onto Δ₂ with Θ₂ turns a simplex
into a fixed-ends bigon whose horizontal fibers run from v₂ (t = 0) to
v₀ (t = 1) and split into three smooth pieces.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from forms import Chart, PolynomialField
from graded_core import StructuralError

logger = logging.getLogger(__name__)

CONTINUITY_TOL = 1e-12


def _t(nvars: int = 1, index: int = 0) -> PolynomialField:
    return PolynomialField.variable(nvars, index)


def _const(nvars: int, value: float) -> PolynomialField:
    return PolynomialField.constant(nvars, value)


# -- paths ------------------------------------------------------------------

class PathSegment:
    """Polynomial map [0,1] → ℝⁿ stored as a vector-valued polynomial in t."""

    def __init__(self, field: PolynomialField):
        if field.nvars != 1 or len(field.shape) != 1:
            raise StructuralError(f"Path segment needs a vector polynomial in one variable, got {field}")
        self.field = field
        self._velocity = field.derivative(0)

    @classmethod
    def line(cls, start: Sequence[float], end: Sequence[float]) -> "PathSegment":
        start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
        return cls(PolynomialField.constant(1, start) + _t().tensor(end - start))

    @classmethod
    def from_coefficients(cls, coefficients: Sequence[Sequence[float]]) -> "PathSegment":
        """Row k holds the coefficient vector of t^k."""
        coeffs = np.asarray(coefficients, dtype=float)
        return cls(PolynomialField(1, np.arange(coeffs.shape[0])[:, None], coeffs))

    @property
    def dim(self) -> int:
        return self.field.shape[0]

    def point(self, ts: np.ndarray) -> np.ndarray:
        return self.field.evaluate_many(np.asarray(ts, dtype=float).reshape(-1, 1))

    def velocity(self, ts: np.ndarray) -> np.ndarray:
        return self._velocity.evaluate_many(np.asarray(ts, dtype=float).reshape(-1, 1))

    @property
    def start(self) -> np.ndarray:
        return self.field.evaluate([0.0])

    @property
    def end(self) -> np.ndarray:
        return self.field.evaluate([1.0])

    def reparametrized(self, a: float, b: float) -> "PathSegment":
        """The segment t ↦ p(a + (b − a)t)."""
        return PathSegment(self.field.substitute([_const(1, a) + _t().scale(b - a)]))

    def reversed(self) -> "PathSegment":
        return self.reparametrized(1.0, 0.0)


class PLPath:
    """Concatenation of polynomial segments, each traversed over its own unit interval."""

    def __init__(self, segments: Sequence[PathSegment]):
        segments = list(segments)
        if not segments:
            raise StructuralError("A path needs at least one segment")
        dims = {seg.dim for seg in segments}
        if len(dims) != 1:
            raise StructuralError(f"Segments of mixed dimensions {sorted(dims)}")
        for i, (a, b) in enumerate(zip(segments, segments[1:])):
            gap = float(np.linalg.norm(a.end - b.start))
            if gap > CONTINUITY_TOL * (1.0 + np.linalg.norm(a.end)):
                raise StructuralError(f"Path is discontinuous between segments {i} and {i + 1} (gap {gap:.3e})")
        self.segments: List[PathSegment] = segments

    @classmethod
    def through(cls, points: Sequence[Sequence[float]]) -> "PLPath":
        points = [np.asarray(p, dtype=float) for p in points]
        if len(points) < 2:
            raise StructuralError("A polygonal path needs at least two points")
        return cls([PathSegment.line(a, b) for a, b in zip(points, points[1:])])

    @classmethod
    def constant(cls, point: Sequence[float]) -> "PLPath":
        return cls([PathSegment.line(point, point)])

    @property
    def dim(self) -> int:
        return self.segments[0].dim

    @property
    def start(self) -> np.ndarray:
        return self.segments[0].start

    @property
    def end(self) -> np.ndarray:
        return self.segments[-1].end

    def reversed(self) -> "PLPath":
        return PLPath([seg.reversed() for seg in reversed(self.segments)])

    def concat(self, other: "PLPath") -> "PLPath":
        """This path followed by ``other``."""
        return PLPath(self.segments + other.segments)

    def split_at(self, index: int, u: float) -> "PLPath":
        """Split segment ``index`` at parameter u into two exactly reparametrized pieces."""
        if not 0.0 < u < 1.0:
            raise StructuralError(f"Split parameter must lie in (0, 1), got {u}")
        seg = self.segments[index]
        pieces = [seg.reparametrized(0.0, u), seg.reparametrized(u, 1.0)]
        return PLPath(self.segments[:index] + pieces + self.segments[index + 1:])

    def sample(self, per_segment: int = 9) -> np.ndarray:
        ts = np.linspace(0.0, 1.0, per_segment)
        return np.concatenate([seg.point(ts) for seg in self.segments])

    def shifted(self, delta: Sequence[float]) -> "PLPath":
        delta = np.asarray(delta, dtype=float)
        return PLPath([PathSegment(seg.field + PolynomialField.constant(1, delta)) for seg in self.segments])

    def __len__(self) -> int:
        return len(self.segments)


# -- 2-simplices ------------------------------------------------------------------

Face = Union[np.ndarray, PLPath, "Simplex2"]


class Simplex2:
    """Polynomial map σ: Δ₂ → ℝⁿ in coordinates (t₁, t₂) with 1 ≥ t₁ ≥ t₂ ≥ 0."""

    def __init__(self, field: PolynomialField, kind: str = "polynomial"):
        if field.nvars != 2 or len(field.shape) != 1:
            raise StructuralError(f"A 2-simplex needs a vector polynomial in two variables, got {field}")
        self.field = field
        self.kind = kind
        self._partials = (field.derivative(0), field.derivative(1))

    @classmethod
    def affine(cls, v0: Sequence[float], v1: Sequence[float], v2: Sequence[float]) -> "Simplex2":
        """σ(t₁,t₂) = v₀ + t₁(v₁ − v₀) + t₂(v₂ − v₁)."""
        v0, v1, v2 = (np.asarray(v, dtype=float) for v in (v0, v1, v2))
        field = (PolynomialField.constant(2, v0) + _t(2, 0).tensor(v1 - v0) + _t(2, 1).tensor(v2 - v1))
        return cls(field, "affine")

    @classmethod
    def degenerate(cls, segment: PathSegment) -> "Simplex2":
        """σ(t₁,t₂) = γ(t₁); factors through the edge γ."""
        return cls(segment.field.substitute([_t(2, 0)]), "degenerate")

    @property
    def dim(self) -> int:
        return self.field.shape[0]

    def point(self, q: np.ndarray) -> np.ndarray:
        return self.field.evaluate_many(np.asarray(q, dtype=float).reshape(-1, 2))

    def jacobian(self, q: np.ndarray) -> np.ndarray:
        """(m, n, 2) array of ∂σ/∂t₁, ∂σ/∂t₂."""
        q = np.asarray(q, dtype=float).reshape(-1, 2)
        return np.stack([p.evaluate_many(q) for p in self._partials], axis=2)

    def vertices(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.point(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]))
        return v[0], v[1], v[2]

    def face(self, i: int) -> PLPath:
        """d₀σ(t) = σ(1,t), d₁σ(t) = σ(t,t), d₂σ(t) = σ(t,0)."""
        t = _t()
        one, zero = _const(1, 1.0), _const(1, 0.0)
        substitutions = {0: [one, t], 1: [t, t], 2: [t, zero]}
        if i not in substitutions:
            raise StructuralError(f"Face index must be 0, 1 or 2, got {i}")
        return PLPath([PathSegment(self.field.substitute(substitutions[i]))])

    def front_back(self, i: int) -> Tuple[Face, Face]:
        """(Q_i σ, P_i σ): the front i-face spanned by v₀..v_i and the back face spanned by v_i..v₂."""
        v0, _, v2 = self.vertices()
        if i == 0:
            return v0, v2
        if i == 1:
            return self.face(2), self.face(0)
        if i == 2:
            return self, self
        raise StructuralError(f"front_back index must be 0, 1 or 2, got {i}")

    def reparametrized(self, strength: float = 0.5) -> "Simplex2":
        """σ∘ρ with ρ(t₁,t₂) = (t₁ + εb, t₂ + εb), b = t₂(1 − t₁)(t₁ − t₂).

        ρ maps Δ₂ onto itself and fixes its boundary pointwise for 0 ≤ ε ≤ 1.
        """
        if not 0.0 <= strength <= 1.0:
            raise StructuralError(f"Reparametrization strength must lie in [0, 1], got {strength}")
        t1, t2 = _t(2, 0), _t(2, 1)
        bump = (t2 * (_const(2, 1.0) - t1) * (t1 - t2)).scale(strength)
        return Simplex2(self.field.substitute([t1 + bump, t2 + bump]), "reparametrized")

    def domain_samples(self, count: int = 10) -> np.ndarray:
        grid = np.linspace(0.0, 1.0, count)
        return np.array([(a, b) for a in grid for b in grid if b <= a])

    def inside(self, chart: Chart, count: int = 10) -> bool:
        return chart.contains(self.point(self.domain_samples(count)))

    def shares_boundary(self, other: "Simplex2", count: int = 17, tol: float = 1e-10) -> bool:
        ts = np.linspace(0.0, 1.0, count)
        for i in range(3):
            a = self.face(i).segments[0].point(ts)
            b = other.face(i).segments[0].point(ts)
            if np.max(np.abs(a - b)) > tol:
                return False
        return True


def signed_area(sigma: Simplex2, axes: Tuple[int, int] = (0, 1), nodes: int = 32) -> float:
    """∫_{Δ₂} det[∂σ/∂t₁, ∂σ/∂t₂] restricted to two coordinate axes."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    # Duffy map (a, b) ↦ (a, a·b), Jacobian a
    A, B = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w) * A
    q = np.stack([A.ravel(), (A * B).ravel()], axis=1)
    J = sigma.jacobian(q)[:, list(axes), :]
    return float(np.sum(W.ravel() * np.linalg.det(J)))


# -- Θ₂ and bigons ----------------------------------------------------------------

def theta2(t, s) -> np.ndarray:
    """Θ₂(t,s) = q(λ(t,s)), λ(t,s) = (s, 1−2t) for t ≤ ½ and (2(1−t)s, 0) after; q(a,b) = (max(a,b), b)."""
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    first = t <= 0.5
    a = np.where(first, s, 2.0 * (1.0 - t) * s)
    b = np.where(first, 1.0 - 2.0 * t, 0.0)
    return np.stack([np.maximum(a, b), b], axis=-1)


@dataclass(frozen=True)
class FiberPiece:
    """One smooth piece of the fiber t ↦ Θ₂(t, s) for fixed s."""
    name: str
    t0: float
    t1: float
    s: float

    @property
    def length(self) -> float:
        return self.t1 - self.t0

    def domain(self, ts: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """q(t), ∂q/∂t and ∂q/∂s in Δ₂ coordinates."""
        ts = np.asarray(ts, dtype=float)
        m, s = ts.size, self.s
        if self.name == "diagonal":
            q = np.stack([1.0 - 2.0 * ts, 1.0 - 2.0 * ts], axis=1)
            dq_dt = np.tile([-2.0, -2.0], (m, 1))
            dq_ds = np.zeros((m, 2))
        elif self.name == "vertical":
            q = np.stack([np.full(m, s), 1.0 - 2.0 * ts], axis=1)
            dq_dt = np.tile([0.0, -2.0], (m, 1))
            dq_ds = np.tile([1.0, 0.0], (m, 1))
        else:
            q = np.stack([2.0 * (1.0 - ts) * s, np.zeros(m)], axis=1)
            dq_dt = np.tile([-2.0 * s, 0.0], (m, 1))
            dq_ds = np.stack([2.0 * (1.0 - ts), np.zeros(m)], axis=1)
        return q, dq_dt, dq_ds


class Bigon:
    """Σ = σ∘Θ₂: fixed-ends homotopy from the long edge (s = 0) to the two-edge path (s = 1)."""

    def __init__(self, sigma: Simplex2):
        self.sigma = sigma

    def point(self, t, s) -> np.ndarray:
        q = theta2(t, s)
        return self.sigma.point(q.reshape(-1, 2)).reshape(q.shape[:-1] + (self.sigma.dim,))

    @staticmethod
    def pieces(s: float) -> List[FiberPiece]:
        """Smooth pieces of the fiber at s; the vertical piece carries all ∂_s-transverse area."""
        knee = 0.5 * (1.0 - s)
        return [FiberPiece("diagonal", 0.0, knee, s),
                FiberPiece("vertical", knee, 0.5, s),
                FiberPiece("horizontal", 0.5, 1.0, s)]

    def fiber(self, piece: FiberPiece, ts: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Points Σ(t,s), ∂_tΣ and ∂_sΣ at times ``ts`` inside ``piece``."""
        q, dq_dt, dq_ds = piece.domain(ts)
        J = self.sigma.jacobian(q)
        return self.sigma.point(q), np.einsum("mij,mj->mi", J, dq_dt), np.einsum("mij,mj->mi", J, dq_ds)

    def boundary_paths(self) -> Tuple[PLPath, PLPath]:
        """(Σ(·,0), Σ(·,1)) up to reparametrization: v₂→v₀ diagonally, and v₂→v₁→v₀."""
        long_edge = self.sigma.face(1).reversed()
        v0 = self.sigma.vertices()[0]
        bottom = long_edge.concat(PLPath.constant(v0))
        top = self.sigma.face(0).reversed().concat(self.sigma.face(2).reversed())
        return bottom, top

    def fixed_ends_defect(self, count: int = 33) -> float:
        s = np.linspace(0.0, 1.0, count)
        v0, _, v2 = self.sigma.vertices()
        start = self.point(np.zeros_like(s), s)
        end = self.point(np.ones_like(s), s)
        return float(max(np.max(np.abs(start - v2)), np.max(np.abs(end - v0))))


def bigon_from_simplex(sigma: Simplex2) -> Bigon:
    bigon = Bigon(sigma)
    defect = bigon.fixed_ends_defect()
    if defect > CONTINUITY_TOL * (1.0 + float(np.max(np.abs(sigma.field.coeffs), initial=0.0))):
        raise StructuralError(f"σ∘Θ₂ does not fix its ends (defect {defect:.3e})")
    return bigon
