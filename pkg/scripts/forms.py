#!/usr/bin/env python3
"""
Polynomial differential forms with values in graded endomorphisms.

Coefficients are array-valued polynomials (PolynomialField) in the chart
coordinates; an EndValuedForm stores one matrix polynomial per strictly
increasing index tuple. Products follow the Koszul rule

    (α⊗A) ∧ (β⊗B) = (−1)^{|A|·|β|} (α∧β) ⊗ (A∘B),

which is the composition of the corresponding operators on End-valued
forms. A superconnection stores ∂ = ω⁰ together with ω¹, ω², ω³; the flat
operator is d + X with X = −∂ + ω¹ + ω² − ω³, and flatness_residuals
evaluates the three component identities of dX + X∧X = 0.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from crossed_module import CrossedModuleContext, random_g
from graded_core import CochainComplex, GradedLinearMap, GradedVectorSpace, StructuralError

logger = logging.getLogger(__name__)

Index = Tuple[int, ...]


# -- polynomial coefficients -----------------------------------------------------

class PolynomialField:
    """Polynomial in ``nvars`` variables with array coefficients of a fixed shape.

    Terms are kept canonical: unique exponent rows in lexicographic order,
    no identically zero coefficient.
    """

    def __init__(self, nvars: int, exps: np.ndarray, coeffs: np.ndarray):
        self.nvars = int(nvars)
        exps = np.asarray(exps, dtype=np.int64).reshape(-1, self.nvars)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != exps.shape[0]:
            raise StructuralError(f"{exps.shape[0]} exponents but {coeffs.shape[0]} coefficients")
        if np.any(exps < 0):
            raise StructuralError("Negative exponent in polynomial")
        self.shape: Tuple[int, ...] = tuple(coeffs.shape[1:])

        if exps.shape[0]:
            unique, inverse = np.unique(exps, axis=0, return_inverse=True)
            summed = np.zeros((unique.shape[0],) + self.shape)
            np.add.at(summed, inverse.reshape(-1), coeffs)
            keep = np.any(summed.reshape(unique.shape[0], -1) != 0.0, axis=1)
            exps, coeffs = unique[keep], summed[keep]
        exps.setflags(write=False)
        coeffs.setflags(write=False)
        self.exps = exps
        self.coeffs = coeffs

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, nvars: int, shape: Tuple[int, ...] = ()) -> "PolynomialField":
        return cls(nvars, np.zeros((0, nvars), dtype=np.int64), np.zeros((0,) + tuple(shape)))

    @classmethod
    def constant(cls, nvars: int, value) -> "PolynomialField":
        value = np.asarray(value, dtype=float)
        return cls(nvars, np.zeros((1, nvars), dtype=np.int64), value[None])

    @classmethod
    def monomial(cls, nvars: int, exponent: Sequence[int], value=1.0) -> "PolynomialField":
        value = np.asarray(value, dtype=float)
        return cls(nvars, np.asarray([exponent], dtype=np.int64), value[None])

    @classmethod
    def variable(cls, nvars: int, index: int) -> "PolynomialField":
        exponent = [0] * nvars
        exponent[index] = 1
        return cls.monomial(nvars, exponent)

    @classmethod
    def from_table(cls, nvars: int, table: Mapping[str, float]) -> "PolynomialField":
        """Scalar polynomial from a ``{"i,j": coefficient}`` table."""
        exps, coeffs = [], []
        for key, value in table.items():
            parts = [p for p in str(key).split(",") if p.strip() != ""] if nvars else []
            if len(parts) != nvars:
                raise StructuralError(f"Multi-index '{key}' does not have {nvars} entries")
            exps.append([int(p) for p in parts])
            coeffs.append(float(value))
        if not exps:
            return cls.zero(nvars)
        return cls(nvars, np.asarray(exps, dtype=np.int64), np.asarray(coeffs))

    @classmethod
    def from_entries(cls, nvars: int, entries: Sequence[Sequence["PolynomialField"]]) -> "PolynomialField":
        """Matrix polynomial from a nested list of scalar polynomials."""
        rows, cols = len(entries), len(entries[0]) if entries else 0
        exps, coeffs = [], []
        for r, row in enumerate(entries):
            if len(row) != cols:
                raise StructuralError("Ragged matrix of polynomials")
            for c, entry in enumerate(row):
                for e, value in zip(entry.exps, entry.coeffs):
                    block = np.zeros((rows, cols))
                    block[r, c] = value
                    exps.append(e)
                    coeffs.append(block)
        if not exps:
            return cls.zero(nvars, (rows, cols))
        return cls(nvars, np.asarray(exps, dtype=np.int64), np.asarray(coeffs))

    def to_table(self) -> Dict[str, float]:
        if self.shape:
            raise StructuralError("to_table is defined for scalar polynomials")
        return {",".join(str(int(v)) for v in e): float(c) for e, c in zip(self.exps, self.coeffs)}

    def entry(self, *index: int) -> "PolynomialField":
        return PolynomialField(self.nvars, self.exps, self.coeffs[(slice(None),) + tuple(index)])

    # -- properties -------------------------------------------------------

    @property
    def nterms(self) -> int:
        return int(self.exps.shape[0])

    @property
    def is_zero(self) -> bool:
        return self.nterms == 0

    @property
    def degree(self) -> int:
        return int(self.exps.sum(axis=1).max()) if self.nterms else 0

    # -- arithmetic -------------------------------------------------------

    def _check_compatible(self, other: "PolynomialField") -> None:
        if other.nvars != self.nvars:
            raise StructuralError(f"Polynomials in {self.nvars} and {other.nvars} variables")

    def __add__(self, other: "PolynomialField") -> "PolynomialField":
        self._check_compatible(other)
        if other.shape != self.shape:
            raise StructuralError(f"Cannot add polynomials of shapes {self.shape} and {other.shape}")
        return PolynomialField(self.nvars, np.concatenate([self.exps, other.exps]),
                               np.concatenate([self.coeffs, other.coeffs]))

    def __sub__(self, other: "PolynomialField") -> "PolynomialField":
        return self + (-other)

    def __neg__(self) -> "PolynomialField":
        return self.scale(-1.0)

    def scale(self, factor: float) -> "PolynomialField":
        return PolynomialField(self.nvars, self.exps, factor * self.coeffs)

    def _pairwise(self, other: "PolynomialField", coeffs: np.ndarray) -> "PolynomialField":
        exps = (self.exps[:, None, :] + other.exps[None, :, :]).reshape(-1, self.nvars)
        return PolynomialField(self.nvars, exps, coeffs.reshape((exps.shape[0],) + coeffs.shape[2:]))

    def __mul__(self, other) -> "PolynomialField":
        """Elementwise product with broadcasting; numbers scale."""
        if not isinstance(other, PolynomialField):
            return self.scale(float(other))
        self._check_compatible(other)
        if self.is_zero or other.is_zero:
            shape = np.broadcast_shapes(self.shape, other.shape)
            return PolynomialField.zero(self.nvars, shape)
        a = self.coeffs.reshape((self.nterms, 1) + self.shape)
        b = other.coeffs.reshape((1, other.nterms) + other.shape)
        return self._pairwise(other, a * b)

    __rmul__ = __mul__

    def __matmul__(self, other: "PolynomialField") -> "PolynomialField":
        self._check_compatible(other)
        if len(self.shape) != 2 or len(other.shape) != 2 or self.shape[1] != other.shape[0]:
            raise StructuralError(f"Cannot matrix-multiply shapes {self.shape} and {other.shape}")
        if self.is_zero or other.is_zero:
            return PolynomialField.zero(self.nvars, (self.shape[0], other.shape[1]))
        return self._pairwise(other, np.einsum("aij,bjk->abik", self.coeffs, other.coeffs))

    def map_coeffs(self, fn) -> "PolynomialField":
        """Apply a linear map to every coefficient array."""
        if self.is_zero:
            trial = np.asarray(fn(np.zeros(self.shape)))
            return PolynomialField.zero(self.nvars, trial.shape)
        return PolynomialField(self.nvars, self.exps, np.stack([fn(c) for c in self.coeffs]))

    def tensor(self, value) -> "PolynomialField":
        """Scalar polynomial times a constant array."""
        if self.shape:
            raise StructuralError("tensor expects a scalar polynomial")
        value = np.asarray(value, dtype=float)
        return PolynomialField(self.nvars, self.exps,
                               self.coeffs.reshape((-1,) + (1,) * value.ndim) * value[None])

    # -- calculus -----------------------------------------------------------

    def derivative(self, axis: int) -> "PolynomialField":
        powers = self.exps[:, axis]
        keep = powers > 0
        exps = self.exps[keep].copy()
        exps[:, axis] -= 1
        factors = powers[keep].astype(float).reshape((-1,) + (1,) * len(self.shape))
        return PolynomialField(self.nvars, exps, self.coeffs[keep] * factors)

    def shift(self, delta: Sequence[float]) -> "PolynomialField":
        """The polynomial x ↦ p(x + delta)."""
        delta = np.asarray(delta, dtype=float)
        exps, coeffs = [], []
        for e, c in zip(self.exps, self.coeffs):
            for k in product(*(range(int(ei) + 1) for ei in e)):
                factor = 1.0
                for ei, ki, di in zip(e, k, delta):
                    factor *= math.comb(int(ei), ki) * di ** (int(ei) - ki)
                if factor != 0.0:
                    exps.append(k)
                    coeffs.append(factor * c)
        if not exps:
            return PolynomialField.zero(self.nvars, self.shape)
        return PolynomialField(self.nvars, np.asarray(exps, dtype=np.int64), np.asarray(coeffs))

    def substitute(self, fields: Sequence["PolynomialField"]) -> "PolynomialField":
        """Compose with scalar polynomials ``fields`` (one per variable)."""
        if len(fields) != self.nvars:
            raise StructuralError(f"Need {self.nvars} substitutions, got {len(fields)}")
        nvars = fields[0].nvars
        one = PolynomialField.constant(nvars, 1.0)
        powers: Dict[Tuple[int, int], PolynomialField] = {}

        def power(i: int, k: int) -> PolynomialField:
            if k == 0:
                return one
            if (i, k) not in powers:
                powers[(i, k)] = power(i, k - 1) * fields[i]
            return powers[(i, k)]

        result = PolynomialField.zero(nvars, self.shape)
        for e, c in zip(self.exps, self.coeffs):
            term = one
            for i, k in enumerate(e):
                term = term * power(i, int(k))
            result = result + term.tensor(c)
        return result

    # -- evaluation ---------------------------------------------------------

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.nvars)
        if self.is_zero:
            return np.zeros((points.shape[0],) + self.shape)
        monomials = np.prod(points[:, None, :] ** self.exps[None, :, :], axis=2)
        return np.tensordot(monomials, self.coeffs, axes=(1, 0))

    def evaluate(self, x: Sequence[float]) -> np.ndarray:
        return self.evaluate_many(np.asarray(x, dtype=float)[None])[0]

    def __repr__(self) -> str:
        return f"PolynomialField(nvars={self.nvars}, shape={self.shape}, terms={self.nterms})"


def random_polynomial(nvars: int, degree: int, rng: np.random.Generator,
                      scale: float = 1.0, shape: Tuple[int, ...] = (),
                      constant_term: bool = True) -> PolynomialField:
    """All monomials of total degree ≤ ``degree`` with normal coefficients."""
    exps = [e for e in product(range(degree + 1), repeat=nvars)
            if sum(e) <= degree and (constant_term or sum(e) > 0)]
    if not exps:
        return PolynomialField.zero(nvars, shape)
    coeffs = scale * rng.normal(size=(len(exps),) + tuple(shape))
    return PolynomialField(nvars, np.asarray(exps, dtype=np.int64), coeffs)


# -- charts and sampling --------------------------------------------------------

@dataclass(frozen=True)
class Chart:
    dim: int
    box: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if self.dim < 1:
            raise StructuralError(f"Chart dimension must be positive, got {self.dim}")
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if len(box) != self.dim:
            raise StructuralError(f"Chart box has {len(box)} axes for dimension {self.dim}")
        for axis, (lo, hi) in enumerate(box):
            if not lo < hi:
                raise StructuralError(f"Empty interval [{lo}, {hi}] on axis {axis}")
        object.__setattr__(self, "box", box)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.box])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.box])

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> bool:
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return bool(np.all(points >= self.lower - tol) and np.all(points <= self.upper + tol))


def sample_points(lower: Sequence[float], upper: Sequence[float], count: int,
                  offset: int = 0) -> np.ndarray:
    """Deterministic Halton points in a box; ``offset`` skips a prefix of the sequence."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    sampler = qmc.Halton(d=lower.size, scramble=False)
    sampler.fast_forward(1 + offset)
    unit = sampler.random(count)
    span = upper - lower
    # qmc.scale rejects degenerate axes, which overlaps may have
    return lower + unit * np.where(span > 0, span, 0.0)


def chart_samples(chart: Chart, count: int, offset: int = 0) -> np.ndarray:
    return sample_points(chart.lower, chart.upper, count, offset)


# -- End-valued forms -------------------------------------------------------------

def _merge_sign(I: Index, J: Index) -> int:
    inversions = sum(1 for i in I for j in J if j < i)
    return -1 if inversions % 2 else 1


class EndValuedForm:
    """k-form on a chart with coefficients in End^d(V)."""

    def __init__(self, space: GradedVectorSpace, nvars: int, form_degree: int, inner_degree: int,
                 components: Optional[Mapping[Index, PolynomialField]] = None):
        self.space = space
        self.nvars = int(nvars)
        self.form_degree = int(form_degree)
        self.inner_degree = int(inner_degree)
        n = space.total_dim
        mask = space.block_mask(space, self.inner_degree)
        stored: Dict[Index, PolynomialField] = {}
        for index, field in (components or {}).items():
            index = tuple(int(i) for i in index)
            if len(index) != self.form_degree:
                raise StructuralError(f"Index {index} does not match form degree {self.form_degree}")
            if any(b <= a for a, b in zip(index, index[1:])):
                raise StructuralError(f"Index {index} is not strictly increasing")
            if index and (index[0] < 0 or index[-1] >= self.nvars):
                raise StructuralError(f"Index {index} out of range for {self.nvars} variables")
            if field.nvars != self.nvars or field.shape != (n, n):
                raise StructuralError(f"Component {index} has shape {field.shape}, expected {(n, n)}")
            field = field.map_coeffs(lambda c: np.where(mask, c, 0.0))
            if not field.is_zero:
                stored[index] = field
        self.components: Dict[Index, PolynomialField] = stored

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, space: GradedVectorSpace, nvars: int, form_degree: int, inner_degree: int) -> "EndValuedForm":
        return cls(space, nvars, form_degree, inner_degree, {})

    @classmethod
    def constant(cls, space: GradedVectorSpace, nvars: int, form_degree: int, inner_degree: int,
                 components: Mapping[Index, np.ndarray]) -> "EndValuedForm":
        return cls(space, nvars, form_degree, inner_degree,
                   {I: PolynomialField.constant(nvars, M) for I, M in components.items()})

    @classmethod
    def function(cls, space: GradedVectorSpace, field: PolynomialField, inner_degree: int = 0) -> "EndValuedForm":
        """A 0-form."""
        return cls(space, field.nvars, 0, inner_degree, {(): field})

    # -- views ------------------------------------------------------------

    def component(self, index: Index) -> PolynomialField:
        n = self.space.total_dim
        return self.components.get(tuple(index), PolynomialField.zero(self.nvars, (n, n)))

    @property
    def is_zero(self) -> bool:
        return not self.components

    @property
    def degree(self) -> int:
        return max((f.degree for f in self.components.values()), default=0)

    def _like(self, components: Mapping[Index, PolynomialField]) -> "EndValuedForm":
        return EndValuedForm(self.space, self.nvars, self.form_degree, self.inner_degree, components)

    # -- evaluation ---------------------------------------------------------

    def evaluate_many(self, points: np.ndarray, vectors: Sequence[np.ndarray] = ()) -> np.ndarray:
        """Dense values at ``points`` (m, n) on per-point tangent vectors, shape (m, N, N)."""
        if len(vectors) != self.form_degree:
            raise StructuralError(f"A {self.form_degree}-form needs {self.form_degree} vectors, got {len(vectors)}")
        points = np.asarray(points, dtype=float).reshape(-1, self.nvars)
        m, n = points.shape[0], self.space.total_dim
        out = np.zeros((m, n, n))
        if not self.components:
            return out
        if self.form_degree:
            V = np.stack([np.broadcast_to(np.asarray(v, dtype=float), (m, self.nvars)) for v in vectors], axis=2)
        for index, field in self.components.items():
            values = field.evaluate_many(points)
            if self.form_degree:
                det = np.linalg.det(V[:, list(index), :])
                values = values * det[:, None, None]
            out += values
        return out

    def eval(self, x: Sequence[float], *vectors: Sequence[float]) -> GradedLinearMap:
        dense = self.evaluate_many(np.asarray(x, dtype=float)[None],
                                   [np.asarray(v, dtype=float)[None] for v in vectors])[0]
        return GradedLinearMap.from_dense(self.space, self.space, self.inner_degree, dense)

    def component_values(self, points: np.ndarray) -> Dict[Index, np.ndarray]:
        return {I: f.evaluate_many(points) for I, f in self.components.items()}

    # -- algebra ----------------------------------------------------------

    def _check_same_kind(self, other: "EndValuedForm") -> None:
        if (self.space, self.nvars, self.form_degree, self.inner_degree) != \
                (other.space, other.nvars, other.form_degree, other.inner_degree):
            raise StructuralError(
                f"Cannot combine ({self.form_degree}-form, inner {self.inner_degree}) "
                f"with ({other.form_degree}-form, inner {other.inner_degree})"
            )

    def __add__(self, other: "EndValuedForm") -> "EndValuedForm":
        self._check_same_kind(other)
        merged = dict(self.components)
        for I, f in other.components.items():
            merged[I] = merged[I] + f if I in merged else f
        return self._like(merged)

    def __sub__(self, other: "EndValuedForm") -> "EndValuedForm":
        return self + (-other)

    def __neg__(self) -> "EndValuedForm":
        return self.scale(-1.0)

    def scale(self, factor: float) -> "EndValuedForm":
        return self._like({I: f.scale(factor) for I, f in self.components.items()})

    def premultiply(self, matrix: np.ndarray, degree: int) -> "EndValuedForm":
        """Plain product M∘ω for a constant degree-``degree`` matrix M."""
        M = np.asarray(matrix, dtype=float)
        return EndValuedForm(self.space, self.nvars, self.form_degree, self.inner_degree + degree,
                             {I: f.map_coeffs(lambda c: M @ c) for I, f in self.components.items()})

    def postmultiply(self, matrix: np.ndarray, degree: int) -> "EndValuedForm":
        """Plain product ω∘M for a constant degree-``degree`` matrix M."""
        M = np.asarray(matrix, dtype=float)
        return EndValuedForm(self.space, self.nvars, self.form_degree, self.inner_degree + degree,
                             {I: f.map_coeffs(lambda c: c @ M) for I, f in self.components.items()})

    def shift(self, delta: Sequence[float]) -> "EndValuedForm":
        """Pull back along x ↦ x + delta (change of chart origin)."""
        return self._like({I: f.shift(delta) for I, f in self.components.items()})

    def __repr__(self) -> str:
        return (f"EndValuedForm(form_degree={self.form_degree}, inner_degree={self.inner_degree}, "
                f"components={sorted(self.components)})")


def exterior_d(form: EndValuedForm) -> EndValuedForm:
    """d acting on coefficients: d(f dx_I) = Σ_j ∂_j f dx_j ∧ dx_I."""
    out: Dict[Index, PolynomialField] = {}
    for I, field in form.components.items():
        for j in range(form.nvars):
            if j in I:
                continue
            partial = field.derivative(j)
            if partial.is_zero:
                continue
            sign = -1.0 if sum(1 for i in I if i < j) % 2 else 1.0
            J = tuple(sorted(I + (j,)))
            term = partial.scale(sign)
            out[J] = out[J] + term if J in out else term
    return EndValuedForm(form.space, form.nvars, form.form_degree + 1, form.inner_degree, out)


def wedge_compose(a: EndValuedForm, b: EndValuedForm) -> EndValuedForm:
    """(α⊗A)∧(β⊗B) = (−1)^{|A||β|}(α∧β)⊗(A∘B)."""
    if a.space != b.space or a.nvars != b.nvars:
        raise StructuralError("wedge_compose needs forms on the same complex and chart")
    koszul = -1.0 if (a.inner_degree * b.form_degree) % 2 else 1.0
    out: Dict[Index, PolynomialField] = {}
    for I, fa in a.components.items():
        for J, fb in b.components.items():
            if set(I) & set(J):
                continue
            K = tuple(sorted(I + J))
            term = (fa @ fb).scale(koszul * _merge_sign(I, J))
            out[K] = out[K] + term if K in out else term
    return EndValuedForm(a.space, a.nvars, a.form_degree + b.form_degree,
                         a.inner_degree + b.inner_degree, out)


# -- superconnections -------------------------------------------------------------

@dataclass(frozen=True)
class Superconnection:
    chart: Chart
    complex: CochainComplex
    omega1: EndValuedForm
    omega2: EndValuedForm
    omega3: Optional[EndValuedForm] = None

    def __post_init__(self):
        expected = {"omega1": (1, 0), "omega2": (2, -1), "omega3": (3, -2)}
        for name, (k, d) in expected.items():
            form = getattr(self, name)
            if form is None:
                continue
            if (form.form_degree, form.inner_degree) != (k, d):
                raise StructuralError(
                    f"{name} must be a {k}-form of inner degree {d}, "
                    f"got a {form.form_degree}-form of inner degree {form.inner_degree}"
                )
            if form.space != self.complex.space or form.nvars != self.chart.dim:
                raise StructuralError(f"{name} does not live on this chart and complex")

    @property
    def space(self) -> GradedVectorSpace:
        return self.complex.space

    @property
    def nvars(self) -> int:
        return self.chart.dim

    @property
    def D(self) -> np.ndarray:
        return self.complex.D

    @cached_property
    def omega3_or_zero(self) -> EndValuedForm:
        if self.omega3 is not None:
            return self.omega3
        return EndValuedForm.zero(self.space, self.nvars, 3, -2)

    def connection_1form(self, points: np.ndarray, velocities: np.ndarray) -> np.ndarray:
        """ω¹ at ``points`` on ``velocities``: the A(γ′) of the transport equation."""
        return self.omega1.evaluate_many(points, [velocities])

    def with_forms(self, omega1: Optional[EndValuedForm] = None, omega2: Optional[EndValuedForm] = None,
                   omega3: Optional[EndValuedForm] = None) -> "Superconnection":
        return Superconnection(self.chart, self.complex,
                               omega1 if omega1 is not None else self.omega1,
                               omega2 if omega2 is not None else self.omega2,
                               omega3 if omega3 is not None else self.omega3)


def flatness_forms(S: Superconnection) -> Dict[str, EndValuedForm]:
    """The three residual forms whose vanishing is flatness."""
    D = S.D
    w1, w2, w3 = S.omega1, S.omega2, S.omega3_or_zero
    r1 = w1.premultiply(D, 1) - w1.postmultiply(D, 1)
    r2 = (w2.premultiply(D, 1) + w2.postmultiply(D, 1)
          - exterior_d(w1) - wedge_compose(w1, w1))
    r3 = (exterior_d(w2) + wedge_compose(w1, w2) + wedge_compose(w2, w1)
          - (w3.premultiply(D, 1) - w3.postmultiply(D, 1)))
    return {"degree1": r1, "degree2": r2, "degree3": r3}


def max_component_norm(form: EndValuedForm, points: np.ndarray) -> float:
    worst = 0.0
    for values in form.component_values(points).values():
        worst = max(worst, float(np.max(np.linalg.norm(values, axis=(1, 2)))))
    return worst


def flatness_residuals(S: Superconnection, samples: np.ndarray) -> Dict[str, float]:
    """Max-sample norms of the degree 1, 2 and 3 flatness identities."""
    residuals = {name: max_component_norm(form, samples) for name, form in flatness_forms(S).items()}
    logger.debug(f"Flatness residuals: {residuals}")
    return residuals


# -- gauge generator ------------------------------------------------------------------

@dataclass(frozen=True)
class GaugeField:
    """φ = φ0 + φ1 with φ0 chain-map valued and an explicit polynomial inverse."""
    phi0: PolynomialField
    phi0_inv: PolynomialField
    phi1: Optional[EndValuedForm] = None


MixedForm = Dict[int, EndValuedForm]


def _mixed_mul(a: MixedForm, b: MixedForm, nvars: int) -> MixedForm:
    out: MixedForm = {}
    for ka, fa in a.items():
        for kb, fb in b.items():
            if ka + kb > nvars:
                continue
            term = wedge_compose(fa, fb)
            out[ka + kb] = out[ka + kb] + term if ka + kb in out else term
    return out


def _check_gauge(space: GradedVectorSpace, complex_: CochainComplex, gauge: GaugeField,
                 samples: np.ndarray, tol: float = 1e-9) -> None:
    P = gauge.phi0.evaluate_many(samples)
    Q = gauge.phi0_inv.evaluate_many(samples)
    n = space.total_dim
    defect = np.linalg.norm(P @ Q - np.eye(n), axis=(1, 2))
    worst = int(np.argmax(defect))
    if defect[worst] > tol * (1.0 + np.linalg.norm(P[worst])):
        raise ValueError(f"φ0 is not invertible at sample {samples[worst].tolist()} "
                         f"(norm(φ0·φ0^-1 − id) = {defect[worst]:.3e})")
    commutator = np.linalg.norm(complex_.D @ P - P @ complex_.D, axis=(1, 2))
    worst = int(np.argmax(commutator))
    if commutator[worst] > tol * (1.0 + np.linalg.norm(P[worst])):
        raise ValueError(f"φ0 is not a chain map at sample {samples[worst].tolist()} "
                         f"(residual {commutator[worst]:.3e})")


def gauge_flat(chart: Chart, complex_: CochainComplex, phi0: PolynomialField,
               phi1: Optional[EndValuedForm] = None,
               phi0_inv: Optional[PolynomialField] = None) -> Superconnection:
    """Gauge transform of the trivial superconnection d − ∂ by φ = φ0 + φ1.

    X = φ^{-1}∘dφ − φ^{-1}∘∂∘φ is expanded symbolically with
    φ^{-1} = Σ_k (−φ0^{-1}φ1)^k φ0^{-1}; the components are ω¹ = X₁, ω² = X₂
    and ω³ = −X₃.
    """
    space, nvars = complex_.space, chart.dim
    if phi0_inv is None:
        if phi0.degree > 0:
            raise ValueError("A non-constant φ0 needs an explicit polynomial inverse")
        try:
            phi0_inv = PolynomialField.constant(nvars, np.linalg.inv(phi0.evaluate(np.zeros(nvars))))
        except np.linalg.LinAlgError:
            raise ValueError("Constant φ0 is singular")
    gauge = GaugeField(phi0, phi0_inv, phi1)
    _check_gauge(space, complex_, gauge, chart_samples(chart, 16))

    P0 = EndValuedForm.function(space, phi0)
    P0inv = EndValuedForm.function(space, phi0_inv)
    phi: MixedForm = {0: P0}
    dphi: MixedForm = {1: exterior_d(P0)}
    if phi1 is not None and not phi1.is_zero:
        phi[1] = phi1
        dphi[2] = exterior_d(phi1)

    phi_inv: MixedForm = {0: P0inv}
    if 1 in phi:
        L: MixedForm = {1: -wedge_compose(P0inv, phi[1])}
        power: MixedForm = {0: P0inv}
        for _ in range(nvars):
            power = _mixed_mul(L, power, nvars)
            if not power:
                break
            for k, f in power.items():
                phi_inv[k] = phi_inv[k] + f if k in phi_inv else f

    boundary: MixedForm = {0: EndValuedForm.constant(space, nvars, 0, 1, {(): complex_.D})}
    X = _mixed_mul(phi_inv, {k: f for k, f in dphi.items() if k <= nvars}, nvars)
    for k, f in _mixed_mul(phi_inv, _mixed_mul(boundary, phi, nvars), nvars).items():
        X[k] = X[k] - f if k in X else -f

    def part(k: int, inner: int) -> EndValuedForm:
        return X.get(k, EndValuedForm.zero(space, nvars, k, inner))

    omega3 = -part(3, -2) if nvars >= 3 else None
    S = Superconnection(chart, complex_, part(1, 0), part(2, -1), omega3)
    logger.debug(f"gauge_flat: ω¹ degree {S.omega1.degree}, ω² degree {S.omega2.degree}")
    return S


def gauge_transform(S: Superconnection, g: PolynomialField, g_inv: PolynomialField,
                    chart: Optional[Chart] = None) -> Superconnection:
    """ω ↦ g ω g^{-1} + g d(g^{-1}) for a chain-map valued g in the chart's coordinates."""
    space, nvars = S.space, S.nvars
    _check_gauge(space, S.complex, GaugeField(g, g_inv), chart_samples(S.chart, 16))
    G = EndValuedForm.function(space, g)
    Ginv = EndValuedForm.function(space, g_inv)

    def conjugate(form: EndValuedForm) -> EndValuedForm:
        return wedge_compose(wedge_compose(G, form), Ginv)

    omega1 = conjugate(S.omega1) + wedge_compose(G, exterior_d(Ginv))
    omega3 = conjugate(S.omega3) if S.omega3 is not None else None
    return Superconnection(chart or S.chart, S.complex, omega1, conjugate(S.omega2), omega3)


def shift_superconnection(S: Superconnection, delta: Sequence[float], chart: Chart) -> Superconnection:
    """Re-express S in coordinates y with x = y + delta."""
    omega3 = S.omega3.shift(delta) if S.omega3 is not None else None
    return Superconnection(chart, S.complex, S.omega1.shift(delta), S.omega2.shift(delta), omega3)


def square_zero_chain_maps(complex_: CochainComplex, rng: np.random.Generator,
                           count: int = 2) -> List[np.ndarray]:
    """Chain maps N with N∘N = 0, so id + f·N has inverse id − f·N for any scalar f.

    Across a nonzero differential N = τ_*(u w^T) with w orthogonal to ∂u;
    inside a degree isolated from ∂, N = u w^T with w orthogonal to u.
    """
    space, D = complex_.space, complex_.D
    n = space.total_dim
    candidates = []
    for k in space.degrees:
        s_lo, s_hi = space.slice(k - 1), space.slice(k)
        if space.dim(k - 1) and np.linalg.norm(D[s_hi, s_lo]) > 0:
            candidates.append(("homotopy", k))
        touches = np.linalg.norm(D[:, s_hi]) + np.linalg.norm(D[s_hi, :])
        if touches == 0 and space.dim(k) >= 2:
            candidates.append(("isolated", k))
    maps = []
    if not candidates:
        return maps
    for m in range(count):
        kind, k = candidates[int(rng.integers(len(candidates)))]
        u, w = np.zeros(n), np.zeros(n)
        if kind == "homotopy":
            s_lo, s_hi = space.slice(k - 1), space.slice(k)
            u[s_lo] = rng.normal(size=space.dim(k - 1))
            w[s_hi] = rng.normal(size=space.dim(k))
            du = D @ u
            if np.dot(du, du) > 0:
                w -= np.dot(w, du) / np.dot(du, du) * du
            S = np.outer(u, w)
            N = D @ S + S @ D
        else:
            s = space.slice(k)
            u[s] = rng.normal(size=space.dim(k))
            w[s] = rng.normal(size=space.dim(k))
            w -= np.dot(w, u) / np.dot(u, u) * u
            N = np.outer(u, w)
        size = np.linalg.norm(N)
        if size > 1e-8:
            maps.append(N / size)
    return maps


def unipotent_field(complex_: CochainComplex, nvars: int, rng: np.random.Generator,
                    factors: int = 2, degree: int = 1, scale: float = 0.4,
                    constant: Optional[np.ndarray] = None,
                    constant_inv: Optional[np.ndarray] = None) -> Tuple[PolynomialField, PolynomialField]:
    """C·Π(id + f_m N_m) and its exact inverse Π(id − f_m N_m) (reversed)·C^{-1}."""
    n = complex_.total_dim
    one = PolynomialField.constant(nvars, np.eye(n))
    g = PolynomialField.constant(nvars, constant if constant is not None else np.eye(n))
    g_inv = PolynomialField.constant(nvars, constant_inv if constant_inv is not None else np.eye(n))
    for N in square_zero_chain_maps(complex_, rng, factors):
        f = random_polynomial(nvars, degree, rng, scale)
        g = g @ (one + f.tensor(N))
        g_inv = (one - f.tensor(N)) @ g_inv
    return g, g_inv


def random_homotopy_form(space: GradedVectorSpace, nvars: int, rng: np.random.Generator,
                         degree: int = 1, scale: float = 0.2) -> EndValuedForm:
    n = space.total_dim
    components = {(j,): random_polynomial(nvars, degree, rng, scale, (n, n)) for j in range(nvars)}
    return EndValuedForm(space, nvars, 1, -1, components)


def random_gauge(complex_: CochainComplex, nvars: int, rng: np.random.Generator,
                 factors: int = 2, degree: int = 1, phi1_degree: int = 1,
                 phi1_scale: float = 0.2, with_phi1: bool = True) -> GaugeField:
    """Seeded gauge field with polynomial inverse for gauge_flat."""
    g0 = random_g(CrossedModuleContext(complex_), rng)
    phi0, phi0_inv = unipotent_field(complex_, nvars, rng, factors, degree,
                                     constant=g0.dense, constant_inv=g0.inverse_dense)
    phi1 = random_homotopy_form(complex_.space, nvars, rng, phi1_degree, phi1_scale) if with_phi1 else None
    return GaugeField(phi0, phi0_inv, phi1)
