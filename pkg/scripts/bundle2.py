#!/usr/bin/env python3
"""
Covers, Γ-cocycles and differential Γ-cocycles for the 2-group of a complex.

Charts are axis-aligned boxes placed in ℝⁿ by an offset; chart forms use
local coordinates y = x − offset while transitions g_ij, a_ijk and φ_ij are
polynomials in global coordinates x. Frames are related by ψ_j = g_ij ψ_i,
so that

    g_ik = τ(a_ijk)·g_jk·g_ij,    a_ijl ⋆ a_jkl ≡ a_ikl ⋆ α(g_kl, a_ijk),
    A_j + τ_*(φ_ij) = g_ij A_i g_ij^{-1} − dg_ij·g_ij^{-1}.

The local groupoid 𝒫 has objects (i, x, g) and morphisms (i, j, x, h, g)
with s = (j, x, g) and t = (i, x, g_ij^{-1}τ(h)g); Γ acts on the right.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations, permutations
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from crossed_module import (
    CrossedModuleContext,
    GElement,
    HElement,
    ad_inverse,
    alpha,
    alpha_tilde_star,
    g_mul,
    h_inv,
    h_mul,
    random_degree_map,
    random_g,
    random_h,
    star_commutator_dense,
    tau,
    tau_star_dense,
    theta_h,
)
from forms import (
    Chart,
    EndValuedForm,
    PolynomialField,
    Superconnection,
    chart_samples,
    exterior_d,
    flatness_residuals,
    sample_points,
    wedge_compose,
)
from graded_core import StructuralError

logger = logging.getLogger(__name__)

OVERLAP_TOL = 1e-12


class GaugeRelationError(ValueError):
    """Transitions that do not intertwine the local superconnections."""

    def __init__(self, message: str, residuals: Mapping[str, float]):
        super().__init__(message)
        self.residuals = dict(residuals)


# -- covers -------------------------------------------------------------------------

@dataclass(frozen=True)
class PlacedChart:
    id: str
    chart: Chart
    offset: np.ndarray = field(compare=False)

    def __post_init__(self):
        offset = np.asarray(self.offset, dtype=float).reshape(-1)
        if offset.size != self.chart.dim:
            raise StructuralError(f"Chart '{self.id}' offset has {offset.size} entries for dimension {self.chart.dim}")
        object.__setattr__(self, "offset", offset)

    @property
    def lower(self) -> np.ndarray:
        return self.chart.lower + self.offset

    @property
    def upper(self) -> np.ndarray:
        return self.chart.upper + self.offset

    def local(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) - self.offset


class Cover:
    def __init__(self, charts: Sequence[PlacedChart]):
        if not charts:
            raise StructuralError("no charts")
        ids = [c.id for c in charts]
        if len(set(ids)) != len(ids):
            raise StructuralError(f"Duplicate chart ids in {ids}")
        if len({c.chart.dim for c in charts}) != 1:
            raise StructuralError("All charts of a cover must have the same dimension")
        self.charts: Dict[str, PlacedChart] = {c.id: c for c in charts}
        self.ids: List[str] = ids

    @property
    def dim(self) -> int:
        return self.charts[self.ids[0]].chart.dim

    def chart(self, chart_id: str) -> PlacedChart:
        if chart_id not in self.charts:
            raise StructuralError(f"Unknown chart '{chart_id}'")
        return self.charts[chart_id]

    def overlap_box(self, ids: Sequence[str]) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        lower = np.max([self.chart(i).lower for i in ids], axis=0)
        upper = np.min([self.chart(i).upper for i in ids], axis=0)
        if np.any(lower > upper + OVERLAP_TOL):
            return None
        return lower, np.maximum(lower, upper)

    def in_overlap(self, ids: Sequence[str], x: np.ndarray, tol: float = 1e-10) -> bool:
        box = self.overlap_box(ids)
        if box is None:
            return False
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= box[0] - tol) and np.all(x <= box[1] + tol))

    def overlaps(self, order: int) -> List[Tuple[str, ...]]:
        """Ordered tuples of distinct charts with nonempty common overlap."""
        out = []
        for subset in combinations(self.ids, order):
            if self.overlap_box(subset) is not None:
                out.extend(permutations(subset))
        return out

    def samples(self, ids: Sequence[str], count: int, offset: int = 0) -> np.ndarray:
        box = self.overlap_box(ids)
        if box is None:
            return np.zeros((0, self.dim))
        return sample_points(box[0], box[1], count, offset)


# -- cocycles ---------------------------------------------------------------------------

class GammaCocycle:
    """Transition data (g_ij, a_ijk), normalized: g_ii = id, g_ji = g_ij^{-1}, unlisted a_ijk = 0."""

    def __init__(self, context: CrossedModuleContext, cover: Cover,
                 g: Optional[Mapping[Tuple[str, str], PolynomialField]] = None,
                 a: Optional[Mapping[Tuple[str, str, str], PolynomialField]] = None):
        self.context = context
        self.cover = cover
        n = context.n
        self.g: Dict[Tuple[str, str], PolynomialField] = {}
        for (i, j), field_ in (g or {}).items():
            for chart_id in (i, j):
                cover.chart(chart_id)
            if field_.shape != (n, n) or field_.nvars != cover.dim:
                raise StructuralError(f"Transition {i}->{j} has the wrong shape")
            self.g[(i, j)] = field_
        self.a: Dict[Tuple[str, str, str], PolynomialField] = dict(a or {})
        self._dg = {key: [f.derivative(mu) for mu in range(cover.dim)] for key, f in self.g.items()}

    def g_at(self, i: str, j: str, x: np.ndarray) -> np.ndarray:
        if i == j:
            return np.eye(self.context.n)
        if (i, j) in self.g:
            return self.g[(i, j)].evaluate(x)
        if (j, i) in self.g:
            return np.linalg.inv(self.g[(j, i)].evaluate(x))
        raise StructuralError(f"No transition between charts '{i}' and '{j}'")

    def dg_at(self, i: str, j: str, x: np.ndarray) -> List[np.ndarray]:
        """Partial derivatives ∂_μ g_ij at x."""
        n, dim = self.context.n, self.cover.dim
        if i == j:
            return [np.zeros((n, n)) for _ in range(dim)]
        if (i, j) in self.g:
            return [d.evaluate(x) for d in self._dg[(i, j)]]
        g_inv = self.g_at(i, j, x)
        return [-g_inv @ d @ g_inv for d in self.dg_at(j, i, x)]

    def a_at(self, i: str, j: str, k: str, x: np.ndarray) -> np.ndarray:
        if (i, j, k) in self.a:
            return self.a[(i, j, k)].evaluate(x)
        return np.zeros((self.context.n, self.context.n))

    def transition(self, i: str, j: str, x: np.ndarray) -> np.ndarray:
        return self.g_at(i, j, x)

    def has_transition(self, i: str, j: str) -> bool:
        return i == j or (i, j) in self.g or (j, i) in self.g


@dataclass
class DifferentialCocycle:
    """A_i (1-form, chain-map valued) and B_i (2-form, degree −1) in chart coordinates; φ_ij global."""
    base: GammaCocycle
    A: Dict[str, EndValuedForm]
    B: Dict[str, EndValuedForm]
    phi: Dict[Tuple[str, str], EndValuedForm] = field(default_factory=dict)

    @property
    def cover(self) -> Cover:
        return self.base.cover

    @property
    def context(self) -> CrossedModuleContext:
        return self.base.context

    def transition(self, i: str, j: str, x: np.ndarray) -> np.ndarray:
        return self.base.g_at(i, j, x)

    def phi_at(self, i: str, j: str, x: np.ndarray) -> List[np.ndarray]:
        """φ_ij(x) on the coordinate basis vectors."""
        n, dim = self.context.n, self.cover.dim
        form = self.phi.get((i, j))
        if form is None:
            return [np.zeros((n, n)) for _ in range(dim)]
        basis = np.eye(dim)
        return [form.evaluate_many(x[None], [basis[mu][None]])[0] for mu in range(dim)]

    def dphi_at(self, i: str, j: str, x: np.ndarray) -> Dict[Tuple[int, int], np.ndarray]:
        form = self.phi.get((i, j))
        if form is None:
            return {}
        d = exterior_d(form)
        return {I: f.evaluate(x) for I, f in d.components.items()}

    def A_at(self, i: str, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        local = self.cover.chart(i).local(x)
        return self.A[i].evaluate_many(local[None], [np.asarray(v, dtype=float)[None]])[0]

    def B_at(self, i: str, x: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        local = self.cover.chart(i).local(x)
        return self.B[i].evaluate_many(local[None], [np.asarray(v1, dtype=float)[None],
                                                     np.asarray(v2, dtype=float)[None]])[0]


# -- validators ----------------------------------------------------------------------------

def validate_cocycle(C: GammaCocycle, samples: int = 50) -> Dict[str, float]:
    """Max residuals of g_ik = τ(a_ijk)g_jk g_ij and of the a-identity (mod exact)."""
    ctx = C.context
    cover = C.cover
    g_residual, a_residual = 0.0, 0.0
    triples = [t for t in cover.overlaps(3) if all(C.has_transition(p, q) for p, q in combinations(t, 2))]
    for i, j, k in triples:
        for x in cover.samples((i, j, k), samples):
            a = ctx.h_element(C.a_at(i, j, k, x), check=False)
            lhs = C.g_at(i, k, x)
            rhs = tau(a).dense @ C.g_at(j, k, x) @ C.g_at(i, j, x)
            g_residual = max(g_residual, float(np.linalg.norm(lhs - rhs)))
    quadruples = [q for q in cover.overlaps(4) if all(C.has_transition(p, r) for p, r in combinations(q, 2))]
    for i, j, k, l in quadruples:
        for x in cover.samples((i, j, k, l), samples):
            def h(p, q, r):
                return ctx.h_element(C.a_at(p, q, r, x), check=False)
            g_kl = ctx.g_element(C.g_at(k, l, x), check=False)
            lhs = h_mul(h(i, j, l), h(j, k, l))
            rhs = h_mul(h(i, k, l), alpha(g_kl, h(i, j, k)))
            a_residual = max(a_residual, ctx.complex.exact_residual_dense(lhs.dense - rhs.dense)[0])
    report = {"g_identity": g_residual, "a_identity": a_residual,
              "triples": float(len(triples)), "quadruples": float(len(quadruples))}
    logger.debug(f"validate_cocycle: {report}")
    return report


def _dc_pair_residuals(D: DifferentialCocycle, i: str, j: str, x: np.ndarray) -> Tuple[float, float]:
    ctx = D.context
    dim = D.cover.dim
    basis = np.eye(dim)
    g = D.transition(i, j, x)
    g_inv = np.linalg.inv(g)
    dg = D.base.dg_at(i, j, x)
    phi = D.phi_at(i, j, x)
    dphi = D.dphi_at(i, j, x)
    A_i = [D.A_at(i, x, basis[mu]) for mu in range(dim)]
    A_j = [D.A_at(j, x, basis[mu]) for mu in range(dim)]

    dc1 = 0.0
    for mu in range(dim):
        lhs = A_j[mu] + tau_star_dense(ctx, phi[mu])
        rhs = g @ A_i[mu] @ g_inv - dg[mu] @ g_inv
        dc1 = max(dc1, float(np.linalg.norm(lhs - rhs)))

    dc2 = 0.0
    for mu, nu in combinations(range(dim), 2):
        lhs = g @ D.B_at(i, x, basis[mu], basis[nu]) @ g_inv
        action = (A_j[mu] @ phi[nu] - phi[nu] @ A_j[mu]) - (A_j[nu] @ phi[mu] - phi[mu] @ A_j[nu])
        rhs = (D.B_at(j, x, basis[mu], basis[nu])
               + dphi.get((mu, nu), np.zeros_like(g))
               + star_commutator_dense(ctx, phi[mu], phi[nu])
               + action)
        dc2 = max(dc2, ctx.complex.exact_residual_dense(lhs - rhs)[0])
    return dc1, dc2


def _dc_triple_residual(D: DifferentialCocycle, i: str, j: str, k: str, x: np.ndarray) -> float:
    ctx = D.context
    base = D.base
    dim = D.cover.dim
    basis = np.eye(dim)
    a = ctx.h_element(base.a_at(i, j, k, x), check=False)
    da = [d.evaluate(x) for d in (base.a[(i, j, k)].derivative(mu) for mu in range(dim))] \
        if (i, j, k) in base.a else [np.zeros((ctx.n, ctx.n))] * dim
    g_jk = base.g_at(j, k, x)
    g_jk_inv = np.linalg.inv(g_jk)
    phi_ij, phi_jk, phi_ik = D.phi_at(i, j, x), D.phi_at(j, k, x), D.phi_at(i, k, x)
    worst = 0.0
    for mu in range(dim):
        lhs = phi_jk[mu] + g_jk @ phi_ij[mu] @ g_jk_inv - theta_h(a, da[mu])
        rhs = ad_inverse(a, phi_ik[mu]) + alpha_tilde_star(a, D.A_at(k, x, basis[mu]))
        worst = max(worst, ctx.complex.exact_residual_dense(lhs - rhs)[0])
    return worst


def validate_differential(D: DifferentialCocycle, samples: int = 50) -> Dict[str, float]:
    """Max residuals of the three compatibility conditions over sampled overlap points."""
    cover = D.cover
    dc1 = dc2 = dc3 = 0.0
    for i, j in cover.overlaps(2):
        if not D.base.has_transition(i, j):
            continue
        for x in cover.samples((i, j), samples):
            r1, r2 = _dc_pair_residuals(D, i, j, x)
            dc1, dc2 = max(dc1, r1), max(dc2, r2)
    for i, j, k in cover.overlaps(3):
        if not all(D.base.has_transition(p, q) for p, q in combinations((i, j, k), 2)):
            continue
        for x in cover.samples((i, j, k), samples):
            dc3 = max(dc3, _dc_triple_residual(D, i, j, k, x))
    report = {"dc1": dc1, "dc2": dc2, "dc3": dc3}
    logger.debug(f"validate_differential: {report}")
    return report


def curvature_forms(A: EndValuedForm, B: EndValuedForm, D: np.ndarray) -> Tuple[EndValuedForm, EndValuedForm]:
    """dA + A∧A − τ_*(B) and dB + A∧B − B∧A (plain products of the coefficients)."""
    fake = exterior_d(A) + wedge_compose(A, A) - (B.premultiply(D, 1) + B.postmultiply(D, 1))
    three = exterior_d(B) + wedge_compose(A, B) + wedge_compose(B, A)
    return fake, three


def curvatures(D: DifferentialCocycle, chart_id: str, samples: int = 50) -> Tuple[float, float]:
    """Max-sample norms of the fake curvature and of the 3-curvature (mod exact)."""
    placed = D.cover.chart(chart_id)
    points = chart_samples(placed.chart, samples)
    fake, three = curvature_forms(D.A[chart_id], D.B[chart_id], D.context.D)
    fake_norm = 0.0
    for values in fake.component_values(points).values():
        fake_norm = max(fake_norm, float(np.max(np.linalg.norm(values, axis=(1, 2)))))
    three_norm = 0.0
    complex_ = D.context.complex
    for values in three.component_values(points).values():
        for X in values:
            three_norm = max(three_norm, complex_.exact_residual_dense(X)[0])
    return fake_norm, three_norm


# -- frame cocycle of local systems --------------------------------------------------------

def gauge_relation_residual(S_i: Superconnection, S_j: Superconnection, placed_i: PlacedChart,
                            placed_j: PlacedChart, g: PolynomialField, points: np.ndarray) -> float:
    """Max over points of the defect of ω_j = g ω_i g^{-1} + g d(g^{-1}), all components."""
    dim = placed_i.chart.dim
    basis = np.eye(dim)
    dg = [g.derivative(mu) for mu in range(dim)]
    worst = 0.0
    for x in points:
        G = g.evaluate(x)
        G_inv = np.linalg.inv(G)
        yi, yj = placed_i.local(x)[None], placed_j.local(x)[None]
        for mu in range(dim):
            e = basis[mu][None]
            lhs = S_j.omega1.evaluate_many(yj, [e])[0]
            rhs = G @ S_i.omega1.evaluate_many(yi, [e])[0] @ G_inv - dg[mu].evaluate(x) @ G_inv
            worst = max(worst, float(np.linalg.norm(lhs - rhs)))
        for form_i, form_j in ((S_i.omega2, S_j.omega2), (S_i.omega3_or_zero, S_j.omega3_or_zero)):
            k = form_i.form_degree
            for I in combinations(range(dim), k):
                vecs = [basis[m][None] for m in I]
                lhs = form_j.evaluate_many(yj, vecs)[0]
                rhs = G @ form_i.evaluate_many(yi, vecs)[0] @ G_inv
                worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst


def frame_cocycle(cover: Cover, local_systems: Mapping[str, Superconnection],
                  transitions: Mapping[Tuple[str, str], PolynomialField],
                  samples: int = 50, tol: float = 1e-8,
                  flatness_tol: float = 1e-8) -> DifferentialCocycle:
    """Differential cocycle A_i = ω¹_i, B_i = ω²_i, φ_ij = 0, a_ijk = 0 of flat local systems."""
    first = next(iter(local_systems.values()))
    ctx = CrossedModuleContext(first.complex)
    for chart_id in cover.ids:
        if chart_id not in local_systems:
            raise StructuralError(f"No local system on chart '{chart_id}'")
        S = local_systems[chart_id]
        if S.space != first.space:
            raise StructuralError(f"Chart '{chart_id}' carries a different complex")
        residuals = flatness_residuals(S, chart_samples(S.chart, samples))
        if max(residuals.values()) > flatness_tol:
            logger.warning(f"Local system on '{chart_id}' is not flat: {residuals}")

    defects: Dict[str, float] = {}
    for (i, j), g in transitions.items():
        points = cover.samples((i, j), samples)
        if points.shape[0] == 0:
            raise StructuralError(f"Transition {i}->{j} declared on an empty overlap")
        G = g.evaluate_many(points)
        chain = float(np.max(np.linalg.norm(ctx.D @ G - G @ ctx.D, axis=(1, 2))))
        relation = gauge_relation_residual(local_systems[i], local_systems[j],
                                           cover.chart(i), cover.chart(j), g, points)
        defects[f"{i}->{j}"] = max(chain, relation)
    failing = {k: v for k, v in defects.items() if v > tol}
    if failing:
        detail = ", ".join(f"{k}: {v:.3e}" for k, v in sorted(failing.items()))
        raise GaugeRelationError(f"Gauge relation violated on {detail}", defects)

    base = GammaCocycle(ctx, cover, transitions, {})
    A = {chart_id: local_systems[chart_id].omega1 for chart_id in cover.ids}
    B = {chart_id: local_systems[chart_id].omega2 for chart_id in cover.ids}
    logger.debug(f"frame_cocycle: {len(cover.ids)} charts, {len(transitions)} transitions")
    return DifferentialCocycle(base, A, B, {})


def coboundary_cocycle(context: CrossedModuleContext, cover: Cover,
                       e: Mapping[Tuple[str, str], HElement]) -> GammaCocycle:
    """Constant cocycle g_ij = τ(e_ij), a_ijk = e_ik ⋆ e_ij^{-1} ⋆ e_jk^{-1}, with e_ji = e_ij^{-1}."""
    full: Dict[Tuple[str, str], HElement] = {}
    for (i, j), h in e.items():
        full[(i, j)] = h
        full[(j, i)] = h_inv(h)
    zero = context.zero_h()
    nvars = cover.dim

    def get(i: str, j: str) -> HElement:
        return zero if i == j else full[(i, j)]

    g = {(i, j): PolynomialField.constant(nvars, tau(h).dense) for (i, j), h in e.items()}
    a = {}
    for i in cover.ids:
        for j in cover.ids:
            for k in cover.ids:
                if (i != j and (i, j) not in full) or (j != k and (j, k) not in full) \
                        or (i != k and (i, k) not in full):
                    continue
                value = h_mul(h_mul(get(i, k), h_inv(get(i, j))), h_inv(get(j, k)))
                a[(i, j, k)] = PolynomialField.constant(nvars, value.dense)
    return GammaCocycle(context, cover, g, a)


# -- the local groupoid and its Γ-action ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LocalObject:
    i: str
    x: np.ndarray
    g: GElement


@dataclass(frozen=True, eq=False)
class LocalGroupoidElement:
    i: str
    j: str
    x: np.ndarray
    h: HElement
    g: GElement


def source(m: LocalGroupoidElement) -> LocalObject:
    return LocalObject(m.j, m.x, m.g)


def target(m: LocalGroupoidElement, C: GammaCocycle) -> LocalObject:
    ctx = C.context
    g_ij_inv = np.linalg.inv(C.g_at(m.i, m.j, m.x))
    return LocalObject(m.i, m.x, ctx.g_element(g_ij_inv @ tau(m.h).dense @ m.g.dense, check=False))


def identity(obj: LocalObject) -> LocalGroupoidElement:
    return LocalGroupoidElement(obj.i, obj.i, obj.x, obj.g.context.zero_h(), obj.g)


def _same_object(a: LocalObject, b: LocalObject, tol: float) -> bool:
    return (a.i == b.i and np.allclose(a.x, b.x, atol=tol, rtol=0.0)
            and np.linalg.norm(a.g.dense - b.g.dense) <= tol * (1.0 + np.linalg.norm(a.g.dense)))


def groupoid_compose(m2: LocalGroupoidElement, m1: LocalGroupoidElement, C: GammaCocycle,
                     tol: float = 1e-9) -> LocalGroupoidElement:
    """(i,j,x,h₂,g₂)∘(j,k,x,h₁,g₁) = (i,k,x, a_ijk ⋆ α(g_jk,h₂) ⋆ h₁, g₁)."""
    if m2.j != m1.i:
        raise StructuralError(f"Cannot compose: middle charts '{m2.j}' and '{m1.i}' differ")
    if not np.allclose(m2.x, m1.x, atol=tol, rtol=0.0):
        raise StructuralError("Cannot compose morphisms over different points")
    if not _same_object(source(m2), target(m1, C), tol):
        raise StructuralError("Cannot compose: source of the left morphism is not the target of the right one")
    ctx = C.context
    i, j, k, x = m2.i, m2.j, m1.j, m1.x
    a = ctx.h_element(C.a_at(i, j, k, x), check=False)
    g_jk = ctx.g_element(C.g_at(j, k, x), check=False)
    h = h_mul(h_mul(a, alpha(g_jk, m2.h)), m1.h)
    return LocalGroupoidElement(i, k, x, h, m1.g)


def act_object(obj: LocalObject, g_prime: GElement) -> LocalObject:
    return LocalObject(obj.i, obj.x, g_mul(obj.g, g_prime))


def act_morphism(m: LocalGroupoidElement, h_prime: HElement, g_prime: GElement) -> LocalGroupoidElement:
    """R((i,j,x,h,g), (h′,g′)) = (i,j,x, h ⋆ α(g,h′), g g′)."""
    return LocalGroupoidElement(m.i, m.j, m.x, h_mul(m.h, alpha(m.g, h_prime)), g_mul(m.g, g_prime))


def _random_point(cover: Cover, ids: Sequence[str], rng: np.random.Generator) -> Optional[np.ndarray]:
    box = cover.overlap_box(ids)
    if box is None:
        return None
    return box[0] + rng.random(cover.dim) * (box[1] - box[0])


def _random_chain(C: GammaCocycle, rng: np.random.Generator, length: int):
    """Random chart indices with a common overlap point."""
    ids = C.cover.ids
    for _ in range(100):
        chosen = [ids[int(rng.integers(len(ids)))] for _ in range(length)]
        if not all(C.has_transition(p, q) for p, q in combinations(chosen, 2)):
            continue
        x = _random_point(C.cover, sorted(set(chosen)), rng)
        if x is not None:
            return chosen, x
    return [ids[0]] * length, _random_point(C.cover, [ids[0]], rng)


def _composable(C: GammaCocycle, charts: Sequence[str], x: np.ndarray,
                rng: np.random.Generator) -> List[LocalGroupoidElement]:
    """Random m_1, m_2, … with m_r = (charts[-r-1], charts[-r], x, h_r, g_r) composable in sequence."""
    ctx = C.context
    chain = []
    g = random_g(ctx, rng)
    for r in range(len(charts) - 1):
        i, j = charts[-r - 2], charts[-r - 1]
        m = LocalGroupoidElement(i, j, x, random_h(ctx, rng), g)
        chain.append(m)
        g = target(m, C).g
    return chain


def associativity_check(C: GammaCocycle, rng: np.random.Generator, trials: int = 20) -> Dict[str, float]:
    """Max defect of (m₃∘m₂)∘m₁ = m₃∘(m₂∘m₁): H slot mod exact, G slot and charts exactly."""
    complex_ = C.context.complex
    h_defect, g_defect = 0.0, 0.0
    for _ in range(trials):
        charts, x = _random_chain(C, rng, 4)
        m1, m2, m3 = _composable(C, charts, x, rng)
        left = groupoid_compose(groupoid_compose(m3, m2, C), m1, C)
        right = groupoid_compose(m3, groupoid_compose(m2, m1, C), C)
        h_defect = max(h_defect, complex_.exact_residual_dense(left.h.dense - right.h.dense)[0])
        g_defect = max(g_defect, float(np.linalg.norm(left.g.dense - right.g.dense)))
    return {"h": h_defect, "g": g_defect}


def source_target_check(C: GammaCocycle, rng: np.random.Generator, trials: int = 20) -> Dict[str, float]:
    """t(m₂∘m₁) = t(m₂) and s(m₂∘m₁) = s(m₁)."""
    s_defect, t_defect = 0.0, 0.0
    for _ in range(trials):
        charts, x = _random_chain(C, rng, 3)
        m1, m2 = _composable(C, charts, x, rng)
        m = groupoid_compose(m2, m1, C)
        t_defect = max(t_defect, float(np.linalg.norm(target(m, C).g.dense - target(m2, C).g.dense)))
        s_defect = max(s_defect, float(np.linalg.norm(source(m).g.dense - source(m1).g.dense)))
    return {"source": s_defect, "target": t_defect}


def functoriality_check(C: GammaCocycle, rng: np.random.Generator, trials: int = 20) -> float:
    """R(m₂∘m₁, γ₂∘γ₁) versus R(m₂,γ₂)∘R(m₁,γ₁), H slot mod exact."""
    ctx = C.context
    worst = 0.0
    for _ in range(trials):
        charts, x = _random_chain(C, rng, 3)
        m1, m2 = _composable(C, charts, x, rng)
        h1, g1 = random_h(ctx, rng), random_g(ctx, rng)
        h2, g2 = random_h(ctx, rng), g_mul(tau(h1), g1)
        left = act_morphism(groupoid_compose(m2, m1, C), h_mul(h2, h1), g1)
        right = groupoid_compose(act_morphism(m2, h2, g2), act_morphism(m1, h1, g1), C)
        residual = ctx.complex.exact_residual_dense(left.h.dense - right.h.dense)[0]
        worst = max(worst, residual, float(np.linalg.norm(left.g.dense - right.g.dense)))
    return worst


# -- connection forms on 𝒫 ---------------------------------------------------------------------

class ConnectionForms:
    """Pointwise evaluators of Ω^a, Ω^b, Ω^c built from a differential cocycle."""

    def __init__(self, D: DifferentialCocycle):
        self.D = D

    def omega_a(self, obj: LocalObject, v: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """g^{-1}A_i(v)g + g^{-1}ξ."""
        g, g_inv = obj.g.dense, obj.g.inverse_dense
        return g_inv @ self.D.A_at(obj.i, obj.x, v) @ g + g_inv @ xi

    def omega_c(self, obj: LocalObject, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        return -obj.g.inverse_dense @ self.D.B_at(obj.i, obj.x, v1, v2) @ obj.g.dense

    def omega_b(self, m: LocalGroupoidElement, v: np.ndarray, eta: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """g^{-1}[Ad_h^{-1}(φ_ij(v)) + (α̃_h)_*(A_j(v)) + θ^H_h(η)]g."""
        dim = self.D.cover.dim
        phi = self.D.phi_at(m.i, m.j, m.x)
        phi_v = sum(v[mu] * phi[mu] for mu in range(dim))
        inner = (ad_inverse(m.h, phi_v) + alpha_tilde_star(m.h, self.D.A_at(m.j, m.x, v))
                 + theta_h(m.h, eta))
        return m.g.inverse_dense @ inner @ m.g.dense


def connection_forms(D: DifferentialCocycle) -> ConnectionForms:
    return ConnectionForms(D)


def _random_chain_tangent(ctx: CrossedModuleContext, rng: np.random.Generator) -> np.ndarray:
    basis = ctx.complex.chain_map_basis
    return sum(c * B for c, B in zip(rng.normal(size=len(basis)), basis)) if basis else np.zeros((ctx.n, ctx.n))


def connection_equivariance_check(D: DifferentialCocycle, rng: np.random.Generator,
                                  trials: int = 20) -> Dict[str, float]:
    """The three R* identities at random (point, group element, tangent) data."""
    ctx = D.context
    forms = ConnectionForms(D)
    dim = D.cover.dim
    worst = {"omega_a": 0.0, "omega_b": 0.0, "omega_c": 0.0}
    for _ in range(trials):
        (i, j), x = _random_chain(D.base, rng, 2)
        g, g_p = random_g(ctx, rng), random_g(ctx, rng)
        h, h_p = random_h(ctx, rng), random_h(ctx, rng)
        v, v2 = rng.normal(size=dim), rng.normal(size=dim)
        xi, xi_p = _random_chain_tangent(ctx, rng), _random_chain_tangent(ctx, rng)
        eta, eta_p = random_degree_map(ctx, rng, -1), random_degree_map(ctx, rng, -1)
        gg = g.dense @ g_p.dense
        g_p_inv = g_p.inverse_dense

        obj = LocalObject(i, x, g)
        moved = act_object(obj, g_p)
        lhs = forms.omega_a(moved, v, xi @ g_p.dense + g.dense @ xi_p)
        rhs = g_p_inv @ forms.omega_a(obj, v, xi) @ g_p.dense + g_p_inv @ xi_p
        worst["omega_a"] = max(worst["omega_a"], float(np.linalg.norm(lhs - rhs)))

        lhs = forms.omega_c(moved, v, v2)
        rhs = g_p_inv @ forms.omega_c(obj, v, v2) @ g_p.dense
        worst["omega_c"] = max(worst["omega_c"], float(np.linalg.norm(lhs - rhs)))

        m = LocalGroupoidElement(i, j, x, h, g)
        k = alpha(g, h_p).dense
        g_inv = g.inverse_dense
        dk = xi @ h_p.dense @ g_inv + g.dense @ eta_p @ g_inv - g.dense @ h_p.dense @ g_inv @ xi @ g_inv
        eta_hat = eta @ (np.eye(ctx.n) + tau_star_dense(ctx, k)) + h.dense @ tau_star_dense(ctx, dk) + dk
        xi_hat = xi @ g_p.dense + g.dense @ xi_p
        lhs = forms.omega_b(act_morphism(m, h_p, g_p), v, eta_hat, xi_hat)
        inner = (ad_inverse(h_p, forms.omega_b(m, v, eta, xi))
                 + alpha_tilde_star(h_p, forms.omega_a(LocalObject(j, x, g), v, xi))
                 + theta_h(h_p, eta_p))
        rhs = g_p_inv @ inner @ g_p.dense
        worst["omega_b"] = max(worst["omega_b"], float(np.linalg.norm(lhs - rhs)))
    return worst
