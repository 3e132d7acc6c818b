#!/usr/bin/env python3
"""
Path and surface holonomy of a flat superconnection.

Path transport solves g′ = −A(γ′)g, g(0) = id with A = ω¹, either with a
classical RK4 scheme or with the truncated iterated-integral series. Surface
transport over Σ = σ∘Θ₂ is computed three ways:

    soe          h′ = K + h·τ_*(K),  K(s) = ∫ g_s(t)^{-1} B(∂_tΣ, ∂_sΣ) g_s(t) dt
    closedform   h(1) = (∫ K(s) G(s)^{-1} ds)·G(1),  G(s) = g_s(1)
    chen         hol(σ) = ∫∫ M_s(t) B(∂_tΣ, ∂_sΣ) g_s(t) dt ds, M_s(t) = G(s) g_s(t)^{-1}

where M_s is integrated backwards from t = 1 on its own. With G₀ = G(0) and
G₁ = G(1) the three results satisfy G₀·τ(h) = G₁ and h ≡ G₀^{-1}·hol(σ)
modulo exact elements.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre

from crossed_module import (
    CrossedModuleContext,
    GElement,
    HElement,
    alpha,
    h_mul,
    random_g,
    random_h,
    tau,
    tau_star_dense,
)
from forms import EndValuedForm, Superconnection, chart_samples, flatness_residuals
from graded_core import ExactnessResult, GradedLinearMap
from simplex import Bigon, FiberPiece, PLPath, Simplex2, bigon_from_simplex

logger = logging.getLogger(__name__)

DEFAULT_STEPS_PER_UNIT = 2000
DEFAULT_S_STEPS = 100
DEFAULT_QUADRATURE_NODES = 32
DEFAULT_SERIES_ORDER = 24
DEFAULT_SERIES_PANELS = 4
DEFAULT_THREADS = 4
DEFAULT_SERIES_TAIL_TOL = 1e-10
DEFAULT_FLATNESS_TOL = 1e-8
CHAIN_MAP_WARN_TOL = 1e-7


class PreconditionError(ValueError):
    """Flatness or boundary precondition of a holonomy computation failed."""


@dataclass(frozen=True)
class NumericParameters:
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT
    s_steps: int = DEFAULT_S_STEPS
    quadrature_nodes: int = DEFAULT_QUADRATURE_NODES
    series_order: int = DEFAULT_SERIES_ORDER
    series_panels: int = DEFAULT_SERIES_PANELS
    threads: int = DEFAULT_THREADS


def resolve_threads(default: int = DEFAULT_THREADS) -> int:
    """Worker count, capped by HOLAB_THREADS when set."""
    raw = os.environ.get("HOLAB_THREADS")
    if raw:
        try:
            return max(1, min(int(raw), int(default)))
        except ValueError:
            logger.warning(f"Ignoring non-integer HOLAB_THREADS={raw!r}")
    return max(1, int(default))


@dataclass
class TransportResult:
    value: GElement
    method: str
    steps: int
    error_estimate: float
    warnings: List[str] = field(default_factory=list)


@dataclass
class SurfaceResult:
    value: HElement
    method: str
    g_gamma0: GElement
    g_gamma1: GElement
    warnings: List[str] = field(default_factory=list)


# -- linear ODE kernels ----------------------------------------------------------------

Generator = Callable[[np.ndarray], np.ndarray]


def rk4_propagators(F: Generator, grid: np.ndarray) -> np.ndarray:
    """One-step RK4 propagators of Y′ = F(t)Y for every interval of a monotone grid."""
    grid = np.asarray(grid, dtype=float)
    h = np.diff(grid)[:, None, None]
    values = F(grid)
    F0, F1 = values[:-1], values[1:]
    Fm = F(0.5 * (grid[:-1] + grid[1:]))
    eye = np.eye(values.shape[-1])
    B1 = F0
    B2 = Fm @ (eye + 0.5 * h * B1)
    B3 = Fm @ (eye + 0.5 * h * B2)
    B4 = F1 @ (eye + h * B3)
    return eye + h / 6.0 * (B1 + 2.0 * B2 + 2.0 * B3 + B4)


def accumulate(propagators: np.ndarray, start: np.ndarray,
               checkpoints: Iterable[int] = ()) -> Tuple[np.ndarray, Dict[int, np.ndarray]]:
    """Ordered product P_k⋯P_1·start; grid indices in ``checkpoints`` are recorded."""
    wanted = set(checkpoints)
    Y = start
    recorded = {0: Y} if 0 in wanted else {}
    for k, P in enumerate(propagators, start=1):
        Y = P @ Y
        if k in wanted:
            recorded[k] = Y
    return Y, recorded


def _gauss_nodes(a: float, b: float, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = legendre.leggauss(nodes)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def _uniform_grid(a: float, b: float, steps_per_unit: int) -> np.ndarray:
    steps = max(1, int(math.ceil(abs(b - a) * steps_per_unit)))
    return np.linspace(a, b, steps + 1)


# -- path transport ----------------------------------------------------------------------

def _segment_generator(omega1: EndValuedForm, segment) -> Generator:
    def F(ts: np.ndarray) -> np.ndarray:
        return -omega1.evaluate_many(segment.point(ts), [segment.velocity(ts)])
    return F


def transport_form(omega1: EndValuedForm, path: PLPath, steps_per_unit: int) -> np.ndarray:
    """Dense g_γ(1) for the 1-form ``omega1`` (RK4, segments concatenated)."""
    g = np.eye(omega1.space.total_dim)
    for segment in path.segments:
        grid = _uniform_grid(0.0, 1.0, steps_per_unit)
        g, _ = accumulate(rk4_propagators(_segment_generator(omega1, segment), grid), g)
    return g


def _chain_map_warning(S: Superconnection, g: np.ndarray) -> List[str]:
    defect = S.complex.chain_map_residual(g)
    if defect > CHAIN_MAP_WARN_TOL * (1.0 + np.linalg.norm(g)):
        message = f"transport is not a chain map (residual {defect:.3e}); is the superconnection flat?"
        logger.warning(message)
        return [message]
    return []


def transport_ode(S: Superconnection, gamma: PLPath,
                  steps: int = DEFAULT_STEPS_PER_UNIT) -> TransportResult:
    """RK4 transport; the error estimate compares against a half-resolution run."""
    ctx = CrossedModuleContext(S.complex)
    g = transport_form(S.omega1, gamma, steps)
    coarse = transport_form(S.omega1, gamma, max(1, steps // 2))
    error = float(np.linalg.norm(g - coarse)) / 15.0
    warnings = _chain_map_warning(S, g)
    try:
        value = ctx.g_element(g, check=False)
        _ = value.inverse_dense
    except np.linalg.LinAlgError:
        raise ValueError("Transport produced a singular block; check the connection data")
    logger.debug(f"transport_ode: {len(gamma)} segments, {steps} steps each, error ~{error:.2e}")
    return TransportResult(value, "ode", steps * len(gamma), error, warnings)


def _spectral_integration(nodes: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss–Legendre nodes/weights on [−1,1] and the matrix of f ↦ ∫_{−1}^{x_i} f."""
    x, w = legendre.leggauss(nodes)
    V = legendre.legvander(x, nodes - 1)
    Vint = np.column_stack([legendre.legval(x, legendre.legint(np.eye(nodes)[j], lbnd=-1))
                            for j in range(nodes)])
    return x, w, Vint @ np.linalg.inv(V)


def transport_series(S: Superconnection, gamma: PLPath, order: int = DEFAULT_SERIES_ORDER,
                     panels: int = DEFAULT_SERIES_PANELS, nodes: int = DEFAULT_QUADRATURE_NODES,
                     tail_tol: float = DEFAULT_SERIES_TAIL_TOL) -> TransportResult:
    """g = id + Σ_{n≤N} ∫_{t₁≥…≥t_n} ā(t₁)⋯ā(t_n), ā = −A(γ′), per panel and multiplied out.

    The nested integrals are evaluated by spectral integration on Gauss–Legendre
    nodes; the tail bound is Σ_panels (max‖ā‖·|panel|)^{N+1}/(N+1)!.
    """
    ctx = CrossedModuleContext(S.complex)
    n = S.space.total_dim
    x, w, integration = _spectral_integration(nodes)
    g = np.eye(n)
    tail = 0.0
    edges = np.linspace(0.0, 1.0, panels + 1)
    for segment in gamma.segments:
        F = _segment_generator(S.omega1, segment)
        for a, b in zip(edges, edges[1:]):
            half = 0.5 * (b - a)
            abar = F(a + half * (x + 1.0))
            term = np.broadcast_to(np.eye(n), (nodes, n, n))
            panel = np.eye(n)
            for _ in range(order):
                integrand = abar @ term
                panel = panel + half * np.einsum("j,jab->ab", w, integrand)
                term = half * np.einsum("ij,jab->iab", integration, integrand)
            g = panel @ g
            bound = float(np.max(np.linalg.norm(abar, axis=(1, 2)))) * (b - a)
            tail += bound ** (order + 1) / math.factorial(order + 1)
    warnings = _chain_map_warning(S, g)
    if tail > tail_tol:
        message = f"series tail bound {tail:.3e} exceeds {tail_tol:.1e}; raise the order or the panel count"
        logger.warning(message)
        warnings.append(message)
    return TransportResult(ctx.g_element(g, check=False), "series", order, tail, warnings)


# -- surface transport --------------------------------------------------------------------

@dataclass
class FiberSolution:
    s: float
    G: np.ndarray                       # g_s(1)
    K: np.ndarray                       # ∫ g^{-1} b g dt over the vertical piece
    chen: Optional[np.ndarray] = None   # ∫ M b g dt over the vertical piece


class FiberSolver:
    """Transports along the horizontal fibers t ↦ Σ(t, s) of a bigon."""

    def __init__(self, S: Superconnection, bigon: Bigon, params: NumericParameters):
        self.S = S
        self.bigon = bigon
        self.params = params
        self.n = S.space.total_dim

    def _generator(self, piece: FiberPiece, transpose: bool = False) -> Generator:
        def F(ts: np.ndarray) -> np.ndarray:
            points, dt, _ = self.bigon.fiber(piece, ts)
            a = self.S.omega1.evaluate_many(points, [dt])
            return np.transpose(a, (0, 2, 1)) if transpose else -a
        return F

    def solve(self, s: float, with_chen: bool = False) -> FiberSolution:
        diagonal, vertical, horizontal = self.bigon.pieces(s)
        steps = self.params.steps_per_unit
        nodes, weights = _gauss_nodes(vertical.t0, vertical.t1, self.params.quadrature_nodes)

        g = np.eye(self.n)
        if diagonal.length > 0:
            grid = _uniform_grid(diagonal.t0, diagonal.t1, steps)
            g, _ = accumulate(rk4_propagators(self._generator(diagonal), grid), g)

        K = np.zeros((self.n, self.n))
        chen = np.zeros((self.n, self.n)) if with_chen else None
        if vertical.length > 0:
            grid = np.union1d(_uniform_grid(vertical.t0, vertical.t1, steps), nodes)
            marks = np.searchsorted(grid, nodes)
            g_end, recorded = accumulate(rk4_propagators(self._generator(vertical), grid), g, marks)
            g_nodes = np.stack([recorded[int(k)] for k in marks])
            points, dt, ds = self.bigon.fiber(vertical, nodes)
            b = self.S.omega2.evaluate_many(points, [dt, ds])
            K = np.einsum("k,kab->ab", weights, np.linalg.inv(g_nodes) @ b @ g_nodes)
            g = g_end
        if horizontal.length > 0:
            grid = _uniform_grid(horizontal.t0, horizontal.t1, steps)
            g, _ = accumulate(rk4_propagators(self._generator(horizontal), grid), g)

        if with_chen and vertical.length > 0:
            chen = np.einsum("k,kab->ab", weights, self._backward(horizontal, vertical, nodes) @ b @ g_nodes)
        return FiberSolution(s, g, K, chen)

    def _backward(self, horizontal: FiberPiece, vertical: FiberPiece, nodes: np.ndarray) -> np.ndarray:
        """M(t) at the quadrature nodes from M′ = M·A(∂_tΣ), M(1) = id, run on Mᵀ from t = 1."""
        steps = self.params.steps_per_unit
        Y = np.eye(self.n)
        grid = _uniform_grid(horizontal.t1, horizontal.t0, steps)
        Y, _ = accumulate(rk4_propagators(self._generator(horizontal, transpose=True), grid), Y)
        grid = np.union1d(_uniform_grid(vertical.t0, vertical.t1, steps), nodes)[::-1]
        # the reversed grid is decreasing; locate each node by value
        marks = [int(np.flatnonzero(grid == t)[0]) for t in nodes]
        _, recorded = accumulate(rk4_propagators(self._generator(vertical, transpose=True), grid), Y, marks)
        return np.stack([recorded[k].T for k in marks])

    def solve_many(self, s_values: Sequence[float], with_chen: bool = False) -> Dict[float, FiberSolution]:
        threads = resolve_threads(self.params.threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            solutions = list(pool.map(lambda s: self.solve(float(s), with_chen), s_values))
        return {sol.s: sol for sol in solutions}


def _s_grid(s_steps: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, 2 * s_steps + 1)


def _integrate_soe(ctx: CrossedModuleContext, fibers: Dict[float, FiberSolution], s_steps: int) -> np.ndarray:
    """RK4 in s for the representative-level equation h′ = K + h·τ_*(K), h(0) = 0."""
    grid = _s_grid(s_steps)
    H = 1.0 / s_steps
    h = np.zeros_like(fibers[0.0].K)

    def rhs(K: np.ndarray, y: np.ndarray) -> np.ndarray:
        return K + y @ tau_star_dense(ctx, K)

    for n in range(s_steps):
        K0 = fibers[float(grid[2 * n])].K
        Km = fibers[float(grid[2 * n + 1])].K
        K1 = fibers[float(grid[2 * n + 2])].K
        k1 = rhs(K0, h)
        k2 = rhs(Km, h + 0.5 * H * k1)
        k3 = rhs(Km, h + 0.5 * H * k2)
        k4 = rhs(K1, h + H * k3)
        h = h + H / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return h


class SurfaceComputation:
    """Shared fiber solutions for the three surface methods on one simplex."""

    def __init__(self, S: Superconnection, sigma: Simplex2, params: Optional[NumericParameters] = None):
        self.S = S
        self.sigma = sigma
        self.params = params or NumericParameters()
        self.ctx = CrossedModuleContext(S.complex)
        self.bigon = bigon_from_simplex(sigma)
        self.solver = FiberSolver(S, self.bigon, self.params)
        self.fibers: Dict[float, FiberSolution] = {}
        self.s_nodes, self.s_weights = _gauss_nodes(0.0, 1.0, self.params.quadrature_nodes)

    def _ensure(self, s_values: Iterable[float], with_chen: bool = False) -> None:
        missing = [float(s) for s in s_values
                   if float(s) not in self.fibers or (with_chen and self.fibers[float(s)].chen is None)]
        if missing:
            logger.debug(f"Solving {len(missing)} fibers (chen={with_chen})")
            self.fibers.update(self.solver.solve_many(missing, with_chen))

    def boundary(self) -> Tuple[GElement, GElement]:
        self._ensure([0.0, 1.0])
        return (self.ctx.g_element(self.fibers[0.0].G, check=False),
                self.ctx.g_element(self.fibers[1.0].G, check=False))

    def _result(self, value: np.ndarray, method: str) -> SurfaceResult:
        g0, g1 = self.boundary()
        return SurfaceResult(self.ctx.h_element(value, check=False), method, g0, g1)

    def soe(self) -> SurfaceResult:
        self._ensure(_s_grid(self.params.s_steps))
        return self._result(_integrate_soe(self.ctx, self.fibers, self.params.s_steps), "soe")

    def closed_form(self) -> SurfaceResult:
        self._ensure(list(self.s_nodes) + [1.0])
        integral = sum(w * self.fibers[float(s)].K @ np.linalg.inv(self.fibers[float(s)].G)
                       for s, w in zip(self.s_nodes, self.s_weights))
        return self._result(integral @ self.fibers[1.0].G, "closedform")

    def chen(self) -> SurfaceResult:
        self._ensure(self.s_nodes, with_chen=True)
        value = sum(w * self.fibers[float(s)].chen for s, w in zip(self.s_nodes, self.s_weights))
        return self._result(value, "chen")


def surface_ode(S: Superconnection, sigma: Simplex2, params: Optional[NumericParameters] = None) -> SurfaceResult:
    return SurfaceComputation(S, sigma, params).soe()


def surface_closed_form(S: Superconnection, sigma: Simplex2,
                        params: Optional[NumericParameters] = None) -> SurfaceResult:
    return SurfaceComputation(S, sigma, params).closed_form()


def surface_chen(S: Superconnection, sigma: Simplex2, params: Optional[NumericParameters] = None) -> SurfaceResult:
    """Iterated-integral holonomy hol(σ) = ∫ G(s)·K(s) ds.

    The backward factor M_s(t) = G(s)·g_s(t)^{-1} puts the fiber transport on
    the left, so the value lands in the fiber at v₀ and relates to the soe
    solution by h ≡ G₀^{-1}·hol(σ). The other ordering, ∫ K(s)·G(s)^{-1} ds
    followed by ·G₁, is `surface_closed_form` and solves the soe equation
    exactly. Writing G(s) = G₀·τ(h(s)) the two orderings differ by τ(h(s)) − id
    = ∂h + h∂ moved across K(s); for a flat superconnection these terms sum to
    an element ∂k − k∂, so both agree modulo exact elements. `surface_bundle`
    reports the gap as soe_vs_chen.
    """
    return SurfaceComputation(S, sigma, params).chen()


SURFACE_METHODS = {"soe": "soe", "closedform": "closed_form", "chen": "chen"}


def surface_holonomy(S: Superconnection, sigma: Simplex2, method: str,
                     params: Optional[NumericParameters] = None) -> SurfaceResult:
    if method not in SURFACE_METHODS:
        raise ValueError(f"Unknown surface method '{method}' (expected one of {sorted(SURFACE_METHODS)})")
    return getattr(SurfaceComputation(S, sigma, params), SURFACE_METHODS[method])()


# -- the representation (f1, f2) -------------------------------------------------------------

def f1(S: Superconnection, gamma: PLPath, steps: int = DEFAULT_STEPS_PER_UNIT) -> GElement:
    """Holonomy of a path as a map from the fiber at γ(1) to the fiber at γ(0)."""
    g = transport_ode(S, gamma, steps).value
    return g.context.g_element(g.inverse_dense, check=False)


def f2(S: Superconnection, sigma: Simplex2, params: Optional[NumericParameters] = None) -> GradedLinearMap:
    return surface_chen(S, sigma, params).value.rep


def structure_equation_residual(S: Superconnection, f2_value: np.ndarray, sigma: Simplex2,
                                steps: int = DEFAULT_STEPS_PER_UNIT) -> float:
    D = S.D
    front, back = sigma.front_back(1)
    lhs = D @ f2_value + f2_value @ D
    rhs = f1(S, front, steps).dense @ f1(S, back, steps).dense - f1(S, sigma.face(1), steps).dense
    return float(np.linalg.norm(lhs - rhs))


def structure_equation_check(S: Superconnection, sigma: Simplex2,
                             params: Optional[NumericParameters] = None) -> float:
    """norm(∂f₂ + f₂∂ − [f₁(Q₁σ)f₁(P₁σ) − f₁(d₁σ)])."""
    params = params or NumericParameters()
    return structure_equation_residual(S, f2(S, sigma, params).dense, sigma, params.steps_per_unit)


def homotopy_invariance_check(S: Superconnection, sigma: Simplex2, sigma_prime: Simplex2,
                              tol: float = 1e-6, params: Optional[NumericParameters] = None) -> ExactnessResult:
    if not sigma.shares_boundary(sigma_prime):
        raise PreconditionError("Simplices do not share their three boundary edges")
    difference = f2(S, sigma, params) - f2(S, sigma_prime, params)
    return S.complex.solve_exactness(difference, tol)


def require_flat(S: Superconnection, samples: Optional[np.ndarray] = None,
                 tol: float = DEFAULT_FLATNESS_TOL) -> Dict[str, float]:
    samples = chart_samples(S.chart, 50) if samples is None else samples
    residuals = flatness_residuals(S, samples)
    failing = {k: v for k, v in residuals.items() if v > tol}
    if failing:
        detail = ", ".join(f"{k}={v:.3e}" for k, v in sorted(failing.items()))
        raise PreconditionError(f"flatness precondition failed: {detail}")
    return residuals


# -- combined evaluation ---------------------------------------------------------------------

@dataclass
class SurfaceBundle:
    soe: SurfaceResult
    closed_form: SurfaceResult
    chen: SurfaceResult
    residuals: Dict[str, float]


def surface_bundle(S: Superconnection, sigma: Simplex2, params: Optional[NumericParameters] = None,
                   check_flat: bool = True, flatness_tol: float = DEFAULT_FLATNESS_TOL) -> SurfaceBundle:
    """All three surface methods on shared fibers plus the relations tying them together.

    Residual keys: soe_vs_closedform, soe_vs_chen, closedform_vs_chen (mod exact,
    chen taken as G₀^{-1}·hol), tau_relation, structure_equation.
    """
    if check_flat:
        require_flat(S, tol=flatness_tol)
    computation = SurfaceComputation(S, sigma, params)
    soe = computation.soe()
    closed = computation.closed_form()
    chen = computation.chen()
    complex_ = S.complex
    G0, G1 = soe.g_gamma0, soe.g_gamma1
    bridged = G0.inverse_dense @ chen.value.dense

    def mod_exact(X: np.ndarray) -> float:
        return complex_.exact_residual_dense(X)[0]

    residuals = {
        "soe_vs_closedform": mod_exact(soe.value.dense - closed.value.dense),
        "soe_vs_chen": mod_exact(soe.value.dense - bridged),
        "closedform_vs_chen": mod_exact(closed.value.dense - bridged),
        "tau_relation": float(np.linalg.norm(G0.dense @ tau(soe.value).dense - G1.dense)),
        "structure_equation": structure_equation_residual(
            S, chen.value.dense, sigma, computation.params.steps_per_unit),
    }
    logger.info(f"Surface methods compared: max residual {max(residuals.values()):.3e}")
    return SurfaceBundle(soe, closed, chen, residuals)


def path_functor_check(S: Superconnection, gamma: PLPath, rng: np.random.Generator,
                       trials: int = 5, steps: int = DEFAULT_STEPS_PER_UNIT) -> Dict[str, float]:
    """Hol_γ(h, g) = (α(G, h), G·g) with G = g_γ(1): target typing and compatibility with ⋆."""
    ctx = CrossedModuleContext(S.complex)
    G = transport_ode(S, gamma, steps).value
    typing, composition = 0.0, 0.0
    for _ in range(trials):
        h1, h2, g = random_h(ctx, rng), random_h(ctx, rng), random_g(ctx, rng)
        image = alpha(G, h1)
        target_after = tau(image).dense @ G.dense @ g.dense
        typing = max(typing, float(np.linalg.norm(target_after - G.dense @ tau(h1).dense @ g.dense)))
        lhs = alpha(G, h_mul(h2, h1)).dense
        rhs = h_mul(alpha(G, h2), alpha(G, h1)).dense
        composition = max(composition, float(np.linalg.norm(lhs - rhs)))
    return {"typing": typing, "composition": composition}


# -- multi-chart transport -------------------------------------------------------------------

def transport_cover(cocycle, legs: Sequence[Tuple[str, PLPath]],
                    steps: int = DEFAULT_STEPS_PER_UNIT, tol: float = 1e-10) -> GElement:
    """Transport along a path split into chart legs (global coordinates), glued by g_ij.

    With ψ_j = g_ij ψ_i, the result maps the fiber at the start (first chart's
    frame) to the fiber at the end (last chart's frame).
    """
    cover = cocycle.cover
    ctx = cocycle.context
    g = np.eye(ctx.n)
    previous: Optional[Tuple[str, PLPath]] = None
    for chart_id, path in legs:
        chart = cover.chart(chart_id)
        if previous is not None:
            prev_id, prev_path = previous
            x = path.start
            if np.linalg.norm(x - prev_path.end) > tol * (1.0 + np.linalg.norm(x)):
                raise ValueError(f"Leg in chart '{chart_id}' does not start where the previous leg ended")
            if not cover.in_overlap([prev_id, chart_id], x):
                raise ValueError(f"Crossing point {x.tolist()} lies outside the overlap of "
                                 f"'{prev_id}' and '{chart_id}'")
            g = cocycle.transition(prev_id, chart_id, x) @ g
        local = path.shifted(-chart.offset)
        if not chart.chart.contains(local.sample()):
            raise ValueError(f"Leg leaves chart '{chart_id}'")
        g = transport_form(cocycle.A[chart_id], local, steps) @ g
        previous = (chart_id, path)
    return ctx.g_element(g, check=False)
