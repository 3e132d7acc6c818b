#!/usr/bin/env python3
"""
The 2-group Γ(V,∂) of a cochain complex.

G is the group of invertible degree-0 chain maps, H the group of degree −1
homotopies modulo exact elements with product h1 ⋆ h2 = h1 + h2 + h1τ_*(h2),
τ(h) = id + ∂h + h∂ and α(g, h) = g h g^{-1}. The linearized data (τ_*,
α_*, the bracket on gl^{-1}) and the Maurer–Cartan calculus on H used by the
connection forms live here as well.

Elements carry their context; all operations work on dense matrices and
return fresh immutable elements.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Optional, Tuple

import numpy as np

from graded_core import (
    ALGEBRAIC_TOL,
    DEFAULT_EXACTNESS_TOL,
    CochainComplex,
    ExactnessResult,
    GradedLinearMap,
    StructuralError,
)

logger = logging.getLogger(__name__)

SINGULAR_COND = 1e12  # blocks above this condition number count as singular


class NotInHError(ValueError):
    """τ(h) is not invertible, so h does not define an element of H."""


class NotInGError(ValueError):
    """A candidate G element is not an invertible chain map."""


def _block_conditions(ctx: "CrossedModuleContext", M: np.ndarray) -> Dict[int, float]:
    space = ctx.complex.space
    return {k: float(np.linalg.cond(M[space.slice(k), space.slice(k)])) for k in space.degrees}


def _block_inverse(ctx: "CrossedModuleContext", M: np.ndarray) -> np.ndarray:
    """Inverse of a block-diagonal (degree-0) dense matrix, degree by degree."""
    space = ctx.complex.space
    out = np.zeros_like(M)
    for k in space.degrees:
        s = space.slice(k)
        out[s, s] = np.linalg.inv(M[s, s])
    return out


@dataclass(frozen=True)
class CrossedModuleContext:
    complex: CochainComplex
    tol: float = DEFAULT_EXACTNESS_TOL

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"Tolerance must be positive, got {self.tol}")

    @property
    def D(self) -> np.ndarray:
        return self.complex.D

    @property
    def n(self) -> int:
        return self.complex.total_dim

    # -- element construction -------------------------------------------------

    def g_element(self, matrix: Any, check: bool = True) -> "GElement":
        """Wrap a degree-0 map; with ``check`` the chain-map and invertibility laws are enforced."""
        M = matrix.dense if isinstance(matrix, GradedLinearMap) else np.asarray(matrix, dtype=float)
        M = np.where(self.complex.mask(0), M, 0.0)
        if check:
            residual = self.complex.chain_map_residual(M)
            if residual > ALGEBRAIC_TOL * (1.0 + np.linalg.norm(M)):
                raise NotInGError(f"Not a chain map: norm(∂g − g∂) = {residual:.3e}")
            for k, cond in _block_conditions(self, M).items():
                if not np.isfinite(cond) or cond > SINGULAR_COND:
                    raise NotInGError(f"Degree {k} block is singular (condition number {cond:.3e})")
        return GElement(self, M)

    def h_element(self, matrix: Any, check: bool = True) -> "HElement":
        M = matrix.dense if isinstance(matrix, GradedLinearMap) else np.asarray(matrix, dtype=float)
        M = np.where(self.complex.mask(-1), M, 0.0)
        h = HElement(self, M)
        if check:
            _tau_inverse(h)
        return h

    def identity(self) -> "GElement":
        return GElement(self, np.eye(self.n))

    def zero_h(self) -> "HElement":
        return HElement(self, np.zeros((self.n, self.n)))

    def is_exact(self, X: np.ndarray, tol: Optional[float] = None) -> ExactnessResult:
        """Exactness of a dense degree −1 difference."""
        return self.complex.solve_exactness(self.complex.from_dense(-1, X), tol or self.tol)


@dataclass(frozen=True, eq=False)
class GElement:
    context: CrossedModuleContext = field(repr=False)
    dense: np.ndarray

    @cached_property
    def map(self) -> GradedLinearMap:
        return self.context.complex.from_dense(0, self.dense)

    @cached_property
    def conditions(self) -> Dict[int, float]:
        return _block_conditions(self.context, self.dense)

    @cached_property
    def inverse_dense(self) -> np.ndarray:
        return _block_inverse(self.context, self.dense)

    def __matmul__(self, other: "GElement") -> "GElement":
        return g_mul(self, other)


@dataclass(frozen=True, eq=False)
class HElement:
    context: CrossedModuleContext = field(repr=False)
    dense: np.ndarray

    @cached_property
    def rep(self) -> GradedLinearMap:
        return self.context.complex.from_dense(-1, self.dense)

    def __mul__(self, other: "HElement") -> "HElement":
        return h_mul(self, other)


# -- linearized data ----------------------------------------------------------

def tau_star_dense(ctx: CrossedModuleContext, S: np.ndarray) -> np.ndarray:
    return ctx.D @ S + S @ ctx.D


def tau_star(ctx: CrossedModuleContext, S: GradedLinearMap) -> GradedLinearMap:
    """∂S + S∂ for a degree −1 map."""
    if S.degree != -1:
        raise StructuralError(f"tau_star expects degree −1, got {S.degree}")
    return ctx.complex.from_dense(0, tau_star_dense(ctx, S.dense))


def alpha_star(ctx: CrossedModuleContext, X: GradedLinearMap, S: GradedLinearMap) -> GradedLinearMap:
    """XS − SX for a chain map X and a degree −1 map S."""
    if X.degree != 0 or S.degree != -1:
        raise StructuralError("alpha_star expects a degree 0 map and a degree −1 map")
    return ctx.complex.from_dense(-1, X.dense @ S.dense - S.dense @ X.dense)


def bracket_h_dense(ctx: CrossedModuleContext, T: np.ndarray, S: np.ndarray) -> np.ndarray:
    D = ctx.D
    return S @ D @ T - T @ D @ S + S @ T @ D - T @ S @ D


def bracket_h(ctx: CrossedModuleContext, T: GradedLinearMap, S: GradedLinearMap) -> GradedLinearMap:
    """[T,S] = S∂T − T∂S + ST∂ − TS∂."""
    if T.degree != -1 or S.degree != -1:
        raise StructuralError("bracket_h expects two degree −1 maps")
    return ctx.complex.from_dense(-1, bracket_h_dense(ctx, T.dense, S.dense))


def star_commutator_dense(ctx: CrossedModuleContext, Y1: np.ndarray, Y2: np.ndarray) -> np.ndarray:
    """Second-order commutator of the ⋆ law: Y1τ_*(Y2) − Y2τ_*(Y1)."""
    return Y1 @ tau_star_dense(ctx, Y2) - Y2 @ tau_star_dense(ctx, Y1)


# -- group laws ---------------------------------------------------------------

def _tau_inverse(h: HElement) -> np.ndarray:
    ctx = h.context
    T = np.eye(ctx.n) + tau_star_dense(ctx, h.dense)
    for k, cond in _block_conditions(ctx, T).items():
        if not np.isfinite(cond) or cond > SINGULAR_COND:
            raise NotInHError(f"τ(h) is singular in degree {k} (condition number {cond:.3e})")
    return _block_inverse(ctx, T)


def tau(h: HElement) -> GElement:
    ctx = h.context
    _tau_inverse(h)
    return GElement(ctx, np.eye(ctx.n) + tau_star_dense(ctx, h.dense))


def h_mul(h1: HElement, h2: HElement) -> HElement:
    """h1 ⋆ h2 = h1 + h2 + h1(∂h2 + h2∂)."""
    ctx = h1.context
    return HElement(ctx, h1.dense + h2.dense + h1.dense @ tau_star_dense(ctx, h2.dense))


def h_inv(h: HElement) -> HElement:
    """−h τ(h)^{-1}; h ⋆ h_inv(h) vanishes at representative level."""
    return HElement(h.context, -h.dense @ _tau_inverse(h))


def alpha(g: GElement, h: HElement) -> HElement:
    return HElement(h.context, g.dense @ h.dense @ g.inverse_dense)


def g_mul(g1: GElement, g2: GElement) -> GElement:
    return GElement(g1.context, g1.dense @ g2.dense)


def g_inv(g: GElement) -> GElement:
    return GElement(g.context, g.inverse_dense)


def exact_difference(h1: HElement, h2: HElement, tol: Optional[float] = None) -> ExactnessResult:
    """Decide h1 ≡ h2 in gl^{-1}."""
    return h1.context.is_exact(h1.dense - h2.dense, tol)


# -- Maurer–Cartan calculus on H ---------------------------------------------------
#
# Φ(h) = [[τ(h), 0], [h, id]] is a faithful block representation of (H, ⋆);
# the formulas below are the lower-left blocks of the corresponding matrix
# expressions in Φ.

def block_representation(h: HElement) -> np.ndarray:
    n = h.context.n
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = np.eye(n) + tau_star_dense(h.context, h.dense)
    out[n:, :n] = h.dense
    out[n:, n:] = np.eye(n)
    return out


def left_translate(h: HElement, Y: np.ndarray) -> np.ndarray:
    """(L_h)_*Y = Y + hτ_*(Y)."""
    return Y + h.dense @ tau_star_dense(h.context, Y)


def ad_inverse(h: HElement, Y: np.ndarray) -> np.ndarray:
    """Ad_h^{-1}(Y) = Yτ(h) − hτ(h)^{-1}τ_*(Y)τ(h)."""
    ctx = h.context
    T = np.eye(ctx.n) + tau_star_dense(ctx, h.dense)
    return Y @ T - h.dense @ _tau_inverse(h) @ tau_star_dense(ctx, Y) @ T


def theta_h(h: HElement, eta: np.ndarray) -> np.ndarray:
    """Left Maurer–Cartan form of H at h on the tangent vector eta."""
    return eta - h.dense @ _tau_inverse(h) @ tau_star_dense(h.context, eta)


def alpha_tilde_star(h: HElement, X: np.ndarray) -> np.ndarray:
    """Derivative at id of g ↦ h^{-1} ⋆ α(g, h): Xh − hτ(h)^{-1}Xτ(h)."""
    ctx = h.context
    T = np.eye(ctx.n) + tau_star_dense(ctx, h.dense)
    return X @ h.dense - h.dense @ _tau_inverse(h) @ X @ T


def theta_g(g: GElement, xi: np.ndarray) -> np.ndarray:
    return g.inverse_dense @ xi


def maurer_cartan(g: GElement, xi: np.ndarray, h: HElement, eta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Θ of Γ at (h, g): (θ^G(ξ), α_{g^{-1}}(θ^H(η)))."""
    return theta_g(g, xi), g.inverse_dense @ theta_h(h, eta) @ g.dense


# -- random data for property checks ---------------------------------------------

def random_g(ctx: CrossedModuleContext, rng: np.random.Generator, scale: float = 0.3) -> GElement:
    """Chain map near the identity drawn from the chain-map subspace."""
    basis = ctx.complex.chain_map_basis
    M = np.eye(ctx.n)
    if basis:
        coeffs = rng.normal(size=len(basis))
        M = M + scale * sum(c * B for c, B in zip(coeffs, basis)) / np.sqrt(len(basis))
    return ctx.g_element(M)


def random_degree_map(ctx: CrossedModuleContext, rng: np.random.Generator,
                      degree: int, scale: float = 0.3) -> np.ndarray:
    mask = ctx.complex.mask(degree)
    return np.where(mask, scale * rng.normal(size=mask.shape), 0.0)


def random_h(ctx: CrossedModuleContext, rng: np.random.Generator, scale: float = 0.3) -> HElement:
    return ctx.h_element(random_degree_map(ctx, rng, -1, scale))


def random_exact(ctx: CrossedModuleContext, rng: np.random.Generator, scale: float = 0.3) -> np.ndarray:
    k = random_degree_map(ctx, rng, -2, scale)
    return ctx.D @ k - k @ ctx.D


def bracket_orientation_report(ctx: CrossedModuleContext, rng: np.random.Generator,
                               trials: int = 10) -> Dict[str, Any]:
    """Compare both argument orders of bracket_h with α_*(τ_*(Y1))(Y2) mod exact.

    The orientation is reported, never asserted.
    """
    worst = {"bracket_h(Y1,Y2)": 0.0, "bracket_h(Y2,Y1)": 0.0}
    for _ in range(trials):
        Y1 = random_degree_map(ctx, rng, -1)
        Y2 = random_degree_map(ctx, rng, -1)
        T1 = tau_star_dense(ctx, Y1)
        reference = T1 @ Y2 - Y2 @ T1
        for label, value in (("bracket_h(Y1,Y2)", bracket_h_dense(ctx, Y1, Y2)),
                             ("bracket_h(Y2,Y1)", bracket_h_dense(ctx, Y2, Y1))):
            residual, _ = ctx.complex.exact_residual_dense(reference - value)
            worst[label] = max(worst[label], residual)
    matching = [label for label, r in worst.items() if r <= ALGEBRAIC_TOL]
    logger.debug(f"Bracket orientation residuals: {worst}")
    return {"residuals": worst, "matching": matching}


def crossed_module_laws(ctx: CrossedModuleContext, rng: np.random.Generator,
                        trials: int = 100) -> Dict[str, float]:
    """Worst residuals of the crossed-module laws over seeded random elements.

    Peiffer and well-definedness are measured modulo exact elements, the
    others at representative level.
    """
    complex_ = ctx.complex
    worst = {"tau_homomorphism": 0.0, "alpha_equivariance": 0.0, "peiffer": 0.0,
             "well_definedness": 0.0, "h_associativity": 0.0, "h_inverse": 0.0}

    def bump(key: str, value: float) -> None:
        worst[key] = max(worst[key], float(value))

    for _ in range(trials):
        g = random_g(ctx, rng)
        h1, h2, h3 = random_h(ctx, rng), random_h(ctx, rng), random_h(ctx, rng)
        bump("tau_homomorphism", np.linalg.norm(tau(h_mul(h1, h2)).dense - tau(h1).dense @ tau(h2).dense))
        bump("alpha_equivariance",
             np.linalg.norm(tau(alpha(g, h1)).dense - g.dense @ tau(h1).dense @ g.inverse_dense))
        peiffer = alpha(tau(h1), h2).dense - h_mul(h_mul(h1, h2), h_inv(h1)).dense
        bump("peiffer", complex_.exact_residual_dense(peiffer)[0])

        e1, e2 = random_exact(ctx, rng), random_exact(ctx, rng)
        shifted1, shifted2 = HElement(ctx, h1.dense + e1), HElement(ctx, h2.dense + e2)
        bump("well_definedness", max(
            np.linalg.norm(tau(shifted1).dense - tau(h1).dense),
            complex_.exact_residual_dense(h_mul(shifted1, shifted2).dense - h_mul(h1, h2).dense)[0],
            complex_.exact_residual_dense(alpha(g, shifted1).dense - alpha(g, h1).dense)[0],
        ))
        bump("h_associativity",
             np.linalg.norm(h_mul(h_mul(h1, h2), h3).dense - h_mul(h1, h_mul(h2, h3)).dense))
        bump("h_inverse", np.linalg.norm(h_mul(h1, h_inv(h1)).dense))
    logger.debug(f"Crossed-module law residuals: {worst}")
    return worst
