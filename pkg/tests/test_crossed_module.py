#!/usr/bin/env python3
"""Tests for crossed_module.py."""

import sys
import unittest
from pathlib import Path

import numpy as np

SCRIPTS_DIR = Path(__file__).parent.parent / "scripts"
sys.path.insert(0, str(SCRIPTS_DIR))

from crossed_module import (
    CrossedModuleContext,
    NotInGError,
    NotInHError,
    ad_inverse,
    alpha,
    alpha_star,
    alpha_tilde_star,
    bracket_h,
    bracket_orientation_report,
    crossed_module_laws,
    exact_difference,
    h_inv,
    h_mul,
    random_exact,
    random_h,
    tau,
    tau_star,
    theta_h,
)
from graded_core import CochainComplex, GradedLinearMap, StructuralError, random_complex


def scalar_context():
    """V⁰ = V¹ = ℝ, ∂ = [1]; H is then the real line with a ⋆ b = a + b + ab."""
    return CrossedModuleContext(CochainComplex.from_blocks({0: 1, 1: 1}, {0: [[1.0]]}))


def wide_context():
    return CrossedModuleContext(CochainComplex.from_blocks(
        {0: 2, 1: 2, 2: 2},
        {0: np.array([[1.0, 0.0], [0.0, 0.0]]), 1: np.array([[0.0, 1.0], [0.0, 0.0]])},
    ))


def scalar_h(ctx, a):
    return ctx.h_element(np.array([[0.0, a], [0.0, 0.0]]))


class TestScalarGroup(unittest.TestCase):
    def setUp(self):
        self.ctx = scalar_context()

    def test_tau_is_scalar_multiple_of_identity(self):
        np.testing.assert_allclose(tau(scalar_h(self.ctx, 0.4)).dense, 1.4 * np.eye(2))

    def test_h_mul(self):
        product = h_mul(scalar_h(self.ctx, 0.5), scalar_h(self.ctx, -0.2))
        self.assertAlmostEqual(product.dense[0, 1], 0.5 - 0.2 - 0.1)

    def test_h_inv(self):
        a = 0.25
        self.assertAlmostEqual(h_inv(scalar_h(self.ctx, a)).dense[0, 1], -a / (1.0 + a))

    def test_singular_tau_rejected(self):
        with self.assertRaises(NotInHError):
            scalar_h(self.ctx, -1.0)

    def test_alpha_by_scalar_is_trivial(self):
        g = self.ctx.g_element(2.0 * np.eye(2))
        h = scalar_h(self.ctx, 0.3)
        np.testing.assert_allclose(alpha(g, h).dense, h.dense)

    def test_non_chain_map_rejected(self):
        with self.assertRaises(NotInGError):
            self.ctx.g_element(np.diag([1.0, 2.0]))

    def test_singular_block_rejected(self):
        ctx = wide_context()
        with self.assertRaises(NotInGError):
            ctx.g_element(np.zeros((6, 6)))

    def test_bracket_of_equal_arguments_vanishes(self):
        T = GradedLinearMap(self.ctx.complex.space, self.ctx.complex.space, -1, {1: [[0.7]]})
        self.assertEqual(bracket_h(self.ctx, T, T).norm(), 0.0)


class TestLinearizedData(unittest.TestCase):
    def setUp(self):
        self.ctx = wide_context()
        self.rng = np.random.default_rng(7)

    def test_tau_star_kills_exact(self):
        E = self.ctx.complex.from_dense(-1, random_exact(self.ctx, self.rng))
        self.assertLess(tau_star(self.ctx, E).norm(), 1e-12)

    def test_tau_star_intertwines_alpha_star(self):
        basis = self.ctx.complex.chain_map_basis
        X = self.ctx.complex.from_dense(0, sum(basis))
        S = random_h(self.ctx, self.rng).rep
        lhs = tau_star(self.ctx, alpha_star(self.ctx, X, S)).dense
        T = tau_star(self.ctx, S).dense
        np.testing.assert_allclose(lhs, X.dense @ T - T @ X.dense, atol=1e-12)

    def test_degree_checks(self):
        with self.assertRaises(StructuralError):
            tau_star(self.ctx, self.ctx.complex.identity())
        with self.assertRaises(StructuralError):
            bracket_h(self.ctx, self.ctx.complex.identity(), self.ctx.complex.zero(-1))

    def test_exact_difference(self):
        h = random_h(self.ctx, self.rng)
        shifted = self.ctx.h_element(h.dense + random_exact(self.ctx, self.rng))
        self.assertTrue(exact_difference(h, shifted).is_exact)
        other = random_h(self.ctx, self.rng)
        self.assertFalse(exact_difference(h, other).is_exact)

    def test_bracket_orientation_is_reported(self):
        report = bracket_orientation_report(self.ctx, self.rng, trials=3)
        self.assertEqual(set(report["residuals"]), {"bracket_h(Y1,Y2)", "bracket_h(Y2,Y1)"})
        self.assertTrue(set(report["matching"]) <= set(report["residuals"]))


class TestMaurerCartan(unittest.TestCase):
    def setUp(self):
        self.ctx = wide_context()
        self.rng = np.random.default_rng(11)
        self.h = random_h(self.ctx, self.rng)
        self.Y = random_h(self.ctx, self.rng, scale=1.0).dense

    def test_theta_h_is_left_translation_derivative(self):
        t = 0.5
        moved = h_mul(h_inv(self.h), self.ctx.h_element(self.h.dense + t * self.Y)).dense
        np.testing.assert_allclose(moved / t, theta_h(self.h, self.Y), atol=1e-10)

    def test_ad_inverse_is_conjugation_derivative(self):
        t = 0.5
        moved = h_mul(h_mul(h_inv(self.h), self.ctx.h_element(t * self.Y)), self.h).dense
        np.testing.assert_allclose(moved / t, ad_inverse(self.h, self.Y), atol=1e-10)

    def test_alpha_tilde_star_matches_finite_difference(self):
        X = sum(self.ctx.complex.chain_map_basis)
        eps = 1e-6
        values = []
        for t in (eps, -eps):
            g = self.ctx.g_element(np.eye(self.ctx.n) + t * X)
            values.append(h_mul(h_inv(self.h), alpha(g, self.h)).dense)
        np.testing.assert_allclose((values[0] - values[1]) / (2 * eps), alpha_tilde_star(self.h, X), atol=1e-6)


class TestCrossedModuleLaws(unittest.TestCase):
    def test_laws_hold_on_random_complexes(self):
        for seed in range(3):
            rng = np.random.default_rng(seed)
            ctx = CrossedModuleContext(random_complex(rng))
            worst = crossed_module_laws(ctx, rng, trials=10)
            for key, residual in worst.items():
                self.assertLess(residual, 1e-9, f"{key} (seed {seed})")

    def test_context_rejects_non_positive_tolerance(self):
        with self.assertRaises(ValueError):
            CrossedModuleContext(scalar_context().complex, tol=0.0)


if __name__ == "__main__":
    unittest.main()
