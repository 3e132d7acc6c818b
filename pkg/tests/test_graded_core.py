#!/usr/bin/env python3
"""Tests for graded_core.py."""

import sys
import unittest
from pathlib import Path

import numpy as np

SCRIPTS_DIR = Path(__file__).parent.parent / "scripts"
sys.path.insert(0, str(SCRIPTS_DIR))

from graded_core import (
    CochainComplex,
    GradedLinearMap,
    GradedVectorSpace,
    StructuralError,
    compose,
    graded_commutator_with_differential,
    norm,
    random_complex,
    solve_exactness,
)


def line_complex():
    """V⁰ = V¹ = ℝ with ∂ = [1]."""
    return CochainComplex.from_blocks({0: 1, 1: 1}, {0: np.array([[1.0]])})


def three_term_complex():
    """V⁰ = V¹ = V² = ℝ with ∂⁰ = [1] and ∂¹ = 0."""
    return CochainComplex.from_blocks({0: 1, 1: 1, 2: 1}, {0: np.array([[1.0]]), 1: np.array([[0.0]])})


class TestGradedVectorSpace(unittest.TestCase):
    def test_drops_zero_dimensions(self):
        V = GradedVectorSpace({0: 2, 1: 0, 2: 1})
        self.assertEqual(V.degrees, (0, 2))
        self.assertEqual(V.total_dim, 3)

    def test_slices_follow_degree_order(self):
        V = GradedVectorSpace({1: 2, -1: 1})
        self.assertEqual(V.slice(-1), slice(0, 1))
        self.assertEqual(V.slice(1), slice(1, 3))
        self.assertEqual(V.slice(5), slice(0, 0))

    def test_negative_dimension_rejected(self):
        with self.assertRaises(StructuralError):
            GradedVectorSpace({0: -1})

    def test_equality_by_dims(self):
        self.assertEqual(GradedVectorSpace({0: 1, 1: 2}), GradedVectorSpace({1: 2, 0: 1}))


class TestGradedLinearMap(unittest.TestCase):
    def setUp(self):
        self.complex = line_complex()
        self.V = self.complex.space

    def test_block_shape_checked(self):
        with self.assertRaises(StructuralError):
            GradedLinearMap(self.V, self.V, 0, {0: np.ones((2, 2))})

    def test_compose_identity(self):
        f = GradedLinearMap(self.V, self.V, -1, {1: [[3.0]]})
        self.assertTrue(compose(self.complex.identity(), f).allclose(f))

    def test_compose_differential_squares_to_zero(self):
        d = self.complex.differential
        self.assertEqual(norm(compose(d, d)), 0.0)

    def test_compose_differential_with_homotopy(self):
        S = GradedLinearMap(self.V, self.V, -1, {1: [[2.0]]})
        result = compose(self.complex.differential, S)
        self.assertEqual(result.degree, 0)
        np.testing.assert_allclose(result.block(1), [[2.0]])
        np.testing.assert_allclose(result.block(0), [[0.0]])

    def test_compose_space_mismatch(self):
        W = GradedVectorSpace({0: 2})
        f = GradedLinearMap(W, W, 0, {0: np.eye(2)})
        with self.assertRaises(StructuralError):
            compose(f, self.complex.identity())

    def test_norm_examples(self):
        self.assertEqual(norm(self.complex.zero(0)), 0.0)
        self.assertAlmostEqual(norm(self.complex.identity()), np.sqrt(2.0))
        W = GradedVectorSpace({0: 2, 1: 1})
        X = GradedLinearMap(W, W, 1, {0: [[3.0, 4.0]]})
        self.assertAlmostEqual(norm(X), 5.0)

    def test_dense_round_trip_keeps_degree_blocks_only(self):
        M = np.arange(4.0).reshape(2, 2)
        X = GradedLinearMap.from_dense(self.V, self.V, 1, M)
        np.testing.assert_allclose(X.dense, [[0.0, 0.0], [2.0, 0.0]])

    def test_to_table_keyed_by_source_degree(self):
        X = GradedLinearMap(self.V, self.V, -1, {1: [[1.5]]})
        self.assertEqual(X.to_table(), {"1": [[1.5]]})

    def test_combining_different_degrees_fails(self):
        with self.assertRaises(StructuralError):
            _ = self.complex.identity() + self.complex.differential


class TestCochainComplex(unittest.TestCase):
    def test_rejects_non_square_zero(self):
        with self.assertRaises(StructuralError):
            CochainComplex.from_blocks({0: 1, 1: 1, 2: 1}, {0: [[1.0]], 1: [[1.0]]})

    def test_commutator_of_zero(self):
        C = line_complex()
        self.assertEqual(norm(graded_commutator_with_differential(C, C.zero(-1))), 0.0)

    def test_commutator_degree_minus_one(self):
        C = line_complex()
        X = GradedLinearMap(C.space, C.space, -1, {1: [[0.7]]})
        result = C.commutator(X)
        self.assertTrue(result.allclose(C.identity().scale(0.7)))

    def test_commutator_degree_minus_two(self):
        C = three_term_complex()
        k = GradedLinearMap(C.space, C.space, -2, {2: [[2.5]]})
        result = C.commutator(k)
        self.assertEqual(result.degree, -1)
        np.testing.assert_allclose(result.block(2), [[2.5]])
        np.testing.assert_allclose(result.block(1), [[0.0]])

    def test_commutator_dense_sign_for_even_degree(self):
        D = np.zeros((3, 3))
        D[1, 0] = D[2, 1] = 1.0
        k = np.zeros((3, 3))
        k[0, 2] = 2.5
        C = three_term_complex()
        C.D = D
        result = C.commutator_dense(k, -2)
        self.assertAlmostEqual(result[0, 1], -2.5)
        self.assertAlmostEqual(result[1, 2], 2.5)

    def test_chain_map_basis_spans_commutant(self):
        C = line_complex()
        basis = C.chain_map_basis
        self.assertEqual(len(basis), 1)
        for B in basis:
            self.assertLess(C.chain_map_residual(B), 1e-12)

    def test_random_complex_is_deterministic(self):
        a = random_complex(np.random.default_rng(3))
        b = random_complex(np.random.default_rng(3))
        self.assertEqual(a.space, b.space)
        np.testing.assert_array_equal(a.D, b.D)
        self.assertLessEqual(a.total_dim, 12)
        self.assertEqual(float(np.abs(a.D @ a.D).max()), 0.0)


class TestExactness(unittest.TestCase):
    def setUp(self):
        self.C = CochainComplex.from_blocks(
            {0: 2, 1: 2, 2: 2},
            {0: np.array([[1.0, 0.0], [0.0, 0.0]]), 1: np.array([[0.0, 1.0], [0.0, 0.0]])},
        )

    def test_zero_is_exact(self):
        result = solve_exactness(self.C, self.C.zero(-1))
        self.assertTrue(result.is_exact)
        self.assertEqual(result.residual, 0.0)

    def test_exact_element_recognised_with_witness(self):
        rng = np.random.default_rng(0)
        k = np.where(self.C.mask(-2), rng.normal(size=(6, 6)), 0.0)
        X = self.C.from_dense(-1, self.C.D @ k - k @ self.C.D)
        result = self.C.solve_exactness(X)
        self.assertTrue(result.is_exact)
        W = result.witness.dense
        np.testing.assert_allclose(self.C.D @ W - W @ self.C.D, X.dense, atol=1e-10)

    def test_generic_element_not_exact(self):
        rng = np.random.default_rng(1)
        X = self.C.from_dense(-1, rng.normal(size=(6, 6)))
        self.assertFalse(self.C.solve_exactness(X).is_exact)

    def test_wrong_degree_rejected(self):
        with self.assertRaises(StructuralError):
            self.C.solve_exactness(self.C.identity())


if __name__ == "__main__":
    unittest.main()
