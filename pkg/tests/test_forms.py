#!/usr/bin/env python3
"""Tests for forms.py."""

import sys
import unittest
from itertools import combinations
from pathlib import Path

import numpy as np

SCRIPTS_DIR = Path(__file__).parent.parent / "scripts"
sys.path.insert(0, str(SCRIPTS_DIR))

from forms import (
    Chart,
    EndValuedForm,
    PolynomialField,
    Superconnection,
    chart_samples,
    exterior_d,
    flatness_residuals,
    gauge_flat,
    gauge_transform,
    random_gauge,
    random_polynomial,
    sample_points,
    shift_superconnection,
    unipotent_field,
    wedge_compose,
)
from graded_core import CochainComplex, StructuralError

FLAT_TOL = 1e-9


def rank2_complex():
    return CochainComplex.from_blocks({0: 2, 1: 2}, {0: np.array([[1.0, 0.0], [0.0, 0.0]])})


def flat_superconnection(seed=0, nvars=2, with_phi1=True):
    complex_ = rank2_complex()
    chart = Chart(nvars, ((0.0, 1.0),) * nvars)
    gauge = random_gauge(complex_, nvars, np.random.default_rng(seed), with_phi1=with_phi1)
    return gauge_flat(chart, complex_, gauge.phi0, gauge.phi1, gauge.phi0_inv), gauge


class TestPolynomialField(unittest.TestCase):
    def test_from_table_and_evaluate(self):
        p = PolynomialField.from_table(2, {"1,0": 2.0, "0,2": -1.0, "0,0": 0.5})
        self.assertAlmostEqual(float(p.evaluate([3.0, 2.0])), 6.0 - 4.0 + 0.5)
        self.assertEqual(p.degree, 2)

    def test_bad_multi_index(self):
        with self.assertRaises(StructuralError):
            PolynomialField.from_table(2, {"1": 1.0})

    def test_canonical_terms_cancel(self):
        p = PolynomialField.variable(1, 0)
        self.assertTrue((p - p).is_zero)

    def test_derivative(self):
        p = PolynomialField.from_table(2, {"2,1": 3.0})
        self.assertEqual(p.derivative(0).to_table(), {"1,1": 6.0})
        self.assertTrue(PolynomialField.constant(2, 1.0).derivative(1).is_zero)

    def test_shift_matches_evaluation(self):
        rng = np.random.default_rng(2)
        p = random_polynomial(2, 3, rng)
        delta = np.array([0.3, -1.2])
        x = np.array([0.7, 0.4])
        self.assertAlmostEqual(float(p.shift(delta).evaluate(x)), float(p.evaluate(x + delta)))

    def test_substitute_composes(self):
        p = PolynomialField.from_table(1, {"2": 1.0})
        t = PolynomialField.variable(2, 0) + PolynomialField.variable(2, 1)
        q = p.substitute([t])
        self.assertAlmostEqual(float(q.evaluate([1.0, 2.0])), 9.0)

    def test_matrix_product(self):
        x = PolynomialField.variable(1, 0)
        A = x.tensor(np.array([[1.0, 2.0], [0.0, 1.0]]))
        B = PolynomialField.constant(1, np.eye(2) * 3.0)
        np.testing.assert_allclose((A @ B).evaluate([2.0]), [[6.0, 12.0], [0.0, 6.0]])


class TestChart(unittest.TestCase):
    def test_empty_interval_rejected(self):
        with self.assertRaises(StructuralError):
            Chart(1, ((1.0, 1.0),))

    def test_axis_count_checked(self):
        with self.assertRaises(StructuralError):
            Chart(2, ((0.0, 1.0),))

    def test_samples_deterministic_and_inside(self):
        chart = Chart(2, ((-1.0, 2.0), (0.0, 0.5)))
        a = chart_samples(chart, 20)
        np.testing.assert_array_equal(a, chart_samples(chart, 20))
        self.assertTrue(chart.contains(a))
        self.assertFalse(np.allclose(a, chart_samples(chart, 20, offset=5)))

    def test_degenerate_axis_sampling(self):
        points = sample_points([0.0, 1.0], [1.0, 1.0], 5)
        np.testing.assert_allclose(points[:, 1], 1.0)


class TestEndValuedForm(unittest.TestCase):
    def setUp(self):
        self.complex = rank2_complex()
        self.space = self.complex.space
        self.rng = np.random.default_rng(4)

    def random_form(self, form_degree, inner_degree, nvars=3):
        n = self.space.total_dim
        return EndValuedForm(self.space, nvars, form_degree, inner_degree, {
            I: random_polynomial(nvars, 2, self.rng, 1.0, (n, n)) for I in combinations(range(nvars), form_degree)
        })

    def test_entries_outside_degree_are_dropped(self):
        form = EndValuedForm.constant(self.space, 1, 1, -1, {(0,): np.ones((4, 4))})
        value = form.evaluate_many(np.zeros((1, 1)), [np.ones((1, 1))])[0]
        np.testing.assert_array_equal(value, np.where(self.complex.mask(-1), 1.0, 0.0))

    def test_index_validation(self):
        with self.assertRaises(StructuralError):
            EndValuedForm.constant(self.space, 2, 2, 0, {(1, 0): np.eye(4)})
        with self.assertRaises(StructuralError):
            EndValuedForm.constant(self.space, 2, 1, 0, {(2,): np.eye(4)})

    def test_d_squared_vanishes(self):
        form = self.random_form(1, 0)
        self.assertTrue(exterior_d(exterior_d(form)).is_zero)

    def test_evaluation_on_vectors_is_alternating(self):
        form = self.random_form(2, -1)
        x = np.array([[0.2, 0.5, 0.1]])
        u, v = np.array([[1.0, 2.0, 0.0]]), np.array([[0.0, 1.0, 3.0]])
        np.testing.assert_allclose(form.evaluate_many(x, [u, v]), -form.evaluate_many(x, [v, u]))

    def test_wedge_of_one_forms_koszul_sign(self):
        A, B = np.eye(4), 2.0 * np.eye(4)
        a = EndValuedForm.constant(self.space, 2, 1, 0, {(0,): A})
        b = EndValuedForm.constant(self.space, 2, 1, 0, {(1,): B})
        np.testing.assert_allclose(wedge_compose(a, b).component((0, 1)).evaluate([0.0, 0.0]), A @ B)
        np.testing.assert_allclose(wedge_compose(b, a).component((0, 1)).evaluate([0.0, 0.0]), -B @ A)

    def test_odd_inner_degree_picks_up_sign(self):
        h = EndValuedForm.constant(self.space, 2, 1, -1, {(0,): np.where(self.complex.mask(-1), 1.0, 0.0)})
        c = EndValuedForm.constant(self.space, 2, 1, 1, {(1,): self.complex.D})
        expected = -(h.component((0,)).evaluate([0.0, 0.0]) @ self.complex.D)
        np.testing.assert_allclose(wedge_compose(h, c).component((0, 1)).evaluate([0.0, 0.0]), expected)

    def test_leibniz_rule(self):
        a, b = self.random_form(1, 0), self.random_form(1, -1)
        lhs = exterior_d(wedge_compose(a, b))
        rhs = wedge_compose(exterior_d(a), b) - wedge_compose(a, exterior_d(b))
        x = np.array([0.3, 0.6, 0.2])
        for I in set(lhs.components) | set(rhs.components):
            np.testing.assert_allclose(lhs.component(I).evaluate(x), rhs.component(I).evaluate(x), atol=1e-10)

    def test_mismatched_kinds_rejected(self):
        with self.assertRaises(StructuralError):
            _ = self.random_form(1, 0) + self.random_form(1, -1)


class TestSuperconnection(unittest.TestCase):
    def test_degree_checked(self):
        complex_ = rank2_complex()
        chart = Chart(2, ((0.0, 1.0), (0.0, 1.0)))
        wrong = EndValuedForm.zero(complex_.space, 2, 1, -1)
        with self.assertRaises(StructuralError):
            Superconnection(chart, complex_, wrong, EndValuedForm.zero(complex_.space, 2, 2, -1))

    def test_abelian_constant_two_form_is_flat(self):
        complex_ = CochainComplex.from_blocks({0: 1, 1: 1}, {0: [[0.0]]})
        chart = Chart(2, ((0.0, 1.0), (0.0, 1.0)))
        S = Superconnection(chart, complex_, EndValuedForm.zero(complex_.space, 2, 1, 0),
                            EndValuedForm.constant(complex_.space, 2, 2, -1,
                                                   {(0, 1): np.array([[0.0, 1.5], [0.0, 0.0]])}))
        residuals = flatness_residuals(S, chart_samples(chart, 10))
        self.assertEqual(set(residuals), {"degree1", "degree2", "degree3"})
        self.assertEqual(max(residuals.values()), 0.0)

    def test_non_chain_map_connection_breaks_degree_one(self):
        S, _ = flat_superconnection(seed=1)
        bump = EndValuedForm.constant(S.space, 2, 1, 0, {(0,): np.diag([0.1, 0.0, 0.0, 0.0])})
        residuals = flatness_residuals(S.with_forms(omega1=S.omega1 + bump), chart_samples(S.chart, 20))
        self.assertGreater(residuals["degree1"], 1e-3)


class TestGaugeFlat(unittest.TestCase):
    def test_random_gauges_are_flat(self):
        for seed in range(3):
            S, _ = flat_superconnection(seed)
            residuals = flatness_residuals(S, chart_samples(S.chart, 30))
            self.assertLess(max(residuals.values()), FLAT_TOL, f"seed {seed}: {residuals}")

    def test_three_dimensional_chart_is_flat(self):
        complex_ = CochainComplex.from_blocks(
            {0: 2, 1: 2, 2: 2},
            {0: np.array([[1.0, 0.0], [0.0, 0.0]]), 1: np.array([[0.0, 1.0], [0.0, 0.0]])},
        )
        chart = Chart(3, ((0.0, 1.0),) * 3)
        gauge = random_gauge(complex_, 3, np.random.default_rng(5))
        S = gauge_flat(chart, complex_, gauge.phi0, gauge.phi1, gauge.phi0_inv)
        residuals = flatness_residuals(S, chart_samples(chart, 30))
        self.assertLess(max(residuals.values()), FLAT_TOL, residuals)

    def test_without_phi1_connection_is_maurer_cartan(self):
        S, gauge = flat_superconnection(seed=3, with_phi1=False)
        x = np.array([0.4, 0.7])
        inv = gauge.phi0_inv.evaluate(x)
        for axis in range(2):
            expected = inv @ gauge.phi0.derivative(axis).evaluate(x)
            np.testing.assert_allclose(S.omega1.component((axis,)).evaluate(x), expected, atol=1e-12)
        self.assertTrue(S.omega2.is_zero)

    def test_singular_constant_rejected(self):
        complex_ = rank2_complex()
        chart = Chart(1, ((0.0, 1.0),))
        with self.assertRaises(ValueError):
            gauge_flat(chart, complex_, PolynomialField.constant(1, np.zeros((4, 4))))

    def test_gauge_transform_preserves_flatness(self):
        S, _ = flat_superconnection(seed=6)
        g, g_inv = unipotent_field(S.complex, 2, np.random.default_rng(9))
        T = gauge_transform(S, g, g_inv)
        residuals = flatness_residuals(T, chart_samples(S.chart, 30))
        self.assertLess(max(residuals.values()), FLAT_TOL, residuals)

    def test_gauge_transform_rejects_non_chain_map(self):
        S, _ = flat_superconnection(seed=6)
        g = PolynomialField.constant(2, np.diag([2.0, 1.0, 1.0, 1.0]))
        g_inv = PolynomialField.constant(2, np.diag([0.5, 1.0, 1.0, 1.0]))
        with self.assertRaises(ValueError):
            gauge_transform(S, g, g_inv)

    def test_shift_moves_origin(self):
        S, _ = flat_superconnection(seed=2)
        chart = Chart(2, ((-1.0, 0.0), (0.0, 1.0)))
        shifted = shift_superconnection(S, [1.0, 0.0], chart)
        x = np.array([-0.5, 0.3])
        v = np.array([[1.0, 0.5]])
        np.testing.assert_allclose(shifted.omega1.evaluate_many(x, [v]),
                                   S.omega1.evaluate_many(x + [1.0, 0.0], [v]), atol=1e-12)
        residuals = flatness_residuals(shifted, chart_samples(chart, 20))
        self.assertLess(max(residuals.values()), FLAT_TOL)


if __name__ == "__main__":
    unittest.main()
