#!/usr/bin/env python3
"""Tests for bundle2.py: covers, cocycles, the local groupoid and cover transport."""

import sys
import unittest
from pathlib import Path

import numpy as np

SCRIPTS_DIR = Path(__file__).parent.parent / "scripts"
sys.path.insert(0, str(SCRIPTS_DIR))

from bundle2 import (
    Cover,
    GaugeRelationError,
    LocalGroupoidElement,
    LocalObject,
    PlacedChart,
    associativity_check,
    coboundary_cocycle,
    connection_equivariance_check,
    connection_forms,
    curvatures,
    frame_cocycle,
    functoriality_check,
    groupoid_compose,
    identity,
    source,
    source_target_check,
    target,
    validate_cocycle,
    validate_differential,
)
from crossed_module import CrossedModuleContext, random_g, random_h
from forms import Chart, PolynomialField, gauge_flat, gauge_transform, random_gauge, shift_superconnection, unipotent_field
from graded_core import CochainComplex, StructuralError
from holonomy import transport_form, transport_cover
from simplex import PLPath

TOL = 1e-9
UNIT = Chart(2, ((0.0, 1.0), (0.0, 1.0)))


def rank2_complex():
    return CochainComplex.from_blocks({0: 2, 1: 2}, {0: np.array([[1.0, 0.0], [0.0, 0.0]])})


def wide_complex():
    return CochainComplex.from_blocks(
        {0: 2, 1: 2, 2: 2},
        {0: np.array([[1.0, 0.0], [0.0, 0.0]]), 1: np.array([[0.0, 1.0], [0.0, 0.0]])},
    )


def four_chart_cover():
    offsets = {"u": [0.0, 0.0], "v": [0.5, 0.0], "w": [0.25, 0.5], "x": [0.5, 0.5]}
    return Cover([PlacedChart(i, UNIT, np.array(o)) for i, o in offsets.items()])


def two_chart_system(seed=0):
    """Flat system on U, its gauge transform on V = U + (0.5, 0), and g_UV."""
    complex_ = rank2_complex()
    rng = np.random.default_rng(seed)
    gauge = random_gauge(complex_, 2, rng)
    S_u = gauge_flat(UNIT, complex_, gauge.phi0, gauge.phi1, gauge.phi0_inv)
    g, g_inv = unipotent_field(complex_, 2, rng)
    offset = np.array([0.5, 0.0])
    S_v = gauge_transform(shift_superconnection(S_u, offset, UNIT), g.shift(offset), g_inv.shift(offset), UNIT)
    cover = Cover([PlacedChart("u", UNIT, np.zeros(2)), PlacedChart("v", UNIT, offset)])
    return cover, {"u": S_u, "v": S_v}, {("u", "v"): g}


def random_coboundary(seed=0):
    ctx = CrossedModuleContext(wide_complex())
    cover = four_chart_cover()
    rng = np.random.default_rng(seed)
    ids = cover.ids
    e = {(ids[a], ids[b]): random_h(ctx, rng) for a in range(len(ids)) for b in range(a + 1, len(ids))}
    return coboundary_cocycle(ctx, cover, e)


class TestCover(unittest.TestCase):
    def test_no_charts(self):
        with self.assertRaises(StructuralError) as ctx:
            Cover([])
        self.assertIn("no charts", str(ctx.exception))

    def test_duplicate_ids(self):
        with self.assertRaises(StructuralError):
            Cover([PlacedChart("u", UNIT, np.zeros(2)), PlacedChart("u", UNIT, np.ones(2))])

    def test_offset_dimension_checked(self):
        with self.assertRaises(StructuralError):
            PlacedChart("u", UNIT, np.zeros(3))

    def test_overlaps(self):
        cover = Cover([PlacedChart("u", UNIT, np.zeros(2)), PlacedChart("v", UNIT, np.array([0.5, 0.0])),
                       PlacedChart("far", UNIT, np.array([5.0, 5.0]))])
        self.assertEqual(sorted(cover.overlaps(2)), [("u", "v"), ("v", "u")])
        lower, upper = cover.overlap_box(["u", "v"])
        np.testing.assert_allclose(lower, [0.5, 0.0])
        np.testing.assert_allclose(upper, [1.0, 1.0])
        self.assertTrue(cover.in_overlap(["u", "v"], np.array([0.75, 0.5])))
        self.assertFalse(cover.in_overlap(["u", "v"], np.array([0.25, 0.5])))
        self.assertEqual(cover.samples(["u", "far"], 4).shape, (0, 2))

    def test_unknown_chart(self):
        with self.assertRaises(StructuralError):
            four_chart_cover().chart("nowhere")


class TestGammaCocycle(unittest.TestCase):
    def test_coboundary_satisfies_cocycle_identities(self):
        C = random_coboundary(1)
        report = validate_cocycle(C, samples=3)
        self.assertEqual(report["triples"], 24.0)
        self.assertEqual(report["quadruples"], 24.0)
        self.assertLess(report["g_identity"], TOL)
        self.assertLess(report["a_identity"], TOL)

    def test_inverse_transition_is_derived(self):
        C = random_coboundary(2)
        x = np.array([0.75, 0.75])
        np.testing.assert_allclose(C.g_at("v", "u", x) @ C.g_at("u", "v", x), np.eye(C.context.n), atol=1e-12)
        np.testing.assert_allclose(C.g_at("u", "u", x), np.eye(C.context.n))

    def test_broken_transition_detected(self):
        C = random_coboundary(3)
        C.g[("u", "v")] = PolynomialField.constant(2, 2.0 * C.g_at("u", "v", np.zeros(2)))
        self.assertGreater(validate_cocycle(C, samples=3)["g_identity"], 1e-3)

    def test_broken_a_detected(self):
        C = random_coboundary(4)
        self.assertLess(validate_cocycle(C, samples=3)["a_identity"], TOL)
        bump = random_h(C.context, np.random.default_rng(40)).dense
        C.a[("u", "v", "w")] = C.a[("u", "v", "w")] + PolynomialField.constant(2, bump)
        report = validate_cocycle(C, samples=3)
        self.assertGreater(report["a_identity"], 1e-3)
        self.assertGreater(report["g_identity"], 1e-3)


class TestFrameCocycle(unittest.TestCase):
    def setUp(self):
        self.cover, self.systems, self.transitions = two_chart_system()

    def test_differential_conditions_hold(self):
        D = frame_cocycle(self.cover, self.systems, self.transitions, samples=10)
        report = validate_differential(D, samples=10)
        self.assertEqual(set(report), {"dc1", "dc2", "dc3"})
        self.assertLess(max(report.values()), 1e-8)
        for chart_id in self.cover.ids:
            fake, three = curvatures(D, chart_id, samples=10)
            self.assertLess(fake, 1e-8)
            self.assertLess(three, 1e-8)

    def test_wrong_transition_rejected(self):
        n = rank2_complex().total_dim
        with self.assertRaises(GaugeRelationError) as ctx:
            frame_cocycle(self.cover, self.systems, {("u", "v"): PolynomialField.constant(2, np.eye(n))}, samples=10)
        self.assertIn("u->v", ctx.exception.residuals)

    def test_empty_overlap_rejected(self):
        cover = Cover([PlacedChart("u", UNIT, np.zeros(2)), PlacedChart("far", UNIT, np.array([5.0, 5.0]))])
        systems = {"u": self.systems["u"], "far": self.systems["u"]}
        with self.assertRaises(StructuralError):
            frame_cocycle(cover, systems, {("u", "far"): self.transitions[("u", "v")]}, samples=10)

    def test_missing_local_system(self):
        with self.assertRaises(StructuralError):
            frame_cocycle(self.cover, {"u": self.systems["u"]}, {}, samples=10)

    def test_connection_equivariance(self):
        D = frame_cocycle(self.cover, self.systems, self.transitions, samples=10)
        worst = connection_equivariance_check(D, np.random.default_rng(0), trials=5)
        self.assertEqual(set(worst), {"omega_a", "omega_b", "omega_c"})
        for name, value in worst.items():
            self.assertLess(value, 1e-9, name)

    def test_omega_a_on_vertical_vector(self):
        D = frame_cocycle(self.cover, self.systems, self.transitions, samples=10)
        ctx = D.context
        g = random_g(ctx, np.random.default_rng(4))
        xi = np.eye(ctx.n)
        obj = LocalObject("u", np.array([0.3, 0.3]), g)
        value = connection_forms(D).omega_a(obj, np.zeros(2), g.dense @ xi)
        np.testing.assert_allclose(value, xi, atol=1e-12)


class TestLocalGroupoid(unittest.TestCase):
    def setUp(self):
        self.C = random_coboundary(5)
        self.ctx = self.C.context
        self.rng = np.random.default_rng(6)

    def test_checks_vanish(self):
        assoc = associativity_check(self.C, self.rng, trials=5)
        self.assertLess(max(assoc.values()), TOL)
        st = source_target_check(self.C, self.rng, trials=5)
        self.assertLess(max(st.values()), TOL)
        self.assertLess(functoriality_check(self.C, self.rng, trials=5), TOL)

    def test_identity_is_neutral(self):
        x = np.array([0.75, 0.75])
        m = LocalGroupoidElement("u", "v", x, random_h(self.ctx, self.rng), random_g(self.ctx, self.rng))
        composed = groupoid_compose(identity(target(m, self.C)), m, self.C)
        np.testing.assert_allclose(composed.h.dense, m.h.dense, atol=1e-12)
        self.assertEqual((composed.i, composed.j), ("u", "v"))
        self.assertIs(source(composed).g, m.g)

    def test_non_composable_rejected(self):
        x = np.array([0.75, 0.75])
        m1 = LocalGroupoidElement("u", "v", x, random_h(self.ctx, self.rng), random_g(self.ctx, self.rng))
        stranger = LocalGroupoidElement("w", "u", x, self.ctx.zero_h(), random_g(self.ctx, self.rng))
        with self.assertRaises(StructuralError):
            groupoid_compose(stranger, m1, self.C)
        wrong_chart = LocalGroupoidElement("w", "x", x, self.ctx.zero_h(), random_g(self.ctx, self.rng))
        with self.assertRaises(StructuralError):
            groupoid_compose(wrong_chart, m1, self.C)


class TestCoverTransport(unittest.TestCase):
    def setUp(self):
        cover, systems, transitions = two_chart_system(seed=2)
        self.D = frame_cocycle(cover, systems, transitions, samples=10)
        self.g = transitions[("u", "v")]

    def test_crossing_matches_single_chart_transport(self):
        legs = [("u", PLPath.through([[0.2, 0.4], [0.7, 0.4]])),
                ("v", PLPath.through([[0.7, 0.4], [0.9, 0.4]]))]
        glued = transport_cover(self.D, legs, steps=400).dense
        whole = PLPath.through([[0.2, 0.4], [0.9, 0.4]])
        direct = self.g.evaluate([0.9, 0.4]) @ transport_form(self.D.A["u"], whole, 400)
        np.testing.assert_allclose(glued, direct, atol=1e-8)

    def test_crossing_point_does_not_matter(self):
        a = [("u", PLPath.through([[0.2, 0.4], [0.6, 0.4]])), ("v", PLPath.through([[0.6, 0.4], [0.9, 0.4]]))]
        b = [("u", PLPath.through([[0.2, 0.4], [0.8, 0.4]])), ("v", PLPath.through([[0.8, 0.4], [0.9, 0.4]]))]
        np.testing.assert_allclose(transport_cover(self.D, a, 400).dense, transport_cover(self.D, b, 400).dense,
                                   atol=1e-8)

    def test_gap_between_legs(self):
        legs = [("u", PLPath.through([[0.2, 0.4], [0.6, 0.4]])), ("v", PLPath.through([[0.7, 0.4], [0.9, 0.4]]))]
        with self.assertRaises(ValueError):
            transport_cover(self.D, legs, 100)

    def test_crossing_outside_overlap(self):
        legs = [("u", PLPath.through([[0.1, 0.4], [0.3, 0.4]])), ("v", PLPath.through([[0.3, 0.4], [0.9, 0.4]]))]
        with self.assertRaises(ValueError):
            transport_cover(self.D, legs, 100)


if __name__ == "__main__":
    unittest.main()
