#!/usr/bin/env python3
"""End-to-end tests for holab.py: exit codes, report contents and determinism."""

import json
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path
from unittest import mock

SCRIPTS_DIR = Path(__file__).parent.parent / "scripts"
SCENARIOS_DIR = Path(__file__).parent.parent / "config" / "scenarios"
sys.path.insert(0, str(SCRIPTS_DIR))

from holab import main, stable

FAST = {"steps_per_unit": 300, "s_steps": 16, "quadrature_nodes": 16, "series_order": 16,
        "series_panels": 2, "samples": 10, "check_instances": 5, "threads": 1}


def fast_copy(name: str, tmpdir: str, **changes) -> Path:
    """Bundled scenario with cheap numerics, written to tmpdir."""
    data = json.loads((SCENARIOS_DIR / f"{name}.json").read_text(encoding="utf-8"))
    data["parameters"] = {**data.get("parameters", {}), **FAST}
    data.update(changes)
    path = Path(tmpdir) / f"{name}.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def read_report(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


class TestExitCodes(unittest.TestCase):
    def test_abelian_surface_holonomy(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            scenario = fast_copy("abelian-area", tmpdir)
            out = Path(tmpdir) / "unit.json"
            code = main(["holonomy", str(scenario), "--object", "unit", "--method", "closedform",
                         "--out", str(out)])
            self.assertEqual(code, 0)
            report = read_report(out)
            self.assertEqual(report["command"], "holonomy")
            self.assertEqual(report["method"], "closedform")
            self.assertAlmostEqual(report["results"]["value"]["1"][0][0], 0.75, places=9)
            self.assertAlmostEqual(report["results"]["signed_area"], 0.5, places=12)
            self.assertTrue(out.with_suffix(".meta.json").exists())

    def test_broken_flatness_fails_validate(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            scenario = fast_copy("broken-flatness", tmpdir)
            out = Path(tmpdir) / "validate.json"
            self.assertEqual(main(["validate", str(scenario), "--out", str(out)]), 1)
            checks = {c["name"]: c for c in read_report(out)["checks"]}
            self.assertFalse(checks["flatness.U.degree1"]["passed"])
            self.assertFalse(read_report(out)["passed"])

    def test_broken_flatness_refuses_compare(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            scenario = fast_copy("broken-flatness", tmpdir)
            out = Path(tmpdir) / "compare.json"
            self.assertEqual(main(["compare", str(scenario), "--object", "tri", "--out", str(out)]), 1)
            failed = [c for c in read_report(out)["checks"] if not c["passed"]]
            self.assertEqual(len(failed), 1)
            self.assertIn("flatness precondition failed", failed[0]["detail"])

    def test_no_charts_is_usage_error(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            scenario = fast_copy("abelian-area", tmpdir, charts=[], paths=[], simplices=[])
            self.assertEqual(main(["validate", str(scenario)]), 2)

    def test_missing_field_without_schema_check(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            data = json.loads((SCENARIOS_DIR / "abelian-area.json").read_text(encoding="utf-8"))
            del data["charts"][0]["box"]
            scenario = Path(tmpdir) / "no-box.json"
            scenario.write_text(json.dumps(data), encoding="utf-8")
            with mock.patch("scenario_loader.HAS_JSONSCHEMA", False):
                self.assertEqual(main(["validate", str(scenario)]), 2)

    def test_unknown_object(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            scenario = fast_copy("abelian-area", tmpdir)
            self.assertEqual(main(["holonomy", str(scenario), "--object", "nothing"]), 2)

    def test_method_must_match_object(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            scenario = fast_copy("abelian-area", tmpdir)
            self.assertEqual(main(["holonomy", str(scenario), "--object", "edge", "--method", "chen"]), 2)

    def test_holonomy_needs_object(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            scenario = fast_copy("abelian-area", tmpdir)
            self.assertEqual(main(["holonomy", str(scenario)]), 2)

    def test_missing_scenario_file(self):
        self.assertEqual(main(["validate", "/nonexistent/scenario.json"]), 2)

    def test_bad_command_via_subprocess(self):
        result = subprocess.run([sys.executable, str(SCRIPTS_DIR / "holab.py"), "frobnicate",
                                 str(SCENARIOS_DIR / "abelian-area.json")],
                                capture_output=True, text=True, timeout=60)
        self.assertEqual(result.returncode, 2)
        self.assertIn("invalid choice", result.stderr)


class TestReports(unittest.TestCase):
    def test_reports_are_byte_identical(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            scenario = fast_copy("gauge-flat-rank2", tmpdir)
            outs = [Path(tmpdir) / f"run{i}.json" for i in range(2)]
            for out in outs:
                main(["holonomy", str(scenario), "--object", "tri", "--method", "soe", "--out", str(out)])
            self.assertEqual(outs[0].read_bytes(), outs[1].read_bytes())

    def test_two_chart_validate_and_cover_path(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            scenario = fast_copy("two-chart-transition", tmpdir)
            out = Path(tmpdir) / "validate.json"
            self.assertEqual(main(["validate", str(scenario), "--out", str(out)]), 0)
            out = Path(tmpdir) / "cross.json"
            self.assertEqual(main(["holonomy", str(scenario), "--object", "cross-a", "--out", str(out)]), 0)
            self.assertEqual(read_report(out)["results"]["charts"], ["U", "V"])

    def test_four_chart_cocycle_identities(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            scenario = fast_copy("four-chart-cocycle", tmpdir)
            out = Path(tmpdir) / "validate.json"
            self.assertEqual(main(["validate", str(scenario), "--out", str(out)]), 0)
            report = read_report(out)
            self.assertEqual(report["results"]["overlaps"], {"triples": 24, "quadruples": 24})
            checks = {c["name"]: c for c in report["checks"]}
            self.assertTrue(checks["cocycle.g_identity"]["passed"])
            self.assertTrue(checks["cocycle.a_identity"]["passed"])

            out = Path(tmpdir) / "check.json"
            self.assertEqual(main(["check", str(scenario), "--out", str(out)]), 0)
            names = {c["name"] for c in read_report(out)["checks"]}
            self.assertIn("coboundary.a_identity", names)

            out = Path(tmpdir) / "cover.json"
            self.assertEqual(main(["holonomy", str(scenario), "--object", "u-v-w", "--out", str(out)]), 0)
            self.assertEqual(read_report(out)["results"]["charts"], ["U", "V", "W"])

    def test_series_warns_about_tail(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            scenario = fast_copy("gauge-flat-rank2", tmpdir)
            data = json.loads(scenario.read_text(encoding="utf-8"))
            data["parameters"].update({"series_order": 1, "series_panels": 1})
            scenario.write_text(json.dumps(data), encoding="utf-8")
            out = Path(tmpdir) / "series.json"
            main(["holonomy", str(scenario), "--object", "edge", "--method", "series", "--out", str(out)])
            self.assertTrue(any("tail bound" in w for w in read_report(out)["warnings"]))

    def test_stable_rounding(self):
        self.assertEqual(stable({"a": 0.1 + 0.2, "b": [1e-20, float("inf")]}),
                         {"a": 0.3, "b": [1e-20, "inf"]})
        self.assertEqual(stable(-0.0), 0.0)


if __name__ == "__main__":
    unittest.main()
