#!/usr/bin/env python3
"""Tests for run-suite.py (scenario selection and argument handling)."""

import importlib.util
import sys
import tempfile
import unittest
from pathlib import Path

SCRIPTS_DIR = Path(__file__).parent.parent / "scripts"
sys.path.insert(0, str(SCRIPTS_DIR))

_spec = importlib.util.spec_from_file_location("run_suite", SCRIPTS_DIR / "run-suite.py")
run_suite = importlib.util.module_from_spec(_spec)
_spec.loader.exec_module(run_suite)

_spec = importlib.util.spec_from_file_location("validate_scenario", SCRIPTS_DIR / "validate-scenario.py")
validate_scenario = importlib.util.module_from_spec(_spec)
_spec.loader.exec_module(validate_scenario)


class TestSelect(unittest.TestCase):
    def setUp(self):
        self.paths = [Path(f"/s/{name}.json") for name in ("abelian-area", "broken-flatness", "gauge-flat-r3")]

    def test_empty_filter_keeps_everything(self):
        self.assertEqual(run_suite.select(self.paths, ""), self.paths)

    def test_filter_by_stem(self):
        chosen = run_suite.select(self.paths, "gauge-flat-r3, abelian-area")
        self.assertEqual([p.stem for p in chosen], ["abelian-area", "gauge-flat-r3"])

    def test_expected_failures_cover_broken_flatness(self):
        self.assertIn(("broken-flatness", "compare"), run_suite.EXPECTED_FAILURES)
        self.assertNotIn(("broken-flatness", "check"), run_suite.EXPECTED_FAILURES)


class TestMain(unittest.TestCase):
    def test_unknown_command(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            self.assertEqual(run_suite.main(["--commands", "validate,explode", "--output-dir", tmpdir]), 2)

    def test_no_matching_scenarios(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            self.assertEqual(run_suite.main(["--only", "no-such-scenario", "--output-dir", tmpdir]), 2)


class TestValidateScenario(unittest.TestCase):
    def test_bundled_scenarios_validate(self):
        self.assertEqual(validate_scenario.main([]), 0)

    def test_invalid_scenario_reported(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "bad.json"
            path.write_text('{"schema_version": "1.0", "id": "bad", "complex": {"dims": {"0": 1}}, "charts": []}')
            self.assertEqual(validate_scenario.main([str(path)]), 2)


if __name__ == "__main__":
    unittest.main()
