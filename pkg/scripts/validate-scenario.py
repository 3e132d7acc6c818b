#!/usr/bin/env python3
"""
Scenario validation script for holab.

Checks scenario files against config/schema.json and resolves every
reference (charts, transitions, paths, simplices) by building the scenario.
No holonomy is computed.

Usage:
    python3 validate-scenario.py [SCENARIO ...] [--schema SCHEMA] [--defaults DEFAULTS_DIR] [--verbose]
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List

sys.path.insert(0, str(Path(__file__).resolve().parent))

from graded_core import StructuralError  # noqa: E402
from scenario_loader import (  # noqa: E402
    DEFAULTS_DIR,
    SCHEMA_PATH,
    ScenarioError,
    build_scenario,
    bundled_scenarios,
    load_json_file,
    validate_schema,
)


def setup_logging(verbose: bool) -> logging.Logger:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%H:%M:%S",
    )
    return logging.getLogger(__name__)


def validate_file(path: Path, schema: dict, defaults_dir: Path, logger: logging.Logger) -> bool:
    try:
        data = load_json_file(path)
        validate_schema(data, schema)
        scenario = build_scenario(data, defaults_dir, path)
    except (ScenarioError, StructuralError, FileNotFoundError) as e:
        logger.error(f"❌ {path.name}: {e}")
        return False
    logger.info(f"✅ {path.name}: {len(scenario.cover.ids)} charts, {len(scenario.paths)} paths, "
                f"{len(scenario.simplices)} simplices")
    return True


def main(argv: List[str] = None) -> int:
    parser = argparse.ArgumentParser(
        description="Validate holab scenario files",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    python3 validate-scenario.py
    python3 validate-scenario.py config/scenarios/two-chart-transition.json --verbose
    """,
    )
    parser.add_argument("scenarios", nargs="*", type=Path,
                        help="Scenario files (default: every bundled scenario)")
    parser.add_argument("--schema", type=Path, default=SCHEMA_PATH, help="JSON Schema file")
    parser.add_argument("--defaults", type=Path, default=DEFAULTS_DIR, help="Default parameters directory")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    args = parser.parse_args(argv)
    logger = setup_logging(args.verbose)

    try:
        schema = load_json_file(args.schema)
    except (ScenarioError, FileNotFoundError) as e:
        logger.error(f"💥 Cannot load schema: {e}")
        return 2

    files = args.scenarios or bundled_scenarios()
    if not files:
        logger.error("💥 No scenario files to validate")
        return 2
    logger.info(f"Validating {len(files)} scenario file(s)")
    results = [validate_file(path, schema, args.defaults, logger) for path in files]

    if all(results):
        logger.info("🎉 All scenarios valid!")
        return 0
    logger.error(f"💥 {results.count(False)} of {len(results)} scenario(s) invalid")
    return 2


if __name__ == "__main__":
    sys.exit(main())
