#!/usr/bin/env python3
"""
holab: numerical higher holonomy of flat superconnections.

Commands:
    validate   flatness, cocycle and curvature residuals of a scenario
    holonomy   transport along a path (ode|series) or over a 2-simplex (soe|closedform|chen)
    compare    all three surface methods on one simplex plus the relations tying them
    check      crossed-module laws, groupoid laws, homotopy invariance, refinement

The report is JSON with sorted keys and floats rounded to 12 significant
digits, so identical scenarios give byte-identical reports. Timings go to a
``.meta.json`` sidecar next to ``--out``.

Exit codes: 0 all checks pass, 1 a check failed or a precondition was
refused, 2 usage, parse or reference error.

Usage:
    python3 holab.py validate config/scenarios/abelian-area.json
    python3 holab.py holonomy config/scenarios/abelian-area.json --object tri --method chen
    python3 holab.py compare config/scenarios/gauge-flat-rank2.json --object tri --out /tmp/report.json
"""

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from bundle2 import (
    GaugeRelationError,
    associativity_check,
    coboundary_cocycle,
    connection_equivariance_check,
    curvatures,
    functoriality_check,
    source_target_check,
    validate_cocycle,
    validate_differential,
)
from crossed_module import bracket_orientation_report, crossed_module_laws, random_h, tau
from forms import chart_samples, flatness_residuals
from graded_core import StructuralError
from holonomy import (
    PreconditionError,
    f2,
    homotopy_invariance_check,
    path_functor_check,
    surface_bundle,
    surface_holonomy,
    transport_cover,
    transport_ode,
    transport_series,
)
from scenario_loader import SCHEMA_VERSION, Scenario, ScenarioError, load_scenario
from simplex import signed_area

HOLAB_VERSION = "1.0.0"
PATH_METHODS = ("ode", "series")
SIMPLEX_METHODS = ("soe", "closedform", "chen")
SIGNIFICANT_DIGITS = 12

logger = logging.getLogger("holab")


def setup_logging(verbose: bool) -> logging.Logger:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%H:%M:%S",
        stream=sys.stderr,
    )
    return logger


def stable(value: Any) -> Any:
    """Round floats to a fixed number of significant digits, recursively."""
    if isinstance(value, dict):
        return {str(k): stable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [stable(v) for v in value]
    if isinstance(value, np.ndarray):
        return stable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return str(value)
        rounded = float(f"{value:.{SIGNIFICANT_DIGITS}g}")
        return 0.0 if rounded == 0 else rounded
    return value


class Report:
    """Checks, results and warnings of one command run."""

    def __init__(self, command: str, scenario: Scenario, object_id: Optional[str] = None,
                 method: Optional[str] = None):
        self.command = command
        self.scenario = scenario
        self.object_id = object_id
        self.method = method
        self.checks: List[Dict[str, Any]] = []
        self.results: Dict[str, Any] = {}
        self.warnings: List[str] = []

    def check(self, name: str, residual: float, tolerance: float, detail: Any = None) -> bool:
        passed = bool(np.isfinite(residual) and residual <= tolerance)
        entry = {"name": name, "residual": float(residual), "tolerance": float(tolerance), "passed": passed}
        if detail is not None:
            entry["detail"] = detail
        self.checks.append(entry)
        icon = "✅" if passed else "❌"
        logger.info(f"  {icon} {name}: {residual:.3e} (tol {tolerance:.1e})")
        return passed

    def fail(self, name: str, detail: str) -> None:
        self.checks.append({"name": name, "residual": float("inf"), "tolerance": 0.0,
                            "passed": False, "detail": detail})
        logger.error(f"  ❌ {name}: {detail}")

    def warn(self, messages: List[str]) -> None:
        for message in messages:
            if message not in self.warnings:
                self.warnings.append(message)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        parameters = dict(self.scenario.parameters)
        return stable({
            "schema_version": SCHEMA_VERSION,
            "holab_version": HOLAB_VERSION,
            "command": self.command,
            "scenario": self.scenario.id,
            "object": self.object_id,
            "method": self.method,
            "parameters": {**parameters, "seed": self.scenario.seed},
            "checks": self.checks,
            "results": self.results,
            "warnings": self.warnings,
            "passed": self.passed,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _table(matrix: np.ndarray, scenario: Scenario, degree: int) -> Dict[str, Any]:
    return scenario.complex.from_dense(degree, matrix).to_table()


# -- commands ------------------------------------------------------------------------------

def cmd_validate(scenario: Scenario) -> Report:
    report = Report("validate", scenario)
    tol = scenario.tolerances
    samples = scenario.samples
    for chart_id in scenario.cover.ids:
        S = scenario.superconnections[chart_id]
        residuals = flatness_residuals(S, chart_samples(S.chart, samples))
        for name, value in residuals.items():
            report.check(f"flatness.{chart_id}.{name}", value, tol["flatness"])

    try:
        frame = scenario.frame
    except GaugeRelationError as e:
        report.fail("gauge_relation", str(e))
        report.results["gauge_relation"] = e.residuals
        return report

    cocycle = validate_cocycle(frame.base, samples)
    report.check("cocycle.g_identity", cocycle["g_identity"], tol["comparison"])
    report.check("cocycle.a_identity", cocycle["a_identity"], tol["exactness"])
    report.results["overlaps"] = {"triples": int(cocycle["triples"]), "quadruples": int(cocycle["quadruples"])}
    for name, value in validate_differential(frame, samples).items():
        report.check(f"differential.{name}", value, tol["flatness"])
    for chart_id in scenario.cover.ids:
        fake, three = curvatures(frame, chart_id, samples)
        report.check(f"curvature.{chart_id}.fake", fake, tol["flatness"])
        report.check(f"curvature.{chart_id}.three", three, tol["flatness"])
    return report


def _path_holonomy(scenario: Scenario, report: Report, object_id: str, method: str) -> None:
    placed = scenario.paths[object_id]
    S = scenario.superconnections[placed.chart]
    params = scenario.numeric
    if method == "ode":
        result = transport_ode(S, placed.path, params.steps_per_unit)
    else:
        result = transport_series(S, placed.path, params.series_order, params.series_panels,
                                  params.quadrature_nodes, scenario.tolerances["series_tail"])
    report.warn(result.warnings)
    report.results.update({
        "value": result.value.map.to_table(),
        "error_estimate": result.error_estimate,
        "steps": result.steps,
        "chart": placed.chart,
    })
    report.check("chain_map", scenario.complex.chain_map_residual(result.value.dense),
                 scenario.tolerances["comparison"])


def _simplex_holonomy(scenario: Scenario, report: Report, object_id: str, method: str) -> None:
    placed = scenario.simplices[object_id]
    S = scenario.superconnections[placed.chart]
    result = surface_holonomy(S, placed.simplex, method, scenario.numeric)
    report.warn(result.warnings)
    G0, G1 = result.g_gamma0, result.g_gamma1
    h = result.value
    if method == "chen":
        h = scenario.context.h_element(G0.inverse_dense @ h.dense, check=False)
    report.results.update({
        "value": result.value.rep.to_table(),
        "g_gamma0": G0.map.to_table(),
        "g_gamma1": G1.map.to_table(),
        "chart": placed.chart,
    })
    if placed.simplex.dim >= 2:
        report.results["signed_area"] = signed_area(placed.simplex)
    residual = float(np.linalg.norm(G0.dense @ tau(h).dense - G1.dense))
    report.check("tau_relation", residual, scenario.tolerances["comparison"])


def _cover_path_holonomy(scenario: Scenario, report: Report, object_id: str) -> None:
    legs = scenario.cover_paths[object_id]
    value = transport_cover(scenario.frame, legs, scenario.numeric.steps_per_unit)
    report.results.update({
        "value": value.map.to_table(),
        "charts": [chart_id for chart_id, _ in legs],
    })
    report.check("chain_map", scenario.complex.chain_map_residual(value.dense), scenario.tolerances["comparison"])


def cmd_holonomy(scenario: Scenario, object_id: str, method: Optional[str] = None) -> Report:
    kind = scenario.object_kind(object_id)
    allowed = {"path": PATH_METHODS, "cover_path": ("ode",), "simplex": SIMPLEX_METHODS}[kind]
    method = method or allowed[0]
    if method not in allowed:
        raise ScenarioError(f"Method '{method}' does not apply to {kind} '{object_id}' "
                            f"(expected one of {', '.join(allowed)})", "method")
    report = Report("holonomy", scenario, object_id, method)
    logger.info(f"🧭 {kind} '{object_id}' with method {method}")
    if kind == "path":
        _path_holonomy(scenario, report, object_id, method)
    elif kind == "simplex":
        _simplex_holonomy(scenario, report, object_id, method)
    else:
        _cover_path_holonomy(scenario, report, object_id)
    return report


def cmd_compare(scenario: Scenario, object_id: Optional[str] = None) -> Report:
    """All surface methods on one simplex (or every simplex) with pairwise residuals."""
    if object_id is not None and scenario.object_kind(object_id) != "simplex":
        raise ScenarioError(f"'{object_id}' is not a 2-simplex", "object")
    targets = [object_id] if object_id else sorted(scenario.simplices)
    report = Report("compare", scenario, object_id, "all")
    if not targets:
        report.fail("compare", "scenario declares no 2-simplices")
        return report
    tol = scenario.tolerances
    for sid in targets:
        placed = scenario.simplices[sid]
        S = scenario.superconnections[placed.chart]
        try:
            bundle = surface_bundle(S, placed.simplex, scenario.numeric, check_flat=True,
                                    flatness_tol=tol["flatness"])
        except PreconditionError as e:
            report.fail(f"{sid}.precondition", str(e))
            logger.error(f"💥 Refusing to compare on '{sid}': {e}")
            continue
        for name, value in sorted(bundle.residuals.items()):
            report.check(f"{sid}.{name}", value, tol["comparison"])
        for result in (bundle.soe, bundle.closed_form, bundle.chen):
            report.warn(result.warnings)
        report.results[sid] = {
            "soe": bundle.soe.value.rep.to_table(),
            "closedform": bundle.closed_form.value.rep.to_table(),
            "chen": bundle.chen.value.rep.to_table(),
            "g_gamma0": bundle.soe.g_gamma0.map.to_table(),
            "g_gamma1": bundle.soe.g_gamma1.map.to_table(),
        }
    return report


def _random_coboundary(scenario: Scenario, rng: np.random.Generator):
    pairs = sorted(scenario.transitions)
    if not pairs:
        return None
    return coboundary_cocycle(scenario.context, scenario.cover, {pair: random_h(scenario.context, rng)
                                                                 for pair in pairs})


def cmd_check(scenario: Scenario) -> Report:
    """The algebraic invariant suite; deterministic given the scenario seed."""
    report = Report("check", scenario)
    tol = scenario.tolerances
    ctx = scenario.context
    instances = int(scenario.parameters.get("check_instances", 100))

    laws = crossed_module_laws(ctx, scenario.rng(10), instances)
    for name, value in laws.items():
        report.check(f"crossed_module.{name}", value, tol["algebraic"])
    orientation = bracket_orientation_report(ctx, scenario.rng(11), 10)
    report.results["bracket_orientation"] = orientation
    if not np.any(scenario.complex.D):
        rng = scenario.rng(12)
        h1, h2 = random_h(ctx, rng), random_h(ctx, rng)
        report.check("abelian.tau_identity", float(np.linalg.norm(tau(h1).dense - np.eye(ctx.n))), tol["algebraic"])
        report.check("abelian.h_mul_additive",
                     float(np.linalg.norm((h1 * h2).dense - h1.dense - h2.dense)), tol["algebraic"])

    try:
        frame = scenario.frame
    except GaugeRelationError as e:
        report.fail("gauge_relation", str(e))
        frame = None
    if frame is not None:
        cocycles = [("frame", frame.base)]
        coboundary = _random_coboundary(scenario, scenario.rng(13))
        if coboundary is not None:
            cocycles.append(("coboundary", coboundary))
            report.check("coboundary.a_identity", validate_cocycle(coboundary, scenario.samples)["a_identity"],
                         tol["exactness"])
        for label, cocycle in cocycles:
            assoc = associativity_check(cocycle, scenario.rng(14), 20)
            report.check(f"groupoid.{label}.associativity", max(assoc.values()), tol["algebraic"])
            st = source_target_check(cocycle, scenario.rng(15), 20)
            report.check(f"groupoid.{label}.source_target", max(st.values()), tol["algebraic"])
            report.check(f"groupoid.{label}.functoriality", functoriality_check(cocycle, scenario.rng(16), 20),
                         tol["algebraic"])
        for name, value in connection_equivariance_check(frame, scenario.rng(17), 20).items():
            report.check(f"connection.{name}", value, tol["algebraic"])

    params = scenario.numeric
    for pid in sorted(scenario.paths):
        placed = scenario.paths[pid]
        S = scenario.superconnections[placed.chart]
        functor = path_functor_check(S, placed.path, scenario.rng(18), 5, params.steps_per_unit)
        report.check(f"path.{pid}.functor", max(functor.values()), tol["algebraic"])

    for pair_id in sorted(scenario.simplex_pairs):
        first, second = scenario.simplex_pairs[pair_id]
        a, b = scenario.simplices[first], scenario.simplices[second]
        S = scenario.superconnections[a.chart]
        try:
            outcome = homotopy_invariance_check(S, a.simplex, b.simplex, tol["homotopy"], params)
        except PreconditionError as e:
            report.fail(f"homotopy.{pair_id}", str(e))
            continue
        report.check(f"homotopy.{pair_id}", outcome.residual, tol["homotopy"])

    for sid in sorted(scenario.simplices):
        placed = scenario.simplices[sid]
        if placed.simplex.kind != "degenerate":
            continue
        S = scenario.superconnections[placed.chart]
        outcome = scenario.complex.solve_exactness(f2(S, placed.simplex, params), tol["homotopy"])
        report.check(f"degenerate.{sid}", outcome.residual, tol["homotopy"])

    if frame is not None:
        _refinement_checks(scenario, report)
    return report


def _refinement_checks(scenario: Scenario, report: Report) -> None:
    """Splitting legs, or moving the crossing point, leaves transport_cover unchanged."""
    tol = scenario.tolerances["refinement"]
    steps = scenario.numeric.steps_per_unit
    values = {}
    for cid in sorted(scenario.cover_paths):
        legs = scenario.cover_paths[cid]
        value = transport_cover(scenario.frame, legs, steps).dense
        values[cid] = value
        refined = [(chart_id, path.split_at(len(path) - 1, 0.5)) for chart_id, path in legs]
        other = transport_cover(scenario.frame, refined, steps).dense
        report.check(f"refinement.{cid}.split", float(np.linalg.norm(value - other)), tol)
    groups: Dict[str, List[str]] = {}
    for cid in sorted(values):
        first, last = scenario.cover_paths[cid][0][1].start, scenario.cover_paths[cid][-1][1].end
        key = f"{np.round(first, 9).tolist()}->{np.round(last, 9).tolist()}"
        groups.setdefault(key, []).append(cid)
    for members in groups.values():
        for other in members[1:]:
            residual = float(np.linalg.norm(values[members[0]] - values[other]))
            report.check(f"refinement.{members[0]}~{other}", residual, tol)


COMMANDS = ("validate", "holonomy", "compare", "check")


def run_command(command: str, scenario: Scenario, object_id: Optional[str] = None,
                method: Optional[str] = None) -> Report:
    if command == "validate":
        return cmd_validate(scenario)
    if command == "holonomy":
        if not object_id:
            raise ScenarioError("holonomy needs --object", "object")
        return cmd_holonomy(scenario, object_id, method)
    if command == "compare":
        return cmd_compare(scenario, object_id)
    if command == "check":
        return cmd_check(scenario)
    raise ScenarioError(f"Unknown command '{command}'", "command")


def write_report(report: Report, out: Optional[Path], elapsed: float) -> None:
    text = report.to_json()
    if out is None:
        sys.stdout.write(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    meta = {
        "holab_version": HOLAB_VERSION,
        "command": report.command,
        "scenario": report.scenario.id,
        "elapsed_s": round(elapsed, 3),
        "threads": report.scenario.numeric.threads,
        "output": str(out),
    }
    with open(out.with_suffix(".meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
    logger.info(f"📝 Report written to {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="holab",
        description="Numerical higher holonomy of flat superconnections.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    python3 holab.py validate config/scenarios/two-chart-transition.json
    python3 holab.py holonomy config/scenarios/gauge-flat-rank2.json --object edge --method series
    python3 holab.py compare config/scenarios/gauge-flat-rank2.json --object tri --out /tmp/cmp.json
    HOLAB_THREADS=2 python3 holab.py check config/scenarios/degenerate-simplex.json --verbose
    """,
    )
    parser.add_argument("command", choices=COMMANDS, help="Command to run")
    parser.add_argument("scenario", type=Path, help="Scenario JSON file")
    parser.add_argument("--object", dest="object_id", default=None, help="Path, cover path or simplex id")
    parser.add_argument("--method", default=None,
                        help=f"Path: {'|'.join(PATH_METHODS)}; simplex: {'|'.join(SIMPLEX_METHODS)}")
    parser.add_argument("--out", type=Path, default=None, help="Write the report here instead of stdout")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    t0 = time.time()
    try:
        scenario = load_scenario(args.scenario)
        logger.info(f"🚀 {args.command} on scenario '{scenario.id}'")
        report = run_command(args.command, scenario, args.object_id, args.method)
    except (ScenarioError, StructuralError, FileNotFoundError) as e:
        logger.error(f"❌ {e}")
        return 2
    except Exception as e:
        logger.error(f"💥 {type(e).__name__}: {e}")
        logger.debug("Traceback", exc_info=True)
        return 1
    write_report(report, args.out, time.time() - t0)
    if report.passed:
        logger.info(f"🎉 All {len(report.checks)} checks passed")
        return 0
    failed = sum(1 for c in report.checks if not c["passed"])
    logger.error(f"💥 {failed} of {len(report.checks)} checks failed")
    return 1


if __name__ == "__main__":
    sys.exit(main())
