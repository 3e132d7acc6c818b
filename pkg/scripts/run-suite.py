#!/usr/bin/env python3
"""
Run holab over every bundled scenario.

Each (scenario, command) pair runs as its own ``holab.py`` subprocess in a
thread pool; reports land in the output directory and a summary JSON (with
a ``.meta.json`` timing sidecar) is written next to them.

Scenarios listed under ``expect_failure`` in the summary are those whose
``validate`` or ``compare`` is meant to fail (the broken-flatness scenario);
a suite run passes when every outcome matches its expectation.

Usage:
    python3 run-suite.py --output-dir /tmp/holab-suite --verbose
    python3 run-suite.py --only abelian-area,gauge-flat-rank2 --commands validate,compare
"""

import argparse
import json
import logging
import os
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Sequence

SCRIPTS_DIR = Path(__file__).resolve().parent
SCENARIOS_DIR = SCRIPTS_DIR.parent / "config" / "scenarios"
DEFAULT_TIMEOUT = 600  # per-run timeout in seconds
DEFAULT_COMMANDS = ("validate", "compare", "check")
EXPECTED_FAILURES = {("broken-flatness", "validate"), ("broken-flatness", "compare")}


def setup_logging(verbose: bool) -> logging.Logger:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%H:%M:%S",
    )
    return logging.getLogger(__name__)


def run_step(scenario: Path, command: str, output_dir: Path, timeout: int = DEFAULT_TIMEOUT,
             threads: int = 1) -> Dict[str, Any]:
    """Run one holab command as a subprocess, return result metadata."""
    t0 = time.time()
    out = output_dir / f"{scenario.stem}.{command}.json"
    cmd = [sys.executable, str(SCRIPTS_DIR / "holab.py"), command, str(scenario), "--out", str(out)]
    env = dict(os.environ)
    env.setdefault("HOLAB_THREADS", str(threads))
    expected_ok = (scenario.stem, command) not in EXPECTED_FAILURES
    try:
        result = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout, env=env)
        elapsed = time.time() - t0
        checks = 0
        if out.exists():
            try:
                checks = len(json.loads(out.read_text(encoding="utf-8")).get("checks", []))
            except (json.JSONDecodeError, OSError):
                pass
        status = {0: "ok", 1: "failed", 2: "error"}.get(result.returncode, "error")
        return {
            "scenario": scenario.stem,
            "command": command,
            "status": status,
            "exit_code": result.returncode,
            "expected": "ok" if expected_ok else "failed",
            "as_expected": status == ("ok" if expected_ok else "failed"),
            "elapsed_s": round(elapsed, 1),
            "checks": checks,
            "report": str(out),
            "stderr_tail": (result.stderr or "").strip().split("\n")[-3:] if result.returncode else [],
        }
    except subprocess.TimeoutExpired:
        return {
            "scenario": scenario.stem,
            "command": command,
            "status": "timeout",
            "exit_code": None,
            "expected": "ok" if expected_ok else "failed",
            "as_expected": False,
            "elapsed_s": round(time.time() - t0, 1),
            "checks": 0,
            "report": str(out),
            "stderr_tail": [f"Killed after {timeout}s"],
        }


def select(scenarios: Sequence[Path], only: str) -> List[Path]:
    wanted = {s.strip() for s in only.split(",") if s.strip()}
    return [p for p in scenarios if not wanted or p.stem in wanted]


def main(argv: List[str] = None) -> int:
    parser = argparse.ArgumentParser(
        description="Run holab commands over all bundled scenarios in parallel.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--scenarios-dir", type=Path, default=SCENARIOS_DIR, help="Directory of scenario files")
    parser.add_argument("--output-dir", "-o", type=Path, default=Path("/tmp/holab-suite"), help="Report directory")
    parser.add_argument("--commands", type=str, default=",".join(DEFAULT_COMMANDS),
                        help="Comma-separated commands to run (validate,compare,check)")
    parser.add_argument("--only", type=str, default="", help="Comma-separated scenario ids to run")
    parser.add_argument("--workers", type=int, default=4, help="Concurrent holab processes")
    parser.add_argument("--step-timeout", type=int, default=DEFAULT_TIMEOUT, help="Per-run timeout (seconds)")
    parser.add_argument("--verbose", "-v", action="store_true")
    args = parser.parse_args(argv)
    logger = setup_logging(args.verbose)

    commands = [c.strip() for c in args.commands.split(",") if c.strip()]
    unknown = set(commands) - {"validate", "compare", "check"}
    if unknown:
        logger.error(f"❌ Unknown commands: {sorted(unknown)}")
        return 2
    scenarios = select(sorted(args.scenarios_dir.glob("*.json")), args.only)
    if not scenarios:
        logger.error(f"❌ No scenarios found in {args.scenarios_dir}")
        return 2
    args.output_dir.mkdir(parents=True, exist_ok=True)

    jobs = [(s, c) for s in scenarios for c in commands]
    logger.info(f"🚀 Running {len(jobs)} jobs over {len(scenarios)} scenarios with {args.workers} workers")
    t_start = time.time()
    results = []
    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        futures = {pool.submit(run_step, s, c, args.output_dir, args.step_timeout): (s, c) for s, c in jobs}
        for future in as_completed(futures):
            res = future.result()
            results.append(res)
            icon = "✅" if res["as_expected"] else {"timeout": "⏰"}.get(res["status"], "❌")
            logger.info(f"  {icon} {res['scenario']} {res['command']}: {res['status']} "
                        f"({res['checks']} checks, {res['elapsed_s']}s)")
            for line in res["stderr_tail"]:
                logger.debug(f"    {line}")
    total_elapsed = time.time() - t_start

    results.sort(key=lambda r: (r["scenario"], r["command"]))
    summary = {
        "suite_version": "1.0.0",
        "scenarios": [s.stem for s in scenarios],
        "commands": commands,
        "expect_failure": sorted(f"{s}:{c}" for s, c in EXPECTED_FAILURES),
        "runs": [{k: r[k] for k in ("scenario", "command", "status", "expected", "as_expected", "checks")}
                 for r in results],
        "passed": all(r["as_expected"] for r in results),
    }
    summary_path = args.output_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    meta = {
        "total_elapsed_s": round(total_elapsed, 1),
        "runs": [{k: r[k] for k in ("scenario", "command", "elapsed_s", "exit_code", "stderr_tail")}
                 for r in results],
        "output": str(summary_path),
    }
    with open(summary_path.with_suffix(".meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)

    logger.info(f"{'=' * 50}")
    logger.info(f"📊 Suite Summary ({total_elapsed:.1f}s total) → {summary_path}")
    if summary["passed"]:
        logger.info("🎉 Every run matched its expectation")
        return 0
    mismatched = [f"{r['scenario']}:{r['command']}" for r in results if not r["as_expected"]]
    logger.error(f"💥 Unexpected outcomes: {', '.join(mismatched)}")
    return 1


if __name__ == "__main__":
    sys.exit(main())
