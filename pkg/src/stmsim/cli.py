"""Command-line entry point.

    stmsim run FILE [--format trace|json] [--until STEP] [--set KEY=VALUE ...]
    stmsim check FILE [--set KEY=VALUE ...]

Exit codes: 0 success, 1 an expectation failed, 2 the scenario is
invalid, 3 the branch limit was hit.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from stmsim.core import StmError
from stmsim.engine import DEFAULT_MAX_TRAJECTORIES, BranchLimitExceeded, SimulationError, Trajectory, run
from stmsim.scenario import (
    Absent,
    Expectation,
    Occurs,
    Present,
    Scenario,
    ScenarioError,
    Size,
    Status,
    TrajectoryCount,
    load,
)

EXIT_OK = 0
EXIT_EXPECTATION = 1
EXIT_SCENARIO = 2
EXIT_LIMIT = 3


@dataclass
class ExpectationResult:
    expectation: Expectation
    passed: bool
    actual: str


@dataclass
class RunReport:
    scenario: Scenario
    trajectories: list[Trajectory]
    expectation_results: list[ExpectationResult] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.expectation_results)


def _observe(traj: Trajectory, exp: Expectation) -> tuple[bool, str]:
    step = exp.step
    if step > traj.last_step:
        return False, f"trajectory ends at step {traj.last_step}"
    state = traj.state_at(step)
    kind = exp.kind
    if isinstance(kind, Present):
        if kind.symbol not in state:
            return False, f"{kind.symbol} absent"
        remaining = state[kind.symbol]
        ok = kind.remaining is None or kind.remaining == remaining
        return ok, f"{kind.symbol}={remaining}"
    if isinstance(kind, Absent):
        if kind.symbol in state:
            return False, f"{kind.symbol}={state[kind.symbol]}"
        return True, f"{kind.symbol} absent"
    if isinstance(kind, Size):
        return len(state) == kind.size, f"size {len(state)}"
    if isinstance(kind, Status):
        status = traj.status_at(step)
        return status == kind.status, str(status) if status is not None else "no task program"
    if isinstance(kind, Occurs):
        actions = traj.actions_at(step)
        shown = ", ".join(map(str, actions)) or "no actions"
        return kind.action in actions, shown
    raise TypeError(f"unhandled expectation {kind!r}")


def evaluate(exp: Expectation, trajectories: Sequence[Trajectory]) -> ExpectationResult:
    """Check ``exp``; per-step expectations must hold in every trajectory."""
    if isinstance(exp.kind, TrajectoryCount):
        n = len(trajectories)
        return ExpectationResult(exp, n == exp.kind.count, f"{n} trajectories")
    for i, traj in enumerate(trajectories, start=1):
        ok, actual = _observe(traj, exp)
        if not ok:
            where = f" (trajectory {i})" if len(trajectories) > 1 else ""
            return ExpectationResult(exp, False, actual + where)
    return ExpectationResult(exp, True, actual)


def simulate(scenario: Scenario, workers: int = 1, max_trajectories: int = DEFAULT_MAX_TRAJECTORIES) -> RunReport:
    start = time.perf_counter()
    trajectories = run(scenario, workers=workers, max_trajectories=max_trajectories)
    results = [evaluate(e, trajectories) for e in scenario.expectations]
    return RunReport(scenario, trajectories, results, time.perf_counter() - start)


# --------------------------------------------------------------------------
# rendering

def _steps(traj: Trajectory, until: Optional[int]):
    """(step, duration, actions, detected, state, status) rows, final state last."""
    for r in traj.records:
        if until is not None and r.step > until:
            return
        yield r.step, r.duration, r.actions, r.detected, r.state_before, r.task_status
    if until is None or traj.last_step <= until:
        yield traj.last_step, None, (), None, traj.final_state, traj.final_status


def render_trace(report: RunReport, until: Optional[int] = None) -> str:
    out = []
    total = len(report.trajectories)
    for i, traj in enumerate(report.trajectories, start=1):
        if i > 1:
            out.append("---")
        out.append(f"trajectory {i} of {total}")
        for step, duration, actions, detected, state, status in _steps(traj, until):
            acts = ", ".join(map(str, actions)) or "-"
            cells = [
                f"step {step:>3}",
                f"dur {duration if duration is not None else '-'}",
                f"actions [{acts}]",
                f"detected {detected.chunk_symbol if detected else '-'}",
                "state {" + " ".join(f"{s}={r}" for s, r in state.items()) + "}",
            ]
            if status is not None:
                cells.append(f"status {status}")
            out.append(" | ".join(cells))
    for res in report.expectation_results:
        out.append(f"{'PASS' if res.passed else 'FAIL'} {res.expectation} (actual: {res.actual})")
    return "\n".join(out) + "\n"


def report_dict(report: RunReport, until: Optional[int] = None) -> dict:
    trajectories = []
    for traj in report.trajectories:
        steps = []
        for step, duration, actions, detected, state, status in _steps(traj, until):
            steps.append({
                "step": step,
                "duration": duration,
                "actions": [str(a) for a in actions],
                "detected": str(detected.chunk_symbol) if detected else None,
                "state": [{"symbol": str(s), "remaining": r} for s, r in state.items()],
                "task_status": str(status) if status is not None else None,
            })
        trajectories.append({"steps": steps})
    return {
        "trajectories": trajectories,
        "expectations": [
            {"expectation": str(r.expectation), "passed": r.passed, "actual": r.actual}
            for r in report.expectation_results
        ],
    }


def render_json(report: RunReport, until: Optional[int] = None) -> str:
    return json.dumps(report_dict(report, until), indent=2) + "\n"


# --------------------------------------------------------------------------
# entry point

def _parse_sets(pairs: Sequence[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {pair!r}")
        overrides[key.strip()] = value.strip()
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stmsim", description="Short-term memory and chunking simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("file", help="scenario file")
        p.add_argument("--set", dest="overrides", action="extend", nargs="+", default=[],
                       metavar="KEY=VALUE",
                       help="override params (capacity, epsilon, default_duration, tie_break) before validation")
        p.add_argument("--workers", type=int, default=1, help="threads used to expand branches")
        p.add_argument("--max-trajectories", type=int, default=DEFAULT_MAX_TRAJECTORIES)

    run_p = sub.add_parser("run", help="simulate and print the trajectories")
    common(run_p)
    run_p.add_argument("--format", choices=("trace", "json"), default="trace")
    run_p.add_argument("--until", type=int, default=None, help="only display steps up to STEP")

    check_p = sub.add_parser("check", help="evaluate the scenario's expectations")
    common(check_p)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        pairs = [p for chunk in args.overrides for p in chunk.split()]
        scenario = load(args.file, _parse_sets(pairs))
    except ScenarioError as e:
        for d in e.diagnostics:
            print(f"{args.file}:{d}", file=sys.stderr)
        return EXIT_SCENARIO
    except (OSError, ValueError) as e:
        print(f"stmsim: {e}", file=sys.stderr)
        return EXIT_SCENARIO

    try:
        report = simulate(scenario, workers=args.workers, max_trajectories=args.max_trajectories)
    except BranchLimitExceeded as e:
        print(f"stmsim: {e}", file=sys.stderr)
        return EXIT_LIMIT
    except (SimulationError, StmError) as e:
        print(f"{args.file}: {e}", file=sys.stderr)
        return EXIT_SCENARIO

    if args.command == "run":
        text = render_json(report, args.until) if args.format == "json" else render_trace(report, args.until)
        sys.stdout.write(text)
        return EXIT_OK
    else:
        for res in report.expectation_results:
            print(f"{'PASS' if res.passed else 'FAIL'} {res.expectation} (actual: {res.actual})")
        n = len(report.expectation_results)
        failed = sum(not r.passed for r in report.expectation_results)
        print(f"{n - failed}/{n} expectations passed, {len(report.trajectories)} trajectories")
    return EXIT_OK if report.passed else EXIT_EXPECTATION


if __name__ == "__main__":
    sys.exit(main())
