import logging
from pathlib import Path
from typing import Optional

from ..core.commands import CommandRouter, argument
from ..core.store import load_document, save_csv, save_document
from ..engine.planner import Plan
from ..engine.scenario import load_scenario
from ..engine.sim import SimTrace, TraceSummary, run_mission, summarize, trace_rows

logger = logging.getLogger(__name__)

router = CommandRouter()


def write_trace(trace: SimTrace, out_dir) -> TraceSummary:
    out = Path(out_dir)
    header, rows = trace_rows(trace)
    save_csv(out / "trace.csv", header, rows)
    summary = summarize(trace)
    save_document(out / "summary.json", summary)
    return summary


def format_trace_summary(summary: TraceSummary) -> str:
    completion = "DNF" if summary.dnf else f"{summary.completion_s:.2f} s"
    lines = [
        f"seed {summary.seed}: completion {completion}, charging {summary.charging_s:.2f} s",
        f"mission success: {summary.mission_success}",
        f"collisions involving the robot: {summary.robot_collisions} (all pairs: {len(summary.collisions)})",
        f"emergency stops: {summary.emergency_stops}",
    ]
    for k, (got, need) in enumerate(zip(summary.harvested_j, summary.requirements_j)):
        lines.append(f"  EH {k}: {got * 1e3:.2f} mJ of {need * 1e3:.2f} mJ")
    return "\n".join(lines) + "\n"


def cmd_simulate(scenario_path: str, plan_path: str, seed: int, out_dir: str,
                 dt: Optional[float] = None) -> TraceSummary:
    scenario = load_scenario(scenario_path)
    plan = load_document(plan_path, Plan)
    trace = run_mission(plan, scenario, seed, dt)
    return write_trace(trace, out_dir)


@router.command("simulate", help="execute a plan in the 2D world", arguments=[
    argument("scenario"),
    argument("plan", help="plan.json written by the plan command"),
    argument("--seed", type=int, default=0),
    argument("--dt", type=float, default=None, help="step length in seconds (scenario default)"),
])
def simulate_command(args) -> int:
    summary = cmd_simulate(args.scenario, args.plan, args.seed, args.out, args.dt)
    print(format_trace_summary(summary), end="")
    return 0
