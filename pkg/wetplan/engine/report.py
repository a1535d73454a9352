"""Scheme comparison ladder and the plots written next to it."""

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence

import matplotlib
from matplotlib.figure import Figure
from pydantic import BaseModel

from ..core.config import FORMAT_VERSION
from ..core.errors import HilAborted, InfeasibleError
from .hil import hil_iterate
from .pipeline import candidate_anchors, plan_mission
from .planner import Plan, fixed_transmitter_check
from .scenario import ScenarioFile
from .sim import SimTrace, run_mission

logger = logging.getLogger(__name__)

SCHEME_LABELS = {
    "fixed_transmitter": "fixed transmitter",
    "visit_all": "visit all anchors",
    "joint": "joint optimization",
    "joint_hil": "joint optimization + HIL",
    "uav": "UAV",
}
SVG_SALT = "wetplan"


# Pydantic models
class SchemeRow(BaseModel):
    scheme: str
    feasible: bool
    completion_s: Optional[float] = None
    motion_s: Optional[float] = None
    charging_s: Optional[float] = None
    power_w: float
    energy_j: Optional[float] = None
    collisions: int = 0
    per_seed_completion_s: List[Optional[float]] = []
    note: str = ""


class ComparisonReport(BaseModel):
    format_version: int = FORMAT_VERSION
    scenario: str
    seeds: List[int]
    motion_power_w: float
    rows: List[SchemeRow]


def energy_j(completion_s: float, power_w: float) -> float:
    return completion_s * power_w


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    kept = [v for v in values if v is not None]
    return sum(kept) / len(kept) if kept else None


def _row_from_traces(scheme: str, traces: Sequence[Optional[SimTrace]], power_w: float) -> SchemeRow:
    completions = [t.completion_s if t is not None else None for t in traces]
    finished = [t for t in traces if t is not None and t.completion_s is not None]
    completion = _mean(completions)
    note = ""
    dnf = sum(1 for t in traces if t is not None and t.dnf)
    if dnf:
        note = f"{dnf} DNF"
    return SchemeRow(
        scheme=scheme,
        feasible=completion is not None,
        completion_s=completion,
        motion_s=_mean(t.motion_s for t in finished),
        charging_s=_mean(t.charging_s for t in finished),
        power_w=power_w,
        energy_j=None if completion is None else energy_j(completion, power_w),
        collisions=sum(len(t.robot_collisions()) for t in traces if t is not None),
        per_seed_completion_s=completions,
        note=note,
    )


def _infeasible_row(scheme: str, power_w: float, note: str) -> SchemeRow:
    return SchemeRow(scheme=scheme, feasible=False, power_w=power_w, note=note)


def _simulate(job) -> SimTrace:
    plan, scenario, seed = job
    return run_mission(plan, scenario, seed)


def _hil_final(job) -> Optional[SimTrace]:
    scenario, rounds, seed = job
    try:
        return hil_iterate(scenario, rounds, seed=seed)[-1].trace
    except HilAborted:
        return None


def map_seeds(fn: Callable, jobs: List, parallel: int = 1) -> List:
    """Run ``fn`` over ``jobs``; results come back in job order either way."""
    if parallel <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(fn, jobs))


def run_comparison(scenario: ScenarioFile, seeds: Sequence[int], hil_rounds: int = 2,
                   motion_power_w: Optional[float] = None, uav_time_s: Optional[float] = None,
                   uav_power_w: Optional[float] = None, parallel: int = 1) -> ComparisonReport:
    """Fixed transmitter, visit-all, joint and joint+HIL over the same seeds."""
    power = scenario.robot.motion_power_w if motion_power_w is None else motion_power_w
    seeds = list(seeds)
    rows: List[SchemeRow] = []

    fixed = fixed_transmitter_check(scenario.transmitter_position, scenario.ehs, scenario.codebook,
                                    scenario.channel, scenario.harvest)
    if fixed.feasible:
        rows.append(SchemeRow(scheme="fixed_transmitter", feasible=True, completion_s=fixed.charging_s,
                              motion_s=0.0, charging_s=fixed.charging_s, power_w=power,
                              energy_j=energy_j(fixed.charging_s, power)))
    else:
        rows.append(_infeasible_row("fixed_transmitter", power, f"EHs {fixed.flagged} below sensitivity"))

    anchors = candidate_anchors(scenario)
    for scheme in ("visit_all", "joint"):
        try:
            plan: Plan = plan_mission(scenario, anchors, scheme=scheme)
        except InfeasibleError as e:
            rows.append(_infeasible_row(scheme, power, e.detail))
            continue
        traces = map_seeds(_simulate, [(plan, scenario, s) for s in seeds], parallel)
        rows.append(_row_from_traces(scheme, traces, power))

    traces = map_seeds(_hil_final, [(scenario, hil_rounds, s) for s in seeds], parallel)
    if all(t is None for t in traces):
        rows.append(_infeasible_row("joint_hil", power, "planner infeasible"))
    else:
        rows.append(_row_from_traces("joint_hil", traces, power))

    if uav_time_s is not None and uav_power_w is not None:
        rows.append(SchemeRow(scheme="uav", feasible=True, completion_s=uav_time_s, power_w=uav_power_w,
                              energy_j=energy_j(uav_time_s, uav_power_w), note="user-supplied"))
    return ComparisonReport(scenario=scenario.name, seeds=seeds, motion_power_w=power, rows=rows)


def _cell(value: Optional[float], fmt: str, feasible: bool) -> str:
    if not feasible:
        return "infeasible"
    return "-" if value is None else fmt.format(value)


def format_report(report: ComparisonReport) -> str:
    header = f"{'scheme':<26}{'completion':>12}{'motion':>10}{'charging':>10}{'energy':>12}{'collisions':>12}"
    lines = [f"scenario {report.scenario}, seeds {report.seeds}", header, "-" * len(header)]
    for row in report.rows:
        lines.append(
            f"{SCHEME_LABELS.get(row.scheme, row.scheme):<26}"
            f"{_cell(row.completion_s, '{:.1f} s', row.feasible):>12}"
            f"{_cell(row.motion_s, '{:.1f} s', row.feasible):>10}"
            f"{_cell(row.charging_s, '{:.1f} s', row.feasible):>10}"
            f"{_cell(row.energy_j, '{:.0f} J', row.feasible):>12}"
            f"{row.collisions:>12}"
            + (f"  ({row.note})" if row.note else "")
        )
    return "\n".join(lines) + "\n"


def _save_svg(fig: Figure, path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT}):
        fig.savefig(target, format="svg", metadata={"Date": None})
    return target


def plot_completion(report: ComparisonReport, path) -> Path:
    rows = [r for r in report.rows if r.scheme != "uav"]
    fig = Figure(figsize=(7, 4))
    ax = fig.subplots()
    labels = [SCHEME_LABELS.get(r.scheme, r.scheme) for r in rows]
    heights = [r.completion_s if r.feasible and r.completion_s is not None else 0.0 for r in rows]
    bars = ax.bar(range(len(rows)), heights, color="tab:blue")
    for bar, row in zip(bars, rows):
        text = "infeasible" if not row.feasible else f"{bar.get_height():.1f}"
        ax.annotate(text, (bar.get_x() + bar.get_width() / 2, bar.get_height()), ha="center", va="bottom")
    ax.set_xticks(range(len(rows)), labels, rotation=15)
    ax.set_ylabel("mean completion time (s)")
    ax.set_title(f"Mission completion, {report.scenario}")
    fig.tight_layout()
    return _save_svg(fig, path)


def plot_plan(plan: Plan, scenario: ScenarioFile, path) -> Path:
    fig = Figure(figsize=(6, 6))
    ax = fig.subplots()
    ax.scatter([eh.position.x for eh in scenario.ehs], [eh.position.y for eh in scenario.ehs],
               marker=".", color="tab:green", label="EH")
    ax.scatter([a.position.x for a in plan.anchors], [a.position.y for a in plan.anchors],
               marker="x", color="tab:gray", label="candidate anchor")
    chosen = plan.selection.selected
    ax.scatter([plan.anchors[m].position.x for m in chosen], [plan.anchors[m].position.y for m in chosen],
               marker="o", facecolors="none", edgecolors="tab:red", label="selected anchor")
    for m, j in plan.route.edges():
        a, b = plan.anchors[m].position, plan.anchors[j].position
        ax.annotate("", xy=(b.x, b.y), xytext=(a.x, a.y), arrowprops={"arrowstyle": "->", "color": "tab:red"})
    start = scenario.robot.start
    ax.scatter([start.x], [start.y], marker="s", color="black", label="start")
    ax.set_xlim(scenario.arena.x_min, scenario.arena.x_max)
    ax.set_ylim(scenario.arena.y_min, scenario.arena.y_max)
    ax.set_aspect("equal")
    ax.set_title(f"{scenario.name}: {plan.planned_completion_s:.1f} s planned")
    ax.legend(loc="upper right", fontsize="small")
    return _save_svg(fig, path)
