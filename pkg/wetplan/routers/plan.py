import logging
from pathlib import Path

from ..core.commands import CommandRouter, argument
from ..core.config import SEARCH_BUDGET
from ..core.store import save_document, save_text
from ..engine.pipeline import SCHEMES, plan_mission
from ..engine.planner import Plan
from ..engine.report import plot_plan
from ..engine.scenario import ScenarioFile, load_scenario

logger = logging.getLogger(__name__)

router = CommandRouter()


def format_plan_summary(plan: Plan, scenario: ScenarioFile) -> str:
    lines = [
        f"scenario: {scenario.name}",
        f"candidate anchors: {len(plan.anchors)}",
        f"selected anchors: {plan.selection.selected}",
        f"route: {' -> '.join(str(m) for m in plan.route.order + plan.route.order[:1])}"
        + ("" if plan.route.optimal else " (node budget hit, may be suboptimal)"),
        f"route length: {plan.route_length_m:.2f} m",
        f"motion time: {plan.motion_s:.2f} s",
        f"charging time: {plan.charging_s:.2f} s",
        f"planned completion: {plan.planned_completion_s:.2f} s",
    ]
    for m in plan.selection.selected:
        anchor = plan.anchors[m]
        dwell = ", ".join(f"beam {n}: {t:.2f} s" for n, t in plan.schedule.dwell_at(m)) or "no dwell"
        lines.append(f"  anchor {m} at ({anchor.position.x:.2f}, {anchor.position.y:.2f}): {dwell}")
    if len(plan.search_trace) > 1:
        lines.append(f"search improvements: {' > '.join(f'{c:.2f}' for c in plan.search_trace)}")
    return "\n".join(lines) + "\n"


def cmd_plan(scenario_path: str, out_dir: str, plots: bool = True, scheme: str = "joint",
             search_budget: int = SEARCH_BUDGET) -> Plan:
    """Anchors, joint optimization, then plan.json, plan_summary.txt and plan.svg."""
    scenario = load_scenario(scenario_path)
    plan = plan_mission(scenario, scheme=scheme, search_budget=search_budget)
    out = Path(out_dir)
    save_document(out / "plan.json", plan)
    save_text(out / "plan_summary.txt", format_plan_summary(plan, scenario))
    if plots:
        plot_plan(plan, scenario, out / "plan.svg")
    logger.info("plan written to %s", out)
    return plan


@router.command("plan", help="generate anchors and optimize the mission plan", arguments=[
    argument("scenario", help="scenario file (bare names are looked up in WET_CONFIG_DIR)"),
    argument("--scheme", choices=SCHEMES, default="joint"),
    argument("--search-budget", type=int, default=SEARCH_BUDGET),
    argument("--no-plots", action="store_true"),
])
def plan_command(args) -> int:
    plan = cmd_plan(args.scenario, args.out, plots=not args.no_plots, scheme=args.scheme,
                    search_budget=args.search_budget)
    print(format_plan_summary(plan, load_scenario(args.scenario)), end="")
    return 0
