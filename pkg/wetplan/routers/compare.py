import logging
from pathlib import Path
from typing import List, Optional

from ..core.commands import CommandRouter, argument
from ..core.errors import UsageError
from ..core.store import save_document, save_text
from ..engine.report import ComparisonReport, format_report, plot_completion, run_comparison
from ..engine.scenario import load_scenario

logger = logging.getLogger(__name__)

router = CommandRouter()


def cmd_compare(scenario_path: str, seeds: List[int], out_dir: str, hil_rounds: int = 2,
                motion_power_w: Optional[float] = None, uav_time_s: Optional[float] = None,
                uav_power_w: Optional[float] = None, plots: bool = True, parallel: int = 1) -> ComparisonReport:
    """The four-scheme ladder: report.json, report.txt and completion.svg."""
    if (uav_time_s is None) != (uav_power_w is None):
        raise UsageError("--uav-time and --uav-power go together")
    scenario = load_scenario(scenario_path)
    report = run_comparison(scenario, seeds, hil_rounds, motion_power_w, uav_time_s, uav_power_w, parallel)
    out = Path(out_dir)
    save_document(out / "report.json", report)
    save_text(out / "report.txt", format_report(report))
    if plots:
        plot_completion(report, out / "completion.svg")
    return report


@router.command("compare", help="compare fixed transmitter, visit-all, joint and joint+HIL", arguments=[
    argument("scenario"),
    argument("--seed", type=int, default=0, help="first seed"),
    argument("--seeds", type=int, default=5, help="number of consecutive seeds"),
    argument("--rounds", type=int, default=2, help="HIL rounds for the joint+HIL scheme"),
    argument("--motion-power", type=float, default=None, help="robot power draw in W (scenario default 9.3)"),
    argument("--uav-time", type=float, default=None, help="UAV mission time in s for the arithmetic row"),
    argument("--uav-power", type=float, default=None, help="UAV power in W for the arithmetic row"),
    argument("--no-plots", action="store_true"),
    argument("--parallel", type=int, default=1),
])
def compare_command(args) -> int:
    if args.seeds < 1 or args.rounds < 1:
        raise UsageError("--seeds and --rounds must be at least 1")
    seeds = list(range(args.seed, args.seed + args.seeds))
    report = cmd_compare(args.scenario, seeds, args.out, args.rounds, args.motion_power, args.uav_time,
                         args.uav_power, plots=not args.no_plots, parallel=args.parallel)
    print(format_report(report), end="")
    return 0
