import logging
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel

from ..core.commands import CommandRouter, argument
from ..core.config import FORMAT_VERSION
from ..core.errors import HilAborted, UsageError
from ..core.store import save_document
from ..engine.hil import DEFAULT_FACTOR, MODES, HilRound, hil_iterate
from ..engine.report import map_seeds
from ..engine.scenario import load_scenario
from .simulate import write_trace

logger = logging.getLogger(__name__)

router = CommandRouter()


# Pydantic models
class RoundSummary(BaseModel):
    round_index: int
    selected: List[int]
    route: List[int]
    route_length_m: float
    planned_completion_s: float
    simulated_completion_s: Optional[float] = None


class HilSummary(BaseModel):
    format_version: int = FORMAT_VERSION
    seed: int
    mode: str
    aborted: bool = False
    rounds: List[RoundSummary]

    @property
    def not_worse(self) -> bool:
        """Final simulated completion did not exceed the first round's."""
        first, last = self.rounds[0].simulated_completion_s, self.rounds[-1].simulated_completion_s
        return first is not None and last is not None and last <= first


class HilBatch(BaseModel):
    format_version: int = FORMAT_VERSION
    seeds: List[int]
    not_worse_fraction: float
    mean_improvement_s: Optional[float] = None


def write_rounds(rounds: List[HilRound], seed: int, mode: str, out_dir, aborted: bool = False) -> HilSummary:
    out = Path(out_dir)
    for r in rounds:
        save_document(out / f"round_{r.round_index}" / "plan.json", r.plan)
        write_trace(r.trace, out / f"round_{r.round_index}")
    summary = HilSummary(seed=seed, mode=mode, aborted=aborted, rounds=[
        RoundSummary(round_index=r.round_index, selected=r.plan.selection.selected, route=r.plan.route.order,
                     route_length_m=r.route_length_m, planned_completion_s=r.planned_completion_s,
                     simulated_completion_s=r.simulated_completion_s)
        for r in rounds])
    save_document(out / "hil_summary.json", summary)
    return summary


def cmd_hil(scenario_path: str, rounds: int, seed: int, out_dir: str, mode: str = "per_edge",
            factor: float = DEFAULT_FACTOR, improve_tol: float = 0.02) -> HilSummary:
    if rounds < 1:
        raise UsageError(f"--rounds must be at least 1, got {rounds}")
    scenario = load_scenario(scenario_path)
    try:
        history = hil_iterate(scenario, rounds, improve_tol=improve_tol, seed=seed, mode=mode, factor=factor)
    except HilAborted as e:
        write_rounds(e.rounds, seed, mode, out_dir, aborted=True)
        raise
    return write_rounds(history, seed, mode, out_dir)


def _hil_job(job) -> HilSummary:
    scenario_path, rounds, seed, out_dir, mode, factor, improve_tol = job
    return cmd_hil(scenario_path, rounds, seed, str(Path(out_dir) / f"seed_{seed}"), mode, factor, improve_tol)


def cmd_hil_batch(scenario_path: str, rounds: int, seeds: List[int], out_dir: str, mode: str = "per_edge",
                  factor: float = DEFAULT_FACTOR, improve_tol: float = 0.02, parallel: int = 1) -> HilBatch:
    jobs = [(scenario_path, rounds, s, out_dir, mode, factor, improve_tol) for s in seeds]
    summaries = map_seeds(_hil_job, jobs, parallel)
    gains = [s.rounds[0].simulated_completion_s - s.rounds[-1].simulated_completion_s
             for s in summaries
             if s.rounds[0].simulated_completion_s is not None and s.rounds[-1].simulated_completion_s is not None]
    batch = HilBatch(seeds=list(seeds),
                     not_worse_fraction=sum(s.not_worse for s in summaries) / len(summaries),
                     mean_improvement_s=sum(gains) / len(gains) if gains else None)
    save_document(Path(out_dir) / "hil_batch.json", batch)
    return batch


@router.command("hil", help="plan, simulate and refit the motion model in rounds", arguments=[
    argument("scenario"),
    argument("--rounds", type=int, default=2),
    argument("--seed", type=int, default=0),
    argument("--seeds", type=int, default=1, help="run this many consecutive seeds as a batch"),
    argument("--mode", choices=MODES, default="per_edge"),
    argument("--factor", type=float, default=DEFAULT_FACTOR, help="inflation for --mode global_factor"),
    argument("--improve-tol", type=float, default=0.02, help="stop when completion moves less than this fraction"),
    argument("--parallel", type=int, default=1),
])
def hil_command(args) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    if args.seeds == 1:
        summary = cmd_hil(args.scenario, args.rounds, args.seed, args.out, args.mode, args.factor, args.improve_tol)
        for r in summary.rounds:
            simulated = "DNF" if r.simulated_completion_s is None else f"{r.simulated_completion_s:.2f} s"
            print(f"round {r.round_index}: route {r.route}, planned {r.planned_completion_s:.2f} s, "
                  f"simulated {simulated}")
        return 0
    if args.rounds < 1:
        raise UsageError(f"--rounds must be at least 1, got {args.rounds}")
    seeds = list(range(args.seed, args.seed + args.seeds))
    batch = cmd_hil_batch(args.scenario, args.rounds, seeds, args.out, args.mode, args.factor,
                          args.improve_tol, args.parallel)
    print(f"seeds {seeds[0]}..{seeds[-1]}: completion did not increase in {batch.not_worse_fraction:.0%}")
    if batch.mean_improvement_s is not None:
        print(f"mean improvement: {batch.mean_improvement_s:.2f} s")
    return 0
