"""Hardware-in-the-loop refinement of the motion model.

Each round plans on the current distance matrix, executes the plan in the
simulator and refits the matrix from the measured edge times. The candidate
anchors are reused across rounds; only selection, route and schedule change.
"""

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from ..core.errors import HilAborted, InfeasibleError, MeasurementError, UsageError
from .models import DistanceMatrix
from .pipeline import candidate_anchors, plan_mission, straight_line_matrix
from .planner import Plan
from .scenario import ScenarioFile
from .sim import SimTrace, run_mission

logger = logging.getLogger(__name__)

MODES = ("per_edge", "global_factor")
# the one-round inflation applied in the global mode
DEFAULT_FACTOR = 1.5


# Pydantic models
class HilRound(BaseModel):
    round_index: int
    distance_matrix: DistanceMatrix
    plan: Plan
    trace: SimTrace
    simulated_completion_s: Optional[float] = None
    planned_completion_s: float
    route_length_m: float


def update_distance_matrix(d: DistanceMatrix, edge_times: Dict[Tuple[int, int], float], alpha: float,
                           mode: str = "per_edge", factor: float = DEFAULT_FACTOR) -> DistanceMatrix:
    """Refit D from measurements.

    ``per_edge``: measured edges become ``alpha * T``; every other edge is
    scaled by the mean measured ratio ``alpha * T / D`` (1 when no measured
    edge has positive length). ``global_factor``: ``D * factor``.
    """
    if mode == "global_factor":
        if factor <= 0:
            raise MeasurementError(f"factor must be positive, got {factor}")
        return d.scaled(factor)
    if mode != "per_edge":
        raise UsageError(f"unknown update mode {mode!r}")
    if not edge_times:
        raise MeasurementError("per-edge update needs at least one measured edge")
    for (m, j), seconds in edge_times.items():
        if seconds <= 0:
            raise MeasurementError(f"edge ({m}, {j}) measured at {seconds} s")
        if not (0 <= m < d.size and 0 <= j < d.size) or m == j:
            raise MeasurementError(f"edge ({m}, {j}) is not an edge of a {d.size}-anchor matrix")

    ratios = [alpha * seconds / d.d[m, j] for (m, j), seconds in edge_times.items() if d.d[m, j] > 0]
    mean_ratio = float(np.mean(ratios)) if ratios else 1.0
    updated = np.array(d.d) * mean_ratio
    for (m, j), seconds in edge_times.items():
        updated[m, j] = alpha * seconds
    np.fill_diagonal(updated, 0.0)
    return DistanceMatrix(d=updated)


def hil_iterate(scenario: ScenarioFile, rounds_max: int, improve_tol: float = 0.02, seed: int = 0,
                mode: str = "per_edge", factor: float = DEFAULT_FACTOR) -> List[HilRound]:
    """Plan, simulate and refit until completion settles or ``rounds_max`` rounds ran.

    Every round simulates with the same seed so rounds differ only by the
    plan. Stops early once the simulated completion moves by less than
    ``improve_tol`` (a fraction) of the previous round's.
    """
    if rounds_max < 1:
        raise UsageError(f"rounds must be at least 1, got {rounds_max}")
    if mode not in MODES:
        raise UsageError(f"unknown update mode {mode!r}")
    alpha = scenario.robot.linear_speed
    anchors = candidate_anchors(scenario)
    d = straight_line_matrix(anchors)
    rounds: List[HilRound] = []
    previous: Optional[float] = None
    for r in range(rounds_max):
        try:
            plan = plan_mission(scenario, anchors, d)
        except InfeasibleError as e:
            raise HilAborted(f"round {r}: {e.detail}", rounds)
        trace = run_mission(plan, scenario, seed)
        completion = trace.completion_s
        rounds.append(HilRound(round_index=r, distance_matrix=d, plan=plan, trace=trace,
                               simulated_completion_s=completion,
                               planned_completion_s=plan.planned_completion_s,
                               route_length_m=plan.route_length_m))
        logger.info("HIL round %d: planned %.1f s, simulated %s", r, plan.planned_completion_s,
                    "DNF" if completion is None else f"{completion:.1f} s")

        if previous is not None and completion is not None and abs(completion - previous) < improve_tol * previous:
            break
        if r + 1 == rounds_max:
            break
        edge_times = trace.edge_times
        if mode == "per_edge" and not edge_times:
            logger.info("no route edges measured; nothing to refit")
            break
        d = update_distance_matrix(d, edge_times, alpha, mode, factor)
        previous = completion
    return rounds
