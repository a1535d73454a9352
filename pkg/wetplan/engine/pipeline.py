"""Scenario-level planning shared by the plan, hil and compare commands."""

import logging
from typing import List, Optional

from ..core.config import SEARCH_BUDGET
from .anchors import Anchor, generate_anchors
from .models import DistanceMatrix
from .planner import Plan, joint_optimize, nearest_anchor, visit_all_baseline
from .scenario import ScenarioFile

logger = logging.getLogger(__name__)

SCHEMES = ("joint", "visit_all")


def candidate_anchors(scenario: ScenarioFile) -> List[Anchor]:
    return generate_anchors(scenario.ehs, scenario.clustering.eps, scenario.clustering.min_pts,
                            scenario.codebook, scenario.beam_width_deg, scenario.arena)


def straight_line_matrix(anchors: List[Anchor]) -> DistanceMatrix:
    return DistanceMatrix.from_positions([a.position for a in anchors])


def plan_mission(scenario: ScenarioFile, anchors: Optional[List[Anchor]] = None,
                 d: Optional[DistanceMatrix] = None, scheme: str = "joint",
                 search_budget: int = SEARCH_BUDGET) -> Plan:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    anchors = candidate_anchors(scenario) if anchors is None else anchors
    d = straight_line_matrix(anchors) if d is None else d
    depot = nearest_anchor(anchors, scenario.robot.start)
    args = (anchors, d, scenario.ehs, scenario.codebook, scenario.channel, scenario.harvest,
            scenario.robot.linear_speed)
    if scheme == "visit_all":
        return visit_all_baseline(*args, depot=depot)
    return joint_optimize(*args, search_budget=search_budget, depot=depot, seed=scenario.seed)
