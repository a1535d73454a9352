"""Sampling-based reciprocal velocity obstacles.

Candidate velocities are scored by distance to the preferred velocity; a
candidate is free when no neighbour is hit within the time horizon. Against
noncooperative agents the full velocity obstacle is used (they will not
yield); against cooperative agents the reciprocal one, where each side takes
half the avoidance. A differential-drive agent must turn before it moves, so
its candidates are scored as a stand-still for the turn followed by the move.
"""

import math
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .models import Position2D

HORIZON_S = 3.0
SPEED_LEVELS = (0.25, 0.5, 0.75, 1.0)
HEADINGS = 50
# cost added per m/s of leftward deviation; breaks mirror-image ties
RIGHT_HAND_BIAS = 0.05
# extra clearance added to the combined radius when scoring candidates
CLEARANCE_M = 0.05
# heading error below which a differential-drive agent translates
ALIGN_TOL_DEG = 15.0

Velocity = Tuple[float, float]


class AgentKind(str, Enum):
    WET_ROBOT = "wet_robot"
    NONCOOPERATIVE = "noncooperative"
    COOPERATIVE = "cooperative"


class AgentState(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: Position2D
    heading_deg: float = 0.0
    velocity: Velocity = (0.0, 0.0)
    radius: float = Field(0.2, gt=0)
    kind: AgentKind = AgentKind.WET_ROBOT
    max_speed: float = Field(0.2, gt=0)
    # differential drive turns in place at this rate; None moves holonomically
    turn_rate_deg_s: Optional[float] = Field(None, gt=0)
    # current waypoint of a random-waypoint mover
    goal: Optional[Position2D] = None

    @model_validator(mode="after")
    def check_speed(self) -> "AgentState":
        if math.hypot(*self.velocity) > self.max_speed * (1.0 + 1e-9):
            raise ValueError(f"speed {math.hypot(*self.velocity):.4f} exceeds max {self.max_speed}")
        return self

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


def candidate_velocities(preferred: np.ndarray, max_speed: float) -> np.ndarray:
    """Preferred velocity, standstill, then a polar grid aligned with ``preferred``."""
    base = math.atan2(preferred[1], preferred[0]) if np.any(preferred) else 0.0
    angles = base + 2.0 * math.pi * np.arange(HEADINGS) / HEADINGS
    grid = [(s * max_speed * np.cos(angles), s * max_speed * np.sin(angles)) for s in SPEED_LEVELS]
    xs = np.concatenate([g[0] for g in grid])
    ys = np.concatenate([g[1] for g in grid])
    return np.vstack([preferred[None, :], np.zeros((1, 2)), np.column_stack([xs, ys])])


def time_to_collision(rel_pos: np.ndarray, rel_vel: np.ndarray, combined_radius: float) -> np.ndarray:
    """First time two discs touch, per relative-velocity row (inf if never).

    ``rel_pos`` is one offset for every row or one offset per row.
    """
    rel_vel = np.atleast_2d(rel_vel)
    rel_pos = np.broadcast_to(np.asarray(rel_pos, dtype=float), rel_vel.shape)
    a = np.einsum("ij,ij->i", rel_vel, rel_vel)
    b = np.einsum("ij,ij->i", rel_vel, rel_pos)
    c = np.einsum("ij,ij->i", rel_pos, rel_pos) - combined_radius ** 2
    ttc = np.full(rel_vel.shape[0], np.inf)
    # already overlapping: only separating velocities escape
    inside = c < 0
    ttc[inside & (b > 0)] = 0.0
    disc = b * b - a * c
    hit = ~inside & (b > 0) & (disc > 0) & (a > 0)
    ttc[hit] = (b[hit] - np.sqrt(disc[hit])) / a[hit]
    return ttc


def _relative_velocities(agent: AgentState, other: AgentState, candidates: np.ndarray) -> np.ndarray:
    v_other = np.array(other.velocity)
    if other.kind == AgentKind.NONCOOPERATIVE or agent.kind == AgentKind.NONCOOPERATIVE:
        return candidates - v_other
    return 2.0 * candidates - np.array(agent.velocity) - v_other


def min_time_to_collision(agent: AgentState, neighbors: Sequence[AgentState],
                          candidates: np.ndarray, margin: float = 0.0) -> np.ndarray:
    ttc = np.full(candidates.shape[0], np.inf)
    here = agent.position.as_array()
    for other in neighbors:
        rel_pos = other.position.as_array() - here
        rel_vel = _relative_velocities(agent, other, candidates)
        ttc = np.minimum(ttc, time_to_collision(rel_pos, rel_vel, agent.radius + other.radius + margin))
    return ttc


def turn_delays(agent: AgentState, candidates: np.ndarray, reverse: bool = False) -> np.ndarray:
    """Seconds a differential-drive agent turns in place before it can move along each candidate.

    Translation starts once the heading is within ``ALIGN_TOL_DEG`` of the
    candidate direction (or of its opposite when ``reverse`` is allowed).
    """
    delays = np.zeros(candidates.shape[0])
    if agent.turn_rate_deg_s is None:
        return delays
    moving = np.hypot(candidates[:, 0], candidates[:, 1]) > 0
    bearing = np.degrees(np.arctan2(candidates[:, 1], candidates[:, 0]))
    error = np.abs((bearing - agent.heading_deg + 180.0) % 360.0 - 180.0)
    if reverse:
        error = np.minimum(error, 180.0 - error)
    delays[moving] = np.maximum(error[moving] - ALIGN_TOL_DEG, 0.0) / agent.turn_rate_deg_s
    return delays


def kinematic_time_to_collision(agent: AgentState, neighbors: Sequence[AgentState], candidates: np.ndarray,
                                margin: float = 0.0, reverse: bool = False) -> np.ndarray:
    """Time to collision when the agent first stands still for its turn delay, then moves."""
    delays = turn_delays(agent, candidates, reverse)
    if not np.any(delays):
        return min_time_to_collision(agent, neighbors, candidates, margin)
    ttc = np.full(candidates.shape[0], np.inf)
    here = agent.position.as_array()
    still = np.zeros((1, 2))
    for other in neighbors:
        radius = agent.radius + other.radius + margin
        rel_pos = other.position.as_array() - here
        rest_vel = _relative_velocities(agent, other, still)[0]
        rest_ttc = float(time_to_collision(rel_pos, rest_vel, radius)[0])
        after_turn = rel_pos[None, :] - rest_vel[None, :] * delays[:, None]
        moving = delays + time_to_collision(after_turn, _relative_velocities(agent, other, candidates), radius)
        ttc = np.minimum(ttc, np.where(rest_ttc < delays, rest_ttc, moving))
    return ttc


def rvo_velocity(agent: AgentState, neighbors: Sequence[AgentState], preferred: Velocity,
                 max_speed: float, horizon: float = HORIZON_S, margin: float = CLEARANCE_M,
                 reverse: bool = False) -> np.ndarray:
    if max_speed <= 0:
        raise ValueError("max_speed must be positive")
    preferred = np.asarray(preferred, dtype=float)
    norm = float(np.hypot(*preferred))
    if norm > max_speed:
        preferred = preferred * (max_speed / norm)
    if not neighbors:
        return preferred

    candidates = candidate_velocities(preferred, max_speed)
    ttc = kinematic_time_to_collision(agent, neighbors, candidates, margin, reverse)
    cost = np.hypot(*(candidates - preferred).T)
    if ttc[0] <= horizon:
        # a second spent turning weighs like a full-speed deviation
        cost = cost + max_speed * turn_delays(agent, candidates, reverse)
        if norm > 0:
            unit = preferred / np.hypot(*preferred)
            leftward = unit[0] * candidates[:, 1] - unit[1] * candidates[:, 0]
            cost = cost + RIGHT_HAND_BIAS * np.maximum(leftward, 0.0)

    free = ttc > horizon
    if np.any(free):
        idx = int(np.flatnonzero(free)[np.argmin(cost[free])])
    else:
        # nothing is safe within the horizon: postpone contact as long as possible
        best = np.max(ttc)
        tied = np.flatnonzero(ttc >= best - 1e-12)
        idx = int(tied[np.argmin(cost[tied])])
    return candidates[idx]
