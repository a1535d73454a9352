"""2D mission executor.

A differential-drive WET robot follows a plan (start pose, depot, route,
depot, start pose) with the sampling RVO local planner, turning in place
before it translates. At each anchor it turns to every scheduled beam and
dwells; harvested energy accrues only while docked and dwelling.
Noncooperative movers wander between seeded random waypoints and do not
yield. Everything random flows from one seeded generator.
"""

import logging
import math
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from ..core.config import FORMAT_VERSION
from ..core.errors import PlanMismatchError, UsageError
from .models import (Arena, BeamSector, ChannelParams, EnergyHarvester, HarvestParams, Position2D,
                     harvested_power_w, received_power_w)
from .planner import Plan
from .rvo import (ALIGN_TOL_DEG, CLEARANCE_M, HORIZON_S, AgentKind, AgentState, Velocity,
                  kinematic_time_to_collision, rvo_velocity)
from .scenario import ScenarioFile

logger = logging.getLogger(__name__)

DOCK_EPS_M = 1e-9
MAX_DT_S = 0.2
EVADE_HORIZON_FACTOR = 2.0


class Control(NamedTuple):
    velocity: Velocity = (0.0, 0.0)
    turn_to_deg: Optional[float] = None
    charging: Optional[BeamSector] = None
    goal: Optional[Position2D] = None
    # a differential drive may back along the velocity instead of turning to face it
    reverse: bool = False


# Pydantic models
class WorldState(BaseModel):
    time: float = 0.0
    agents: List[AgentState]
    ehs: List[EnergyHarvester] = []
    harvested_j: List[float] = []
    channel: ChannelParams = ChannelParams()
    harvest: HarvestParams = HarvestParams()
    rng_state: Dict[str, Any] = {}


class AgentPose(BaseModel):
    x: float
    y: float
    heading_deg: float
    speed: float


class TraceSample(BaseModel):
    time_s: float
    poses: List[AgentPose]
    harvested_j: List[float]


class LegRecord(BaseModel):
    from_anchor: Optional[int] = None
    to_anchor: Optional[int] = None
    depart_s: Optional[float] = None
    arrive_s: Optional[float] = None


class CollisionEvent(BaseModel):
    time_s: float
    agents: Tuple[int, int]
    distance_m: float


class SimTrace(BaseModel):
    seed: int
    dt: float
    completion_s: Optional[float] = None
    dnf: bool = False
    samples: List[TraceSample] = []
    legs: List[LegRecord] = []
    collisions: List[CollisionEvent] = []
    harvested_j: List[float] = []
    requirements_j: List[float] = []
    charging_s: float = 0.0
    emergency_stops: int = 0

    @property
    def edge_times(self) -> Dict[Tuple[int, int], float]:
        return extract_edge_times(self)

    @property
    def motion_s(self) -> Optional[float]:
        if self.completion_s is None:
            return None
        return self.completion_s - self.charging_s

    @property
    def mission_success(self) -> bool:
        return not self.dnf and all(h >= g * (1.0 - 1e-6) for h, g in zip(self.harvested_j, self.requirements_j))

    def robot_collisions(self) -> List[CollisionEvent]:
        return [c for c in self.collisions if 0 in c.agents]


Controller = Callable[[WorldState, int, float, np.random.Generator], Control]


def _wrap_deg(angle: float) -> float:
    return (angle + 180.0) % 360.0 - 180.0


def _turn_towards(heading: float, target: float, max_step: float) -> float:
    error = _wrap_deg(target - heading)
    if abs(error) <= max_step:
        return target % 360.0
    return (heading + math.copysign(max_step, error)) % 360.0


def _advance(agent: AgentState, control: Control, dt: float) -> AgentState:
    v = np.asarray(control.velocity, dtype=float)
    heading = agent.heading_deg
    speed = float(np.hypot(*v))
    if control.turn_to_deg is not None:
        rate = agent.turn_rate_deg_s or 360.0 / dt
        heading = _turn_towards(heading, control.turn_to_deg, rate * dt)
        v = np.zeros(2)
    elif speed > 0:
        desired = math.degrees(math.atan2(v[1], v[0]))
        if agent.turn_rate_deg_s is None:
            heading = desired % 360.0
        else:
            facing = desired
            if control.reverse and abs(_wrap_deg(desired + 180.0 - heading)) < abs(_wrap_deg(desired - heading)):
                facing = desired + 180.0
            aligned = abs(_wrap_deg(facing - heading)) <= ALIGN_TOL_DEG
            heading = _turn_towards(heading, facing, agent.turn_rate_deg_s * dt)
            if not aligned:
                v = np.zeros(2)
    position = Position2D(x=agent.position.x + v[0] * dt, y=agent.position.y + v[1] * dt)
    return agent.model_copy(update={
        "position": position,
        "heading_deg": heading,
        "velocity": (float(v[0]), float(v[1])),
        "goal": control.goal if control.goal is not None else agent.goal,
    })


def _generator(world: WorldState) -> np.random.Generator:
    rng = np.random.default_rng(0)
    if world.rng_state:
        rng.bit_generator.state = world.rng_state
    return rng


def step(world: WorldState, dt: float, controllers: Sequence[Controller]) -> WorldState:
    """Advance one explicit-Euler step; every controller sees the same snapshot."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if len(controllers) != len(world.agents):
        raise ValueError(f"{len(controllers)} controllers for {len(world.agents)} agents")
    rng = _generator(world)
    controls = [controller(world, i, dt, rng) for i, controller in enumerate(controllers)]
    harvested = list(world.harvested_j)
    for agent, control in zip(world.agents, controls):
        if control.charging is None:
            continue
        for k, eh in enumerate(world.ehs):
            p_in = received_power_w(world.channel, control.charging, agent.position, eh.position)
            harvested[k] += dt * harvested_power_w(p_in, world.harvest)
    return world.model_copy(update={
        "time": world.time + dt,
        "agents": [_advance(a, c, dt) for a, c in zip(world.agents, controls)],
        "harvested_j": harvested,
        "rng_state": rng.bit_generator.state,
    })


# Controllers
def _toward(agent: AgentState, target: Position2D, speed: float, dt: float) -> np.ndarray:
    offset = target.as_array() - agent.position.as_array()
    dist = float(np.hypot(*offset))
    if dist <= DOCK_EPS_M:
        return np.zeros(2)
    if dist <= speed * dt:
        # land on the target this step
        return offset / dt
    return offset / dist * speed


class ConstantVelocity:
    def __init__(self, velocity: Velocity):
        self.velocity = velocity

    def __call__(self, world, index, dt, rng) -> Control:
        return Control(velocity=self.velocity)


class GoalSeeker:
    """Cooperative agent steering to a fixed goal through RVO."""

    def __init__(self, goal: Position2D, horizon: float = HORIZON_S):
        self.goal = goal
        self.horizon = horizon

    def __call__(self, world, index, dt, rng) -> Control:
        agent = world.agents[index]
        neighbors = [a for i, a in enumerate(world.agents) if i != index]
        preferred = _toward(agent, self.goal, agent.max_speed, dt)
        return Control(velocity=tuple(rvo_velocity(agent, neighbors, preferred, agent.max_speed, self.horizon)))


class RandomWaypoint:
    """Noncooperative mover: straight to a random waypoint, then pick another."""

    def __init__(self, arena: Arena, speed: float, margin: float = 0.2):
        self.arena = arena
        self.speed = speed
        self.margin = margin

    def sample(self, rng: np.random.Generator) -> Position2D:
        x = rng.uniform(self.arena.x_min + self.margin, self.arena.x_max - self.margin)
        y = rng.uniform(self.arena.y_min + self.margin, self.arena.y_max - self.margin)
        return Position2D(x=float(x), y=float(y))

    def __call__(self, world, index, dt, rng) -> Control:
        agent = world.agents[index]
        new_goal = None
        goal = agent.goal
        if goal is None or agent.position.distance_to(goal) <= DOCK_EPS_M:
            goal = new_goal = self.sample(rng)
        return Control(velocity=tuple(_toward(agent, goal, self.speed, dt)), goal=new_goal)


class MissionLeg(NamedTuple):
    target: Position2D
    from_anchor: Optional[int]
    to_anchor: Optional[int]
    dwell: List[Tuple[BeamSector, float]]


class MissionController:
    """WET robot policy: drive each leg, dock, turn to each beam and dwell.

    A noncooperative agent threatening a docked robot makes it evade; the
    dwell already done on the current beam is kept and resumes after it
    re-docks.
    """

    def __init__(self, legs: List[MissionLeg], alpha: float, arrival_tolerance: float,
                 horizon: float = HORIZON_S, emergency_ttc: float = 1.0):
        self.legs = legs
        self.alpha = alpha
        self.arrival_tolerance = arrival_tolerance
        self.horizon = horizon
        self.emergency_ttc = emergency_ttc
        self.records = [LegRecord(from_anchor=leg.from_anchor, to_anchor=leg.to_anchor) for leg in legs]
        self.leg = 0
        self.beam = 0
        self.dwelled = 0.0
        self.charging_s = 0.0
        self.emergency_stops = 0
        self.completion_s: Optional[float] = None

    @property
    def done(self) -> bool:
        return self.completion_s is not None

    def _drive(self, agent: AgentState, neighbors: List[AgentState], preferred: np.ndarray,
               evading: bool = False) -> Control:
        movers = [n for n in neighbors if n.kind == AgentKind.NONCOOPERATIVE]
        # a threatened robot may back up, and looks further ahead for a way out
        evading = evading or bool(movers) and bool(
            kinematic_time_to_collision(agent, movers, preferred[None, :], CLEARANCE_M)[0] <= self.horizon)
        horizon = EVADE_HORIZON_FACTOR * self.horizon if evading else self.horizon
        v = rvo_velocity(agent, neighbors, preferred, self.alpha, horizon, reverse=evading)
        if movers and self.emergency_ttc > 0 and np.any(v):
            ttc = kinematic_time_to_collision(agent, movers, np.vstack([v, np.zeros(2)]), reverse=evading)
            if ttc[0] < self.emergency_ttc and ttc[1] > ttc[0]:
                self.emergency_stops += 1
                v = np.zeros(2)
        return Control(velocity=(float(v[0]), float(v[1])), reverse=evading)

    def _threatened(self, agent: AgentState, neighbors: List[AgentState]) -> bool:
        movers = [n for n in neighbors if n.kind == AgentKind.NONCOOPERATIVE]
        if not movers:
            return False
        return bool(kinematic_time_to_collision(agent, movers, np.zeros((1, 2)), CLEARANCE_M)[0] <= self.horizon)

    def _sidestep(self, agent: AgentState, neighbors: List[AgentState]) -> np.ndarray:
        """Full-speed velocity off the line of the most urgent mover.

        Backing away along a mover's own path keeps the robot in front of it,
        so a docked robot steps sideways instead.
        """
        movers = [n for n in neighbors if n.kind == AgentKind.NONCOOPERATIVE]
        ttc = [kinematic_time_to_collision(agent, [m], np.zeros((1, 2)), CLEARANCE_M)[0] for m in movers]
        mover = movers[int(np.argmin(ttc))]
        away = agent.position.as_array() - mover.position.as_array()
        course = np.asarray(mover.velocity, dtype=float)
        speed = float(np.hypot(*course))
        if speed < 1e-9:
            return away / max(float(np.hypot(*away)), 1e-9) * self.alpha
        left = np.array([-course[1], course[0]]) / speed
        # dead ahead of the mover: pass on its right
        side = left if float(left @ away) > 0 else -left
        return side * self.alpha

    def __call__(self, world: WorldState, index: int, dt: float, rng) -> Control:
        agent = world.agents[index]
        neighbors = [a for i, a in enumerate(world.agents) if i != index]
        while not self.done:
            leg = self.legs[self.leg]
            record = self.records[self.leg]
            if record.depart_s is None:
                record.depart_s = world.time
            dist = agent.position.distance_to(leg.target)
            if record.arrive_s is None and dist <= self.arrival_tolerance:
                record.arrive_s = world.time
            if dist > DOCK_EPS_M:
                return self._drive(agent, neighbors, _toward(agent, leg.target, self.alpha, dt))
            if self.beam < len(leg.dwell):
                sector, seconds = leg.dwell[self.beam]
                if self.dwelled >= seconds:
                    self.beam += 1
                    self.dwelled = 0.0
                    continue
                if self._threatened(agent, neighbors):
                    return self._drive(agent, neighbors, self._sidestep(agent, neighbors), evading=True)
                if abs(_wrap_deg(sector.center_deg - agent.heading_deg)) > 1e-9:
                    return Control(turn_to_deg=sector.center_deg)
                self.dwelled += dt
                self.charging_s += dt
                return Control(charging=sector)
            self.leg += 1
            self.beam = 0
            self.dwelled = 0.0
            if self.leg == len(self.legs):
                self.completion_s = world.time
        return Control()


def build_legs(plan: Plan, scenario: ScenarioFile) -> List[MissionLeg]:
    selected = plan.selection.selected
    if not selected:
        return []
    depot = plan.start_anchor
    order = plan.route.order or [depot]
    positions = [a.position for a in plan.anchors]

    def dwell(m: int) -> List[Tuple[BeamSector, float]]:
        return [(scenario.codebook.sectors[n], t) for n, t in plan.schedule.dwell_at(m)]

    legs = [MissionLeg(positions[depot], None, depot, dwell(depot))]
    for prev, m in zip(order, order[1:]):
        legs.append(MissionLeg(positions[m], prev, m, dwell(m)))
    if len(order) >= 2:
        legs.append(MissionLeg(positions[depot], order[-1], depot, []))
    legs.append(MissionLeg(scenario.robot.start, depot, None, []))
    return legs


def check_plan(plan: Plan, scenario: ScenarioFile):
    size = len(plan.anchors)
    if len(plan.selection) != size or plan.route.w.shape != (size, size):
        raise PlanMismatchError(f"plan selection/route do not match its {size} anchors")
    if plan.schedule.t.shape != (len(scenario.codebook), size):
        raise PlanMismatchError(f"plan schedule is {plan.schedule.t.shape}, scenario codebook has "
                                f"{len(scenario.codebook)} beams for {size} anchors")
    if plan.selection.selected and not 0 <= plan.start_anchor < size:
        raise PlanMismatchError(f"start anchor {plan.start_anchor} is not a plan anchor")
    if any(m < 0 or m >= size for m in plan.route.order):
        raise PlanMismatchError("route references unknown anchors")
    if any(m not in plan.selection.selected for m in plan.route.order):
        raise PlanMismatchError("route visits an unselected anchor")
    members = [k for a in plan.anchors for k in a.cluster.members]
    if members and max(members) >= len(scenario.ehs):
        raise PlanMismatchError(f"plan anchors reference EH {max(members)}, scenario has {len(scenario.ehs)}")


def spawn_movers(scenario: ScenarioFile, rng: np.random.Generator, robot: AgentState,
                 count: Optional[int] = None) -> List[AgentState]:
    cfg = scenario.obstacles
    count = cfg.count if count is None else count
    placer = RandomWaypoint(scenario.arena, cfg.speed, margin=cfg.radius)
    movers: List[AgentState] = []
    for _ in range(count):
        for _attempt in range(1000):
            spot = placer.sample(rng)
            if spot.distance_to(robot.position) >= robot.radius + cfg.radius + 0.5 and \
                    all(spot.distance_to(m.position) >= 2 * cfg.radius + 0.1 for m in movers):
                break
        movers.append(AgentState(position=spot, radius=cfg.radius, kind=AgentKind.NONCOOPERATIVE,
                                 max_speed=cfg.speed))
    return movers


def _snapshot(world: WorldState) -> TraceSample:
    return TraceSample(
        time_s=world.time,
        poses=[AgentPose(x=a.position.x, y=a.position.y, heading_deg=a.heading_deg, speed=a.speed)
               for a in world.agents],
        harvested_j=list(world.harvested_j),
    )


def _contacts(agents: List[AgentState]) -> Dict[Tuple[int, int], float]:
    touching = {}
    for i in range(len(agents)):
        for j in range(i + 1, len(agents)):
            dist = agents[i].position.distance_to(agents[j].position)
            if dist < agents[i].radius + agents[j].radius:
                touching[(i, j)] = dist
    return touching


def run_mission(plan: Plan, scenario: ScenarioFile, seed: int, dt: Optional[float] = None,
                movers: Optional[int] = None) -> SimTrace:
    dt = scenario.sim.dt if dt is None else dt
    if not 0 < dt <= MAX_DT_S:
        raise UsageError(f"dt must be in (0, {MAX_DT_S}] s, got {dt}")
    check_plan(plan, scenario)
    cfg = scenario.sim
    robot_cfg = scenario.robot
    requirements = [eh.requirement_j for eh in scenario.ehs]
    rng = np.random.default_rng(seed)
    robot = AgentState(position=robot_cfg.start, heading_deg=robot_cfg.start_heading_deg,
                       radius=robot_cfg.body_radius, kind=AgentKind.WET_ROBOT,
                       max_speed=robot_cfg.linear_speed, turn_rate_deg_s=robot_cfg.angular_speed)
    agents = [robot] + spawn_movers(scenario, rng, robot, movers)
    world = WorldState(agents=agents, ehs=list(scenario.ehs), harvested_j=[0.0] * len(scenario.ehs),
                       channel=scenario.channel, harvest=scenario.harvest, rng_state=rng.bit_generator.state)

    legs = build_legs(plan, scenario)
    if not legs:
        return SimTrace(seed=seed, dt=dt, completion_s=0.0, samples=[_snapshot(world)],
                        harvested_j=list(world.harvested_j), requirements_j=requirements)

    controller = MissionController(legs, robot_cfg.linear_speed, cfg.arrival_tolerance_m,
                                   cfg.horizon_s, cfg.emergency_ttc_s)
    wander = RandomWaypoint(scenario.arena, scenario.obstacles.speed, margin=scenario.obstacles.radius)
    controllers = [controller] + [wander] * (len(agents) - 1)
    start_legs = 2.0 * robot_cfg.start.distance_to(plan.anchors[plan.start_anchor].position) / robot_cfg.linear_speed
    budget = cfg.budget_factor * max(plan.planned_completion_s + start_legs, 1.0)

    samples: List[TraceSample] = []
    collisions: List[CollisionEvent] = []
    touching = _contacts(world.agents)
    next_sample = 0.0
    steps = 0
    dnf = False
    while not controller.done:
        if world.time >= next_sample - 1e-9:
            samples.append(_snapshot(world))
            next_sample += cfg.sample_interval_s
        world = step(world, dt, controllers)
        steps += 1
        now = _contacts(world.agents)
        for pair, dist in now.items():
            if pair not in touching:
                collisions.append(CollisionEvent(time_s=world.time, agents=pair, distance_m=dist))
        touching = now
        if not controller.done and world.time > budget:
            dnf = True
            logger.warning("mission did not finish within %.1f s (seed %d)", budget, seed)
            break
    samples.append(_snapshot(world))
    logger.debug("mission finished after %d steps", steps)

    return SimTrace(
        seed=seed,
        dt=dt,
        completion_s=None if dnf else controller.completion_s,
        dnf=dnf,
        samples=samples,
        legs=controller.records,
        collisions=collisions,
        harvested_j=list(world.harvested_j),
        requirements_j=requirements,
        charging_s=controller.charging_s,
        emergency_stops=controller.emergency_stops,
    )


def extract_edge_times(trace: SimTrace) -> Dict[Tuple[int, int], float]:
    """Departure-to-arrival seconds for every route edge the robot completed."""
    times: Dict[Tuple[int, int], float] = {}
    for leg in trace.legs:
        if leg.from_anchor is None or leg.to_anchor is None:
            continue
        if leg.depart_s is None or leg.arrive_s is None:
            continue
        times[(leg.from_anchor, leg.to_anchor)] = leg.arrive_s - leg.depart_s
    return times


def trace_rows(trace: SimTrace) -> Tuple[List[str], List[List[float]]]:
    """Column header and rows of the per-sample trace table."""
    if not trace.samples:
        return ["time_s"], []
    agents = len(trace.samples[0].poses)
    ehs = len(trace.samples[0].harvested_j)
    header = ["time_s"]
    for i in range(agents):
        header += [f"a{i}_x", f"a{i}_y", f"a{i}_heading_deg", f"a{i}_speed"]
    header += [f"eh{k}_j" for k in range(ehs)]
    rows = []
    for sample in trace.samples:
        row = [sample.time_s]
        for pose in sample.poses:
            row += [pose.x, pose.y, pose.heading_deg, pose.speed]
        rows.append(row + list(sample.harvested_j))
    return header, rows


class EdgeTime(BaseModel):
    from_anchor: int
    to_anchor: int
    seconds: float


class TraceSummary(BaseModel):
    format_version: int = FORMAT_VERSION
    seed: int
    dt: float
    completion_s: Optional[float]
    dnf: bool
    motion_s: Optional[float]
    charging_s: float
    mission_success: bool
    harvested_j: List[float]
    requirements_j: List[float]
    edge_times: List[EdgeTime]
    collisions: List[CollisionEvent]
    robot_collisions: int
    emergency_stops: int


def summarize(trace: SimTrace) -> TraceSummary:
    return TraceSummary(
        seed=trace.seed,
        dt=trace.dt,
        completion_s=trace.completion_s,
        dnf=trace.dnf,
        motion_s=trace.motion_s,
        charging_s=trace.charging_s,
        mission_success=trace.mission_success,
        harvested_j=trace.harvested_j,
        requirements_j=trace.requirements_j,
        edge_times=[EdgeTime(from_anchor=m, to_anchor=j, seconds=s) for (m, j), s in sorted(trace.edge_times.items())],
        collisions=trace.collisions,
        robot_collisions=len(trace.robot_collisions()),
        emergency_stops=trace.emergency_stops,
    )
