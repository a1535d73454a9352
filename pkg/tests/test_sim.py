"""Mission executor: kinematics, energy bookkeeping, edge timing and determinism."""

import math

import numpy as np
import pytest

from conftest import harvesters, pos
from wetplan.core.errors import PlanMismatchError, UsageError
from wetplan.engine.anchors import Anchor, Cluster
from wetplan.engine.models import BeamSector, Codebook, coverage_matrix, harvested_power_w, received_power_w
from wetplan.engine.pipeline import plan_mission
from wetplan.engine.planner import ChargingSchedule, Plan, RouteMatrix, SelectionVector
from wetplan.engine.rvo import AgentKind, AgentState
from wetplan.engine.scenario import ObstacleConfig, RobotConfig, ScenarioFile, generate_scenario
from wetplan.engine.sim import (ConstantVelocity, Control, LegRecord, MissionController, MissionLeg, SimTrace,
                                WorldState, extract_edge_times, run_mission, step, summarize, trace_rows)

EAST = BeamSector(start_deg=-65.0, width_deg=130.0)


def _scenario(ehs, start=(1.0, 1.0), movers=0):
    return ScenarioFile(name="unit", ehs=harvesters(ehs), robot=RobotConfig(start=pos(*start)),
                        obstacles=ObstacleConfig(count=movers))


def _plan(anchor_points, order, dwell):
    """Plan over ``anchor_points`` visiting ``order``; ``dwell`` maps anchor to beam-0 seconds."""
    anchors = [Anchor(position=pos(x, y), cluster=Cluster(members=[0])) for x, y in anchor_points]
    size = len(anchors)
    t = np.zeros((3, size))
    for m, seconds in dwell.items():
        t[0, m] = seconds
    selection = SelectionVector.from_indices(order, size)
    return Plan(anchors=anchors, selection=selection, route=RouteMatrix.from_order(order, size),
                schedule=ChargingSchedule(t=t), start_anchor=order[0] if order else 0,
                planned_completion_s=float(t.sum()))


def test_step_moves_holonomic_agent():
    world = WorldState(agents=[AgentState(position=pos(0, 0))])
    after = step(world, 0.1, [ConstantVelocity((0.2, 0.0))])
    assert after.agents[0].position.x == pytest.approx(0.02, abs=1e-12)
    assert after.time == pytest.approx(0.1)


def test_step_accrues_energy_while_charging():
    eh = harvesters([(1.0, 0.0)])
    world = WorldState(agents=[AgentState(position=pos(0, 0))], ehs=eh, harvested_j=[0.0])
    after = step(world, 1.0, [lambda w, i, dt, rng: Control(charging=EAST)])
    rate = harvested_power_w(received_power_w(world.channel, EAST, pos(0, 0), pos(1, 0)), world.harvest)
    assert after.harvested_j[0] == pytest.approx(rate, rel=1e-12)


def test_step_rejects_bad_arguments():
    world = WorldState(agents=[AgentState(position=pos(0, 0))])
    with pytest.raises(ValueError):
        step(world, 0.0, [ConstantVelocity((0.0, 0.0))])
    with pytest.raises(ValueError):
        step(world, 0.1, [])


def test_differential_drive_turns_before_translating():
    world = WorldState(agents=[AgentState(position=pos(0, 0), heading_deg=0.0, turn_rate_deg_s=90.0)])
    after = step(world, 0.1, [ConstantVelocity((0.0, 0.2))])
    assert after.agents[0].position.y == 0.0
    assert after.agents[0].heading_deg == pytest.approx(9.0)


def test_empty_plan_completes_immediately():
    plan = _plan([(3.0, 1.0)], [], {})
    trace = run_mission(plan, _scenario([(4.0, 1.0)]), seed=0)
    assert trace.completion_s == 0.0
    assert trace.edge_times == {}


def test_single_anchor_mission_time():
    scenario = _scenario([(4.0, 1.0)])
    plan = _plan([(3.0, 1.0)], [0], {0: 10.0})
    trace = run_mission(plan, scenario, seed=0)
    turn_allowance = 2 * 360.0 / scenario.robot.angular_speed
    assert 30.0 <= trace.completion_s <= 30.0 + turn_allowance
    assert trace.charging_s == pytest.approx(10.0, abs=2 * scenario.sim.dt)
    assert trace.edge_times == {}
    assert trace.mission_success


def test_edge_times_cover_route_edges_only():
    scenario = _scenario([(4.0, 1.0), (3.5, 1.5)])
    plan = _plan([(1.0, 1.0), (3.0, 1.0)], [0, 1], {1: 5.0})
    times = run_mission(plan, scenario, seed=0).edge_times
    assert set(times) == {(0, 1), (1, 0)}
    assert 9.0 <= times[(0, 1)] <= 10.5
    assert 9.0 <= times[(1, 0)] <= 10.5 + 180.0 / scenario.robot.angular_speed


def test_extract_edge_times_skips_unfinished_legs():
    trace = SimTrace(seed=0, dt=0.05, legs=[
        LegRecord(from_anchor=None, to_anchor=0, depart_s=0.0, arrive_s=1.0),
        LegRecord(from_anchor=0, to_anchor=1, depart_s=1.0, arrive_s=4.0),
        LegRecord(from_anchor=1, to_anchor=0, depart_s=6.0),
    ])
    assert extract_edge_times(trace) == {(0, 1): 3.0}


def test_mission_meets_energy_requirements(small_scenario):
    plan = plan_mission(small_scenario)
    trace = run_mission(plan, small_scenario, seed=0)
    assert not trace.dnf
    assert trace.mission_success
    assert trace.completion_s >= plan.planned_completion_s - 1.0
    assert trace.robot_collisions() == []


def test_robot_respects_speed_cap(small_scenario):
    scenario = small_scenario.with_movers(3)
    trace = run_mission(plan_mission(scenario), scenario, seed=4)
    cap = scenario.robot.linear_speed * (1 + 1e-9)
    assert all(sample.poses[0].speed <= cap for sample in trace.samples)
    mover_cap = scenario.obstacles.speed * (1 + 1e-9)
    assert all(p.speed <= mover_cap for sample in trace.samples for p in sample.poses[1:])


def test_same_seed_same_trace(small_scenario):
    scenario = small_scenario.with_movers(2)
    plan = plan_mission(scenario)
    first = run_mission(plan, scenario, seed=7)
    second = run_mission(plan, scenario, seed=7)
    assert first.model_dump() == second.model_dump()
    assert summarize(first) == summarize(second)


def test_trace_rows_layout(small_scenario):
    scenario = small_scenario.with_movers(1)
    trace = run_mission(plan_mission(scenario), scenario, seed=1)
    header, rows = trace_rows(trace)
    assert header[:5] == ["time_s", "a0_x", "a0_y", "a0_heading_deg", "a0_speed"]
    assert header[-1] == f"eh{len(scenario.ehs) - 1}_j"
    assert all(len(row) == len(header) for row in rows)
    assert rows[-1][-len(scenario.ehs):] == trace.harvested_j


def test_plan_from_another_scenario_is_rejected(small_scenario):
    plan = plan_mission(small_scenario)
    omni = small_scenario.model_copy(update={"codebook": Codebook.omni()})
    with pytest.raises(PlanMismatchError):
        run_mission(plan, omni, seed=0)
    shrunk = small_scenario.model_copy(update={"ehs": small_scenario.ehs[:1]})
    with pytest.raises(PlanMismatchError):
        run_mission(plan, shrunk, seed=0)


def test_route_to_unknown_anchor_is_rejected():
    plan = _plan([(3.0, 1.0)], [0], {0: 1.0})
    broken = plan.model_copy(update={"route": RouteMatrix(w=np.zeros((1, 1)), order=[0, 3])})
    with pytest.raises(PlanMismatchError):
        run_mission(broken, _scenario([(4.0, 1.0)]), seed=0)


def test_dt_out_of_range():
    plan = _plan([(3.0, 1.0)], [0], {0: 1.0})
    with pytest.raises(UsageError):
        run_mission(plan, _scenario([(4.0, 1.0)]), seed=0, dt=0.5)


@pytest.mark.slow
def test_movers_do_not_speed_the_mission_up(small_scenario):
    plan = plan_mission(small_scenario)
    free = run_mission(plan, small_scenario, seed=0).completion_s
    busy = [run_mission(plan, small_scenario, seed=s, movers=5) for s in range(3)]
    assert not any(t.dnf for t in busy)
    # docking from a detour can save part of a turn, never more
    assert np.mean([t.completion_s for t in busy]) >= free - 360.0 / small_scenario.robot.angular_speed
    assert math.isfinite(free)


@pytest.mark.parametrize("heading", [0.0, 45.0, 90.0, 135.0, 180.0])
def test_docked_robot_steps_off_a_movers_line(heading):
    dt = 0.05
    dock = pos(5.0, 5.0)
    beam = BeamSector(start_deg=heading - 65.0, width_deg=130.0)
    controller = MissionController([MissionLeg(dock, None, 0, [(beam, 10.0)])], alpha=0.2, arrival_tolerance=0.1)
    robot = AgentState(position=dock, heading_deg=heading, turn_rate_deg_s=90.0)
    mover = AgentState(position=pos(7.0, 5.0), kind=AgentKind.NONCOOPERATIVE, velocity=(-0.15, 0.0), max_speed=0.15)
    world = WorldState(agents=[robot, mover])
    controllers = [controller, ConstantVelocity((-0.15, 0.0))]
    closest = np.inf
    for _ in range(int(60.0 / dt)):
        world = step(world, dt, controllers)
        closest = min(closest, world.agents[0].position.distance_to(world.agents[1].position))
    assert closest >= 0.4
    # the dwell interrupted by the evasion resumes after re-docking
    assert controller.done
    assert controller.charging_s == pytest.approx(10.0, abs=2 * dt)
    assert world.agents[0].position.distance_to(dock) < 1e-6


@pytest.mark.parametrize("movers", [0, 3])
def test_harvested_energy_matches_the_schedule(small_scenario, movers):
    scenario = small_scenario.with_movers(movers)
    plan = plan_mission(scenario)
    trace = run_mission(plan, scenario, seed=2)
    assert not trace.dnf
    rates = coverage_matrix([a.position for a in plan.anchors], scenario.codebook, scenario.ehs,
                            scenario.channel, scenario.harvest)
    t = plan.schedule.t
    expected = np.einsum("knm,nm->k", rates, t)
    # every dwell runs whole steps, at most two past its scheduled length
    slack = 2.0 * trace.dt * np.einsum("knm,nm->k", rates, (t > 0).astype(float))
    assert np.all(np.abs(np.array(trace.harvested_j) - expected) <= slack + 1e-12)

    times = [s.time_s for s in trace.samples]
    assert all(b > a for a, b in zip(times, times[1:]))
    for before, after in zip(trace.samples, trace.samples[1:]):
        assert all(y >= x for x, y in zip(before.harvested_j, after.harvested_j))
    assert trace.samples[-1].harvested_j == trace.harvested_j


@pytest.fixture(scope="module")
def crowded_runs():
    """One generated plan simulated under twenty mover seeds."""
    scenario = generate_scenario(seed=0, movers=5)
    plan = plan_mission(scenario)
    return scenario, plan, [run_mission(plan, scenario, seed=s) for s in range(20)]


@pytest.mark.slow
def test_robot_never_touched_among_five_movers(crowded_runs):
    _, _, traces = crowded_runs
    for trace in traces:
        assert not trace.dnf, f"seed {trace.seed}"
        assert trace.robot_collisions() == [], f"seed {trace.seed}"
        assert trace.mission_success


@pytest.mark.slow
def test_simulated_motion_inflates_the_planned_motion(crowded_runs):
    scenario, plan, traces = crowded_runs
    start_leg_m = scenario.robot.start.distance_to(plan.anchors[plan.start_anchor].position)
    ideal_s = plan.motion_s + 2.0 * start_leg_m / scenario.robot.linear_speed
    inflation = [trace.motion_s / ideal_s for trace in traces]
    assert min(inflation) >= 1.0
    assert 1.1 <= float(np.median(inflation)) <= 2.0

    lone = [run_mission(plan, scenario, seed=s, movers=1) for s in range(20)]
    assert not any(t.dnf for t in lone)
    assert np.median([t.completion_s for t in traces]) > np.median([t.completion_s for t in lone])
