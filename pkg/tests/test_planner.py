"""Route constraints, exact tours, charging LP and the joint search.

Small instances are checked against brute force: permutation tours, vertex
enumeration of the charging polytope and exhaustive selection scoring.
"""

import itertools

import numpy as np
import pytest

from conftest import anchors_at, brute_force_tour, harvesters, pos, random_distance_matrix
from wetplan.core.errors import InfeasibleError, PlanMismatchError
from wetplan.engine.models import (BeamSector, ChannelParams, Codebook, DistanceMatrix, HarvestParams,
                                   coverage_matrix, harvested_power_w, motion_time_s, received_power_w)
from wetplan.engine.pipeline import candidate_anchors, plan_mission, straight_line_matrix
from wetplan.engine.planner import (ChargingSchedule, MtzSlack, Plan, RouteMatrix, SelectionVector,
                                    allocate_charging, check_route_constraints, evaluate_plan,
                                    fixed_transmitter_check, joint_optimize, mtz_slack_exists,
                                    mtz_slack_for_order, nearest_anchor, solve_route, validate_plan,
                                    visit_all_baseline)
from wetplan.engine.scenario import generate_scenario

ALPHA = 0.2
CHANNEL = ChannelParams()
HARVEST = HarvestParams()
CODEBOOK = Codebook.three_sector()


def _rate(anchor, eh, sector=CODEBOOK.sectors[0]):
    return harvested_power_w(received_power_w(CHANNEL, sector, anchor, eh), HARVEST)


def _square_plan(charging_s=10.0):
    anchors = anchors_at([(0, 0), (1, 0), (1, 1), (0, 1)])
    t = np.zeros((3, 4))
    t[0, 1] = charging_s
    return anchors, Plan(anchors=anchors, selection=SelectionVector(v=[1, 1, 1, 1]),
                         route=RouteMatrix.from_order([0, 1, 2, 3], 4), schedule=ChargingSchedule(t=t),
                         start_anchor=0, planned_completion_s=20.0 + charging_s)


# Route constraints
def test_three_anchor_ring_passes():
    w = RouteMatrix.from_order([0, 1, 2], 3).w
    assert check_route_constraints([1, 1, 1], w, [0, 1, 2])
    assert check_route_constraints([1, 1, 1], w, MtzSlack(lam=[0, 1, 2]))
    assert mtz_slack_exists([1, 1, 1], w)


def test_disjoint_two_cycles_have_no_slack():
    w = np.zeros((4, 4), dtype=int)
    for m, j in [(0, 1), (1, 0), (2, 3), (3, 2)]:
        w[m, j] = 1
    assert not mtz_slack_exists([1, 1, 1, 1], w)
    for lam in itertools.product(range(1, 4), repeat=3):
        assert not check_route_constraints([1, 1, 1, 1], w, [0, *lam])


def test_self_loop_rejected():
    w = RouteMatrix.from_order([0, 1, 2], 3).w.copy()
    w[0, 0] = 1
    assert not check_route_constraints([1, 1, 1], w, [0, 1, 2])


def test_single_selected_anchor_with_empty_route():
    assert check_route_constraints([1, 0, 0], np.zeros((3, 3), dtype=int), [0, 0, 0])


def test_unselected_anchor_on_route_rejected():
    w = RouteMatrix.from_order([0, 1, 2], 3).w
    assert not check_route_constraints([1, 1, 0], w, [0, 1, 2])


def test_slack_for_order_and_alias():
    slack = mtz_slack_for_order([0, 2, 1], 3)
    assert slack.lam == [0.0, 2.0, 1.0]
    assert MtzSlack.model_validate({"lambda": [0, 1]}).lam == [0.0, 1.0]


# Routing
def test_route_examples():
    square = DistanceMatrix.from_positions([pos(0, 0), pos(1, 0), pos(1, 1), pos(0, 1)])
    assert solve_route(square, [0, 1, 2, 3], 0).length(square) == pytest.approx(4.0)
    pair = DistanceMatrix(d=[[0.0, 3.0], [3.0, 0.0]])
    assert solve_route(pair, [0, 1], 0).length(pair) == pytest.approx(6.0)
    single = solve_route(pair, [1], 1)
    assert single.edges() == [] and single.order == [1]
    assert solve_route(pair, [], 0).order == []


def test_route_start_must_be_selected():
    with pytest.raises(PlanMismatchError):
        solve_route(DistanceMatrix(d=np.zeros((3, 3))), [1, 2], 0)


@pytest.mark.parametrize("symmetric", [True, False])
def test_route_matches_permutation_oracle(symmetric):
    rng = np.random.default_rng(17 if symmetric else 23)
    for _ in range(25):
        size = int(rng.integers(4, 9))
        d = random_distance_matrix(rng, size, symmetric)
        route = solve_route(d, range(size), 0)
        assert route.optimal
        assert route.order[0] == 0 and sorted(route.order) == list(range(size))
        assert route.length(d) == pytest.approx(brute_force_tour(d.d, range(size), 0), abs=1e-9)
        v = [1] * size
        assert check_route_constraints(v, route.w, mtz_slack_for_order(route.order, size))


def test_route_over_subset():
    rng = np.random.default_rng(4)
    d = random_distance_matrix(rng, 8)
    route = solve_route(d, [1, 3, 4, 6], 3)
    assert route.order[0] == 3 and sorted(route.order) == [1, 3, 4, 6]
    assert route.length(d) == pytest.approx(brute_force_tour(d.d, [1, 3, 4, 6], 3), abs=1e-9)


# Charging allocation
def test_single_pair_dwell_is_requirement_over_rate():
    anchors = anchors_at([(0.0, 0.0)])
    ehs = harvesters([(1.0, 0.0)])
    schedule = allocate_charging(anchors, SelectionVector(v=[1]), CODEBOOK, ehs, CHANNEL, HARVEST)
    expected = 0.02 / _rate(pos(0, 0), pos(1, 0))
    assert schedule.total_s == pytest.approx(expected, rel=1e-9)
    assert schedule.t[0, 0] == pytest.approx(expected, rel=1e-9)


def test_all_dwell_goes_to_the_faster_pair():
    anchors = anchors_at([(0.0, 0.0), (3.0, 0.0)])
    ehs = harvesters([(1.0, 0.0)])
    schedule = allocate_charging(anchors, SelectionVector(v=[1, 1]), CODEBOOK, ehs, CHANNEL, HARVEST)
    fast = _rate(pos(0, 0), pos(1, 0))
    assert schedule.total_s == pytest.approx(0.02 / fast, rel=1e-9)
    assert schedule.t[:, 1].sum() == 0.0


def test_shared_dwell_charges_two_ehs_at_once():
    anchors = anchors_at([(0.0, 0.0)])
    ehs = harvesters([(1.0, 0.2), (1.0, -0.2)])
    schedule = allocate_charging(anchors, SelectionVector(v=[1]), CODEBOOK, ehs, CHANNEL, HARVEST)
    assert schedule.total_s == pytest.approx(0.02 / _rate(pos(0, 0), pos(1, 0.2)), rel=1e-9)


def test_unreachable_eh_is_reported():
    anchors = anchors_at([(0.0, 0.0)])
    ehs = harvesters([(1.0, 0.0), (30.0, 0.0)])
    with pytest.raises(InfeasibleError) as exc:
        allocate_charging(anchors, SelectionVector(v=[1]), CODEBOOK, ehs, CHANNEL, HARVEST)
    assert exc.value.eh_indices == [1]
    assert exc.value.exit_code == 2


def _vertex_enumeration(a, gammas):
    """min sum(t) s.t. a t >= gammas, t >= 0, by visiting every basic solution."""
    k_count, v_count = a.shape
    rows = np.vstack([a, np.eye(v_count)])
    rhs = np.concatenate([gammas, np.zeros(v_count)])
    best = np.inf
    for active in itertools.combinations(range(len(rows)), v_count):
        sub = rows[list(active)]
        if np.linalg.cond(sub) > 1e10:
            continue
        t = np.linalg.solve(sub, rhs[list(active)])
        if np.all(rows @ t >= rhs - 1e-9 * np.maximum(1.0, np.abs(rhs))):
            best = min(best, float(t.sum()))
    return best


def test_charging_lp_matches_vertex_enumeration():
    rng = np.random.default_rng(31)
    anchors = anchors_at([(3.0, 3.0), (6.0, 4.0)])
    positions = [a.position for a in anchors]
    for _ in range(50):
        count = int(rng.integers(2, 5))
        xy = rng.uniform(1.0, 8.0, size=(count, 2))
        ehs = harvesters([(float(x), float(y)) for x, y in xy])
        rates = coverage_matrix(positions, CODEBOOK, ehs, CHANNEL, HARVEST)
        gammas = np.array([eh.requirement_j for eh in ehs])
        oracle = _vertex_enumeration(rates.reshape(count, -1) / gammas[:, None], np.ones(count))
        schedule = allocate_charging(anchors, SelectionVector(v=[1, 1]), CODEBOOK, ehs, CHANNEL, HARVEST)
        assert schedule.total_s == pytest.approx(oracle, rel=1e-6)


# Objective
def test_evaluate_plan_square():
    anchors, plan = _square_plan(10.0)
    d = DistanceMatrix.from_positions([a.position for a in anchors])
    assert evaluate_plan(plan, d, ALPHA) == pytest.approx(30.0)
    assert plan.route_length_m == pytest.approx(4.0)


def test_evaluate_empty_plan():
    anchors = anchors_at([(0, 0), (1, 0)])
    plan = Plan(anchors=anchors, selection=SelectionVector(v=[0, 0]), route=RouteMatrix.from_order([], 2),
                schedule=ChargingSchedule(t=np.zeros((3, 2))), start_anchor=0, planned_completion_s=0.0)
    assert evaluate_plan(plan, DistanceMatrix(d=np.zeros((2, 2))), ALPHA) == 0.0


def test_doubling_distances_doubles_motion_only():
    anchors = anchors_at([(1, 1), (4, 1), (7, 2)])
    ehs = harvesters([(1.5, 1.2), (4.3, 1.8), (7.5, 2.5)])
    d = DistanceMatrix.from_positions([a.position for a in anchors])
    base = visit_all_baseline(anchors, d, ehs, CODEBOOK, CHANNEL, HARVEST, ALPHA)
    doubled = visit_all_baseline(anchors, d.scaled(2.0), ehs, CODEBOOK, CHANNEL, HARVEST, ALPHA)
    assert motion_time_s(d.scaled(2.0), base.route, ALPHA) == 2.0 * motion_time_s(d, base.route, ALPHA)
    assert np.array_equal(base.schedule.t, doubled.schedule.t)


def test_nearest_anchor_breaks_ties_low():
    anchors = anchors_at([(0, 0), (2, 0)])
    assert nearest_anchor(anchors, pos(1, 0)) == 0
    assert nearest_anchor(anchors, pos(1.5, 0)) == 1


# Joint optimization
FIVE_ANCHORS = [(1.0, 1.0), (4.0, 1.0), (7.0, 1.0), (4.0, 4.0), (7.0, 5.0)]
FIVE_EHS = [(1.5, 1.3), (4.2, 0.6), (6.6, 1.4), (4.5, 4.4), (3.6, 4.2), (7.4, 5.5)]


def _exhaustive(anchors, d, ehs, depot=0):
    best = np.inf
    others = [m for m in range(len(anchors)) if m != depot]
    for r in range(len(others) + 1):
        for subset in itertools.combinations(others, r):
            chosen = [depot, *subset]
            selection = SelectionVector.from_indices(chosen, len(anchors))
            try:
                schedule = allocate_charging(anchors, selection, CODEBOOK, ehs, CHANNEL, HARVEST)
            except InfeasibleError:
                continue
            cost = brute_force_tour(d.d, chosen, depot) / ALPHA + schedule.total_s
            best = min(best, cost)
    return best


def test_single_candidate_plan_is_pure_charging():
    anchors = anchors_at([(2.0, 2.0)])
    ehs = harvesters([(2.5, 2.0), (2.0, 2.6)])
    plan = joint_optimize(anchors, DistanceMatrix(d=[[0.0]]), ehs, CODEBOOK, CHANNEL, HARVEST, ALPHA)
    assert plan.selection.v == [1]
    assert plan.route.edges() == []
    assert plan.planned_completion_s == pytest.approx(plan.schedule.total_s)


def test_joint_matches_exhaustive_search():
    anchors = anchors_at(FIVE_ANCHORS)
    ehs = harvesters(FIVE_EHS)
    d = DistanceMatrix.from_positions([a.position for a in anchors])
    plan = joint_optimize(anchors, d, ehs, CODEBOOK, CHANNEL, HARVEST, ALPHA)
    assert plan.planned_completion_s == pytest.approx(_exhaustive(anchors, d, ehs), rel=1e-9)
    assert plan.planned_completion_s == pytest.approx(evaluate_plan(plan, d, ALPHA), rel=1e-12)
    assert validate_plan(plan, ehs, CODEBOOK, CHANNEL, HARVEST) == []


def test_local_search_beats_visit_all_and_trace_decreases():
    anchors = anchors_at(FIVE_ANCHORS + [(1.0, 7.0), (4.0, 8.0), (8.0, 8.0)])
    ehs = harvesters(FIVE_EHS + [(1.2, 7.5), (4.4, 8.3), (8.5, 8.2)])
    d = DistanceMatrix.from_positions([a.position for a in anchors])
    visit_all = visit_all_baseline(anchors, d, ehs, CODEBOOK, CHANNEL, HARVEST, ALPHA)
    plan = joint_optimize(anchors, d, ehs, CODEBOOK, CHANNEL, HARVEST, ALPHA, search_budget=40, seed=1)
    assert plan.planned_completion_s <= visit_all.planned_completion_s + 1e-9
    assert plan.search_trace[0] == pytest.approx(visit_all.planned_completion_s)
    assert all(b < a for a, b in zip(plan.search_trace, plan.search_trace[1:]))
    assert plan.search_trace[-1] == pytest.approx(plan.planned_completion_s)
    assert plan.selection.v[plan.start_anchor] == 1
    assert validate_plan(plan, ehs, CODEBOOK, CHANNEL, HARVEST) == []


def test_joint_is_seed_deterministic():
    anchors = anchors_at(FIVE_ANCHORS + [(1.0, 7.0), (4.0, 8.0), (8.0, 8.0)])
    ehs = harvesters(FIVE_EHS + [(1.2, 7.5), (4.4, 8.3), (8.5, 8.2)])
    d = DistanceMatrix.from_positions([a.position for a in anchors])
    first = joint_optimize(anchors, d, ehs, CODEBOOK, CHANNEL, HARVEST, ALPHA, search_budget=40, seed=5)
    second = joint_optimize(anchors, d, ehs, CODEBOOK, CHANNEL, HARVEST, ALPHA, search_budget=40, seed=5)
    assert first.model_dump() == second.model_dump()


def test_joint_rejects_mismatched_matrix():
    with pytest.raises(PlanMismatchError):
        joint_optimize(anchors_at([(0, 0), (1, 1)]), DistanceMatrix(d=[[0.0]]), harvesters([(0.5, 0)]),
                       CODEBOOK, CHANNEL, HARVEST, ALPHA)


def test_visit_all_infeasible_raises():
    with pytest.raises(InfeasibleError):
        visit_all_baseline(anchors_at([(0, 0)]), DistanceMatrix(d=[[0.0]]), harvesters([(40.0, 0.0)]),
                           CODEBOOK, CHANNEL, HARVEST, ALPHA)


def test_local_search_on_generated_scenarios():
    searched = 0
    for seed in range(5):
        scenario = generate_scenario(seed=seed, movers=0)
        anchors = candidate_anchors(scenario)
        if len(anchors) < 4:
            continue
        d = straight_line_matrix(anchors)
        depot = nearest_anchor(anchors, scenario.robot.start)
        args = (anchors, d, scenario.ehs, scenario.codebook, scenario.channel, scenario.harvest,
                scenario.robot.linear_speed)
        # one short of exhaustive, so the iterated local search runs
        budget = min(2 ** (len(anchors) - 1) - 1, 60)
        plan = joint_optimize(*args, search_budget=budget, depot=depot, seed=seed)
        visit_all = visit_all_baseline(*args, depot=depot)
        assert plan.planned_completion_s <= visit_all.planned_completion_s + 1e-9
        assert plan.search_trace[0] == pytest.approx(visit_all.planned_completion_s)
        assert all(b < a for a, b in zip(plan.search_trace, plan.search_trace[1:]))
        assert plan.selection.v[depot] == 1
        assert validate_plan(plan, scenario.ehs, scenario.codebook, scenario.channel, scenario.harvest) == []
        searched += 1
    assert searched >= 3


@pytest.mark.parametrize("seed", [6, 12])
def test_wide_arena_scenarios_plan(seed):
    # far EHs spread the charging LP coefficients over six orders of magnitude
    scenario = generate_scenario(blobs=6, ehs=20, arena_size=20.0, seed=seed)
    plan = plan_mission(scenario)
    assert plan.selection.selected
    assert validate_plan(plan, scenario.ehs, scenario.codebook, scenario.channel, scenario.harvest) == []


@pytest.mark.slow
def test_joint_never_loses_to_visit_all_and_usually_wins():
    wins = 0
    for seed in range(30):
        scenario = generate_scenario(seed=seed, movers=0)
        joint = plan_mission(scenario)
        visit_all = plan_mission(scenario, scheme="visit_all")
        assert joint.planned_completion_s <= visit_all.planned_completion_s + 1e-6
        wins += joint.planned_completion_s < visit_all.planned_completion_s - 1e-6
    assert wins >= 15


# Validation and the fixed transmitter
def test_validate_plan_flags_short_charging():
    anchors, plan = _square_plan(0.001)
    ehs = harvesters([(1.5, 0.0)])
    problems = validate_plan(plan, ehs, CODEBOOK, CHANNEL, HARVEST)
    assert any("EH 0" in p for p in problems)


def test_validate_plan_flags_broken_ring():
    anchors, plan = _square_plan(10.0)
    broken = plan.model_copy(update={"route": RouteMatrix.from_order([0, 1], 4)})
    problems = validate_plan(broken, harvesters([(1.5, 0.0)]), CODEBOOK, CHANNEL, HARVEST)
    assert "route is not a single ring over the selected anchors" in problems


def test_validate_plan_flags_wrong_codebook():
    anchors, plan = _square_plan(10.0)
    problems = validate_plan(plan, harvesters([(1.5, 0.0)]), Codebook.omni(), CHANNEL, HARVEST)
    assert problems and problems[0].startswith("schedule shape")


def test_fixed_transmitter_flags_far_ehs():
    ehs = harvesters([(6.0, 5.0), (35.0, 5.0)])
    report = fixed_transmitter_check(pos(5.0, 5.0), ehs, CODEBOOK, CHANNEL, HARVEST)
    assert report.flagged == [1]
    assert not report.feasible
    assert report.best_beam[0] == 0 and report.best_beam[1] is None
    assert report.charging_s is None


def test_fixed_transmitter_feasible_layout():
    ehs = harvesters([(6.0, 5.0), (4.0, 5.0)])
    report = fixed_transmitter_check(pos(5.0, 5.0), ehs, CODEBOOK, CHANNEL, HARVEST)
    assert report.feasible and report.flagged == []
    assert report.best_beam == [0, 1]
    assert report.charging_s == pytest.approx(2 * 0.02 / _rate(pos(5, 5), pos(6, 5)), rel=1e-9)


def test_fixed_transmitter_best_beam_tie_goes_low():
    two_beams = Codebook(sectors=[BeamSector(start_deg=-90.0, width_deg=180.0),
                                  BeamSector(start_deg=-45.0, width_deg=90.0)])
    report = fixed_transmitter_check(pos(0, 0), harvesters([(1.0, 0.0)]), two_beams, CHANNEL, HARVEST)
    assert report.best_beam == [0]
