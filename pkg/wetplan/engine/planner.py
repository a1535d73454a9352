"""Joint global planning: anchor selection, routing and charging allocation.

The joint problem is decomposed: an outer search over selection vectors,
an exact tour over each selection and an LP for the charging times. Every
plan is scored with the mission objective (motion time plus total dwell).
"""

import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator
from scipy.optimize import linprog

from ..core.config import FORMAT_VERSION, NODE_BUDGET, SEARCH_BUDGET
from ..core.errors import InfeasibleError, PlanMismatchError
from .anchors import Anchor
from .models import (ChannelParams, Codebook, DistanceMatrix, EnergyHarvester, HarvestParams, Position2D,
                     coverage_matrix, harvested_power_w, motion_time_s, received_power_w)
from .routing import shortest_tour
from .simplex import minimize_lp

logger = logging.getLogger(__name__)

BIG_J = 1000.0
# consecutive unsuccessful perturbation kicks before local search gives up
MAX_IDLE_KICKS = 30


# Pydantic models
class SelectionVector(BaseModel):
    v: List[int]

    @field_validator("v")
    @classmethod
    def check_binary(cls, value: List[int]) -> List[int]:
        if any(x not in (0, 1) for x in value):
            raise ValueError("selection entries must be 0 or 1")
        return value

    @classmethod
    def from_indices(cls, indices: Iterable[int], size: int) -> "SelectionVector":
        chosen = set(indices)
        return cls(v=[1 if m in chosen else 0 for m in range(size)])

    @property
    def selected(self) -> List[int]:
        return [m for m, x in enumerate(self.v) if x]

    def __len__(self) -> int:
        return len(self.v)


class RouteMatrix(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    w: np.ndarray
    # visiting order starting at the depot; empty for an empty route
    order: List[int] = []
    optimal: bool = True

    @field_validator("w", mode="before")
    @classmethod
    def check_matrix(cls, value) -> np.ndarray:
        w = np.array(value, dtype=int)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"route matrix must be square, got shape {w.shape}")
        if np.any((w != 0) & (w != 1)):
            raise ValueError("route matrix entries must be 0 or 1")
        return w

    @field_serializer("w")
    def serialize_w(self, w: np.ndarray):
        return w.tolist()

    @classmethod
    def from_order(cls, order: Sequence[int], size: int, optimal: bool = True) -> "RouteMatrix":
        w = np.zeros((size, size), dtype=int)
        if len(order) >= 2:
            for i, m in enumerate(order):
                w[m, order[(i + 1) % len(order)]] = 1
        return cls(w=w, order=list(order), optimal=optimal)

    def edges(self) -> List[Tuple[int, int]]:
        if len(self.order) < 2:
            return []
        return [(m, self.order[(i + 1) % len(self.order)]) for i, m in enumerate(self.order)]

    def length(self, d: DistanceMatrix) -> float:
        return float(sum(d.d[m, j] for m, j in self.edges()))


class MtzSlack(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lam: List[float] = Field(alias="lambda")
    big_j: float = BIG_J


class ChargingSchedule(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    # beams x anchors, seconds
    t: np.ndarray

    @field_validator("t", mode="before")
    @classmethod
    def check_times(cls, value) -> np.ndarray:
        t = np.array(value, dtype=float)
        if t.ndim != 2:
            raise ValueError(f"charging schedule must be beams x anchors, got shape {t.shape}")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise ValueError("charging times must be finite and nonnegative")
        return t

    @field_serializer("t")
    def serialize_t(self, t: np.ndarray):
        return t.tolist()

    @property
    def total_s(self) -> float:
        return float(np.sum(self.t))

    def dwell_at(self, anchor: int) -> List[Tuple[int, float]]:
        """(beam, seconds) pairs with positive dwell at ``anchor``, beam order."""
        return [(n, float(self.t[n, anchor])) for n in range(self.t.shape[0]) if self.t[n, anchor] > 0]


class Plan(BaseModel):
    format_version: int = FORMAT_VERSION
    anchors: List[Anchor]
    selection: SelectionVector
    route: RouteMatrix
    schedule: ChargingSchedule
    start_anchor: int
    planned_completion_s: float
    motion_s: float = 0.0
    charging_s: float = 0.0
    # accepted objective values, strictly decreasing
    search_trace: List[float] = []

    @property
    def route_length_m(self) -> float:
        return float(sum(self.anchors[m].position.distance_to(self.anchors[j].position)
                         for m, j in self.route.edges()))


class FixedTransmitterReport(BaseModel):
    position: Position2D
    harvested_w: List[float]
    best_beam: List[Optional[int]]
    flagged: List[int]
    feasible: bool
    charging_s: Optional[float] = None


# Route constraints
def check_route_constraints(v, w, lam, depot: int = 0, big_j: float = BIG_J, tol: float = 1e-9) -> bool:
    v = np.asarray(v)
    w = np.asarray(w)
    lam = np.asarray(getattr(lam, "lam", lam), dtype=float)
    size = v.size
    if w.shape != (size, size) or lam.size != size:
        return False
    if np.any((v != 0) & (v != 1)) or np.any((w != 0) & (w != 1)):
        return False
    if np.any(np.diag(w) != 0):
        return False
    total = int(v.sum())
    if total == 1 and not w.any():
        return True
    if np.any(w.sum(axis=1) != v) or np.any(w.sum(axis=0) != v):
        return False
    others = [m for m in range(size) if m != depot]
    for m in others:
        if lam[m] < v[m] - tol or lam[m] > (total - 1) * v[m] + tol:
            return False
    for m in others:
        for j in others:
            if m == j:
                continue
            lhs = lam[m] - lam[j] + (total - 1) * w[m, j] + (total - 3) * w[j, m]
            if lhs > total - 2 + big_j * (2 - v[m] - v[j]) + tol:
                return False
    return True


def mtz_slack_for_order(order: Sequence[int], size: int) -> MtzSlack:
    """Visit positions along ``order`` (depot first) as subtour slacks."""
    lam = [0.0] * size
    for position, m in enumerate(order):
        lam[m] = float(position)
    return MtzSlack(lam=lam)


def mtz_slack_exists(v, w, depot: int = 0, big_j: float = BIG_J) -> bool:
    """Whether any slack vector makes (v, w) pass the subtour constraints."""
    v = np.asarray(v, dtype=int)
    w = np.asarray(w, dtype=int)
    size = v.size
    total = int(v.sum())
    others = [m for m in range(size) if m != depot]
    if not others:
        return True
    col = {m: i for i, m in enumerate(others)}
    rows, signs, rhs = [], [], []
    for m in others:
        row = np.zeros(len(others))
        row[col[m]] = 1.0
        rows.append(row)
        signs.append(">=")
        rhs.append(float(v[m]))
        rows.append(row.copy())
        signs.append("<=")
        rhs.append(float((total - 1) * v[m]))
    for m in others:
        for j in others:
            if m == j:
                continue
            row = np.zeros(len(others))
            row[col[m]] = 1.0
            row[col[j]] = -1.0
            rows.append(row)
            signs.append("<=")
            rhs.append(total - 2 + big_j * (2 - v[m] - v[j]) - (total - 1) * w[m, j] - (total - 3) * w[j, m])
    result = minimize_lp(np.zeros(len(others)), np.array(rows), signs, rhs)
    return result.optimal


# Routing
def solve_route(d: DistanceMatrix, selected: Iterable[int], start: int,
                node_budget: int = NODE_BUDGET) -> RouteMatrix:
    selected = sorted(set(selected))
    if not selected:
        return RouteMatrix.from_order([], d.size)
    if start not in selected:
        raise PlanMismatchError(f"start anchor {start} is not selected")
    if any(m < 0 or m >= d.size for m in selected):
        raise PlanMismatchError(f"selection references anchors outside 0..{d.size - 1}")
    order, _, optimal = shortest_tour(d.d, selected, start, node_budget)
    return RouteMatrix.from_order(order, d.size, optimal=optimal)


# Charging allocation
def _charging_lp(rates: np.ndarray, selected: Sequence[int], gammas: np.ndarray) -> np.ndarray:
    """Minimum total dwell over the (beam, anchor) pairs of ``selected``.

    ``rates`` is K x N x M harvested power. Returns the N x M time matrix.
    """
    k_count, n_count, m_count = rates.shape
    t = np.zeros((n_count, m_count))
    if k_count == 0:
        return t
    columns = [(n, m) for m in selected for n in range(n_count) if np.any(rates[:, n, m] > 0)]
    covered = np.zeros(k_count, dtype=bool)
    for n, m in columns:
        covered |= rates[:, n, m] > 0
    if not covered.all():
        missing = [int(k) for k in np.flatnonzero(~covered)]
        raise InfeasibleError(f"EHs {missing} receive no harvestable power from any selected anchor and beam",
                              eh_indices=missing)
    # rows normalized by the requirement so every right-hand side is 1
    a = np.array([[rates[k, n, m] / gammas[k] for n, m in columns] for k in range(k_count)])
    result = minimize_lp(np.ones(len(columns)), a, [">="] * k_count, np.ones(k_count))
    x = result.x
    if not result.optimal:
        # every row has a positive entry, so the LP is feasible; retry with HiGHS
        logger.warning("simplex returned %s on the %dx%d charging LP, retrying with HiGHS",
                       result.status, k_count, len(columns))
        fallback = linprog(np.ones(len(columns)), A_ub=-a, b_ub=-np.ones(k_count), bounds=(0, None),
                           method="highs")
        if fallback.status != 0:
            raise InfeasibleError(f"charging allocation failed: {fallback.message}")
        x = fallback.x
    for (n, m), value in zip(columns, x):
        t[n, m] = value if value > 1e-12 else 0.0
    return t


def _positions(anchors: Sequence) -> List[Position2D]:
    return [a.position if isinstance(a, Anchor) else a for a in anchors]


def allocate_charging(anchors: Sequence[Anchor], selection: SelectionVector, codebook: Codebook,
                      ehs: Sequence[EnergyHarvester], channel: ChannelParams,
                      harvest: HarvestParams) -> ChargingSchedule:
    if len(selection) != len(anchors):
        raise PlanMismatchError(f"selection has {len(selection)} entries for {len(anchors)} anchors")
    rates = coverage_matrix(_positions(anchors), codebook, ehs, channel, harvest)
    gammas = np.array([eh.requirement_j for eh in ehs])
    return ChargingSchedule(t=_charging_lp(rates, selection.selected, gammas))


def evaluate_plan(plan: Plan, d: DistanceMatrix, alpha: float) -> float:
    return motion_time_s(d, plan.route, alpha) + plan.schedule.total_s


def nearest_anchor(anchors: Sequence[Anchor], pose: Position2D) -> int:
    if not anchors:
        raise PlanMismatchError("no candidate anchors")
    return min(range(len(anchors)), key=lambda m: (anchors[m].position.distance_to(pose), m))


# Joint optimization
class _SelectionScorer:
    """Scores selections once each; infeasible selections score None."""

    def __init__(self, anchors, d: DistanceMatrix, rates: np.ndarray, gammas: np.ndarray,
                 alpha: float, depot: int, node_budget: int):
        self.anchors = anchors
        self.d = d
        self.rates = rates
        self.gammas = gammas
        self.alpha = alpha
        self.depot = depot
        self.node_budget = node_budget
        self.positive = rates > 0
        self.cache: Dict[Tuple[int, ...], Optional[Tuple[float, RouteMatrix, np.ndarray]]] = {}

    @property
    def evaluated(self) -> int:
        return len(self.cache)

    def covers(self, v: Tuple[int, ...]) -> bool:
        chosen = [m for m, x in enumerate(v) if x]
        if self.positive.shape[0] == 0:
            return True
        return bool(np.all(self.positive[:, :, chosen].any(axis=(1, 2))))

    def score(self, v: Tuple[int, ...]) -> Optional[float]:
        if v not in self.cache:
            self.cache[v] = self._solve(v)
        entry = self.cache[v]
        return None if entry is None else entry[0]

    def _solve(self, v):
        if not self.covers(v):
            return None
        chosen = [m for m, x in enumerate(v) if x]
        route = solve_route(self.d, chosen, self.depot, self.node_budget)
        t = _charging_lp(self.rates, chosen, self.gammas)
        cost = motion_time_s(self.d, route, self.alpha) + float(np.sum(t))
        return cost, route, t

    def plan(self, v: Tuple[int, ...], trace: List[float]) -> Plan:
        cost, route, t = self.cache[v]
        motion = motion_time_s(self.d, route, self.alpha)
        return Plan(anchors=list(self.anchors), selection=SelectionVector(v=list(v)), route=route,
                    schedule=ChargingSchedule(t=t), start_anchor=self.depot, planned_completion_s=cost,
                    motion_s=motion, charging_s=float(np.sum(t)), search_trace=list(trace))


def _prepare(candidates, d, ehs, codebook, channel, harvest, alpha, depot, node_budget) -> _SelectionScorer:
    if not candidates:
        raise PlanMismatchError("no candidate anchors")
    if d.size != len(candidates):
        raise PlanMismatchError(f"distance matrix is {d.size}x{d.size} for {len(candidates)} anchors")
    if not 0 <= depot < len(candidates):
        raise PlanMismatchError(f"start anchor {depot} outside 0..{len(candidates) - 1}")
    rates = coverage_matrix(_positions(candidates), codebook, ehs, channel, harvest)
    gammas = np.array([eh.requirement_j for eh in ehs])
    return _SelectionScorer(candidates, d, rates, gammas, alpha, depot, node_budget)


def visit_all_baseline(candidates: Sequence[Anchor], d: DistanceMatrix, ehs: Sequence[EnergyHarvester],
                       codebook: Codebook, channel: ChannelParams, harvest: HarvestParams, alpha: float,
                       depot: int = 0, node_budget: int = NODE_BUDGET) -> Plan:
    scorer = _prepare(candidates, d, ehs, codebook, channel, harvest, alpha, depot, node_budget)
    full = tuple([1] * len(candidates))
    cost = scorer.score(full)
    if cost is None:
        # rerun to surface the offending EHs
        _charging_lp(scorer.rates, list(range(len(candidates))), scorer.gammas)
    return scorer.plan(full, [cost])


def _flip(v: Tuple[int, ...], *indices: int) -> Tuple[int, ...]:
    out = list(v)
    for i in indices:
        out[i] = 1 - out[i]
    return tuple(out)


def _local_search(scorer: _SelectionScorer, v, cost: float, free: List[int], budget: int, trace: List[float]):
    """Best-improvement single-flip descent; appends accepted costs to ``trace``."""
    while scorer.evaluated < budget:
        best_v, best_cost = None, cost
        for i in free:
            candidate = _flip(v, i)
            if candidate not in scorer.cache and scorer.evaluated >= budget:
                break
            score = scorer.score(candidate)
            if score is not None and score < best_cost - 1e-9:
                best_v, best_cost = candidate, score
        if best_v is None:
            break
        v, cost = best_v, best_cost
        if trace is not None:
            trace.append(cost)
    return v, cost


def joint_optimize(candidates: Sequence[Anchor], d: DistanceMatrix, ehs: Sequence[EnergyHarvester],
                   codebook: Codebook, channel: ChannelParams, harvest: HarvestParams, alpha: float,
                   search_budget: int = SEARCH_BUDGET, depot: int = 0, seed: int = 0,
                   node_budget: int = NODE_BUDGET) -> Plan:
    """Search selection vectors for the cheapest feasible plan.

    The depot is always selected. When every depot-containing selection fits
    in ``search_budget`` they are all scored; otherwise iterated local search
    runs from the all-selected vector: best-improvement single-bit flips to a
    local optimum, then seeded two-bit kicks followed by descent, keeping a
    kick only if it strictly improves. Ties go to the lowest index.
    """
    scorer = _prepare(candidates, d, ehs, codebook, channel, harvest, alpha, depot, node_budget)
    size = len(candidates)
    full = tuple([1] * size)
    full_cost = scorer.score(full)
    if full_cost is None:
        _charging_lp(scorer.rates, list(range(size)), scorer.gammas)
    free = [m for m in range(size) if m != depot]
    trace = [full_cost]
    best_v, best_cost = full, full_cost

    if 2 ** len(free) <= search_budget:
        for mask in range(2 ** len(free)):
            v = [0] * size
            v[depot] = 1
            for bit, m in enumerate(free):
                if mask >> bit & 1:
                    v[m] = 1
            v = tuple(v)
            score = scorer.score(v)
            if score is not None and score < best_cost - 1e-9:
                best_v, best_cost = v, score
                trace.append(score)
        logger.info("scored all %d selections; best %.2f s (all anchors %.2f s)",
                    scorer.evaluated, best_cost, full_cost)
        return scorer.plan(best_v, trace)

    rng = np.random.default_rng(seed)
    best_v, best_cost = _local_search(scorer, full, full_cost, free, search_budget, trace)
    idle = 0
    while len(free) >= 2 and scorer.evaluated < search_budget and idle < MAX_IDLE_KICKS:
        i, j = rng.choice(free, size=2, replace=False)
        start = _flip(best_v, int(i), int(j))
        start_cost = scorer.score(start)
        if start_cost is None:
            idle += 1
            continue
        v, cost = _local_search(scorer, start, start_cost, free, search_budget, None)
        if cost < best_cost - 1e-9:
            best_v, best_cost = v, cost
            trace.append(cost)
            idle = 0
        else:
            idle += 1
    logger.info("local search scored %d selections; best %.2f s (all anchors %.2f s)",
                scorer.evaluated, best_cost, full_cost)
    return scorer.plan(best_v, trace)


def fixed_transmitter_check(tx_pos: Position2D, ehs: Sequence[EnergyHarvester], codebook: Codebook,
                            channel: ChannelParams, harvest: HarvestParams) -> FixedTransmitterReport:
    powers: List[float] = []
    beams: List[Optional[int]] = []
    for eh in ehs:
        per_beam = [harvested_power_w(received_power_w(channel, sector, tx_pos, eh.position), harvest)
                    for sector in codebook.sectors]
        best = max(range(len(per_beam)), key=lambda n: (per_beam[n], -n))
        powers.append(float(per_beam[best]))
        beams.append(best if per_beam[best] > 0 else None)
    flagged = [k for k, p in enumerate(powers) if p <= 0]
    charging = None
    if not flagged:
        rates = coverage_matrix([tx_pos], codebook, ehs, channel, harvest)
        gammas = np.array([eh.requirement_j for eh in ehs])
        charging = float(np.sum(_charging_lp(rates, [0], gammas)))
    return FixedTransmitterReport(position=tx_pos, harvested_w=powers, best_beam=beams, flagged=flagged,
                                  feasible=not flagged, charging_s=charging)


def validate_plan(plan: Plan, ehs: Sequence[EnergyHarvester], codebook: Codebook, channel: ChannelParams,
                  harvest: HarvestParams, rel_tol: float = 1e-6) -> List[str]:
    """Re-check a plan from its raw fields; returns the violated conditions."""
    problems: List[str] = []
    size = len(plan.anchors)
    v = np.array(plan.selection.v)
    if v.size != size or plan.route.w.shape != (size, size):
        return [f"plan dimensions disagree with {size} anchors"]
    if plan.schedule.t.shape != (len(codebook), size):
        return [f"schedule shape {plan.schedule.t.shape} != ({len(codebook)}, {size})"]
    if not v.any():
        problems.append("no anchor selected")
    if not mtz_slack_exists(v, plan.route.w, depot=plan.start_anchor) \
            or not check_route_constraints(v, plan.route.w, mtz_slack_for_order(plan.route.order, size),
                                           depot=plan.start_anchor):
        problems.append("route is not a single ring over the selected anchors")
    if np.any(plan.schedule.t[:, v == 0] > 0):
        problems.append("charging scheduled at an unselected anchor")
    for k, eh in enumerate(ehs):
        energy = 0.0
        for m in range(size):
            for n, sector in enumerate(codebook.sectors):
                if plan.schedule.t[n, m] > 0:
                    p_in = received_power_w(channel, sector, plan.anchors[m].position, eh.position)
                    energy += plan.schedule.t[n, m] * harvested_power_w(p_in, harvest)
        if energy < eh.requirement_j * (1.0 - rel_tol):
            problems.append(f"EH {k} harvests {energy:.6g} J < {eh.requirement_j:.6g} J")
    return problems
