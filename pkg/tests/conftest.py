import itertools
from typing import List, Sequence, Tuple

import numpy as np
import pytest

from wetplan.engine.anchors import Anchor, Cluster
from wetplan.engine.models import DistanceMatrix, EnergyHarvester, Position2D
from wetplan.engine.scenario import ObstacleConfig, RobotConfig, ScenarioFile


def pos(x: float, y: float) -> Position2D:
    return Position2D(x=x, y=y)


def harvesters(points: Sequence[Tuple[float, float]], requirement_j: float = 0.02) -> List[EnergyHarvester]:
    return [EnergyHarvester(position=pos(x, y), requirement_j=requirement_j) for x, y in points]


def anchors_at(points: Sequence[Tuple[float, float]]) -> List[Anchor]:
    return [Anchor(position=pos(x, y), cluster=Cluster(members=[i])) for i, (x, y) in enumerate(points)]


def brute_force_tour(d: np.ndarray, nodes: Sequence[int], start: int) -> float:
    rest = [m for m in nodes if m != start]
    if not rest:
        return 0.0
    best = np.inf
    for perm in itertools.permutations(rest):
        order = (start,) + perm
        length = sum(d[order[i], order[(i + 1) % len(order)]] for i in range(len(order)))
        best = min(best, length)
    return float(best)


def random_distance_matrix(rng: np.random.Generator, size: int, symmetric: bool = True) -> DistanceMatrix:
    if symmetric:
        xy = rng.uniform(0.0, 10.0, size=(size, 2))
        return DistanceMatrix.from_positions([pos(float(x), float(y)) for x, y in xy])
    d = rng.uniform(0.5, 10.0, size=(size, size))
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d=d)


@pytest.fixture
def small_scenario() -> ScenarioFile:
    """Two EH pairs 5 m apart, no movers: a mission of a couple of minutes."""
    return ScenarioFile(
        name="small",
        seed=3,
        ehs=harvesters([(2.0, 2.0), (2.5, 2.3), (7.0, 2.0), (7.2, 2.6)]),
        robot=RobotConfig(start=pos(1.0, 1.0)),
        obstacles=ObstacleConfig(count=0),
    )


@pytest.fixture
def triangle_scenario() -> ScenarioFile:
    """Three lone EHs 6 m apart; charging any of them remotely is far slower than driving."""
    return ScenarioFile(
        name="triangle",
        ehs=harvesters([(2.0, 2.0), (8.0, 2.0), (5.0, 7.2)]),
        robot=RobotConfig(start=pos(1.0, 1.0)),
        obstacles=ObstacleConfig(count=0),
    )


@pytest.fixture
def scenario_file(tmp_path, small_scenario):
    path = tmp_path / "small.json"
    path.write_text(small_scenario.model_dump_json(indent=2))
    return str(path)
