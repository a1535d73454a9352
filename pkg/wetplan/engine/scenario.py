"""Scenario documents and the random scenario generator."""

import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from ..core.config import FORMAT_VERSION
from ..core.errors import ScenarioError
from ..core.store import load_document, validation_details
from .models import Arena, ChannelParams, Codebook, EnergyHarvester, HarvestParams, Position2D, RobotParams

logger = logging.getLogger(__name__)


# Pydantic models
class RobotConfig(RobotParams):
    start: Position2D = Position2D(x=0.5, y=0.5)
    start_heading_deg: float = 0.0
    # electrical draw while the mission runs, for the energy column of reports
    motion_power_w: float = Field(9.3, gt=0)


class ClusteringConfig(BaseModel):
    eps: float = Field(3.0, gt=0)
    min_pts: int = Field(2, ge=1)


class ObstacleConfig(BaseModel):
    count: int = Field(5, ge=0)
    speed: float = Field(0.15, gt=0)
    radius: float = Field(0.2, gt=0)


class SimConfig(BaseModel):
    dt: float = Field(0.05, gt=0, le=0.2)
    arrival_tolerance_m: float = Field(0.1, gt=0)
    sample_interval_s: float = Field(0.5, gt=0)
    horizon_s: float = Field(3.0, gt=0)
    emergency_ttc_s: float = Field(1.0, ge=0)
    # DNF once simulated time exceeds this multiple of the planned time
    budget_factor: float = Field(10.0, gt=1)


class ScenarioFile(BaseModel):
    format_version: int = FORMAT_VERSION
    name: str = "scenario"
    seed: int = 0
    ehs: List[EnergyHarvester] = Field(min_length=1)
    robot: RobotConfig = RobotConfig()
    channel: ChannelParams = ChannelParams()
    harvest: HarvestParams = HarvestParams()
    codebook: Codebook = Field(default_factory=Codebook.three_sector)
    clustering: ClusteringConfig = ClusteringConfig()
    arena: Arena = Arena()
    obstacles: ObstacleConfig = ObstacleConfig()
    sim: SimConfig = SimConfig()
    # where the fixed-transmitter baseline stands; arena centre when unset
    fixed_transmitter: Optional[Position2D] = None

    @field_validator("format_version")
    @classmethod
    def check_version(cls, value: int) -> int:
        if value != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {value} (expected {FORMAT_VERSION})")
        return value

    @property
    def beam_width_deg(self) -> float:
        return self.codebook.max_width_deg

    @property
    def transmitter_position(self) -> Position2D:
        if self.fixed_transmitter is not None:
            return self.fixed_transmitter
        return Position2D(x=(self.arena.x_min + self.arena.x_max) / 2.0,
                          y=(self.arena.y_min + self.arena.y_max) / 2.0)

    def with_movers(self, count: int) -> "ScenarioFile":
        return self.model_copy(update={"obstacles": self.obstacles.model_copy(update={"count": count})})


def load_scenario(path: str) -> ScenarioFile:
    return load_document(path, ScenarioFile)


def _blob_centers(rng: np.random.Generator, blobs: int, arena_size: float, separation: float,
                  margin: float, attempts: int = 1000) -> np.ndarray:
    centers: List[np.ndarray] = []
    for _ in range(blobs):
        for _attempt in range(attempts):
            spot = rng.uniform(margin, arena_size - margin, size=2)
            if all(np.hypot(*(spot - c)) >= separation for c in centers):
                centers.append(spot)
                break
        else:
            raise ScenarioError(f"cannot place {blobs} blobs {separation:.2f} m apart in a "
                                f"{arena_size:g} m arena; use fewer blobs or a larger arena")
    return np.array(centers)


def generate_scenario(blobs: int = 6, ehs: int = 20, arena_size: float = 10.0, movers: int = 5,
                      seed: int = 0, spread: float = 0.3, eps: Optional[float] = None) -> ScenarioFile:
    """Random clustered EH layout: ``ehs`` harvesters dealt round-robin to ``blobs``.

    The clustering radius defaults to twice the blob spread, and blob centres
    are drawn at least two radii apart, so every blob yields its own anchors
    and a loose blob splits into neighbouring ones.
    """
    if blobs < 1 or ehs < 1:
        raise ScenarioError("gen needs at least one blob and one EH")
    if arena_size <= 3.0:
        raise ScenarioError("arena must be wider than 3 m")
    if spread <= 0:
        raise ScenarioError(f"blob spread must be positive, got {spread}")
    eps = 2.0 * spread if eps is None else eps
    if eps <= 0:
        raise ScenarioError(f"clustering radius must be positive, got {eps}")
    rng = np.random.default_rng(seed)
    centers = _blob_centers(rng, blobs, arena_size, separation=2.0 * eps, margin=1.5)
    harvesters = []
    for k in range(ehs):
        x, y = np.clip(centers[k % blobs] + rng.normal(0.0, spread, size=2), 0.2, arena_size - 0.2)
        harvesters.append(EnergyHarvester(position=Position2D(x=round(float(x), 3), y=round(float(y), 3))))
    try:
        scenario = ScenarioFile(
            name=f"gen-{blobs}x{ehs}-s{seed}",
            seed=seed,
            ehs=harvesters,
            clustering=ClusteringConfig(eps=eps),
            arena=Arena(x_max=arena_size, y_max=arena_size),
            obstacles=ObstacleConfig(count=movers),
        )
    except ValidationError as e:
        raise ScenarioError(f"invalid generated scenario: {validation_details(e)}")
    logger.info("generated %d EHs in %d blobs (seed %d, eps %.2f m)", ehs, blobs, seed, eps)
    return scenario
