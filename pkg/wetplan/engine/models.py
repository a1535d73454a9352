"""Physical and mathematical models of the robotic WET system.

Positions, the InH-office pathloss channel, codebook beam coverage, the
sensitivity-based logistic harvester and the motion-time term of the mission
objective. Everything here is a pure function of immutable inputs; powers are
Watts throughout.
"""

import math
from typing import List, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from ..core.errors import PlanMismatchError

# Near-field clamp keeping the log-distance law finite
D_MIN_M = 0.1
# Closer than this the EH is treated as sitting under the transmitter
COINCIDENT_M = 1e-9
ANGLE_TOL_DEG = 1e-9

ArrayLike = Union[float, np.ndarray]


# Pydantic models
class Position2D(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float = Field(allow_inf_nan=False)
    y: float = Field(allow_inf_nan=False)

    def distance_to(self, other: "Position2D") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def bearing_deg(self, other: "Position2D") -> float:
        """Direction of ``other`` seen from here, degrees in [0, 360)."""
        return math.degrees(math.atan2(other.y - self.y, other.x - self.x)) % 360.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


class ChannelParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    fc_ghz: float = Field(0.915, gt=0)
    # includes the transmit antenna gain
    tx_power_w: float = Field(3.0, gt=0)
    rx_gain_db: float = 6.0


class HarvestParams(BaseModel):
    """Sensitivity-based logistic rectifier parameters.

    Defaults: P0 = 6.4e-5 W is the -12 dBm sensitivity typical of 915 MHz
    rectennas; Pmax = 4 mW, tau = 500 /W and nu = 2 were picked so the curve
    is zero below P0, visibly nonlinear over 0.1-10 mW and saturates above
    ~20 mW. They are a calibration, not measured data.
    """

    model_config = ConfigDict(frozen=True)

    p0_w: float = Field(6.4e-5, ge=0)
    pmax_w: float = Field(4e-3, gt=0)
    tau: float = Field(500.0, gt=0)
    nu: float = 2.0


class BeamSector(BaseModel):
    model_config = ConfigDict(frozen=True)

    start_deg: float
    width_deg: float = Field(gt=0, le=360)

    @field_validator("start_deg")
    @classmethod
    def normalize_start(cls, value: float) -> float:
        return value % 360.0

    @property
    def center_deg(self) -> float:
        return (self.start_deg + self.width_deg / 2.0) % 360.0

    def contains(self, angle_deg: float) -> bool:
        if self.width_deg >= 360.0:
            return True
        offset = (angle_deg - self.start_deg) % 360.0
        # both edges inclusive
        return offset <= self.width_deg + ANGLE_TOL_DEG or offset >= 360.0 - ANGLE_TOL_DEG


class Codebook(BaseModel):
    model_config = ConfigDict(frozen=True)

    sectors: List[BeamSector] = Field(min_length=1)

    @classmethod
    def three_sector(cls) -> "Codebook":
        """Three 130-degree beams of a rotating directional transmitter."""
        return cls(sectors=[
            BeamSector(start_deg=-65.0, width_deg=130.0),
            BeamSector(start_deg=55.0, width_deg=130.0),
            BeamSector(start_deg=175.0, width_deg=130.0),
        ])

    @classmethod
    def omni(cls) -> "Codebook":
        return cls(sectors=[BeamSector(start_deg=0.0, width_deg=360.0)])

    def __len__(self) -> int:
        return len(self.sectors)

    @property
    def max_width_deg(self) -> float:
        return max(sector.width_deg for sector in self.sectors)


class DistanceMatrix(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    d: np.ndarray

    @field_validator("d", mode="before")
    @classmethod
    def check_matrix(cls, value) -> np.ndarray:
        d = np.array(value, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("distance matrix entries must be finite and nonnegative")
        if np.any(np.diag(d) != 0):
            raise ValueError("distance matrix diagonal must be exactly 0")
        d.setflags(write=False)
        return d

    @field_serializer("d")
    def serialize_d(self, d: np.ndarray):
        return d.tolist()

    @classmethod
    def from_positions(cls, positions: Sequence[Position2D]) -> "DistanceMatrix":
        if not positions:
            return cls(d=np.zeros((0, 0)))
        xy = np.array([p.as_array() for p in positions])
        diff = xy[:, None, :] - xy[None, :, :]
        return cls(d=np.hypot(diff[..., 0], diff[..., 1]))

    @property
    def size(self) -> int:
        return self.d.shape[0]

    def scaled(self, factor: float) -> "DistanceMatrix":
        return DistanceMatrix(d=self.d * factor)


class Arena(BaseModel):
    model_config = ConfigDict(frozen=True)

    x_min: float = 0.0
    x_max: float = 10.0
    y_min: float = 0.0
    y_max: float = 10.0

    @model_validator(mode="after")
    def check_extent(self) -> "Arena":
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("arena must have positive width and height")
        return self

    def contains(self, point: Position2D, margin: float = 0.0, tol: float = 1e-6) -> bool:
        return (self.x_min + margin - tol <= point.x <= self.x_max - margin + tol
                and self.y_min + margin - tol <= point.y <= self.y_max - margin + tol)


class RobotParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    linear_speed: float = Field(0.2, gt=0)
    # not given for the hardware; simulator plumbing
    angular_speed: float = Field(90.0, gt=0)
    body_radius: float = Field(0.2, gt=0)


class EnergyHarvester(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: Position2D
    requirement_j: float = Field(0.02, gt=0)


def pathloss_db(eh: Position2D, anchor: Position2D, fc_ghz: float) -> float:
    """InH-office pathloss in dB (channel gain is its negation), fc in GHz."""
    if fc_ghz <= 0:
        raise ValueError("fc_ghz must be positive")
    distance = max(eh.distance_to(anchor), D_MIN_M)
    return 32.4 + 17.3 * math.log10(distance) + 20.0 * math.log10(fc_ghz)


def beam_covers(sector: BeamSector, anchor: Position2D, eh: Position2D) -> bool:
    if anchor.distance_to(eh) <= COINCIDENT_M:
        return True
    return sector.contains(anchor.bearing_deg(eh))


def received_power_w(params: ChannelParams, sector: BeamSector,
                     anchor: Position2D, eh: Position2D) -> float:
    if not beam_covers(sector, anchor, eh):
        return 0.0
    gain_db = -pathloss_db(eh, anchor, params.fc_ghz) + params.rx_gain_db
    return params.tx_power_w * 10.0 ** (gain_db / 10.0)


def harvested_power_w(p_in: ArrayLike, hp: HarvestParams) -> ArrayLike:
    """Rectifier output for incident power ``p_in`` (scalar or array)."""
    p = np.asarray(p_in, dtype=float)
    x0 = np.exp(-hp.tau * hp.p0_w + hp.nu)
    xp = np.exp(-hp.tau * p + hp.nu)
    value = hp.pmax_w / x0 * ((1.0 + x0) / (1.0 + xp) - 1.0)
    value = np.where(p <= hp.p0_w, 0.0, np.maximum(value, 0.0))
    if value.ndim == 0:
        return float(value)
    return value


def motion_time_s(d: DistanceMatrix, route, alpha: float) -> float:
    """Travel term (1/alpha) * Tr(D^T W) of the mission objective."""
    w = np.asarray(getattr(route, "w", route), dtype=float)
    if w.size == 0 and d.size == 0:
        return 0.0
    if w.shape != d.d.shape:
        raise PlanMismatchError(f"route matrix shape {w.shape} does not match distance matrix {d.d.shape}")
    return float(np.sum(d.d * w) / alpha)


def coverage_matrix(anchors: Sequence[Position2D], codebook: Codebook,
                    ehs: Sequence[EnergyHarvester], channel: ChannelParams,
                    harvest: HarvestParams) -> np.ndarray:
    """Harvested power (W) at every EH for every (beam, anchor): shape K x N x M."""
    rates = np.zeros((len(ehs), len(codebook), len(anchors)))
    for k, eh in enumerate(ehs):
        for n, sector in enumerate(codebook.sectors):
            for m, anchor in enumerate(anchors):
                rates[k, n, m] = harvested_power_w(
                    received_power_w(channel, sector, anchor, eh.position), harvest)
    return rates
