"""Candidate anchor generation.

EHs are clustered with DBSCAN; every cluster (and every outlier, as a
singleton) gets one anchor at its Chebyshev centre, the point minimizing the
distance to the farthest member. With a directional transmitter the centre is
additionally constrained so that one codebook beam covers the whole cluster.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import minimize
from sklearn.cluster import DBSCAN

from ..core.errors import FeasibleBeamNotFound
from .models import Arena, BeamSector, Codebook, EnergyHarvester, Position2D, beam_covers

logger = logging.getLogger(__name__)

GRID_STEP_M = 0.05
_NUDGES_M = (1e-6, 1e-5, 1e-4)
_CONSTRAINT_TOL = 1e-9

Circle = Tuple[float, float, float]


# Pydantic models
class Cluster(BaseModel):
    members: List[int] = Field(min_length=1)
    is_outlier_singleton: bool = False


class Anchor(BaseModel):
    position: Position2D
    cluster: Cluster
    feasible_beam: Optional[int] = None
    radius_m: float = 0.0


def dbscan(points: Sequence[Position2D], eps: float, min_pts: int) -> Tuple[List[Cluster], List[int]]:
    """Density clusters (in label order) and outlier indices.

    A point is core when at least ``min_pts`` points, itself included, lie
    within ``eps``.
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be positive and min_pts at least 1")
    if not points:
        return [], []
    xy = np.array([p.as_array() for p in points])
    labels = DBSCAN(eps=eps, min_samples=min_pts).fit(xy).labels_
    clusters = [
        Cluster(members=[int(i) for i in np.flatnonzero(labels == label)])
        for label in range(int(labels.max()) + 1)
    ]
    outliers = [int(i) for i in np.flatnonzero(labels == -1)]
    return clusters, outliers


# Smallest enclosing circle, incremental construction after Welzl. Input
# order is kept (no shuffle) so the result is reproducible.
def _in_circle(p, c: Optional[Circle]) -> bool:
    return c is not None and math.hypot(p[0] - c[0], p[1] - c[1]) <= c[2] * (1 + 1e-14)


def _diameter(a, b) -> Circle:
    cx = (a[0] + b[0]) / 2
    cy = (a[1] + b[1]) / 2
    return cx, cy, max(math.hypot(cx - a[0], cy - a[1]), math.hypot(cx - b[0], cy - b[1]))


def _circumcircle(a, b, c) -> Optional[Circle]:
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by)) * 2.0
    if d == 0.0:
        return None
    x = ox + ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
    y = oy + ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
    r = max(math.hypot(x - a[0], y - a[1]), math.hypot(x - b[0], y - b[1]), math.hypot(x - c[0], y - c[1]))
    return x, y, r


def _cross(px, py, qx, qy, rx, ry) -> float:
    return (qx - px) * (ry - py) - (qy - py) * (rx - px)


def _circle_from_two(points, p, q) -> Circle:
    circ = _diameter(p, q)
    left = right = None
    px, py = p
    qx, qy = q
    for r in points:
        if _in_circle(r, circ):
            continue
        cross = _cross(px, py, qx, qy, r[0], r[1])
        c = _circumcircle(p, q, r)
        if c is None:
            continue
        if cross > 0.0 and (left is None or _cross(px, py, qx, qy, c[0], c[1]) > _cross(px, py, qx, qy, left[0], left[1])):
            left = c
        elif cross < 0.0 and (right is None or _cross(px, py, qx, qy, c[0], c[1]) < _cross(px, py, qx, qy, right[0], right[1])):
            right = c
    if left is None and right is None:
        return circ
    if left is None:
        return right
    if right is None:
        return left
    return left if left[2] <= right[2] else right


def _circle_from_one(points, p) -> Circle:
    c = (p[0], p[1], 0.0)
    for i, q in enumerate(points):
        if not _in_circle(q, c):
            if c[2] == 0.0:
                c = _diameter(p, q)
            else:
                c = _circle_from_two(points[:i + 1], p, q)
    return c


def chebyshev_center(cluster_points: Sequence[Position2D]) -> Tuple[Position2D, float]:
    if not cluster_points:
        raise ValueError("chebyshev_center needs at least one point")
    pts = [(float(p.x), float(p.y)) for p in cluster_points]
    c: Optional[Circle] = None
    for i, p in enumerate(pts):
        if c is None or not _in_circle(p, c):
            c = _circle_from_one(pts[:i + 1], p)
    center = Position2D(x=c[0], y=c[1])
    return center, max(center.distance_to(p) for p in cluster_points)


def _covers_all(sector: BeamSector, center: Position2D, points: Sequence[Position2D]) -> bool:
    return all(beam_covers(sector, center, p) for p in points)


def _radius(center: Position2D, points: Sequence[Position2D]) -> float:
    return max(center.distance_to(p) for p in points)


def _unit(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    return np.array([math.cos(a), math.sin(a)])


def _solve_convex_sector(points: Sequence[Position2D], sector: BeamSector,
                         arena: Optional[Arena]) -> Optional[Position2D]:
    """Min-max centre with every member inside ``sector`` (width <= 180)."""
    pts = np.array([p.as_array() for p in points])
    ds = _unit(sector.start_deg)
    de = _unit(sector.start_deg + sector.width_deg)
    axis = _unit(sector.start_deg + sector.width_deg / 2.0)
    half_sin = math.sin(math.radians(sector.width_deg / 2.0))

    def edge_margins(c: np.ndarray) -> np.ndarray:
        rel = pts - c
        # left of the start edge and right of the end edge
        g1 = ds[0] * rel[:, 1] - ds[1] * rel[:, 0]
        g2 = rel[:, 0] * de[1] - rel[:, 1] * de[0]
        return np.concatenate([g1, g2])

    c0, _ = chebyshev_center(points)
    c0 = c0.as_array()
    # push the unconstrained centre back along the beam axis until feasible
    shortfall = max(0.0, float(np.max(-edge_margins(c0))))
    start = c0 - (shortfall / half_sin) * axis

    def objective(z):
        return z[2]

    def objective_grad(z):
        return np.array([0.0, 0.0, 1.0])

    def disk(z):
        rel = pts - z[:2]
        return z[2] - np.sum(rel * rel, axis=1)

    def disk_jac(z):
        rel = pts - z[:2]
        return np.column_stack([2.0 * rel[:, 0], 2.0 * rel[:, 1], np.ones(len(pts))])

    def edges(z):
        return edge_margins(z[:2])

    def edges_jac(z):
        n = len(pts)
        jac = np.zeros((2 * n, 3))
        jac[:n, 0] = ds[1]
        jac[:n, 1] = -ds[0]
        jac[n:, 0] = -de[1]
        jac[n:, 1] = de[0]
        return jac

    bounds = [(None, None), (None, None), (0.0, None)]
    if arena is not None:
        bounds = [(arena.x_min, arena.x_max), (arena.y_min, arena.y_max), (0.0, None)]
        start = np.clip(start, [arena.x_min, arena.y_min], [arena.x_max, arena.y_max])
    r2 = float(np.max(np.sum((pts - start) ** 2, axis=1)))
    result = minimize(
        objective, np.array([start[0], start[1], r2]), jac=objective_grad, method="SLSQP",
        bounds=bounds,
        constraints=[{"type": "ineq", "fun": disk, "jac": disk_jac},
                     {"type": "ineq", "fun": edges, "jac": edges_jac}],
        options={"ftol": 1e-12, "maxiter": 500},
    )
    candidate = result.x[:2]
    if np.min(edges(result.x)) < -_CONSTRAINT_TOL:
        logger.debug("SLSQP stalled for sector %s: %s", sector, result.message)
        return None
    if np.min(edge_margins(start)) >= -_CONSTRAINT_TOL:
        # a line-search exit can leave SLSQP behind its own feasible start
        if np.max(np.sum((pts - start) ** 2, axis=1)) < np.max(np.sum((pts - candidate) ** 2, axis=1)):
            candidate = start
    for nudge in (0.0,) + _NUDGES_M:
        center = Position2D(x=float(candidate[0] - nudge * axis[0]), y=float(candidate[1] - nudge * axis[1]))
        if _covers_all(sector, center, points) and (arena is None or arena.contains(center)):
            return center
    return None


def _grid_search(points: Sequence[Position2D], sector: BeamSector, x_range, y_range,
                 step: float = GRID_STEP_M) -> Optional[Position2D]:
    pts = np.array([p.as_array() for p in points])
    xs = np.arange(x_range[0], x_range[1] + step / 2, step)
    ys = np.arange(y_range[0], y_range[1] + step / 2, step)
    best: Optional[Tuple[float, float, float]] = None
    for x in xs:
        dx = pts[:, 0][None, :] - x
        dy = pts[:, 1][None, :] - ys[:, None]
        dist = np.hypot(dx, dy)
        angle = np.degrees(np.arctan2(dy, dx)) % 360.0
        if sector.width_deg >= 360.0:
            inside = np.ones_like(dist, dtype=bool)
        else:
            offset = (angle - sector.start_deg) % 360.0
            inside = (offset <= sector.width_deg) | (dist <= 1e-9)
        ok = inside.all(axis=1)
        if not ok.any():
            continue
        radius = np.where(ok, dist.max(axis=1), np.inf)
        j = int(np.argmin(radius))
        if best is None or radius[j] < best[0]:
            best = (float(radius[j]), float(x), float(ys[j]))
    if best is None:
        return None
    return Position2D(x=best[1], y=best[2])


def _search_box(points: Sequence[Position2D], arena: Optional[Arena]):
    if arena is not None:
        return (arena.x_min, arena.x_max), (arena.y_min, arena.y_max)
    xs = [p.x for p in points]
    ys = [p.y for p in points]
    pad = max(max(xs) - min(xs), max(ys) - min(ys), 1.0) * 2.0
    return (min(xs) - pad, max(xs) + pad), (min(ys) - pad, max(ys) + pad)


def _best_for_sector(points: Sequence[Position2D], sector: BeamSector,
                     arena: Optional[Arena]) -> Optional[Position2D]:
    c0, _ = chebyshev_center(points)
    # the unconstrained optimum already fits the beam: nothing to trade off
    if _covers_all(sector, c0, points) and (arena is None or arena.contains(c0)):
        return c0
    if sector.width_deg <= 180.0:
        center = _solve_convex_sector(points, sector, arena)
        if center is not None:
            return center
        return _grid_search(points, sector, *_search_box(points, arena))
    # wider beams: best of the inscribed half-planes, checked against a grid
    spare = sector.width_deg - 180.0
    candidates = []
    for offset in (0.0, spare / 2.0, spare):
        sub = BeamSector(start_deg=sector.start_deg + offset, width_deg=180.0)
        center = _solve_convex_sector(points, sub, arena)
        if center is not None and _covers_all(sector, center, points):
            candidates.append(center)
    grid = _grid_search(points, sector, *_search_box(points, arena))
    if grid is not None:
        candidates.append(grid)
    if not candidates:
        return None
    return min(candidates, key=lambda c: _radius(c, points))


def beam_constrained_center(cluster_points: Sequence[Position2D], codebook: Codebook,
                            arena: Optional[Arena] = None) -> Tuple[Position2D, int, float]:
    """Best (centre, beam index, radius) with one beam covering every member."""
    if not cluster_points:
        raise ValueError("beam_constrained_center needs at least one point")
    best: Optional[Tuple[Position2D, int, float]] = None
    for n, sector in enumerate(codebook.sectors):
        center = _best_for_sector(cluster_points, sector, arena)
        if center is None:
            continue
        radius = _radius(center, cluster_points)
        if best is None or radius < best[2] - 1e-12:
            best = (center, n, radius)
    if best is None:
        raise FeasibleBeamNotFound(f"no beam covers the cluster of {len(cluster_points)} EHs from inside the arena")
    return best


def _bisect(members: List[int], points: Sequence[Position2D]) -> Tuple[List[int], List[int]]:
    xy = np.array([points[i].as_array() for i in members])
    centered = xy - xy.mean(axis=0)
    axis = np.linalg.svd(centered, full_matrices=False)[2][0]
    order = np.argsort(centered @ axis, kind="stable")
    half = len(members) // 2
    first = sorted(members[i] for i in order[:half])
    second = sorted(members[i] for i in order[half:])
    return first, second


def _place(cluster: Cluster, points: Sequence[Position2D], codebook: Codebook, directional: bool,
           arena: Optional[Arena], splits_left: int) -> List[Anchor]:
    cluster_points = [points[i] for i in cluster.members]
    if not directional:
        center, radius = chebyshev_center(cluster_points)
        return [Anchor(position=center, cluster=cluster, radius_m=radius)]
    try:
        center, beam, radius = beam_constrained_center(cluster_points, codebook, arena)
        return [Anchor(position=center, cluster=cluster, feasible_beam=beam, radius_m=radius)]
    except FeasibleBeamNotFound:
        if splits_left <= 0 or len(cluster.members) < 2:
            raise FeasibleBeamNotFound(
                f"no feasible beam for EHs {cluster.members}", members=cluster.members)
        logger.info("splitting cluster %s along its principal axis", cluster.members)
        anchors = []
        for half in _bisect(cluster.members, points):
            anchors.extend(_place(Cluster(members=half), points, codebook, directional, arena, splits_left - 1))
        return anchors


def generate_anchors(ehs: Sequence[EnergyHarvester], eps: float, min_pts: int, codebook: Codebook,
                     beam_width_deg: float, arena: Optional[Arena] = None) -> List[Anchor]:
    """One anchor per DBSCAN cluster plus one per outlier, in cluster order."""
    if not ehs:
        raise ValueError("generate_anchors needs at least one EH")
    points = [eh.position for eh in ehs]
    clusters, outliers = dbscan(points, eps, min_pts)
    groups = clusters + [Cluster(members=[i], is_outlier_singleton=True) for i in outliers]
    directional = beam_width_deg < 360.0 and codebook.max_width_deg < 360.0
    anchors: List[Anchor] = []
    for cluster in groups:
        splits = int(math.floor(math.log2(len(cluster.members))))
        anchors.extend(_place(cluster, points, codebook, directional, arena, splits))
    logger.info("generated %d anchors from %d clusters and %d outliers",
                len(anchors), len(clusters), len(outliers))
    return anchors
