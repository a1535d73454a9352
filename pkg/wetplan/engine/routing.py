"""Exact shortest closed tour over a subset of anchors (branch-and-bound).

Works on directed distance matrices: after per-edge motion-time refits the
matrix is no longer symmetric.
"""

import logging
from typing import List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


def tour_length(d: np.ndarray, order: Sequence[int]) -> float:
    if len(order) < 2:
        return 0.0
    return float(sum(d[order[i], order[(i + 1) % len(order)]] for i in range(len(order))))


def nearest_neighbour_tour(d: np.ndarray, nodes: Sequence[int], start: int) -> List[int]:
    order = [start]
    remaining = sorted(set(nodes) - {start})
    while remaining:
        here = order[-1]
        nxt = min(remaining, key=lambda u: (d[here, u], u))
        order.append(nxt)
        remaining.remove(nxt)
    return order


def _completion_bound(d: np.ndarray, current: int, unvisited: List[int], start: int) -> float:
    """Lower bound on closing the tour from ``current`` through ``unvisited``.

    Every unvisited vertex, and ``current``, must still be left exactly once,
    and every unvisited vertex and the start must still be entered once; the
    larger of the cheapest-exit and cheapest-entry sums is a valid bound.
    """
    if not unvisited:
        return float(d[current, start])
    sources = [current] + unvisited
    targets = unvisited + [start]
    sub = d[np.ix_(sources, targets)].astype(float)
    for i, u in enumerate(sources):
        for j, v in enumerate(targets):
            if u == v:
                sub[i, j] = np.inf
    # current may not jump straight back to the start while vertices remain
    sub[0, -1] = np.inf
    exit_bound = float(np.sum(np.min(sub, axis=1)))
    entry_bound = float(np.sum(np.min(sub, axis=0)))
    return max(exit_bound, entry_bound)


def shortest_tour(d: np.ndarray, nodes: Sequence[int], start: int,
                  node_budget: int = 1_000_000) -> Tuple[List[int], float, bool]:
    """Return (order from ``start``, closed length, proven optimal)."""
    nodes = sorted(set(nodes))
    if start not in nodes:
        raise ValueError(f"start {start} is not among the tour nodes")
    if len(nodes) == 1:
        return [start], 0.0, True
    if len(nodes) == 2:
        other = nodes[0] if nodes[1] == start else nodes[1]
        return [start, other], float(d[start, other] + d[other, start]), True

    best_order = nearest_neighbour_tour(d, nodes, start)
    best_length = tour_length(d, best_order)
    expanded = 0
    exhausted = False

    def search(path: List[int], length: float, unvisited: List[int]):
        nonlocal best_order, best_length, expanded, exhausted
        if exhausted:
            return
        expanded += 1
        if expanded > node_budget:
            exhausted = True
            return
        here = path[-1]
        if not unvisited:
            total = length + d[here, start]
            if total < best_length - 1e-12:
                best_order, best_length = list(path), float(total)
            return
        if length + _completion_bound(d, here, unvisited, start) >= best_length - 1e-12:
            return
        for u in sorted(unvisited, key=lambda v: (d[here, v], v)):
            rest = [v for v in unvisited if v != u]
            path.append(u)
            search(path, length + d[here, u], rest)
            path.pop()

    search([start], 0.0, [u for u in nodes if u != start])
    if exhausted:
        logger.warning("route search hit the node budget (%d); returning best tour found", node_budget)
    return best_order, best_length, not exhausted
