"""Dense two-phase simplex with Bland's anti-cycling rule.

Minimizes ``c @ x`` subject to rows ``A[i] @ x (<=|>=|=) b[i]`` and ``x >= 0``.
Sized for the planner's charging-time and subtour-slack problems (tens of
variables), where a dense tableau is simplest. Rows and then columns are
scaled to unit max magnitude first, since harvested-power coefficients span
several orders of magnitude.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

logger = logging.getLogger(__name__)

# pivot and reduced-cost tolerance, applied to the equilibrated tableau
TOL = 1e-9


class LpResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    status: str
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class TwoPhaseSimplex:
    def __init__(self, max_iterations: Optional[int] = None):
        self.max_iterations = max_iterations

    @staticmethod
    def _pivot(T: np.ndarray, row: int, col: int):
        T[row, :] /= T[row, col]
        for r in range(T.shape[0]):
            if r != row and T[r, col] != 0.0:
                T[r, :] -= T[r, col] * T[row, :]

    @staticmethod
    def _equilibrate(A: np.ndarray, b: np.ndarray, c: np.ndarray):
        """Scale rows, then columns, to unit max magnitude. Returns the column scales."""
        rows = np.max(np.abs(A), axis=1) if A.size else np.ones(A.shape[0])
        rows[rows == 0.0] = 1.0
        A /= rows[:, None]
        b /= rows
        cols = np.max(np.abs(A), axis=0) if A.size else np.ones(A.shape[1])
        cols[cols == 0.0] = 1.0
        A /= cols[None, :]
        c /= cols
        return cols

    @staticmethod
    def _enter(costs: np.ndarray) -> int:
        # Bland: lowest-index improving column
        idxs = np.flatnonzero(costs < -TOL)
        return int(idxs[0]) if idxs.size else -1

    @staticmethod
    def _leave(T: np.ndarray, col: int, basis: List[int]) -> int:
        best_row, best_ratio = -1, np.inf
        for i in range(T.shape[0] - 1):
            a = T[i, col]
            if a > TOL:
                ratio = T[i, -1] / a
                # ties go to the lowest-index basic variable
                if ratio < best_ratio - TOL or (abs(ratio - best_ratio) <= TOL and basis[i] < basis[best_row]):
                    best_row, best_ratio = i, ratio
        return best_row

    def _simplex(self, T: np.ndarray, basis: List[int]) -> str:
        limit = self.max_iterations or 50 * sum(T.shape)
        for _ in range(limit):
            j = self._enter(T[-1, :-1])
            if j == -1:
                return "optimal"
            i = self._leave(T, j, basis)
            if i == -1:
                return "unbounded"
            self._pivot(T, i, j)
            basis[i] = j
        return "iteration_limit"

    def solve(self, c: Sequence[float], A: np.ndarray, signs: Sequence[str], b: Sequence[float]) -> LpResult:
        c_user = np.asarray(c, dtype=float)
        c = c_user.copy()
        A = np.array(A, dtype=float).reshape(-1, c.size)
        b = np.array(b, dtype=float)
        signs = list(signs)
        m, n = A.shape

        # Make b >= 0
        for i in range(m):
            if b[i] < 0:
                A[i, :] *= -1
                b[i] *= -1
                signs[i] = {"<=": ">=", ">=": "<=", "=": "="}[signs[i]]
        scales = self._equilibrate(A, b, c)

        num_s = sum(1 for s in signs if s in ("<=", ">="))
        num_a = sum(1 for s in signs if s in ("=", ">="))
        total = n + num_s + num_a
        abase = n + num_s
        T = np.zeros((m + 1, total + 1))
        basis: List[int] = []
        si = ai = 0
        for i in range(m):
            T[i, :n] = A[i, :]
            T[i, -1] = b[i]
            if signs[i] == "<=":
                T[i, n + si] = 1.0
                basis.append(n + si)
                si += 1
            elif signs[i] == ">=":
                T[i, n + si] = -1.0
                T[i, abase + ai] = 1.0
                basis.append(abase + ai)
                si += 1
                ai += 1
            else:
                T[i, abase + ai] = 1.0
                basis.append(abase + ai)
                ai += 1

        # Phase I: minimize the sum of artificials
        T[-1, abase:total] = 1.0
        for r, bc in enumerate(basis):
            if bc >= abase:
                T[-1, :] -= T[r, :]
        status = self._simplex(T, basis)
        if status == "unbounded":
            # the phase I objective is bounded below by zero
            logger.warning("phase I reported unbounded on a %dx%d LP", m, n)
            return LpResult(status="numerical_error")
        if status != "optimal":
            return LpResult(status=f"phase_1_{status}")
        if -T[-1, -1] > 1e-8 * max(1.0, float(np.max(np.abs(b))) if m else 1.0):
            return LpResult(status="infeasible")

        # Drive leftover zero-level artificials out of the basis
        keep = []
        for r, bc in enumerate(basis):
            if bc < abase:
                keep.append(r)
                continue
            pivot_col = next((j for j in range(abase) if abs(T[r, j]) > TOL), None)
            if pivot_col is None:
                continue  # redundant row
            self._pivot(T, r, pivot_col)
            basis[r] = pivot_col
            keep.append(r)
        T = np.vstack([T[keep][:, list(range(abase)) + [total]], np.zeros((1, abase + 1))])
        basis = [basis[r] for r in keep]

        # Phase II
        cost = np.zeros(abase)
        cost[:n] = c
        T[-1, :abase] = cost
        for r, bc in enumerate(basis):
            if cost[bc] != 0.0:
                T[-1, :] -= cost[bc] * T[r, :]
        status = self._simplex(T, basis)
        if status != "optimal":
            return LpResult(status=status)

        x = np.zeros(abase)
        for r, bc in enumerate(basis):
            x[bc] = T[r, -1]
        x = np.where(x < 0, 0.0, x)[:n] / scales
        return LpResult(status="optimal", x=x, objective=float(c_user @ x))


def minimize_lp(c, A, signs, b) -> LpResult:
    return TwoPhaseSimplex().solve(c, A, signs, b)
