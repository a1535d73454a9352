"""Error hierarchy.

Every error carries an ``exit_code`` and a ``detail`` the way an
``HTTPException`` carries a status code and detail; ``main`` turns them into
process exit codes (1 usage/parse, 2 model infeasibility).
"""

from typing import List, Optional


class WetError(Exception):
    exit_code = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class UsageError(WetError):
    exit_code = 1


class ScenarioError(WetError):
    exit_code = 1


class PlanMismatchError(WetError):
    exit_code = 1


class InfeasibleError(WetError):
    exit_code = 2

    def __init__(self, detail: str, eh_indices: Optional[List[int]] = None):
        super().__init__(detail)
        self.eh_indices = list(eh_indices or [])


class FeasibleBeamNotFound(WetError):
    exit_code = 2

    def __init__(self, detail: str, members: Optional[List[int]] = None):
        super().__init__(detail)
        self.members = list(members or [])


class HilAborted(WetError):
    exit_code = 2

    def __init__(self, detail: str, rounds: list):
        super().__init__(detail)
        self.rounds = rounds


class MeasurementError(WetError):
    exit_code = 1
