"""Thin semidefinite-programming layer over cvxpy.

The synthesis code only needs symmetric and rectangular matrix variables,
linear matrix inequalities, linear equalities and a linear objective. This
module exposes exactly that, so the backend can be swapped in one place.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

logger = logging.getLogger(__name__)

__all__ = ["SdpProblem", "SdpSolution", "SdpError", "DEFAULT_SOLVER"]

DEFAULT_SOLVER = "CLARABEL"

_ACCEPTED = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)


class SdpError(RuntimeError):
    """The solver failed or reported infeasibility.

    Attributes
    ----------
    status : str
        Solver status string.
    """

    def __init__(self, message: str, status: str):
        super().__init__(message)
        self.status = status


@dataclass
class SdpSolution:
    status: str
    objective: float
    values: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]


class SdpProblem:
    """Incrementally assembled SDP.

    Examples
    --------
    >>> sdp = SdpProblem()
    >>> g = sdp.scalar("g")
    >>> sdp.lmi(cp.bmat([[-g, 1.0], [1.0, -1.0]]))   # g >= 1
    >>> round(sdp.minimize(g).objective, 6)
    1.0
    """

    def __init__(self):
        self._vars: dict[str, cp.Variable] = {}
        self._cons: list = []

    def _add(self, name: str, var):
        if name in self._vars:
            raise ValueError(f"duplicate SDP variable {name!r}")
        self._vars[name] = var
        return var

    def __getitem__(self, name: str) -> cp.Variable:
        return self._vars[name]

    def symmetric(self, n: int, name: str) -> cp.Variable:
        return self._add(name, cp.Variable((n, n), symmetric=True, name=name))

    def matrix(self, rows: int, cols: int, name: str) -> cp.Variable:
        return self._add(name, cp.Variable((rows, cols), name=name))

    def scalar(self, name: str) -> cp.Variable:
        return self._add(name, cp.Variable(name=name))

    def lmi(self, block, margin: float = 0.0) -> None:
        """Require ``block <= -margin I`` (``block`` is symmetrized)."""
        block = (block + block.T) / 2
        self._cons.append(block << -margin * np.eye(block.shape[0]))

    def psd(self, block, margin: float = 0.0) -> None:
        """Require ``block >= margin I``."""
        block = (block + block.T) / 2
        self._cons.append(block >> margin * np.eye(block.shape[0]))

    def equal(self, lhs, rhs) -> None:
        self._cons.append(lhs == rhs)

    def minimize(self, objective, solver: str = DEFAULT_SOLVER) -> SdpSolution:
        """Solve and return values of all named variables.

        Raises
        ------
        SdpError
            If the solver does not return an (approximately) optimal point.
        """
        prob = cp.Problem(cp.Minimize(objective), self._cons)
        try:
            with warnings.catch_warnings():
                # reduced accuracy is reported through the status below
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(solver=solver)
        except cp.error.SolverError as exc:
            raise SdpError(f"SDP solver {solver} failed: {exc}", "solver_error") from exc
        if prob.status not in _ACCEPTED:
            raise SdpError(f"SDP status {prob.status}", prob.status)
        if prob.status == cp.OPTIMAL_INACCURATE:
            logger.info("SDP solved to reduced accuracy")
        values = {k: np.asarray(v.value, dtype=float) for k, v in self._vars.items()}
        return SdpSolution(prob.status, float(prob.value), values)
