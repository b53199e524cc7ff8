"""Canonical data model for binary integer programs.

An instance is a minimization problem over binary variables

    min  mu' x   s.t.  A x <= b,  x in {0,1}^n

with a sparse row-major constraint matrix.  All constraints carry the "<="
sense; generators that produce ">=" rows (set covering) negate both sides
at build time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, DimensionError

OBJ_TOL = 1e-9
FEAS_TOL = 1e-6


class IpInstance:
    """Immutable binary minimization problem.

    Parameters
    ----------
    name : str
        Instance identifier (used for file names and result rows).
    objective : array of float, shape (n_vars,)
        Minimization objective coefficients.
    matrix : scipy CSR matrix, shape (n_cons, n_vars)
        Constraint coefficients, one row per "<=" constraint.
    rhs : array of float, shape (n_cons,)
        Right-hand sides.
    """

    def __init__(self, name, objective, matrix, rhs):
        objective = np.asarray(objective, dtype=np.float64).ravel()
        rhs = np.asarray(rhs, dtype=np.float64).ravel()
        matrix = sp.csr_matrix(matrix).astype(np.float64)
        matrix.sum_duplicates()
        if matrix.shape != (rhs.size, objective.size):
            raise DimensionError(
                f"matrix shape {matrix.shape} does not match "
                f"{rhs.size} constraints x {objective.size} variables"
            )
        for arr, what in ((objective, "objective"), (rhs, "rhs"), (matrix.data, "matrix")):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ContractError(f"non-finite coefficient in {what}")
        self.name = name
        self.objective = objective
        self.matrix = matrix
        self.rhs = rhs
        for arr in (self.objective, self.rhs, matrix.data, matrix.indices, matrix.indptr):
            arr.flags.writeable = False
        self._csc = None

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_cons(self) -> int:
        return self.rhs.size

    @property
    def matrix_csc(self):
        """Column-major view of the constraint matrix (cached)."""
        if self._csc is None:
            self._csc = self.matrix.tocsc()
        return self._csc

    def __repr__(self):
        return (
            f"IpInstance({self.name!r}, n_vars={self.n_vars}, "
            f"n_cons={self.n_cons}, nnz={self.matrix.nnz})"
        )


def evaluate(instance: IpInstance, values) -> float:
    """Objective value mu'x of an assignment, as a plain float dot product."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size != instance.n_vars:
        raise DimensionError(
            f"assignment has {values.size} entries, instance has {instance.n_vars} variables"
        )
    return float(np.dot(instance.objective, values))


def is_feasible(instance: IpInstance, values, tol: float = FEAS_TOL) -> bool:
    """True iff A x <= b + tol holds row-wise."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size != instance.n_vars:
        raise DimensionError(
            f"assignment has {values.size} entries, instance has {instance.n_vars} variables"
        )
    if tol < 0:
        raise ContractError("tolerance must be nonnegative")
    lhs = instance.matrix @ values
    return bool(np.all(lhs <= instance.rhs + tol))


@dataclass
class Solution:
    """A binary assignment with its cached objective value."""

    values: np.ndarray
    objective_value: float

    @classmethod
    def from_values(cls, instance: IpInstance, values) -> "Solution":
        values = np.asarray(values)
        ivals = np.rint(values).astype(np.int8)
        if not np.all(np.abs(values - ivals) <= 1e-6):
            raise ContractError("solution values must be integral 0/1")
        if ivals.min(initial=0) < 0 or ivals.max(initial=0) > 1:
            raise ContractError("solution values must lie in {0,1}")
        return cls(values=ivals, objective_value=evaluate(instance, ivals))

    def copy(self) -> "Solution":
        return Solution(self.values.copy(), self.objective_value)


@dataclass
class IncumbentTracker:
    """Best solution so far plus per-variable incumbent statistics.

    ``history_sum / history_count`` is the average value of each variable
    across all accepted incumbents (the initial solution counts as the
    first incumbent).
    """

    best: Solution
    history_sum: np.ndarray = field(init=False)
    history_count: int = field(init=False)

    def __post_init__(self):
        self.history_sum = self.best.values.astype(np.float64)
        self.history_count = 1

    @property
    def average_values(self) -> np.ndarray:
        return self.history_sum / self.history_count

    def record(self, candidate: Solution, instance: IpInstance | None = None) -> bool:
        """Accept ``candidate`` if it strictly improves the best objective.

        Ties are rejected.  When ``instance`` is given, the candidate is
        verified feasible first and a ContractError is raised otherwise.
        Returns whether the candidate was accepted.
        """
        if instance is not None and not is_feasible(instance, candidate.values):
            raise ContractError("candidate incumbent is infeasible")
        if candidate.objective_value < self.best.objective_value - OBJ_TOL:
            self.best = candidate.copy()
            self.history_sum = self.history_sum + candidate.values
            self.history_count += 1
            return True
        return False


def record_incumbent(
    tracker: IncumbentTracker, candidate: Solution, instance: IpInstance | None = None
) -> bool:
    """Functional wrapper around :meth:`IncumbentTracker.record`."""
    return tracker.record(candidate, instance)


def trivial_solution(instance: IpInstance) -> Solution | None:
    """A cheap feasible point, if one of the canonical ones works.

    All four benchmark families admit either the all-zeros point
    (independent set, auctions, max cut) or the all-ones point (set
    covering).  Returns None when neither is feasible.
    """
    for fill in (0, 1):
        values = np.full(instance.n_vars, fill, dtype=np.int8)
        if is_feasible(instance, values):
            return Solution.from_values(instance, values)
    return None
