"""Bounded-variable revised simplex for the 0/1 LP relaxation.

Solves ``min mu'x  s.t.  Ax <= b,  lb <= x <= ub`` where the structural
bounds are the unit box, optionally collapsed to a point by fixings.  Upper
bounds are handled implicitly (nonbasic-at-upper states) instead of extra
rows.  Slack variables complete the basis; a phase-1 with artificial
columns on violated rows recovers feasibility when the caller cannot
provide a feasible starting point.

The dense basis inverse is maintained by eta updates and refactorized
periodically.  Dantzig pricing with a Bland fallback after a degenerate
stall guards against cycling.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

from .core import IpInstance
from .errors import ContractError
from . import core

PIVOT_TOL = 1e-11
DUAL_TOL = 1e-7
FEAS_TOL = 1e-7
STALL_LIMIT = 30
REFACTOR_EVERY = 200


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


class BasisStatus(IntEnum):
    LOWER = 0
    BASIC = 1
    UPPER = 2


@dataclass
class LpSolution:
    primal: np.ndarray
    objective: float
    reduced_costs: np.ndarray
    basis_status: np.ndarray  # int8, BasisStatus values per structural variable
    iterations: int
    status: LpStatus


def _normalize_fixings(instance, fixings):
    mask = np.zeros(instance.n_vars, dtype=bool)
    values = np.zeros(instance.n_vars)
    if fixings is None:
        return mask, values
    if isinstance(fixings, dict):
        for j, v in fixings.items():
            mask[j] = True
            values[j] = float(v)
    else:
        fmask, fvals = fixings
        mask = np.asarray(fmask, dtype=bool).copy()
        values = np.where(mask, np.asarray(fvals, dtype=np.float64), 0.0)
    if np.any((values[mask] != 0.0) & (values[mask] != 1.0)):
        raise ContractError("fixings must assign 0 or 1")
    return mask, values


class _Simplex:
    """One solve on the extended column space [structural | slack | artificial]."""

    def __init__(self, instance, lb, ub, warm_values):
        self.inst = instance
        self.m = instance.n_cons
        self.n = instance.n_vars
        self.A = instance.matrix
        self.Acsc = instance.matrix_csc
        self.AT = self.Acsc.T  # csr view of the transpose
        self.lb = lb
        self.ub = ub
        self.iterations = 0

        n, m = self.n, self.m
        # nonbasic start: structurals at a bound (warm value when provided)
        x0 = np.where(warm_values >= 0.5, ub, lb) if warm_values is not None else lb.copy()
        self.status = np.where(x0 >= 0.5, BasisStatus.UPPER, BasisStatus.LOWER).astype(np.int8)
        self.xvals = x0.copy()

        s0 = instance.rhs - self.A @ x0
        self.basis = np.arange(n, n + m)                   # slack basis
        self.slack_status = np.full(m, BasisStatus.BASIC, dtype=np.int8)
        self.xB = s0.copy()
        self.Binv = np.eye(m)
        self.art_rows = np.flatnonzero(s0 < -1e-10)
        self.n_art = self.art_rows.size
        self.art_of_row = {}                                # artificial column id -> row
        for k, i in enumerate(self.art_rows):
            col = n + m + k
            self.art_of_row[col] = i
            self.basis[i] = col
            self.slack_status[i] = BasisStatus.LOWER
            self.xB[i] = -s0[i]
            self.Binv[i, i] = -1.0  # artificial column is -e_i
        self.pivots_since_refactor = 0
        self.degenerate_streak = 0

    # extended-column helpers -------------------------------------------

    def col_times(self, j, y):
        """Dot product of extended column j with a dense row vector y."""
        n, m = self.n, self.m
        if j < n:
            sl = slice(self.Acsc.indptr[j], self.Acsc.indptr[j + 1])
            return float(y[self.Acsc.indices[sl]] @ self.Acsc.data[sl])
        if j < n + m:
            return float(y[j - n])
        return -float(y[self.art_of_row[j]])

    def ftran(self, j):
        n, m = self.n, self.m
        if j < n:
            sl = slice(self.Acsc.indptr[j], self.Acsc.indptr[j + 1])
            return self.Binv[:, self.Acsc.indices[sl]] @ self.Acsc.data[sl]
        if j < n + m:
            return self.Binv[:, j - n].copy()
        return -self.Binv[:, self.art_of_row[j]]

    def col_bounds(self, j):
        n, m = self.n, self.m
        if j < n:
            return self.lb[j], self.ub[j]
        if j < n + m:
            return 0.0, np.inf
        # artificials are frozen at zero once phase 1 ends
        return 0.0, (np.inf if self.phase == 1 else 0.0)

    def nonbasic_value(self, j):
        lo, hi = self.col_bounds(j)
        st = self.col_status(j)
        return hi if st == BasisStatus.UPPER else lo

    def col_status(self, j):
        n, m = self.n, self.m
        if j < n:
            return self.status[j]
        if j < n + m:
            return self.slack_status[j - n]
        return self.art_status[j - n - m]

    def set_status(self, j, st):
        n, m = self.n, self.m
        if j < n:
            self.status[j] = st
            if st != BasisStatus.BASIC:
                self.xvals[j] = self.lb[j] if st == BasisStatus.LOWER else self.ub[j]
        elif j < n + m:
            self.slack_status[j - n] = st
        else:
            self.art_status[j - n - m] = st

    # pricing ------------------------------------------------------------

    def reduced_costs(self, costs_struct, art_cost):
        y = self.cB @ self.Binv
        d_struct = costs_struct - self.AT @ y
        d_slack = -y
        d = np.concatenate([d_struct, d_slack])
        if self.n_art:
            d_art = np.full(self.n_art, art_cost)
            for col, row in self.art_of_row.items():
                d_art[col - self.n - self.m] = art_cost + y[row]
            d = np.concatenate([d, d_art])
        return d, y

    def choose_entering(self, d, bland):
        n, m = self.n, self.m
        total = n + m + self.n_art
        stat = np.concatenate([
            self.status,
            self.slack_status,
            self.art_status if self.n_art else np.empty(0, dtype=np.int8),
        ])
        lo = np.concatenate([self.lb, np.zeros(m), np.zeros(self.n_art)])
        hi = np.concatenate([
            self.ub,
            np.full(m, np.inf),
            np.full(self.n_art, np.inf if self.phase == 1 else 0.0),
        ])
        movable = (stat != BasisStatus.BASIC) & (hi > lo)
        viol = np.zeros(total)
        at_lower = movable & (stat == BasisStatus.LOWER) & (d < -DUAL_TOL)
        at_upper = movable & (stat == BasisStatus.UPPER) & (d > DUAL_TOL)
        viol[at_lower] = -d[at_lower]
        viol[at_upper] = d[at_upper]
        if not viol.any():
            return -1
        if bland:
            return int(np.flatnonzero(viol > 0)[0])
        return int(np.argmax(viol))

    # pivoting -----------------------------------------------------------

    def ratio_test(self, q, sigma, w):
        """Smallest step before a basic variable or q's own range blocks."""
        lo_q, hi_q = self.col_bounds(q)
        t_own = hi_q - lo_q
        move = sigma * w
        cand = np.flatnonzero(np.abs(w) > PIVOT_TOL)
        t_rows = np.inf
        r_best = -1  # -1 means own-bound flip
        if cand.size:
            mc = move[cand]
            ratios = np.full(cand.size, np.inf)
            dn = mc > 0  # basic value dropping toward its lower bound
            up = mc < 0
            gap_lo = np.maximum(self.xB[cand] - self.basic_lo[cand], 0.0)
            gap_hi = self.basic_hi[cand] - self.xB[cand]
            ratios[dn] = gap_lo[dn] / mc[dn]
            fin_up = up & np.isfinite(gap_hi)
            ratios[fin_up] = np.maximum(gap_hi[fin_up], 0.0) / (-mc[fin_up])
            t_rows = float(ratios.min())
            if np.isfinite(t_rows):
                # among near-ties prefer the numerically largest pivot
                sel = cand[ratios <= t_rows + 1e-9]
                r_best = int(sel[np.argmax(np.abs(w[sel]))])
        if t_own < t_rows:
            if not np.isfinite(t_own):
                raise ContractError("LP unbounded: outside the boxed model class")
            return t_own, -1
        if not np.isfinite(t_rows):
            raise ContractError("LP unbounded: outside the boxed model class")
        return t_rows, r_best

    def refresh_basic_bounds(self):
        lo = np.empty(self.m)
        hi = np.empty(self.m)
        for i, j in enumerate(self.basis):
            lo[i], hi[i] = self.col_bounds(j)
        self.basic_lo = lo
        self.basic_hi = hi

    def refactorize(self):
        n, m = self.n, self.m
        B = np.zeros((m, m))
        for i, j in enumerate(self.basis):
            if j < n:
                sl = slice(self.Acsc.indptr[j], self.Acsc.indptr[j + 1])
                B[self.Acsc.indices[sl], i] = self.Acsc.data[sl]
            elif j < n + m:
                B[j - n, i] = 1.0
            else:
                B[self.art_of_row[j], i] = -1.0
        self.Binv = np.linalg.inv(B)
        # recompute basic values from scratch to clear drift; nonbasic slacks
        # and artificials sit at zero so only structurals feed the rhs
        x = self.xvals.copy()
        x[self.status == BasisStatus.BASIC] = 0.0
        self.xB = self.Binv @ (self.inst.rhs - self.A @ x)
        self.pivots_since_refactor = 0

    def pivot(self, q, r, sigma, t, w):
        leave = self.basis[r]
        self.xB -= sigma * t * w
        enter_val = self.nonbasic_value(q) + sigma * t
        move = sigma * w[r]
        self.set_status(leave, BasisStatus.LOWER if move > 0 else BasisStatus.UPPER)
        self.set_status(q, BasisStatus.BASIC)
        self.basis[r] = q
        pr = self.Binv[r] / w[r]
        self.Binv -= np.outer(w, pr)
        self.Binv[r] = pr
        self.xB[r] = enter_val
        self.basic_lo[r], self.basic_hi[r] = self.col_bounds(q)
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= REFACTOR_EVERY:
            self.refactorize()

    # main loop ----------------------------------------------------------

    def run_phase(self, costs_struct, art_cost, iter_limit):
        n, m = self.n, self.m
        bland = False
        d = y = None
        while self.iterations < iter_limit:
            self.cB = np.zeros(m)
            struct = self.basis < n
            self.cB[struct] = costs_struct[self.basis[struct]]
            if art_cost and self.n_art:
                self.cB[self.basis >= n + m] = art_cost
            d, y = self.reduced_costs(costs_struct, art_cost)
            q = self.choose_entering(d, bland)
            if q < 0:
                return "optimal", d, y
            sigma = 1.0 if self.col_status(q) == BasisStatus.LOWER else -1.0
            w = self.ftran(q)
            t, r = self.ratio_test(q, sigma, w)
            self.iterations += 1
            if t <= 1e-10:
                self.degenerate_streak += 1
                if self.degenerate_streak >= STALL_LIMIT:
                    bland = True
            else:
                self.degenerate_streak = 0
                bland = False
            if r < 0:
                # bound flip: q runs across its whole range, basis unchanged
                self.xB -= sigma * t * w
                self.set_status(
                    q,
                    BasisStatus.UPPER if sigma > 0 else BasisStatus.LOWER,
                )
            else:
                self.pivot(q, r, sigma, t, w)
        return "iteration_limit", d, y

    def solve(self, costs, iter_limit):
        self.art_status = np.full(self.n_art, BasisStatus.BASIC, dtype=np.int8)
        self.phase = 1
        self.refresh_basic_bounds()
        if self.n_art:
            zero = np.zeros(self.n)
            outcome, _, _ = self.run_phase(zero, 1.0, iter_limit)
            art_sum = sum(
                self.xB[i] for i, j in enumerate(self.basis) if j >= self.n + self.m
            )
            if outcome == "iteration_limit":
                return LpStatus.ITERATION_LIMIT, None, None
            if art_sum > 1e-7:
                return LpStatus.INFEASIBLE, None, None
            self.phase = 2
            self.refresh_basic_bounds()  # artificial range collapses to {0}
        else:
            self.phase = 2
        outcome, d, y = self.run_phase(costs, 0.0, iter_limit)
        if outcome == "iteration_limit":
            return LpStatus.ITERATION_LIMIT, d, y
        return LpStatus.OPTIMAL, d, y

    def extract(self):
        x = self.xvals.copy()
        for i, j in enumerate(self.basis):
            if j < self.n:
                x[j] = min(max(self.xB[i], self.lb[j]), self.ub[j])
        return x


def solve_lp(
    instance: IpInstance,
    fixings=None,
    warm_values=None,
    iter_limit: int | None = None,
) -> LpSolution:
    """Solve the box relaxation of ``instance`` with optional 0/1 fixings.

    ``warm_values`` may carry an integral point whose bound pattern seeds
    the nonbasic statuses; when that point is feasible, phase 1 is skipped
    entirely.  Returns reduced costs and per-variable basis status at
    optimality.
    """
    n = instance.n_vars
    mask, fvals = _normalize_fixings(instance, fixings)
    lb = np.where(mask, fvals, 0.0)
    ub = np.where(mask, fvals, 1.0)
    if warm_values is not None:
        warm_values = np.asarray(warm_values, dtype=np.float64).copy()
        warm_values[mask] = fvals[mask]
    if iter_limit is None:
        iter_limit = 50 * (instance.n_cons + n) + 1000

    if instance.n_cons == 0:
        x = np.where(instance.objective < 0, ub, lb)
        status = np.where(x >= 0.5, BasisStatus.UPPER, BasisStatus.LOWER).astype(np.int8)
        return LpSolution(
            primal=x,
            objective=float(instance.objective @ x),
            reduced_costs=instance.objective.copy(),
            basis_status=status,
            iterations=0,
            status=LpStatus.OPTIMAL,
        )

    spx = _Simplex(instance, lb, ub, warm_values)
    status, d, _ = spx.solve(instance.objective, iter_limit)
    if status is not LpStatus.OPTIMAL:
        return LpSolution(
            primal=np.zeros(n),
            objective=np.inf,
            reduced_costs=np.zeros(n),
            basis_status=np.zeros(n, dtype=np.int8),
            iterations=spx.iterations,
            status=status,
        )
    x = spx.extract()
    return LpSolution(
        primal=x,
        objective=float(instance.objective @ x),
        reduced_costs=d[:n].copy(),
        basis_status=spx.status.copy(),
        iterations=spx.iterations,
        status=status,
    )


# -- static feature extraction -------------------------------------------

STATIC_WIDTH = 10
CONDENSED_WIDTH = 1


def _objective_norm(instance) -> float:
    return max(float(np.linalg.norm(instance.objective)), 1e-12)


def root_static_features(instance: IpInstance, root_lp: LpSolution) -> np.ndarray:
    """Per-variable static features from the root relaxation (width 10).

    Columns: normalized reduced cost, normalized objective coefficient,
    LP age (constant zero at the root), at-lower-bound flag, at-upper-bound
    flag, fractionality in [0, 1], one-hot basis status (lower, basic,
    upper), root solution value.
    """
    if root_lp.status is not LpStatus.OPTIMAL:
        raise ContractError("static features need an optimal root relaxation")
    n = instance.n_vars
    norm = _objective_norm(instance)
    x = root_lp.primal
    feats = np.zeros((n, STATIC_WIDTH))
    feats[:, 0] = root_lp.reduced_costs / norm
    feats[:, 1] = instance.objective / norm
    # column 2: LP age, identically zero at the root
    feats[:, 3] = (x <= core.FEAS_TOL).astype(float)
    feats[:, 4] = (x >= 1.0 - core.FEAS_TOL).astype(float)
    feats[:, 5] = 2.0 * np.abs(x - np.rint(x))
    for st in (BasisStatus.LOWER, BasisStatus.BASIC, BasisStatus.UPPER):
        feats[root_lp.basis_status == st, 6 + int(st)] = 1.0
    feats[:, 9] = x
    return feats


def condensed_static_features(instance: IpInstance) -> np.ndarray:
    """Single-column static features: normalized objective coefficients."""
    return (instance.objective / _objective_norm(instance)).reshape(-1, 1)
