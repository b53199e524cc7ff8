"""Repair operators: re-optimize the freed variables of a solution.

The sub-problem fixes every variable outside the free mask at its current
value and solves the rest exactly, either by the internal depth-first
branch-and-bound (LP bounding, most-fractional branching) or by invoking an
external solver binary on an MPS export.  Because the search is seeded with
the current solution, repair can never return anything worse.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import IpInstance, Solution, evaluate, is_feasible, trivial_solution
from .errors import AdapterError, ContractError
from .mps import read_solution, write_mps
from .simplex import LpStatus, solve_lp

INT_TOL = 1e-6
PRUNE_TOL = 1e-9


class SubIpStatus(Enum):
    OPTIMAL = "optimal"
    TIME_LIMIT = "time_limit"
    INFEASIBLE_SUBPROBLEM = "infeasible_subproblem"


@dataclass
class SubIpRequest:
    """One repair call: free the masked variables, keep the rest pinned."""

    instance: IpInstance
    free_mask: np.ndarray
    warm_start: Solution
    time_limit: float | None = 2.0
    gap_limit: float | None = None
    node_limit: int | None = None

    def __post_init__(self):
        self.free_mask = np.asarray(self.free_mask, dtype=bool)
        if self.free_mask.size != self.instance.n_vars:
            raise ContractError("free mask length does not match the instance")


@dataclass
class SubIpResult:
    solution: Solution
    status: SubIpStatus
    nodes_explored: int
    bound: float


def solve_subip(request: SubIpRequest) -> SubIpResult:
    """Depth-first branch-and-bound over the free variables.

    Bounds come from the LP relaxation under the node fixings; branching
    picks the most fractional free variable (ties to the lowest index) and
    explores the LP-suggested rounding first.  The warm start is the
    initial incumbent, so the result never worsens and always agrees with
    it on the fixed variables.  Status is ``optimal`` only when the tree
    was exhausted.
    """
    inst = request.instance
    warm = request.warm_start
    if not is_feasible(inst, warm.values):
        raise ContractError("warm start must be feasible")
    deadline = None
    if request.time_limit is not None:
        deadline = time.perf_counter() + request.time_limit
    node_limit = request.node_limit

    incumbent = warm.copy()
    base_mask = ~request.free_mask
    base_vals = np.where(base_mask, warm.values.astype(np.float64), 0.0)

    root_bound = -np.inf
    nodes = 0
    out_of_budget = (
        request.time_limit is not None and request.time_limit <= 0
    ) or (node_limit is not None and node_limit <= 0)
    # stack entries: (fix_mask, fix_vals, parent LP bound)
    stack = [(base_mask, base_vals, -np.inf)]
    exhausted = True
    while stack:
        if out_of_budget or (deadline is not None and time.perf_counter() >= deadline):
            exhausted = False
            break
        if node_limit is not None and nodes >= node_limit:
            exhausted = False
            break
        fmask, fvals, parent_bound = stack.pop()
        if parent_bound >= incumbent.objective_value - PRUNE_TOL:
            continue
        lp = solve_lp(inst, fixings=(fmask, fvals), warm_values=warm.values)
        nodes += 1
        if lp.status is LpStatus.INFEASIBLE:
            if nodes == 1:
                raise AssertionError("sub-IP root LP infeasible despite feasible warm start")
            continue
        if nodes == 1:
            root_bound = lp.objective
        if lp.objective >= incumbent.objective_value - PRUNE_TOL:
            continue
        if request.gap_limit is not None:
            open_bound = min([parent_bound] + [e[2] for e in stack] + [lp.objective])
            denom = max(abs(incumbent.objective_value), abs(open_bound), 1e-10)
            if (incumbent.objective_value - open_bound) / denom <= request.gap_limit:
                exhausted = False
                break
        frac = np.abs(lp.primal - np.rint(lp.primal))
        frac[fmask] = 0.0
        j = int(np.argmax(frac))
        if frac[j] <= INT_TOL:
            cand = np.rint(lp.primal).astype(np.int8)
            cand[fmask] = fvals[fmask].astype(np.int8)
            if is_feasible(inst, cand):
                obj = evaluate(inst, cand)
                if obj < incumbent.objective_value - PRUNE_TOL:
                    incumbent = Solution(cand, obj)
                continue
            # rounding broke feasibility: branch on any remaining free var
            free_left = np.flatnonzero(~fmask)
            if free_left.size == 0:
                continue
            j = int(free_left[0])
        first = 1.0 if lp.primal[j] >= 0.5 else 0.0
        for val in (1.0 - first, first):  # preferred child on top of the stack
            cmask = fmask.copy()
            cvals = fvals.copy()
            cmask[j] = True
            cvals[j] = val
            stack.append((cmask, cvals, lp.objective))

    if exhausted:
        status = SubIpStatus.OPTIMAL
        bound = incumbent.objective_value
    else:
        status = SubIpStatus.TIME_LIMIT
        open_bounds = [e[2] for e in stack if np.isfinite(e[2])]
        bound = min(open_bounds) if open_bounds else root_bound
    return SubIpResult(incumbent, status, nodes, float(bound))


def external_repair(request: SubIpRequest, solver_cmd: str) -> SubIpResult:
    """Run an external solver on the sub-problem via MPS files.

    ``solver_cmd`` is a template with ``{mps}``, ``{sol}`` and ``{tl}``
    placeholders.  The solver must exit 0 and write a solution file holding
    an objective line followed by ``name value`` pairs.  Anything missing,
    worse than the warm start, or infeasible falls back to the warm start.
    """
    inst = request.instance
    warm = request.warm_start
    fixed = np.flatnonzero(~request.free_mask)
    tl = min(request.time_limit if request.time_limit is not None else 86400.0, 86400.0)
    with tempfile.TemporaryDirectory(prefix="lnsip_repair_") as tmp:
        mps_path = os.path.join(tmp, "subip.mps")
        sol_path = os.path.join(tmp, "subip.sol")
        write_mps(inst, mps_path, fixings={int(j): int(warm.values[j]) for j in fixed})
        cmd = solver_cmd.format(mps=mps_path, sol=sol_path, tl=tl)
        try:
            proc = subprocess.run(
                shlex.split(cmd),
                capture_output=True,
                text=True,
                timeout=tl + 5.0,
            )
        except subprocess.TimeoutExpired as exc:
            raise AdapterError(
                f"external solver exceeded {tl + 5.0:.1f}s", str(exc)
            ) from exc
        raw = proc.stdout + proc.stderr
        if proc.returncode != 0:
            raise AdapterError(
                f"external solver exited with code {proc.returncode}", raw
            )
        if not os.path.exists(sol_path):
            raise AdapterError("external solver produced no solution file", raw)
        try:
            _, named = read_solution(sol_path)
        except ValueError as exc:
            raise AdapterError(f"unparsable solution file: {exc}", raw) from exc

    values = warm.values.astype(np.float64).copy()
    for name, v in named.items():
        if name.startswith("x") and name[1:].isdigit():
            j = int(name[1:])
            if j < inst.n_vars:
                values[j] = v
    values = np.rint(values).astype(np.int8)
    values[fixed] = warm.values[fixed]
    candidate_ok = is_feasible(inst, values)
    obj = evaluate(inst, values) if candidate_ok else np.inf
    if candidate_ok and obj < warm.objective_value - PRUNE_TOL:
        return SubIpResult(Solution(values, obj), SubIpStatus.TIME_LIMIT, 0, -np.inf)
    return SubIpResult(warm.copy(), SubIpStatus.TIME_LIMIT, 0, -np.inf)


class InternalRepair:
    """Default zero-dependency backend; optional deterministic node budget."""

    def __init__(self, node_limit: int | None = None):
        self.node_limit = node_limit

    def __call__(self, request: SubIpRequest) -> SubIpResult:
        if self.node_limit is not None and request.node_limit is None:
            request = SubIpRequest(
                request.instance,
                request.free_mask,
                request.warm_start,
                time_limit=request.time_limit,
                gap_limit=request.gap_limit,
                node_limit=self.node_limit,
            )
        return solve_subip(request)


class ExternalRepair:
    """Adapter backend wrapping a solver command template."""

    def __init__(self, solver_cmd: str):
        self.solver_cmd = solver_cmd

    def __call__(self, request: SubIpRequest) -> SubIpResult:
        return external_repair(request, self.solver_cmd)


def initial_solution(
    instance: IpInstance, budget: float, backend=None
) -> Solution:
    """Feasible starting point: the trivial point improved for ``budget`` seconds.

    With a zero budget the trivial point is returned as-is.  Instances
    without a trivial point (neither all-zeros nor all-ones feasible) fall
    back to a first-feasible depth-first dive.
    """
    start = trivial_solution(instance)
    if start is None:
        start = _find_feasible(instance, budget if budget > 0 else 10.0)
    if budget <= 0:
        return start
    backend = backend or solve_subip
    request = SubIpRequest(
        instance,
        free_mask=np.ones(instance.n_vars, dtype=bool),
        warm_start=start,
        time_limit=budget,
    )
    return backend(request).solution


def _find_feasible(instance: IpInstance, budget: float) -> Solution:
    """Depth-first dive to any integral feasible point (no optimality)."""
    deadline = time.perf_counter() + budget
    n = instance.n_vars
    stack = [(np.zeros(n, dtype=bool), np.zeros(n))]
    while stack and time.perf_counter() < deadline:
        fmask, fvals = stack.pop()
        lp = solve_lp(instance, fixings=(fmask, fvals))
        if lp.status is not LpStatus.OPTIMAL:
            continue
        frac = np.abs(lp.primal - np.rint(lp.primal))
        frac[fmask] = 0.0
        j = int(np.argmax(frac))
        if frac[j] <= INT_TOL:
            cand = np.rint(lp.primal).astype(np.int8)
            cand[fmask] = fvals[fmask].astype(np.int8)
            if is_feasible(instance, cand):
                return Solution.from_values(instance, cand)
            continue
        first = 1.0 if lp.primal[j] >= 0.5 else 0.0
        for val in (1.0 - first, first):
            cmask = fmask.copy()
            cvals = fvals.copy()
            cmask[j] = True
            cvals[j] = val
            stack.append((cmask, cvals))
    raise ContractError("no feasible point found within the budget")
