import os
import sys

import numpy as np
import pytest

from lnsip import generators as g
from lnsip.core import Solution, evaluate, trivial_solution
from lnsip.errors import AdapterError, ContractError
from lnsip.repair import (
    ExternalRepair,
    InternalRepair,
    SubIpRequest,
    SubIpStatus,
    external_repair,
    initial_solution,
    solve_subip,
)

from oracles import brute_force_best

HELPER = os.path.join(os.path.dirname(__file__), "helper_solver.py")


def helper_cmd(mode="solve"):
    return f"{sys.executable} {HELPER} {{mps}} {{sol}} {{tl}} {mode}"


def desk_instance(k):
    fam = ["sc", "mis", "ca", "mc"][k % 4]
    if fam == "sc":
        return g.generate_sc(rows=35, cols=18, density=0.15, seed=200 + k)
    if fam == "mis":
        return g.generate_mis(nodes=18, affinity=3, seed=200 + k)
    if fam == "ca":
        return g.generate_ca(items=8, bids=16, seed=200 + k)
    return g.generate_mc(nodes=8, attachment=2, seed=200 + k)


def random_request(inst, rng, n_free=10, time_limit=None):
    warm = trivial_solution(inst)
    free = np.zeros(inst.n_vars, dtype=bool)
    free[rng.choice(inst.n_vars, size=min(n_free, inst.n_vars - 1), replace=False)] = True
    return SubIpRequest(inst, free, warm, time_limit=time_limit)


class TestSolveSubIp:
    def test_single_free_variable_two_leaf_tree(self):
        inst = g.generate_golden(n_vars=8, seed=1)
        gi = g.golden_index(inst)
        warm = Solution.from_values(inst, np.zeros(8, dtype=np.int8))
        free = np.zeros(8, dtype=bool)
        free[gi] = True
        res = solve_subip(SubIpRequest(inst, free, warm, time_limit=None))
        assert res.status is SubIpStatus.OPTIMAL
        # flipping the profitable variable is the better of the two leaves
        assert res.solution.values[gi] == 1
        assert res.solution.objective_value == inst.objective[gi]

    @pytest.mark.parametrize("k", range(12))
    def test_matches_brute_force_exactly(self, k):
        inst = desk_instance(k)
        rng = np.random.default_rng(k)
        req = random_request(inst, rng, n_free=12)
        res = solve_subip(req)
        ref_obj, _ = brute_force_best(
            inst, free_mask=req.free_mask, base_values=req.warm_start.values
        )
        assert res.status is SubIpStatus.OPTIMAL
        assert res.solution.objective_value == ref_obj

    def test_never_worsens_and_preserves_fixed(self):
        rng = np.random.default_rng(9)
        for k in range(30):
            inst = desk_instance(k)
            req = random_request(inst, rng, n_free=int(rng.integers(1, inst.n_vars)))
            res = solve_subip(req)
            assert res.solution.objective_value <= req.warm_start.objective_value
            fixed = ~req.free_mask
            np.testing.assert_array_equal(
                res.solution.values[fixed], req.warm_start.values[fixed]
            )

    def test_zero_time_limit_returns_warm_start(self):
        inst = desk_instance(0)
        req = random_request(inst, np.random.default_rng(0), time_limit=0)
        res = solve_subip(req)
        assert res.status is SubIpStatus.TIME_LIMIT
        assert res.nodes_explored == 0
        assert res.solution.objective_value == req.warm_start.objective_value

    def test_node_limit_is_deterministic(self):
        inst = desk_instance(1)
        rng = np.random.default_rng(4)
        req = random_request(inst, rng, n_free=14)
        req.node_limit = 3
        a = solve_subip(req)
        b = solve_subip(req)
        assert a.nodes_explored == b.nodes_explored <= 3
        assert a.solution.objective_value == b.solution.objective_value

    def test_infeasible_warm_start_rejected(self):
        inst = g.generate_sc(rows=10, cols=6, density=0.3, seed=5)
        bad = Solution(np.zeros(6, dtype=np.int8), 0.0)  # uncovered rows
        with pytest.raises(ContractError):
            solve_subip(SubIpRequest(inst, np.ones(6, dtype=bool), bad))

    def test_determinism_without_time_limit(self):
        inst = desk_instance(2)
        req = random_request(inst, np.random.default_rng(11), n_free=12)
        a = solve_subip(SubIpRequest(inst, req.free_mask, req.warm_start, time_limit=None))
        b = solve_subip(SubIpRequest(inst, req.free_mask, req.warm_start, time_limit=None))
        assert a.nodes_explored == b.nodes_explored
        np.testing.assert_array_equal(a.solution.values, b.solution.values)


class TestExternalRepair:
    def test_echo_falls_back_to_warm_start(self):
        inst = desk_instance(0)
        req = random_request(inst, np.random.default_rng(1), n_free=6)
        res = external_repair(req, helper_cmd("echo"))
        assert res.status is SubIpStatus.TIME_LIMIT
        assert res.solution.objective_value <= req.warm_start.objective_value

    @pytest.mark.parametrize("k", range(6))
    def test_backend_equivalence_on_exact_subproblems(self, k):
        inst = desk_instance(k)
        rng = np.random.default_rng(30 + k)
        req = random_request(inst, rng, n_free=8, time_limit=60)
        internal = solve_subip(
            SubIpRequest(inst, req.free_mask, req.warm_start, time_limit=None)
        )
        external = ExternalRepair(helper_cmd("solve"))(req)
        assert external.solution.objective_value == internal.solution.objective_value

    def test_solver_failure_carries_output(self):
        inst = desk_instance(0)
        req = random_request(inst, np.random.default_rng(2), n_free=4)
        with pytest.raises(AdapterError) as err:
            external_repair(req, helper_cmd("fail"))
        assert "simulated solver crash" in err.value.raw_output

    def test_garbage_output_is_an_adapter_error(self):
        inst = desk_instance(0)
        req = random_request(inst, np.random.default_rng(2), n_free=4)
        with pytest.raises(AdapterError):
            external_repair(req, helper_cmd("garbage"))


class TestInitialSolution:
    def test_generous_budget_reaches_optimum(self):
        inst = g.generate_sc(rows=25, cols=12, density=0.25, seed=6)
        sol = initial_solution(inst, budget=120.0)
        ref_obj, _ = brute_force_best(inst)
        assert sol.objective_value == ref_obj

    def test_mis_trivial_start(self):
        inst = g.generate_mis(nodes=12, affinity=3, seed=7)
        sol = initial_solution(inst, budget=0.0)
        assert sol.objective_value == 0.0
        better = initial_solution(inst, budget=5.0)
        assert better.objective_value <= 0.0

    def test_internal_backend_node_limit_passthrough(self):
        inst = g.generate_sc(rows=20, cols=10, density=0.3, seed=8)
        backend = InternalRepair(node_limit=1)
        sol = initial_solution(inst, budget=5.0, backend=backend)
        assert sol.objective_value <= evaluate(inst, np.ones(10))
