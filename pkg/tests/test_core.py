import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from lnsip.core import (
    IncumbentTracker,
    IpInstance,
    Solution,
    evaluate,
    is_feasible,
    record_incumbent,
    trivial_solution,
)
from lnsip.errors import ContractError, DimensionError
from lnsip.generators import generate_sc

from oracles import brute_force_best


def make_instance(objective, rows, rhs, name="t"):
    return IpInstance(name, objective, sp.csr_matrix(np.asarray(rows, dtype=float)), rhs)


class TestEvaluate:
    def test_zero_vector(self):
        inst = make_instance([1, 2, 3], [[1, 1, 1]], [3])
        assert evaluate(inst, [0, 0, 0]) == 0.0

    def test_direct_arithmetic(self):
        inst = make_instance([1, 2, 3], [[1, 1, 1]], [3])
        assert evaluate(inst, [1, 0, 1]) == 4.0

    def test_matches_brute_force_optimum_on_desk_sc(self):
        inst = generate_sc(rows=30, cols=10, density=0.3, seed=7)
        best_obj, best_values = brute_force_best(inst)
        assert evaluate(inst, best_values) == best_obj

    def test_length_mismatch(self):
        inst = make_instance([1, 2, 3], [[1, 1, 1]], [3])
        with pytest.raises(DimensionError):
            evaluate(inst, [1, 0])

    @given(
        st.lists(st.integers(-50, 50), min_size=1, max_size=8),
        st.integers(0, 255),
        st.integers(-5, 5),
    )
    @settings(max_examples=60, deadline=None)
    def test_linearity_in_objective_scaling(self, mu, bits, alpha):
        n = len(mu)
        x = [(bits >> i) & 1 for i in range(n)]
        inst = make_instance(mu, [[1] * n], [n])
        scaled = make_instance([alpha * c for c in mu], [[1] * n], [n])
        assert evaluate(scaled, x) == pytest.approx(alpha * evaluate(inst, x), abs=1e-9)


class TestIsFeasible:
    def test_violated(self):
        inst = make_instance([0, 0], [[1, 1]], [1])
        assert not is_feasible(inst, [1, 1])

    def test_satisfied(self):
        inst = make_instance([0, 0], [[1, 1]], [1])
        assert is_feasible(inst, [1, 0])

    def test_agreement_with_dense_oracle(self):
        rng = np.random.default_rng(5)
        inst = generate_sc(rows=15, cols=20, density=0.2, seed=5)
        dense = inst.matrix.toarray()
        for _ in range(1000):
            x = rng.integers(0, 2, size=20)
            expected = bool(np.all(dense @ x <= inst.rhs + 1e-6))
            assert is_feasible(inst, x) == expected

    @given(st.integers(0, 15), st.floats(0, 0.5), st.floats(0, 0.5))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_tolerance(self, bits, t1, t2):
        inst = make_instance([0] * 4, [[1, 1, 0, 0], [0, 1, 1, 1]], [1, 2])
        x = [(bits >> i) & 1 for i in range(4)]
        lo, hi = sorted((t1, t2))
        if is_feasible(inst, x, tol=lo):
            assert is_feasible(inst, x, tol=hi)


class TestIncumbentTracker:
    def setup_method(self):
        self.inst = make_instance([5, 3, 2], [[1, 1, 1]], [3])

    def test_tie_rejected(self):
        tracker = IncumbentTracker(Solution.from_values(self.inst, [1, 1, 1]))
        cand = Solution.from_values(self.inst, [1, 1, 1])
        assert not record_incumbent(tracker, cand)
        assert tracker.history_count == 1

    def test_improvement_accepted(self):
        tracker = IncumbentTracker(Solution.from_values(self.inst, [1, 1, 1]))
        cand = Solution.from_values(self.inst, [1, 1, 0])
        assert record_incumbent(tracker, cand)
        assert tracker.history_count == 2
        assert tracker.best.objective_value == 8.0

    def test_average_incumbent_feature(self):
        x0 = Solution.from_values(self.inst, [1, 1, 1])
        x1 = Solution.from_values(self.inst, [0, 1, 1])
        tracker = IncumbentTracker(x0)
        record_incumbent(tracker, x1)
        np.testing.assert_allclose(tracker.average_values, [0.5, 1.0, 1.0])

    def test_infeasible_candidate_rejected_with_error(self):
        inst = make_instance([1, 1], [[1, 1]], [1])
        tracker = IncumbentTracker(Solution.from_values(inst, [1, 0]))
        bad = Solution(np.array([1, 1], dtype=np.int8), -1.0)
        with pytest.raises(ContractError):
            record_incumbent(tracker, bad, inst)

    def test_best_objective_nonincreasing(self):
        rng = np.random.default_rng(2)
        inst = make_instance(rng.integers(-5, 6, size=6), [[1] * 6], [6])
        tracker = IncumbentTracker(Solution.from_values(inst, [1] * 6))
        seen = [tracker.best.objective_value]
        for _ in range(50):
            cand = Solution.from_values(inst, rng.integers(0, 2, size=6))
            record_incumbent(tracker, cand)
            seen.append(tracker.best.objective_value)
        assert all(b <= a + 1e-12 for a, b in zip(seen, seen[1:]))


class TestInstanceValidation:
    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            make_instance([1, 2], [[1, 1, 1]], [1])

    def test_nonfinite_coefficient(self):
        with pytest.raises(ContractError):
            make_instance([1, np.inf], [[1, 1]], [1])

    def test_immutability(self):
        inst = make_instance([1, 2], [[1, 1]], [1])
        with pytest.raises(ValueError):
            inst.objective[0] = 9.0

    def test_noninteger_solution_rejected(self):
        inst = make_instance([1, 2], [[1, 1]], [2])
        with pytest.raises(ContractError):
            Solution.from_values(inst, [0.5, 0])


def test_trivial_solution_families():
    from lnsip import generators as g

    assert np.all(trivial_solution(g.generate_sc(20, 10, 0.3, seed=1)).values == 1)
    assert np.all(trivial_solution(g.generate_mis(10, 2, seed=1)).values == 0)
    assert np.all(trivial_solution(g.generate_ca(5, 8, seed=1)).values == 0)
    assert np.all(trivial_solution(g.generate_mc(8, 2, seed=1)).values == 0)
