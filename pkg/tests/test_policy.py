import numpy as np
import pytest
import scipy.sparse as sp

from lnsip import generators as g
from lnsip.autodiff import Tape, backward, zero_grads
from lnsip.core import IpInstance
from lnsip.errors import ConfigError, ContractError
from lnsip.policy import (
    ActionMask,
    BipartiteState,
    CriticParams,
    PolicyParams,
    actor_forward,
    clip_probs,
    critic_forward,
    log_prob,
    sample_action,
    state_from_instance,
)

from oracles import central_diff


def random_state(n, m, d, seed=0):
    rng = np.random.default_rng(seed)
    edges = sp.csr_matrix((rng.random((m, n)) < 0.4) * rng.normal(size=(m, n)))
    return BipartiteState(
        var_features=rng.normal(size=(n, d)),
        con_features=rng.normal(size=(m, 1)),
        edges=edges,
        edges_t=edges.T.tocsr(),
    )


class TestActorForward:
    def test_zero_weights_give_half(self):
        state = random_state(6, 4, 5, seed=1)
        actor = PolicyParams(5).zero_()
        p = actor_forward(actor, state).data
        np.testing.assert_array_equal(p, np.full((6, 1), 0.5))

    @pytest.mark.parametrize("n", [4, 1000, 2000])
    def test_same_params_any_size(self, n):
        actor = PolicyParams(4, rng=np.random.default_rng(3))
        state = random_state(n, max(2, n // 2), 4, seed=n)
        p = actor_forward(actor, state).data
        assert p.shape == (n, 1)
        assert np.all((p > 0) & (p < 1))

    def test_hand_executed_constant_weight_toy(self):
        # one variable, one constraint, constant-filled weights: every
        # embedding row is constant, layer norm zeroes it, so the conv
        # rounds are identity and the MLP reduces to scalar arithmetic
        inst = IpInstance("toy", [1.0], sp.csr_matrix(np.array([[2.0]])), [1.0])
        state = state_from_instance(inst, np.array([[0.5]]))
        actor = PolicyParams(1).zero_()
        actor.params["var_proj_w"].data[:] = 0.1
        actor.params["mlp_w1"].data[:] = 0.01
        actor.params["mlp_w2"].data[:] = 0.02
        actor.params["mlp_w3"].data[:] = 0.03
        actor.params["mlp_b3"].data[:] = 0.25

        v0 = 0.5 * 0.1
        h1 = np.tanh(v0 * 128 * 0.01)
        h2 = np.tanh(h1 * 256 * 0.02)
        z = h2 * 128 * 0.03 + 0.25
        expected = 1.0 / (1.0 + np.exp(-z))
        p = actor_forward(actor, state).data[0, 0]
        assert p == pytest.approx(expected, abs=1e-12)

    def test_variable_permutation_equivariance(self):
        inst = g.generate_sc(rows=15, cols=8, density=0.3, seed=2)
        state = state_from_instance(inst, np.random.default_rng(0).normal(size=(8, 4)))
        actor = PolicyParams(4, rng=np.random.default_rng(1))
        p = actor_forward(actor, state).data.ravel()
        perm = np.random.default_rng(2).permutation(8)
        pstate = BipartiteState(
            var_features=state.var_features[perm],
            con_features=state.con_features,
            edges=sp.csr_matrix(state.edges.toarray()[:, perm]),
            edges_t=sp.csr_matrix(state.edges.toarray()[:, perm].T),
        )
        pp = actor_forward(actor, pstate).data.ravel()
        np.testing.assert_allclose(pp, p[perm], atol=1e-9)


class TestClipProbs:
    def test_low_probability_raised_to_epsilon(self):
        assert clip_probs(np.array([0.01]), 0.2)[0] == 0.2

    def test_interior_fixed_point(self):
        assert clip_probs(np.array([0.5]), 0.2)[0] == 0.5

    def test_zero_epsilon_is_identity(self):
        p = np.array([0.001, 0.999, 0.42])
        np.testing.assert_array_equal(clip_probs(p, 0.0), p)

    def test_invalid_epsilon(self):
        with pytest.raises(ConfigError):
            clip_probs(np.array([0.5]), 0.5)


class TestSampleAction:
    def test_conditional_probability_two_vars(self):
        rng = np.random.default_rng(0)
        hits = sum(
            sample_action(np.array([0.5, 0.5]), rng).selected[0] for _ in range(40000)
        )
        # of the four raw outcomes only {10, 01} survive masking
        assert hits / 40000 == pytest.approx(0.5, abs=0.01)

    def test_frequencies_track_clipped_probabilities(self):
        rng = np.random.default_rng(1)
        p = clip_probs(np.array([0.05, 0.3, 0.5, 0.7, 0.95]), 0.2)
        counts = np.zeros(5)
        n_draws = 20000
        for _ in range(n_draws):
            counts += sample_action(p, rng).selected
        freq = counts / n_draws
        np.testing.assert_allclose(freq, p, atol=0.02)
        assert np.all((freq >= 0.18) & (freq <= 0.82))

    def test_never_degenerate(self):
        rng = np.random.default_rng(2)
        for p in (np.full(4, 0.001), np.full(4, 0.999)):
            for _ in range(200):
                mask = sample_action(p, rng)
                assert 0 < mask.size < 4

    def test_mask_invariant_enforced(self):
        with pytest.raises(ContractError):
            ActionMask(np.zeros(3, dtype=bool))
        with pytest.raises(ContractError):
            ActionMask(np.ones(3, dtype=bool))


class TestLogProb:
    def test_half_probabilities(self):
        p = np.array([0.5, 0.5])
        mask = ActionMask(np.array([True, False]))
        assert log_prob(p, mask) == pytest.approx(np.log(0.25))

    def test_direct_arithmetic(self):
        p = np.array([0.8, 0.2])
        mask = ActionMask(np.array([True, False]))
        assert log_prob(p, mask) == pytest.approx(2 * np.log(0.8))

    def test_factorized_distribution_sums_to_one(self):
        rng = np.random.default_rng(3)
        n = 10
        p = clip_probs(rng.random(n), 0.2)
        total = 0.0
        for code in range(1 << n):
            bits = np.array([(code >> i) & 1 for i in range(n)], dtype=float)
            total += float(np.prod(np.where(bits > 0, p, 1 - p)))
        assert abs(total - 1.0) < 1e-12

    def test_gradient_matches_finite_differences(self):
        state = random_state(5, 4, 3, seed=5)
        actor = PolicyParams(3, rng=np.random.default_rng(6))
        mask = ActionMask(np.array([True, False, True, False, False]))

        def run():
            tape = Tape()
            probs = clip_probs(actor_forward(actor, state, tape), 0.2, tape)
            lp = log_prob(probs, mask, tape)
            backward(tape, lp)
            return lp.item()

        run()
        grads = {k: v.grad.copy() for k, v in actor.params.items() if v.grad is not None}
        zero_grads(actor.params)
        rng = np.random.default_rng(7)
        for _ in range(12):
            name = list(grads)[int(rng.integers(len(grads)))]
            t = actor.params[name]
            idx = (int(rng.integers(t.shape[0])), int(rng.integers(t.shape[1])))

            def loss_only():
                val = run()
                zero_grads(actor.params)
                return val

            fd = central_diff(loss_only, t, idx)
            assert abs(grads[name][idx] - fd) / (abs(fd) + 1e-8) < 1e-3


class TestCriticForward:
    def test_zero_weights_give_exact_zero(self):
        state = random_state(6, 4, 5, seed=8)
        critic = CriticParams(5).zero_()
        mask = ActionMask(np.array([True, False, True, False, False, True]))
        assert critic_forward(critic, state, mask).item() == 0.0

    def test_variable_permutation_invariance(self):
        inst = g.generate_mis(nodes=9, affinity=2, seed=3)
        state = state_from_instance(inst, np.random.default_rng(1).normal(size=(9, 4)))
        critic = CriticParams(4, rng=np.random.default_rng(2))
        mask = ActionMask(np.random.default_rng(3).random(9) < 0.5)
        q = critic_forward(critic, state, mask).item()
        perm = np.random.default_rng(4).permutation(9)
        pstate = BipartiteState(
            var_features=state.var_features[perm],
            con_features=state.con_features,
            edges=sp.csr_matrix(state.edges.toarray()[:, perm]),
            edges_t=sp.csr_matrix(state.edges.toarray()[:, perm].T),
        )
        pq = critic_forward(critic, pstate, ActionMask(mask.selected[perm])).item()
        assert pq == pytest.approx(q, abs=1e-9)

    def test_hand_executed_constant_weight_toy(self):
        # two variables, one constraint; constant-filled weights keep each
        # embedding row constant, so layer norm zeroes the conv messages and
        # the value reduces to scalar arithmetic on the pooled projection
        inst = IpInstance("toy", [1.0, 1.0], sp.csr_matrix(np.array([[2.0, 0.0]])), [1.0])
        state = state_from_instance(inst, np.array([[0.5], [0.3]]))
        critic = CriticParams(1).zero_()
        critic.params["var_proj_w"].data[0, :] = 0.1   # feature row
        critic.params["var_proj_w"].data[1, :] = 0.2   # selection bit row
        critic.params["mlp_w1"].data[:] = 0.01
        critic.params["mlp_w2"].data[:] = 0.02
        critic.params["mlp_w3"].data[:] = 0.03
        mask = ActionMask(np.array([True, False]))

        v_sel = 0.5 * 0.1 + 1.0 * 0.2
        v_unsel = 0.3 * 0.1
        pooled = (v_sel + v_unsel) / 2.0
        h1 = np.tanh(pooled * 128 * 0.01)
        h2 = np.tanh(h1 * 256 * 0.02)
        expected = h2 * 128 * 0.03
        q = critic_forward(critic, state, mask).item()
        assert q == pytest.approx(expected, abs=1e-12)


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        actor = PolicyParams(4, rng=np.random.default_rng(5))
        path = tmp_path / "actor.ckpt"
        actor.save(path)
        loaded = PolicyParams.load(path)
        state = random_state(7, 5, 4, seed=9)
        np.testing.assert_array_equal(
            actor_forward(actor, state).data, actor_forward(loaded, state).data
        )

    def test_kind_mismatch_rejected(self, tmp_path):
        critic = CriticParams(4)
        path = tmp_path / "critic.ckpt"
        critic.save(path)
        with pytest.raises(ConfigError):
            PolicyParams.load(path)

    def test_census_validated(self, tmp_path):
        actor = PolicyParams(4)
        path = tmp_path / "actor.ckpt"
        actor.save(path)
        import json

        raw = path.read_bytes()
        header, _, body = raw.partition(b"\n")
        payload = json.loads(header)
        payload["meta"]["feature_width"] = 7  # census no longer matches
        path.write_bytes(json.dumps(payload, sort_keys=True).encode() + b"\n" + body)
        with pytest.raises(ConfigError):
            PolicyParams.load(path)
