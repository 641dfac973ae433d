import numpy as np
import pytest

from lagrseq import kernels
from lagrseq.agents.bandit import QUERY, BanditAgent, bandit_update
from lagrseq.agents.dqn import DQNAgent, ReplayBuffer, dqn_train_step
from lagrseq.agents.mlp import (
    AdamState,
    MlpParams,
    NonFiniteError,
    gradient_check,
    load_params,
    mlp_forward,
    mse_loss_and_grad,
    mse_objective,
    param_count,
    regression_step,
    save_params,
)
from lagrseq.agents.tabular import TabularAgent, TabularQ, q_update, select_action
from lagrseq.core import make_rng


def hand_forward(sizes, theta, x):
    """Second implementation: explicit loops over layers with separate W, b slices."""
    pos, h = 0, np.asarray(x, float)
    for i in range(len(sizes) - 1):
        n_in, n_out = sizes[i], sizes[i + 1]
        W = theta[pos:pos + n_in * n_out].reshape(n_in, n_out)
        pos += n_in * n_out
        b = theta[pos:pos + n_out]
        pos += n_out
        h = np.array([sum(h[j] * W[j, k] for j in range(n_in)) + b[k] for k in range(n_out)])
        if i < len(sizes) - 2:
            h = np.maximum(h, 0)
    return h


class TestQUpdate:
    def test_terminal(self):
        q = TabularQ(2)
        assert q_update(q, "s", 1, 1.0, "t", [], True) == pytest.approx(0.1)
        assert q_update(q, "s", 1, 1.0, "t", [], True) == pytest.approx(0.19)

    def test_zero_fixed_point(self):
        q = TabularQ(2)
        assert q_update(q, "s", 0, 0.0, "t", [0, 1], False) == 0.0

    def test_bootstrap_over_legal_only(self):
        q = TabularQ(3, alpha=1.0, gamma=0.5)
        q._mutable_row("t")[:] = [1.0, 10.0, 2.0]
        assert q_update(q, "s", 0, 0.0, "t", [0, 2], False) == pytest.approx(1.0)

    def test_empty_legal_nonterminal(self):
        with pytest.raises(ValueError):
            q_update(TabularQ(2), "s", 0, 0.0, "t", [], False)

    def test_unseen_reads_zero(self):
        q = TabularQ(4)
        assert q.get("nowhere", 3) == 0.0 and "nowhere" not in q.table


class TestSelectAction:
    def test_greedy(self):
        assert select_action([1, 3, 2], [0, 1, 2], 0.0, make_rng(0)) == 1

    def test_uniform_exploration(self):
        rng = make_rng(1)
        n = 10_000
        counts = np.bincount([select_action([5, 0, 0, 0], [0, 1, 2, 3], 1.0, rng) for _ in range(n)], minlength=4)
        sigma = np.sqrt(n * 0.25 * 0.75)
        assert np.all(np.abs(counts - n / 4) < 3 * sigma)

    def test_tie_break(self):
        rng = make_rng(2)
        n = 10_000
        ones = sum(select_action([2, 2], [0, 1], 0.0, rng) for _ in range(n))
        assert abs(ones - n / 2) < 3 * np.sqrt(n / 4)

    def test_maps_through_legal(self):
        assert select_action([0.0, 9.0], [3, 7], 0.0, make_rng(0)) == 7

    def test_affine_invariance(self):
        vals = np.array([1.0, 4.0, 4.0, 2.0])
        r1, r2 = make_rng(5), make_rng(5)
        a = [select_action(vals, range(4), 0.0, r1) for _ in range(200)]
        b = [select_action(3 * vals + 7, range(4), 0.0, r2) for _ in range(200)]
        assert set(a) == {1, 2}
        assert a == b

    def test_empty(self):
        with pytest.raises(ValueError):
            select_action([], [], 0.0, make_rng(0))


class TestMlp:
    def test_zero_net(self, backend):
        p = MlpParams((3, 4, 2))
        assert np.all(mlp_forward(p, [1, 2, 3], backend) == 0)

    def test_identity_layer(self, backend):
        p = MlpParams((3, 3))
        w, b = p.layers()[0]
        w[...] = np.eye(3)
        assert np.allclose(mlp_forward(p, [1.0, -2.0, 3.0], backend), [1.0, -2.0, 3.0])

    def test_matches_hand_rolled(self, backend):
        rng = make_rng(3)
        p = MlpParams.init((3, 4, 2), rng)
        p.theta += rng.normal(p.theta.size, 0.1)
        x = np.array([0.3, -1.2, 0.7])
        assert np.allclose(mlp_forward(p, x, backend), hand_forward(p.sizes, p.theta, x), atol=1e-12)

    def test_batch_equals_rows(self, backend):
        rng = make_rng(4)
        p = MlpParams.init((5, 8, 3), rng)
        X = rng.normal((6, 5))
        assert np.allclose(mlp_forward(p, X, backend), [mlp_forward(p, x, backend) for x in X])

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            mlp_forward(MlpParams((3, 2)), [1, 2])
        with pytest.raises(ValueError):
            MlpParams((3, 2), np.zeros(3))
        assert param_count((6, 8, 8, 2)) == 6 * 8 + 8 + 8 * 8 + 8 + 8 * 2 + 2

    def test_backends_agree(self):
        if kernels.compiled_kernels is None:
            pytest.skip("compiled kernels not built")
        rng = make_rng(9)
        p = MlpParams.init((10, 16, 16, 3), rng)
        X = rng.normal((7, 10))
        a = rng.generator.integers(3, size=7)
        y = rng.normal(7)
        l0, g0 = mse_loss_and_grad(p, X, a, y, kernels.python_kernels)
        l1, g1 = mse_loss_and_grad(p, X, a, y, kernels.compiled_kernels)
        assert l0 == pytest.approx(l1, rel=1e-12) and np.allclose(g0, g1, rtol=1e-10, atol=1e-14)


class TestGradientCheck:
    def test_linear_net(self, backend):
        rng = make_rng(0)
        p = MlpParams.init((2, 1), rng)
        X = rng.normal((5, 2))
        obj = mse_objective(p.sizes, X, np.zeros(5, int), rng.normal(5), backend)
        rep = gradient_check(p, obj, tolerance=1e-6)
        assert rep.passed, rep

    def test_relu_net(self, backend):
        rng = make_rng(1)
        p = MlpParams.init((6, 8, 8, 2), rng)
        p.theta[:] += 0.05  # positive biases keep pre-activations away from 0
        X = rng.normal((4, 6))
        obj = mse_objective(p.sizes, X, rng.generator.integers(2, size=4), rng.normal(4), backend)
        assert gradient_check(p, obj).passed

    def test_corrupted_gradient_fails(self, backend):
        rng = make_rng(2)
        p = MlpParams.init((3, 4, 2), rng)
        X = rng.normal((4, 3))
        obj = mse_objective(p.sizes, X, [0, 1, 0, 1], rng.normal(4), backend)

        def bad(theta):
            g = obj.grad(theta)
            g[0] *= 2
            return g

        rep = gradient_check(p, obj, grad_fn=bad)
        assert not rep.passed and rep.worst_index == 0


class TestTraining:
    def test_regression_converges(self, backend):
        rng = make_rng(0)
        p = MlpParams.init((3, 8, 2), rng)
        adam = AdamState.for_params(p, lr=1e-2)
        x = np.array([[0.5, -0.2, 0.1]])
        for _ in range(500):
            regression_step(p, adam, x, [1], [1.0], backend)
        assert mlp_forward(p, x[0], backend)[1] == pytest.approx(1.0, abs=1e-2)
        assert adam.step == 500

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_aborts(self, backend):
        p = MlpParams((2, 1))
        adam = AdamState.for_params(p)
        with pytest.raises(NonFiniteError):
            regression_step(p, adam, [[np.inf, 1.0]], [0], [1.0], backend)

    def test_dqn_terminal_targets(self):
        rng = make_rng(1)
        net = MlpParams.init((4, 16, 2), rng)
        adam = AdamState.for_params(net, lr=1e-2)
        buf = ReplayBuffer(100, 4)
        s = np.array([1.0, 0.0, 0.5, 0.2])
        for _ in range(64):
            buf.push(s, 0, 1.0, s, True)
        for _ in range(2000):
            dqn_train_step(net, adam, buf, 32, 0.95, net.copy(), rng)
        assert mlp_forward(net, s)[0] == pytest.approx(1.0, abs=1e-2)

    def test_gamma_zero_targets_are_rewards(self):
        rng = make_rng(2)
        net = MlpParams.init((2, 4, 2), rng)
        target = MlpParams.init((2, 4, 2), make_rng(99))
        buf = ReplayBuffer(10, 2)
        for i in range(10):
            buf.push([i, 1.0], i % 2, float(i), [i + 1, 1.0], False)
        a1, a2 = AdamState.for_params(net), AdamState.for_params(net)
        n1, n2 = net.copy(), net.copy()
        dqn_train_step(n1, a1, buf, 10, 0.0, target, make_rng(5))
        idx = make_rng(5)
        s, a, r, _, _ = buf.sample(10, idx)
        regression_step(n2, a2, s, a, r)
        assert n1 == n2


class TestReplayBuffer:
    def test_ring_and_recency(self):
        buf = ReplayBuffer(5, 1)
        for i in range(12):
            buf.push([i], 0, i, [i], False)
        assert len(buf) == 5
        assert sorted(buf.inserted) == [7, 8, 9, 10, 11]
        assert buf.count - buf.inserted.min() <= buf.capacity

    @pytest.mark.parametrize("size,batch", [(10, 8), (1000, 32)])
    def test_no_repeats_in_batch(self, size, batch):
        buf = ReplayBuffer(size, 1)
        for i in range(size):
            buf.push([i], 0, 0, [i], False)
        rng = make_rng(0)
        for _ in range(50):
            idx = buf.sample_indices(batch, rng)
            assert len(set(idx.tolist())) == batch

    def test_underfull(self):
        buf = ReplayBuffer(5, 1)
        buf.push([0], 0, 0, [0], False)
        with pytest.raises(ValueError):
            buf.sample_indices(2, make_rng(0))


class TestDQNAgent:
    def test_trains_after_batch_and_syncs(self):
        rng = make_rng(0)
        agent = DQNAgent(3, 2, lambda s: np.asarray(s, float), rng, hidden=(8,), batch_size=4, target_sync=3)
        for i in range(9):
            agent.update([i, 0, 1], i % 2, 1.0, [i + 1, 0, 1], [0, 1], False)
        assert agent.train_steps == 6
        assert agent.target == agent.net  # synced at step 6

    def test_act_respects_legal(self):
        agent = DQNAgent(2, 3, lambda s: np.asarray(s, float), make_rng(1), hidden=(4,))
        rng = make_rng(2)
        assert all(agent.act([0.1, 0.2], [2], e, rng) == 2 for e in (0.0, 1.0))


class TestBandit:
    def test_terminal_update(self):
        b = BanditAgent(key_fn=str)
        b.update("s", QUERY, 1.0)
        assert b.values("s")[QUERY] == pytest.approx(0.1)
        b.update("s", 0, 0.0)
        assert b.values("s")[0] == 0.0

    def test_bounded_under_alternating_rewards(self):
        b = BanditAgent(key_fn=str)
        for i in range(500):
            bandit_update(b, "s", QUERY, 1.0 if i % 2 == 0 else -1.0)
            assert -1.0 < b.values("s")[QUERY] < 1.0

    def test_bad_arm(self):
        with pytest.raises(ValueError):
            BanditAgent(key_fn=str).update("s", 2, 1.0)

    def test_needs_key_or_encoder(self):
        with pytest.raises(ValueError):
            BanditAgent()

    def test_mlp_backed_learns_per_state(self):
        enc = {"good": np.array([1.0, 0.0]), "bad": np.array([0.0, 1.0])}
        b = BanditAgent(encode_fn=enc.__getitem__, state_dim=2, rng=make_rng(0), alpha=1e-2, hidden=(16,))
        for _ in range(300):
            b.update("good", QUERY, 1.0)
            b.update("bad", QUERY, -1.0)
            b.update("good", 0, 0.0)
            b.update("bad", 0, 0.0)
        rng = make_rng(1)
        assert b.act("good", 0.0, rng) == QUERY
        assert b.act("bad", 0.0, rng) == 0


def test_tabular_agent_keys_states():
    agent = TabularAgent(3, key_fn=lambda s: "".join(map(str, s)), alpha=0.5)
    agent.update((1,), 2, 4.0, (1, 2), [0], True)
    assert agent.q.get("1", 2) == 2.0
    assert agent.act((1,), [0, 1, 2], 0.0, make_rng(0)) == 2


def test_snapshot_round_trip(tmp_path):
    p = MlpParams.init((4, 5, 2), make_rng(0))
    path = tmp_path / "net.bin"
    save_params(p, path)
    assert load_params(path) == p
    assert path.read_bytes().startswith(b"LAGRSEQ-MLP v1\n")
    path.write_bytes(b"garbage")
    with pytest.raises(ValueError):
        load_params(path)
