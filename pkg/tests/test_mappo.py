import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from fcmac.errors import TrainingError
from fcmac.mappo import (Actor, Critic, FeatureScales, LagrangeState, NumpyActor, TrainConfig, compute_gae,
                         lambda_update, load_checkpoint, normalize_advantages, ppo_update, prepare_batch, rollout,
                         save_checkpoint, train)
from fcmac.mappo.checkpoint import Checkpoint, read_header
from fcmac.mappo.gae import _gae_kernel
from fcmac.mappo.ppo import actor_loss, clipped_surrogate, critic_loss, make_optimizers
from fcmac.mappo.rollout import sample_actions, write_trajectory_csv
from fcmac.sim import SimConfig

from conftest import brute_force_gae, flat_grad_check, random_actor_inputs, toy_buffer


class TestGae:
    def test_single_step(self):
        assert compute_gae([1.0], [0.0, 0.0], 0.9, 0.3).tolist() == [1.0]

    def test_zero(self):
        assert not compute_gae(np.zeros(5), np.zeros(6), 0.98, 0.95).any()

    def test_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            r, v = rng.normal(size=10), rng.normal(size=11)
            g, l = rng.uniform(0, 0.999), rng.uniform(0, 1)
            assert np.abs(compute_gae(r, v, g, l) - brute_force_gae(r, v, g, l)).max() < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            compute_gae([1.0, 2.0], [0.0, 0.0], 0.9, 0.9)

    def test_done_cuts_bootstrap(self):
        adv = compute_gae([1.0, 1.0], [0.0, 5.0, 7.0], 0.5, 1.0, dones=[1.0, 0.0])
        assert adv[0] == pytest.approx(1.0)

    def test_kernel_matches_python(self):
        py = getattr(_gae_kernel, "py_func", _gae_kernel)
        rng = np.random.default_rng(1)
        r, v, d = rng.normal(size=30), rng.normal(size=31), (rng.uniform(size=30) < 0.1).astype(float)
        assert np.array_equal(_gae_kernel(r, v, d, 0.9, 0.8, np.empty(30)), py(r, v, d, 0.9, 0.8, np.empty(30)))

    def test_normalize(self):
        a = normalize_advantages(np.random.default_rng(2).normal(3, 5, 1000))
        assert abs(a.mean()) < 1e-12 and a.std() == pytest.approx(1.0, abs=1e-6)


class TestActor:
    def test_permutation_invariance(self):
        torch.manual_seed(0)
        actor = Actor().double()
        rng = np.random.default_rng(0)
        for _ in range(100):
            own, neigh, mask = random_actor_inputs(rng)
            perm = torch.as_tensor(rng.permutation(neigh.shape[1]))
            a = actor(own, neigh, mask)
            b = actor(own, neigh[:, perm], mask[:, perm])
            assert torch.allclose(a, b, atol=1e-12)

    def test_no_neighbors(self):
        actor = Actor().double()
        rng = np.random.default_rng(1)
        own, neigh, _ = random_actor_inputs(rng)
        mask = torch.zeros(neigh.shape[:2], dtype=torch.bool)
        a = actor(own, neigh, mask)
        b = actor(own, neigh * 7 + 3, mask)
        c = actor(own, neigh[:, :1], mask[:, :1])
        assert torch.equal(a, b) and torch.allclose(a, c, atol=1e-14)

    def test_initial_policy_near_uniform(self):
        rng = np.random.default_rng(2)
        own, neigh, mask = random_actor_inputs(rng, B=4)
        lo, hi = 1.0, 0.0
        with torch.no_grad():
            for seed in range(1000):
                torch.manual_seed(seed)
                p = torch.softmax(Actor().double()(own, neigh, mask), -1)
                lo, hi = min(lo, float(p.min())), max(hi, float(p.max()))
        assert 0.1 <= lo and hi <= 0.6

    def test_numpy_copy_matches(self):
        torch.manual_seed(3)
        actor = Actor()
        rng = np.random.default_rng(3)
        own, neigh, mask = random_actor_inputs(rng, B=9)
        ref = torch.softmax(actor.double()(own, neigh, mask), -1).detach().numpy()
        fast = NumpyActor(actor).probs(own.numpy(), neigh.numpy(), mask.numpy())
        assert np.abs(ref - fast).max() < 1e-12
        assert np.allclose(fast.sum(1), 1.0)

    def test_snapshot_is_frozen(self):
        actor = Actor()
        snap = NumpyActor(actor)
        before = snap.embed.copy()
        with torch.no_grad():
            actor.self_embed[0].weight.add_(1.0)
        assert np.array_equal(snap.embed, before)

    def test_scales_preserve_order(self):
        sc = FeatureScales.for_config(1023)
        d = np.array([[5, 1], [900, 3], [12, 2]])
        assert np.array_equal(np.argsort(sc.normalize_pairs(d)[:, 0]), np.argsort(d[:, 0]))
        assert sc.self_scale()[0] == 1024


class TestCritic:
    def make(self, rng, B=5, M=3, G=4):
        agents = torch.tensor(rng.uniform(size=(B, M, 5)))
        legacy = torch.tensor(rng.uniform(size=(B, G, 2)))
        return agents, torch.ones(B, M, dtype=torch.bool), legacy, torch.ones(B, G, dtype=torch.bool)

    def test_permutations(self):
        torch.manual_seed(0)
        critic = Critic().double()
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, am, l, lm = self.make(rng)
            v = critic(a, am, l, lm)
            pa, pl = torch.as_tensor(rng.permutation(3)), torch.as_tensor(rng.permutation(4))
            assert torch.allclose(v, critic(a[:, pa], am, l, lm), atol=1e-12)
            assert torch.allclose(v, critic(a, am, l[:, pl], lm), atol=1e-12)

    def test_multiset_semantics(self):
        torch.manual_seed(1)
        critic = Critic().double()
        a, am, l, lm = self.make(np.random.default_rng(1), G=2)
        dup = torch.cat([l, l[:, :1]], dim=1)
        v1 = critic(a, am, l, lm)
        v2 = critic(a, am, dup, torch.ones(dup.shape[:2], dtype=torch.bool))
        assert (v1 - v2).abs().min() > 1e-9

    def test_padding_ignored(self):
        critic = Critic().double()
        a, am, l, lm = self.make(np.random.default_rng(2))
        a2 = torch.cat([a, torch.randn(5, 2, 5, dtype=torch.float64)], 1)
        am2 = torch.cat([am, torch.zeros(5, 2, dtype=torch.bool)], 1)
        l2 = torch.cat([l, torch.randn(5, 1, 2, dtype=torch.float64)], 1)
        lm2 = torch.cat([lm, torch.zeros(5, 1, dtype=torch.bool)], 1)
        assert torch.allclose(critic(a, am, l, lm), critic(a2, am2, l2, lm2), atol=1e-12)

    def test_no_legacy(self):
        critic = Critic().double()
        a, am, _, _ = self.make(np.random.default_rng(3))
        l = torch.zeros(5, 1, 2, dtype=torch.float64)
        v = critic(a, am, l, torch.zeros(5, 1, dtype=torch.bool))
        assert torch.isfinite(v).all()


class TestPpo:
    def test_clip_example(self):
        assert float(clipped_surrogate(torch.tensor(1.5), torch.tensor(1.0), 0.2)) == pytest.approx(1.2)
        assert float(clipped_surrogate(torch.tensor(0.5), torch.tensor(-1.0), 0.2)) == pytest.approx(-0.8)

    def test_zero_advantages_leave_actor(self):
        rng = np.random.default_rng(0)
        buf = toy_buffer(rng)
        actor, critic = Actor(), Critic()
        cfg = TrainConfig(entropy_coef=0.0)
        batch = prepare_batch(buf, actor, critic, 0.01, cfg)
        batch.adv.zero_()
        before = [p.detach().clone() for p in actor.parameters()]
        opt_a, opt_c = make_optimizers(actor, critic, cfg)
        ppo_update(actor, critic, opt_a, opt_c, batch, cfg, rng)
        assert all(torch.equal(a, b) for a, b in zip(before, actor.parameters()))

    def test_gradients_match_finite_differences(self):
        torch.manual_seed(0)
        rng = np.random.default_rng(1)
        buf = toy_buffer(rng)
        actor, critic = Actor().double(), Critic().double()
        cfg = TrainConfig()
        batch = prepare_batch(buf, actor, critic, 0.05, cfg, dtype=torch.float64)
        # move the behaviour log-probs off the current policy so the ratio is not 1
        batch.old_logp = batch.old_logp + torch.tensor(rng.uniform(-0.1, 0.1, batch.n_samples))
        smb = batch.sample_slice(torch.arange(batch.n_samples))
        tmb = batch.step_slice(torch.arange(batch.n_steps))
        wa = flat_grad_check(lambda: actor_loss(actor, smb, cfg.clip, cfg.entropy_coef)[0],
                             list(actor.parameters()), 40, rng)
        wc = flat_grad_check(lambda: critic_loss(critic, tmb, cfg.value_coef), list(critic.parameters()), 40, rng)
        assert wa < 1e-4 and wc < 1e-4

    def test_nan_loss_aborts_with_dump(self, tmp_path):
        rng = np.random.default_rng(2)
        buf = toy_buffer(rng)
        actor, critic = Actor(), Critic()
        cfg = TrainConfig()
        batch = prepare_batch(buf, actor, critic, 0.01, cfg)
        batch.own[0, 0] = float("nan")
        opt_a, opt_c = make_optimizers(actor, critic, cfg)
        with pytest.raises(TrainingError, match="nan_minibatch"):
            ppo_update(actor, critic, opt_a, opt_c, batch, cfg, rng, dump_dir=tmp_path)
        assert (tmp_path / "nan_minibatch.npz").exists()


class TestLambda:
    def test_examples(self):
        assert lambda_update(LagrangeState(0.01), [0.0, 0.0], 1e-4).lam == 0.01
        assert lambda_update(LagrangeState(0.01), [0.2, 0.3], 1e-4).lam == pytest.approx(0.01005, abs=1e-15)
        assert lambda_update(LagrangeState(0.00001), [-1.0], 1e-4).lam == 0.0

    @given(st.floats(0, 10), st.lists(st.floats(-100, 100), max_size=8), st.floats(1e-6, 1.0))
    def test_sign_and_projection(self, lam, v, eta):
        new = lambda_update(LagrangeState(lam), v, eta).lam
        assert new >= 0
        total = sum(v)
        if total > 0:
            assert new >= lam
        elif total < 0:
            assert new <= lam

    def test_rejects_negative_state(self):
        with pytest.raises(ValueError):
            LagrangeState(-0.1)

    def test_penalized_rewards_recomputed(self):
        buf = toy_buffer(np.random.default_rng(3))
        a, b = buf.penalized_rewards(0.01), buf.penalized_rewards(0.3)
        assert np.allclose(a - b, (0.3 - 0.01) * buf.penalties().sum(1), atol=1e-14)


@pytest.fixture(scope="module")
def episode():
    torch.manual_seed(0)
    cfg = SimConfig(n_stations=4, sim_time=0.15, warmup=0.02, seed=0)
    actor = Actor()
    calls = []

    class Spy(NumpyActor):
        def probs(self, own, neigh, mask):
            calls.append(id(self))
            return super().probs(own, neigh, mask)

    spy = Spy(actor)
    buf, trace = rollout(spy, FeatureScales.for_config(1023), cfg, [1, 3], 5, np.random.default_rng(0))
    return buf, trace, calls, spy


class TestRollout:

    def test_single_shared_policy(self, episode):
        buf, _, calls, spy = episode
        assert set(calls) == {id(spy)}
        assert len(calls) >= len(set(buf.step_time))

    def test_ledger(self, episode):
        buf, trace, _, _ = episode
        for i in range(buf.n_agents):
            assert buf.ledger.transmissions(i) >= 1
        rewards = [r for per in buf.ledger.rewards for r in per]
        assert all(r == -2.0 or 0.0 <= r <= 1.0 for r in rewards)
        s = buf.samples()
        assert s["step"].max() == buf.T - 1
        assert set(s["agent"]) <= {1, 3}

    def test_trajectory_dump(self, episode, tmp_path):
        buf = episode[0]
        write_trajectory_csv(tmp_path / "traj.csv", buf)
        lines = (tmp_path / "traj.csv").read_text().splitlines()
        assert lines[0] == "t,agent,action,reward,penalty"
        assert len(lines) == len(buf.samples()["action"]) + 1

    def test_sampling(self):
        rng = np.random.default_rng(0)
        p = np.tile([0.1, 0.2, 0.3, 0.4], (20000, 1))
        freq = np.bincount(sample_actions(p, rng), minlength=4) / 20000
        assert np.allclose(freq, [0.1, 0.2, 0.3, 0.4], atol=0.015)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        torch.manual_seed(4)
        ck = Checkpoint(Actor(), Critic(), FeatureScales.for_config(511), 0.02, 7, "abc", meta=dict(seed=1))
        path = save_checkpoint(tmp_path / "ck.npz", ck)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["ck.npz"]
        back = load_checkpoint(path)
        assert (back.lam, back.episode, back.config_hash, back.scales) == (0.02, 7, "abc", ck.scales)
        for a, b in zip(ck.actor.state_dict().values(), back.actor.state_dict().values()):
            assert torch.equal(a, b)
        header = read_header(path)
        assert header["shapes"]["actor/query.weight"] == [64, 64]

    def test_rejects_other_files(self, tmp_path):
        np.savez(tmp_path / "x.npz", header=np.frombuffer(b'{"format": "other"}', dtype=np.uint8))
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "x.npz")


class TestTrain:
    def test_zero_episodes(self, tmp_path):
        torch.manual_seed(0)
        init = Actor().state_dict()
        res = train(TrainConfig(episodes=0), SimConfig(n_stations=2, sim_time=0.1, warmup=0.01), tmp_path, seed=0)
        assert res.metrics == []
        assert all(torch.equal(a, b) for a, b in zip(init.values(), res.actor.state_dict().values()))

    def test_one_episode(self, tmp_path):
        cfg = TrainConfig(episodes=1, dump_trajectories=True)
        res = train(cfg, SimConfig(n_stations=3, sim_time=0.15, warmup=0.02), tmp_path, seed=1)
        row = res.metrics[0]
        assert all(math.isfinite(v) for v in row.values())
        assert res.lagrange.lam >= 0
        assert load_checkpoint(tmp_path / "checkpoint.npz").episode == 1
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert lines[0] == ("episode,m,mean_reward_per_tx,mean_backoff_ratio,lambda,collision_rate,"
                            "throughput_mbps,wall_seconds")
        assert (tmp_path / "trajectory_0000.csv").exists()

    def test_invalid_config(self):
        from fcmac.errors import ConfigError
        with pytest.raises(ConfigError):
            train(TrainConfig(gamma=1.0), SimConfig())
