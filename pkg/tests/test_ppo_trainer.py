"""Clipped-surrogate policy optimization: scalar pieces, rollout collection,
segment replay, the update step, and training loops."""

import csv
from types import SimpleNamespace

import numpy as np
import pytest

from descentlab.config import TrainConfig, load_preset
from descentlab.environments import StepResult
from descentlab.neuralnet import Network, gaussian_logp
from descentlab.ppo_trainer import (
    Adam,
    NNPolicy,
    LOG_FIELDS,
    RunningNorm,
    _value_grads,
    adapt_clip,
    advantage,
    clipped_objective,
    collect_rollouts,
    discounted_return,
    load_checkpoint,
    make_segments,
    process_batch,
    prob_ratio,
    save_checkpoint,
    train_experiment,
    train_loop,
    update,
    value_loss,
)


class ToyLanderEnv:
    """1-D double integrator, 30 fixed steps: the training smoke target.

    Action is a bounded acceleration; the cost pulls position and velocity
    to zero.  Shares the landing environments' step interface.
    """

    obs_dim = 2
    horizon = 30
    dt = 0.5

    def reset(self, rng):
        self._i = 0
        self._r = float(rng.uniform(-8.0, 8.0))
        self._v = 0.0
        self._fuel = 0.0
        return np.array([self._r, self._v])

    def step(self, action):
        a = float(np.clip(action[0], -1.0, 1.0))
        self._v += a * self.dt
        self._r += self._v * self.dt
        self._i += 1
        self._fuel += abs(a) * self.dt
        done = self._i >= self.horizon
        reward = -0.05 * abs(self._r) - 0.02 * abs(self._v) - 0.01 * abs(a)
        state = SimpleNamespace(r=np.array([self._r]), v=np.array([self._v]))
        info = {
            "state": state,
            "fuel_used": self._fuel,
            "success": abs(self._r) < 0.5 and abs(self._v) < 0.5,
            "reason": "timeout" if done else "",
        }
        return StepResult(np.array([self._r, self._v]), reward, done, info)


class BanditEnv:
    """One-step two-sided bandit: positive actions pay +1, negative -1."""

    obs_dim = 1

    def reset(self, rng):
        return np.zeros(1)

    def step(self, action):
        reward = 1.0 if float(action[0]) > 0.0 else -1.0
        state = SimpleNamespace(r=np.zeros(1), v=np.zeros(1))
        info = {"state": state, "fuel_used": 0.0, "success": reward > 0, "reason": "done"}
        return StepResult(np.zeros(1), reward, True, info)


class StubValue:
    """Value-network stand-in with a prescribed output function."""

    def __init__(self, fn, hidden_dim=4):
        self._fn = fn
        self.hidden_dim = hidden_dim

    def init_hidden(self, batch=1):
        return np.zeros((batch, self.hidden_dim))

    def forward(self, obs, h0, want_cache=False):
        obs = np.asarray(obs, dtype=float)
        return self._fn(obs), h0, None


def zero_value():
    return StubValue(lambda obs: np.zeros(obs.shape[:-1] + (1,)))


def toy_networks(seed=0, recurrent=True):
    rng = np.random.default_rng(seed)
    policy = Network(2, 1, "policy", rng=rng, recurrent=recurrent)
    value = Network(2, 1, "value", rng=rng, recurrent=recurrent)
    return policy, value


class TestDiscountedReturn:
    def test_hand_example(self):
        assert np.allclose(discounted_return([1.0, 1.0, 1.0], 0.5), [1.75, 1.5, 1.0])

    def test_gamma_zero(self):
        r = np.array([0.3, -2.0, 5.0])
        assert np.array_equal(discounted_return(r, 0.0), r)

    def test_gamma_one_counts_down(self):
        n = 7
        assert np.allclose(discounted_return(np.ones(n), 1.0), np.arange(n, 0, -1))

    def test_recursion_exact(self):
        rng = np.random.default_rng(3)
        rew = rng.normal(size=40)
        gamma = 0.995
        ret = discounted_return(rew, gamma)
        for k in range(39):
            assert ret[k] == rew[k] + gamma * ret[k + 1]
        assert ret[-1] == rew[-1]


class TestProbRatio:
    def test_identity_at_old_params(self):
        logp = np.random.default_rng(0).normal(size=12)
        assert np.array_equal(prob_ratio(logp, logp), np.ones(12))

    def test_log_two_gives_two(self):
        assert prob_ratio(np.log(2.0), 0.0) == pytest.approx(2.0, rel=1e-12)

    def test_always_positive(self):
        rng = np.random.default_rng(1)
        r = prob_ratio(rng.normal(size=100), rng.normal(size=100))
        assert np.all(r > 0)


class TestClippedObjective:
    def test_positive_advantage_clips_above(self):
        assert clipped_objective(1.5, 2.0, 0.2) == pytest.approx(2.4, rel=1e-12)

    def test_negative_advantage_clips_below(self):
        assert clipped_objective(0.5, -1.0, 0.2) == pytest.approx(-0.8, rel=1e-12)

    def test_inside_band_unclipped(self):
        assert clipped_objective(1.1, 3.0, 0.2) == pytest.approx(3.3, rel=1e-12)
        assert clipped_objective(0.9, -2.0, 0.2) == pytest.approx(-1.8, rel=1e-12)

    def test_never_exceeds_unclipped_surrogate(self):
        rng = np.random.default_rng(2)
        ratio = np.exp(rng.normal(size=500))
        adv = rng.normal(size=500)
        for r, a in zip(ratio, adv):
            assert clipped_objective(r, a, 0.2) <= r * a + 1e-12


class TestAdaptClip:
    def test_on_target_unchanged(self):
        eps, scale = adapt_clip(0.001, 0.1, 0.001)
        assert eps == 0.1 and scale == 1.0

    def test_high_kl_shrinks(self):
        eps, scale = adapt_clip(0.01, 0.15, 0.001)
        assert eps == pytest.approx(0.1, rel=1e-12)
        assert scale == pytest.approx(1.0 / 1.5, rel=1e-12)

    def test_low_kl_grows_with_cap(self):
        eps = 0.3
        for _ in range(5):
            eps, scale = adapt_clip(0.0, eps, 0.001)
            assert scale == 1.5
        assert eps == 0.5

    def test_shrink_floor(self):
        eps, _ = adapt_clip(1.0, 0.011, 0.001)
        assert eps == 0.01


class TestAdvantage:
    def collect_toy(self, n=6, seed=4):
        policy, value = toy_networks(seed)
        rng = np.random.default_rng(seed)
        return collect_rollouts(policy, value, ToyLanderEnv, n, rng), value

    def test_zero_baseline_recovers_returns(self):
        batch, _ = self.collect_toy()
        for ep in batch:
            ep["ret"] = discounted_return(ep["rew"], 0.99)
        flat = advantage(batch, zero_value())
        rets = np.concatenate([ep["ret"] for ep in batch])
        # normalization is affine, so undoing it recovers the raw returns
        assert np.allclose(flat * rets.std() + rets.mean(), rets, atol=1e-10)

    def test_perfect_baseline_zeroes_advantage(self):
        batch, _ = self.collect_toy(n=1)
        ep = batch[0]
        ep["ret"] = discounted_return(ep["rew"], 0.99)
        ret = ep["ret"].copy()
        stub = StubValue(lambda obs, r=ret: np.broadcast_to(r[None, :, None], obs.shape[:-1] + (1,)))
        flat = advantage(batch, stub)
        assert np.allclose(flat, 0.0, atol=1e-12)

    def test_normalized_moments(self):
        batch, value = self.collect_toy(n=8)
        for ep in batch:
            ep["ret"] = discounted_return(ep["rew"], 0.99)
        flat = advantage(batch, value)
        assert abs(flat.mean()) <= 1e-10
        assert flat.var() == pytest.approx(1.0, abs=1e-6)

    def test_reward_to_go_identity_gamma_one(self):
        # gamma = 1, single episode, zero baseline: the raw advantage is
        # exactly the reward-to-go.
        batch, _ = self.collect_toy(n=1)
        ep = batch[0]
        ep["ret"] = discounted_return(ep["rew"], 1.0)
        rtg = np.array([ep["rew"][k:].sum() for k in range(ep["rew"].size)])
        assert np.allclose(ep["ret"], rtg, atol=1e-9)
        flat = advantage(batch, zero_value())
        assert np.allclose(flat * rtg.std() + rtg.mean(), rtg, atol=1e-9)


class TestValueLoss:
    def test_perfect_fit_is_zero(self):
        batch, _ = TestAdvantage().collect_toy(n=1)
        ep = batch[0]
        ep["ret"] = discounted_return(ep["rew"], 0.99)
        ret = ep["ret"].copy()
        stub = StubValue(lambda obs, r=ret: np.broadcast_to(r[None, :, None], obs.shape[:-1] + (1,)))
        assert value_loss(batch, stub) == pytest.approx(0.0, abs=1e-12)

    def test_zero_net_constant_returns(self):
        batch, _ = TestAdvantage().collect_toy(n=2)
        for ep in batch:
            ep["ret"] = np.full_like(ep["rew"], 2.0)
        assert value_loss(batch, zero_value()) == pytest.approx(4.0, rel=1e-12)

    def test_regression_loss_decreases(self):
        # 100 descent steps on a fixed synthetic segment batch.
        rng = np.random.default_rng(7)
        value = Network(2, 1, "value", rng=rng, recurrent=True)
        segs = {
            "obs": rng.normal(size=(6, 10, 2)),
            "h_v": np.zeros((6, value.hidden_dim)),
            "ret": rng.normal(size=(6, 10)) * 3.0,
            "mask": np.ones((6, 10)),
        }
        opt = Adam(value.params, 1e-3)
        first, _ = _value_grads(value, segs)
        for _ in range(100):
            loss, grads = _value_grads(value, segs)
            opt.step(value.params, grads)
        last, _ = _value_grads(value, segs)
        assert last < first


class TestCollect:
    def test_episode_count_and_completeness(self):
        policy, value = toy_networks(1)
        batch = collect_rollouts(policy, value, ToyLanderEnv, 30, np.random.default_rng(2))
        assert len(batch) == 30
        for ep in batch:
            assert ep["obs"].shape == (ToyLanderEnv.horizon, 2)
            assert ep["rew"].shape == (ToyLanderEnv.horizon,)

    def test_deterministic_given_seed(self):
        policy1, value1 = toy_networks(1)
        policy2, value2 = toy_networks(1)
        b1 = collect_rollouts(policy1, value1, ToyLanderEnv, 4, np.random.default_rng(9))
        b2 = collect_rollouts(policy2, value2, ToyLanderEnv, 4, np.random.default_rng(9))
        for e1, e2 in zip(b1, b2):
            assert np.array_equal(e1["obs"], e2["obs"])
            assert np.array_equal(e1["act"], e2["act"])
            assert np.array_equal(e1["rew"], e2["rew"])

    def test_stored_logp_matches_replay(self):
        # Full-episode forward from the zero initial hidden state must
        # reproduce the sampling-time means and log probabilities.
        policy, value = toy_networks(3)
        batch = collect_rollouts(policy, value, ToyLanderEnv, 5, np.random.default_rng(5))
        log_std = policy.params["log_std"]
        for ep in batch:
            means, _, _ = policy.forward(ep["obs"][None], policy.init_hidden())
            logp = gaussian_logp(means[0], log_std, ep["act"])
            assert np.max(np.abs(means[0] - ep["mean"])) <= 1e-10
            assert np.max(np.abs(logp - ep["logp"])) <= 1e-10

    def test_segment_replay_from_stored_hidden(self):
        # Replays must agree with collection-time outputs segment by
        # segment, starting from the snapshotted hidden states.
        policy, value = toy_networks(6)
        batch = collect_rollouts(policy, value, ToyLanderEnv, 4, np.random.default_rng(8))
        for ep in batch:
            ep["ret"] = discounted_return(ep["rew"], 0.99)
            ep["adv"] = np.zeros_like(ep["ret"])
        segs = make_segments(batch, unroll=10)
        out, _, _ = policy.forward(segs["obs"], segs["h_p"])
        err = np.abs(out - segs["mean_old"]) * segs["mask"][..., None]
        assert np.max(err) <= 1e-10

    def test_faulted_episode_resampled(self):
        class FlakyEnv(ToyLanderEnv):
            calls = 0

            def reset(self, rng):
                FlakyEnv.calls += 1
                if FlakyEnv.calls == 2:
                    raise ValueError("synthetic fault")
                return super().reset(rng)

        policy, value = toy_networks(2)
        batch = collect_rollouts(policy, value, FlakyEnv, 3, np.random.default_rng(0))
        assert len(batch) == 3


class TestMakeSegments:
    def test_padding_and_mask(self):
        policy, value = toy_networks(5)
        batch = collect_rollouts(policy, value, ToyLanderEnv, 2, np.random.default_rng(1))
        for ep in batch:
            ep["ret"] = discounted_return(ep["rew"], 0.99)
            ep["adv"] = np.zeros_like(ep["ret"])
        segs = make_segments(batch, unroll=12)
        # 30 steps -> segments of 12, 12, 6 per episode
        assert segs["obs"].shape == (6, 12, 2)
        assert segs["mask"].sum() == 60.0
        short = segs["mask"].sum(axis=1)
        assert sorted(short) == [6.0, 6.0, 12.0, 12.0, 12.0, 12.0]
        # padded region is zeroed
        tail = segs["obs"][segs["mask"] == 0.0]
        assert np.allclose(tail, 0.0)

    def test_unroll_one(self):
        policy, value = toy_networks(5)
        batch = collect_rollouts(policy, value, ToyLanderEnv, 1, np.random.default_rng(1))
        for ep in batch:
            ep["ret"] = discounted_return(ep["rew"], 0.99)
            ep["adv"] = np.zeros_like(ep["ret"])
        segs = make_segments(batch, unroll=1)
        assert segs["obs"].shape == (30, 1, 2)
        assert np.all(segs["mask"] == 1.0)


class TestRunningNorm:
    def test_identity_before_first_update(self):
        norm = RunningNorm(3)
        x = np.array([5.0, -2.0, 0.5])
        assert np.array_equal(norm.normalize(x), x)

    def test_matches_population_stats(self):
        rng = np.random.default_rng(12)
        norm = RunningNorm(4)
        chunks = [rng.normal(loc=3.0, scale=2.0, size=(n, 4)) for n in (10, 1, 33, 6)]
        for c in chunks:
            norm.update(c)
        full = np.concatenate(chunks)
        assert np.allclose(norm.mean, full.mean(axis=0), atol=1e-12)
        assert np.allclose(norm.var, full.var(axis=0), atol=1e-12)

    def test_clipping(self):
        norm = RunningNorm(1, clip=10.0)
        norm.update(np.zeros((50, 1)) + np.linspace(-1, 1, 50)[:, None])
        z = norm.normalize(np.array([1e9]))
        assert z[0] == 10.0

    def test_state_round_trip(self):
        rng = np.random.default_rng(13)
        norm = RunningNorm(2)
        norm.update(rng.normal(size=(17, 2)))
        arrays = norm.state_arrays()
        back = RunningNorm.from_arrays(arrays)
        x = rng.normal(size=2)
        assert np.array_equal(norm.normalize(x), back.normalize(x))


class TestAdam:
    def test_quadratic_descent(self):
        params = {"w": np.array([5.0, -3.0])}
        opt = Adam(params, 0.1)
        for _ in range(300):
            opt.step(params, {"w": 2.0 * params["w"]})
        assert np.linalg.norm(params["w"]) < 1e-2

    def test_nonfinite_gradient_halves_rate(self):
        params = {"w": np.array([1.0])}
        opt = Adam(params, 0.1)
        before = params["w"].copy()
        ok = opt.step(params, {"w": np.array([np.nan])})
        assert not ok
        assert np.array_equal(params["w"], before)
        assert opt.mult == 0.5

    def test_scale_clamped(self):
        params = {"w": np.array([1.0])}
        opt = Adam(params, 0.1)
        for _ in range(20):
            opt.scale(10.0)
        assert opt.mult == 10.0
        for _ in range(40):
            opt.scale(0.01)
        assert opt.mult == 0.1


class TestUpdate:
    def test_bandit_probability_shift(self):
        # Two-sided bandit: after a few updates the mean action at the
        # fixed observation must move decisively positive.
        rng = np.random.default_rng(0)
        policy = Network(1, 1, "policy", rng=rng, recurrent=False)
        value = Network(1, 1, "value", rng=rng, recurrent=False)
        cfg = TrainConfig(
            unroll=1,
            episodes_per_batch=64,
            epochs_per_update=10,
            kl_target=0.01,
            clip_init=0.2,
            lr_policy=3e-3,
            lr_value=1e-3,
            recurrent=False,
        )
        opt_p = Adam(policy.params, cfg.lr_policy)
        opt_v = Adam(value.params, cfg.lr_value)
        eps = cfg.clip_init

        def mean_action():
            out, _ = policy.step(np.zeros(1), policy.init_hidden())
            return float(out[0])

        before = mean_action()
        for it in range(6):
            batch = collect_rollouts(
                policy, value, BanditEnv, cfg.episodes_per_batch,
                np.random.default_rng([11, it]),
            )
            process_batch(batch, value, cfg.discount)
            _, eps = update(batch, policy, value, cfg, opt_p, opt_v, eps)
        after = mean_action()
        assert after > before
        assert after > 0.2

    def test_zero_advantage_leaves_policy_unchanged(self):
        policy, value = toy_networks(21)
        batch = collect_rollouts(policy, value, ToyLanderEnv, 3, np.random.default_rng(2))
        for ep in batch:
            ep["ret"] = discounted_return(ep["rew"], 0.99)
            ep["adv"] = np.zeros_like(ep["ret"])
        cfg = TrainConfig(unroll=10, episodes_per_batch=3)
        before = {k: v.copy() for k, v in policy.params.items()}
        opt_p = Adam(policy.params, cfg.lr_policy)
        opt_v = Adam(value.params, cfg.lr_value)
        update(batch, policy, value, cfg, opt_p, opt_v, cfg.clip_init)
        for k, v in policy.params.items():
            assert np.array_equal(v, before[k]), k

    def test_kl_reported_nonnegative(self):
        policy, value = toy_networks(22)
        batch = collect_rollouts(policy, value, ToyLanderEnv, 4, np.random.default_rng(3))
        process_batch(batch, value, 0.99)
        cfg = TrainConfig(unroll=10, episodes_per_batch=4)
        opt_p = Adam(policy.params, cfg.lr_policy)
        opt_v = Adam(value.params, cfg.lr_value)
        diag, _ = update(batch, policy, value, cfg, opt_p, opt_v, cfg.clip_init)
        assert diag["kl"] >= 0.0


class TestTrainLoop:
    def test_toy_improves_quickly(self):
        policy, value = toy_networks(0)
        norm = RunningNorm(2)
        cfg = TrainConfig(unroll=10, episodes_per_batch=30, kl_target=0.001)
        rows, _, _, _ = train_loop(ToyLanderEnv, policy, value, norm, cfg, 30, seed=1)
        assert len(rows) == 30
        assert rows[-1]["pos_mean"] < 1.0
        assert rows[-1]["pos_mean"] < rows[0]["pos_mean"] / 4.0

    @pytest.mark.slow
    def test_toy_reaches_target_within_200_iterations(self):
        policy, value = toy_networks(0)
        norm = RunningNorm(2)
        cfg = TrainConfig(unroll=10, episodes_per_batch=30, kl_target=0.001)
        rows, _, _, _ = train_loop(ToyLanderEnv, policy, value, norm, cfg, 200, seed=1)
        assert min(r["pos_mean"] for r in rows) < 0.1

    def test_checkpoint_resume_continues_counter(self, tmp_path):
        policy, value = toy_networks(2)
        norm = RunningNorm(2)
        cfg = TrainConfig(unroll=10, episodes_per_batch=5)
        rows, eps, opt_p, opt_v = train_loop(
            ToyLanderEnv, policy, value, norm, cfg, 3, seed=4
        )
        path = tmp_path / "toy.ckpt"
        save_checkpoint(path, policy, value, norm, cfg, 3, eps, opt_p, opt_v)
        ck = load_checkpoint(path)
        assert ck["iteration"] == 3
        rows2, _, _, _ = train_loop(
            ToyLanderEnv, ck["policy"], ck["value"], ck["norm"], cfg, 2, seed=4,
            start_iteration=ck["iteration"], eps=ck["eps"],
        )
        assert [r["iteration"] for r in rows2] == [3, 4]

    def test_checkpoint_policy_round_trip(self, tmp_path):
        policy, value = toy_networks(9)
        norm = RunningNorm(2)
        norm.update(np.random.default_rng(0).normal(size=(40, 2)))
        cfg = TrainConfig(unroll=10, episodes_per_batch=5)
        opt_p = Adam(policy.params, cfg.lr_policy)
        opt_v = Adam(value.params, cfg.lr_value)
        path = tmp_path / "rt.ckpt"
        save_checkpoint(path, policy, value, norm, cfg, 7, 0.85, opt_p, opt_v)
        pol = NNPolicy.from_checkpoint(path)
        obs = np.array([2.0, -1.0])
        pol.reset()
        direct = NNPolicy(policy, norm)
        direct.reset()
        assert np.array_equal(pol.act(obs), direct.act(obs))


class TestTrainExperiment:
    def test_curve_rows_and_resume(self, tmp_path):
        spec = load_preset("ideal-mars")
        out = train_experiment(spec, tmp_path, iterations=2, seed=0)
        with open(out["curve"]) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["iteration"] for r in rows] == ["0", "1"]
        assert set(rows[0].keys()) == set(LOG_FIELDS)
        ck = load_checkpoint(out["checkpoint"])
        assert ck["iteration"] == 2

        out2 = train_experiment(
            spec, tmp_path, iterations=1, seed=0, resume=out["checkpoint"]
        )
        with open(out2["curve"]) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["iteration"] for r in rows] == ["0", "1", "2"]
        assert load_checkpoint(out2["checkpoint"])["iteration"] == 3
