# tests/test_ppo.py - networks, GAE, rollouts, PPO updates, checkpoints and the training loop
import numpy as np
import pytest

from toimit.env import EVAL_CURRICULUM, curriculum_update
from toimit.errors import CheckpointError, ConfigError
from toimit.rl import (
    MLP,
    Adam,
    PolicyBundle,
    RolloutBatch,
    RunningNormalizer,
    VectorEnv,
    collect,
    compute_gae,
    load_checkpoint,
    load_training_state,
    ppo_update,
    save_checkpoint,
    train,
)
from toimit.rl.policy import log_prob
from toimit.rl.ppo import ppo_losses, prepare_batch
from toimit.rl.trainer import build_envs, load_training_records
from toimit.schemas import EnvConfig, PPOHyper, TrainConfig

SMALL = PPOHyper(actor_hidden=[8, 8], critic_hidden=[8, 8], minibatch_size=16, learning_rate=1e-2)


def _policy(actor_dim=5, critic_dim=7, action_dim=2, hyper=SMALL, seed=0) -> PolicyBundle:
    return PolicyBundle.create(actor_dim, critic_dim, action_dim, hyper, seed)


def _synthetic_batch(policy: PolicyBundle, rng, T=16, E=2) -> RolloutBatch:
    actor_obs = rng.normal(size=(T, E, policy.actor_dim))
    critic_obs = rng.normal(size=(T, E, policy.critic_dim))
    mean = policy.actor.forward(actor_obs.reshape(T * E, policy.actor_dim))
    actions = (mean + np.exp(policy.log_std) * rng.normal(size=mean.shape)).reshape(T, E, policy.action_dim)
    log_probs = log_prob(actions.reshape(T * E, policy.action_dim), mean, policy.log_std).reshape(T, E)
    values = policy.critic.forward(critic_obs.reshape(T * E, policy.critic_dim))[:, 0].reshape(T, E)
    return RolloutBatch(
        actor_obs=actor_obs,
        critic_obs=critic_obs,
        actions=actions,
        log_probs=log_probs,
        rewards=critic_obs[..., 0] + 0.5,
        values=values,
        next_values=np.roll(values, -1, axis=0),
        dones=np.zeros((T, E)),
        terminals=np.zeros((T, E)),
    )


# ============================================
# NETWORK
# ============================================


def test_mlp_backward_matches_finite_differences(rng):
    net = MLP([3, 4, 2], rng)
    x = rng.normal(size=(5, 3))
    weights = rng.normal(size=(5, 2))

    def loss() -> float:
        return float(np.sum(net.forward(x) * weights))

    _, activations = net.forward(x, keep=True)
    grads, grad_in = net.backward(activations, weights)
    for index in range(len(net.params)):
        flat = net.params[index].reshape(-1)
        for j in range(min(3, flat.size)):
            old = flat[j]
            flat[j] = old + 1e-6
            up = loss()
            flat[j] = old - 1e-6
            down = loss()
            flat[j] = old
            assert grads[index].reshape(-1)[j] == pytest.approx((up - down) / 2e-6, rel=1e-5, abs=1e-8)
    assert grad_in.shape == x.shape


def test_flat_parameters_round_trip(rng):
    net = MLP([3, 4, 2], rng)
    flat = net.get_flat()
    net.set_flat(np.zeros_like(flat))
    assert not net.get_flat().any()
    net.set_flat(flat)
    np.testing.assert_array_equal(net.get_flat(), flat)


def test_adam_minimizes_a_quadratic():
    x = [np.array([3.0, -2.0])]
    opt = Adam(x, lr=0.1)
    for _ in range(1000):
        opt.step(x, [2.0 * x[0]])
    np.testing.assert_allclose(x[0], 0.0, atol=5e-2)


def test_running_normalizer_matches_batch_statistics(rng):
    data = rng.normal(3.0, 2.0, size=(4000, 2))
    norm = RunningNormalizer(2)
    for chunk in np.array_split(data, 7):
        norm.update(chunk)
    np.testing.assert_allclose(norm.mean, data.mean(axis=0), atol=1e-3)
    np.testing.assert_allclose(norm.var, data.var(axis=0), rtol=1e-3)
    assert np.all(np.abs(norm.normalize(np.full(2, 1e6))) <= norm.clip)


# ============================================
# GAE AND LOSSES
# ============================================


def test_gae_recursion_and_episode_cut():
    rewards = np.ones((3, 2))
    values = np.zeros((3, 2))
    dones = np.zeros((3, 2))
    dones[1, 1] = 1.0
    advantages, returns = compute_gae(rewards, values, np.zeros((3, 2)), dones, gamma=0.5, lam=1.0)
    np.testing.assert_allclose(advantages[:, 0], [1.75, 1.5, 1.0])
    np.testing.assert_allclose(advantages[:, 1], [1.5, 1.0, 1.0])
    np.testing.assert_allclose(returns, advantages)


def test_ppo_gradients_match_finite_differences(rng):
    policy = _policy()
    batch = _synthetic_batch(policy, rng)
    data = prepare_batch(batch, SMALL)
    data["log_probs"] = data["log_probs"] + rng.normal(0.0, 0.01, size=data["log_probs"].shape)
    data["values"] = data["values"] + rng.normal(0.0, 0.01, size=data["values"].shape)

    _, grads, _ = ppo_losses(policy, data, SMALL)
    params = policy.actor.params + policy.critic.params + [policy.log_std]

    def loss() -> float:
        return ppo_losses(policy, data, SMALL)[0]

    for index in (0, 3, len(policy.actor.params), len(params) - 1):
        flat = params[index].reshape(-1)
        old = flat[0]
        flat[0] = old + 1e-6
        up = loss()
        flat[0] = old - 1e-6
        down = loss()
        flat[0] = old
        assert grads[index].reshape(-1)[0] == pytest.approx((up - down) / 2e-6, rel=1e-4, abs=1e-7)


def test_value_loss_decreases_under_updates():
    hyper = SMALL.model_copy(update={"value_clip": 1e6})
    policy = _policy(hyper=hyper)
    batch = _synthetic_batch(policy, np.random.default_rng(1))
    before = ppo_losses(policy, prepare_batch(batch, hyper), hyper)[2]["value_loss"]

    optimizer = Adam(policy.actor.params + policy.critic.params + [policy.log_std], hyper.learning_rate)
    rng = np.random.default_rng(2)
    for _ in range(60):
        ppo_update(policy, batch, hyper, optimizer, rng)
    after = ppo_losses(policy, prepare_batch(batch, hyper), hyper)[2]["value_loss"]
    assert after < 0.5 * before


def test_empty_batch_is_rejected():
    policy = _policy()
    empty = _synthetic_batch(policy, np.random.default_rng(0), T=0)
    with pytest.raises(ValueError):
        ppo_update(policy, empty, SMALL, Adam([], 1e-3), np.random.default_rng(0))


def test_zero_advantages_leave_the_actor_untouched(rng):
    policy = _policy()
    data = prepare_batch(_synthetic_batch(policy, rng), SMALL)
    data["advantages"] = np.zeros_like(data["advantages"])
    _, grads, stats = ppo_losses(policy, data, SMALL)

    n_actor = len(policy.actor.params)
    assert stats["policy_loss"] == 0.0
    for g in grads[:n_actor]:
        np.testing.assert_array_equal(g, 0.0)
    # only the entropy bonus moves the log-std
    np.testing.assert_allclose(grads[-1], -SMALL.entropy_coef)
    assert any(np.any(g != 0.0) for g in grads[n_actor:-1])


# ============================================
# ROLLOUTS
# ============================================


def _vector(records, seeds=(11, 12)):
    return VectorEnv(build_envs(records, EnvConfig(history_len=2), seeds))


def test_collect_shapes(pendulum_record):
    vec = _vector([pendulum_record])
    env = vec.envs[0]
    policy = _policy(env.actor_layout.size, env.critic_layout.size, env.action_dim)
    batch = collect(vec, policy, steps=8, rng=np.random.default_rng(0))
    assert batch.actor_obs.shape == (8, 2, env.actor_layout.size)
    assert batch.critic_obs.shape == (8, 2, env.critic_layout.size)
    assert batch.actions.shape == (8, 2, 1)
    assert batch.size == 16
    assert np.all(np.isfinite(batch.rewards))
    assert policy.actor_normalizer.count > 1.0


def test_collect_is_deterministic(pendulum_record):
    def run():
        vec = _vector([pendulum_record])
        env = vec.envs[0]
        policy = _policy(env.actor_layout.size, env.critic_layout.size, env.action_dim)
        return collect(vec, policy, steps=6, rng=np.random.default_rng(3))

    a, b = run(), run()
    np.testing.assert_array_equal(a.rewards, b.rewards)
    np.testing.assert_array_equal(a.actions, b.actions)


# ============================================
# CHECKPOINTS
# ============================================


def test_checkpoint_round_trip(tmp_path, rng):
    policy = _policy()
    policy.actor_normalizer.update(rng.normal(size=(10, policy.actor_dim)))
    policy.iteration, policy.progress = 7, 0.35
    path = save_checkpoint(policy, tmp_path / "p.ckpt")
    loaded = load_checkpoint(path)

    np.testing.assert_array_equal(loaded.actor.get_flat(), policy.actor.get_flat())
    np.testing.assert_array_equal(loaded.critic.get_flat(), policy.critic.get_flat())
    np.testing.assert_array_equal(loaded.log_std, policy.log_std)
    np.testing.assert_array_equal(loaded.actor_normalizer.mean, policy.actor_normalizer.mean)
    assert (loaded.iteration, loaded.progress) == (7, 0.35)

    obs = rng.normal(size=(4, policy.actor_dim))
    np.testing.assert_array_equal(loaded.act(obs, deterministic=True)[0], policy.act(obs, deterministic=True)[0])


def test_bad_checkpoints_are_rejected(tmp_path):
    path = save_checkpoint(_policy(), tmp_path / "p.ckpt")
    text = path.read_text(encoding="utf-8")

    (tmp_path / "v2.ckpt").write_text(text.replace("TOIMIT-CKPT v1", "TOIMIT-CKPT v2"), encoding="utf-8")
    (tmp_path / "cut.ckpt").write_text("\n".join(text.splitlines()[:-2]) + "\n", encoding="utf-8")
    (tmp_path / "other.ckpt").write_text("TRJD v1\n", encoding="utf-8")
    for name in ("v2.ckpt", "cut.ckpt", "other.ckpt", "missing.ckpt"):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / name)


# ============================================
# TRAINING LOOP
# ============================================


def _train_config(**overrides) -> TrainConfig:
    values = dict(
        dataset="unused.trjd",
        iterations=2,
        num_envs=2,
        steps_per_env=16,
        checkpoint_every=1,
        holdout_fraction=0.0,
        env=EnvConfig(history_len=2),
        ppo=SMALL,
    )
    values.update(overrides)
    return TrainConfig(**values)


def test_training_is_reproducible(tmp_path, pendulum_record):
    config = _train_config()
    first = train(config, tmp_path / "a", records=[pendulum_record])
    second = train(config, tmp_path / "b", records=[pendulum_record])

    assert (tmp_path / "a" / "learning_curve.csv").read_bytes() == (tmp_path / "b" / "learning_curve.csv").read_bytes()
    assert first.checkpoints[-1].read_bytes() == second.checkpoints[-1].read_bytes()
    assert [p.name for p in first.checkpoints] == ["iter_00001.ckpt", "iter_00002.ckpt", "policy.ckpt"]
    assert len(first.curve) == 2
    assert first.policy.iteration == 2


def test_training_seed_changes_the_run(tmp_path, pendulum_record):
    a = train(_train_config(seed=0), tmp_path / "a", records=[pendulum_record])
    b = train(_train_config(seed=1), tmp_path / "b", records=[pendulum_record])
    assert a.checkpoints[-1].read_bytes() != b.checkpoints[-1].read_bytes()


def test_missing_dataset_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_training_records(_train_config(dataset=str(tmp_path / "nope.trjd")))


def _flat(policy: PolicyBundle) -> np.ndarray:
    return np.concatenate([policy.actor.get_flat(), policy.critic.get_flat(), policy.log_std])


def test_trainer_checkpoint_reproduces_the_next_update(tmp_path, pendulum_record):
    config = _train_config()
    result = train(config, tmp_path / "run", records=[pendulum_record])
    state = load_training_state(tmp_path / "run" / "policy.ckpt")
    assert state.policy.iteration == 2
    assert state.optimizer.t == result.optimizer.t
    assert state.curriculum == curriculum_update(1.0, config.env.curriculum)

    def next_update(policy, optimizer, rng) -> np.ndarray:
        batch = _synthetic_batch(policy, np.random.default_rng(9))
        ppo_update(policy, batch, SMALL, optimizer, rng)
        return _flat(policy)

    resumed = next_update(state.policy, state.optimizer, state.rng)
    uninterrupted = next_update(result.policy, result.optimizer, result.rng)
    np.testing.assert_array_equal(resumed, uninterrupted)


def test_resumed_training_continues_and_is_reproducible(tmp_path, pendulum_record):
    config = _train_config(iterations=3)
    train(config, tmp_path / "run", records=[pendulum_record])
    checkpoint = tmp_path / "run" / "checkpoints" / "iter_00001.ckpt"
    steps_per_iteration = load_training_state(checkpoint).optimizer.t

    a = train(config, tmp_path / "a", records=[pendulum_record], resume=checkpoint)
    b = train(config, tmp_path / "b", records=[pendulum_record], resume=checkpoint)
    assert [row["iteration"] for row in a.curve] == [1, 2]
    assert a.policy.iteration == 3
    assert a.optimizer.t == 3 * steps_per_iteration
    assert a.checkpoints[-1].read_bytes() == b.checkpoints[-1].read_bytes()


def test_resume_needs_iterations_left(tmp_path, pendulum_record):
    config = _train_config(iterations=1)
    result = train(config, tmp_path / "run", records=[pendulum_record])
    with pytest.raises(ConfigError):
        train(config, tmp_path / "again", records=[pendulum_record], resume=result.checkpoints[-1])


def test_policy_only_checkpoint_cannot_resume(tmp_path):
    path = save_checkpoint(_policy(), tmp_path / "p.ckpt")
    with pytest.raises(CheckpointError):
        load_training_state(path)


@pytest.mark.slow
def test_policy_learns_to_track_a_pendulum_swing(tmp_path, pendulum_record):
    def tracking(policy) -> float:
        vec = _vector([pendulum_record], seeds=(21,))
        for env in vec.envs:
            env.set_curriculum(EVAL_CURRICULUM)
        batch = collect(vec, policy, steps=120, rng=np.random.default_rng(0), deterministic=True, update_normalizer=False)
        return batch.task_reward

    config = _train_config(iterations=40, num_envs=4, steps_per_env=64, checkpoint_every=40)
    result = train(config, tmp_path, records=[pendulum_record])
    trained = result.policy
    fresh = _policy(trained.actor_dim, trained.critic_dim, trained.action_dim, seed=config.seed)
    assert tracking(trained) > tracking(fresh)
