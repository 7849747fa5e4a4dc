"""DDPG and TD3 for the continuous field."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..nn import (
    AdamState,
    NonFiniteError,
    adam_step,
    backward,
    build_mlp,
    forward,
    mse_loss,
    save_checkpoint,
    soft_update,
)
from ..replay import ReplayBuffer

ALGOS = ("ddpg", "td3")


@dataclass
class ActorCriticConfig:
    algo: str = "td3"
    alpha: float = 5e-4  # actor learning rate
    beta: float = 5e-3  # critic learning rate
    tau: float = 1e-3
    gamma: float = 0.99
    buffer_capacity: int = 100_000
    batch_size: int = 64
    noise_clip: float = 0.5
    policy_update_every: int = 2
    smoothing_sigma: float = 0.2
    exploration: str = "gaussian"  # or "ou"
    exploration_sigma: float = 0.1
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_mu: float = 0.0
    warmup_steps: int = 1000
    episodes: int = 5000
    hidden: tuple = (256, 256)
    checkpoint_every: int = 500

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    @classmethod
    def for_algo(cls, algo, **overrides):
        """Published defaults: DDPG (lr 1e-4/1e-3, OU noise) or TD3 (5e-4/5e-3)."""
        if algo == "ddpg":
            base = dict(algo="ddpg", alpha=1e-4, beta=1e-3, policy_update_every=1,
                        exploration="ou")
        elif algo == "td3":
            base = dict(algo="td3", alpha=5e-4, beta=5e-3, policy_update_every=2,
                        exploration="gaussian")
        else:
            raise ValueError(f"algo must be one of {ALGOS}, got {algo!r}")
        base.update(overrides)
        return cls(**base)

    def validate(self):
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.exploration not in ("ou", "gaussian"):
            raise ValueError("exploration must be 'ou' or 'gaussian'")
        for name in ("alpha", "beta", "tau", "smoothing_sigma", "exploration_sigma",
                     "ou_theta", "ou_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.algo == "td3" and self.noise_clip <= 0:
            raise ValueError("TD3 needs a positive noise_clip")
        for name in ("buffer_capacity", "batch_size", "policy_update_every", "episodes",
                     "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be non-negative")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class OuNoise:
    """Ornstein-Uhlenbeck process, unit time step."""

    def __init__(self, dim, theta=0.15, sigma=0.2, mu=0.0):
        self.theta = theta
        self.sigma = sigma
        self.mu = mu
        self.state = np.full(dim, float(mu))

    def reset(self):
        self.state[:] = self.mu

    def sample(self, rng):
        # written around mu so both the fixed point and theta = 1 are exact
        self.state = (self.mu + (1.0 - self.theta) * (self.state - self.mu)
                      + self.sigma * rng.standard_normal(self.state.shape))
        return self.state.copy()


class GaussianNoise:
    def __init__(self, dim, sigma=0.1):
        self.dim = dim
        self.sigma = sigma

    def reset(self):
        pass

    def sample(self, rng):
        return self.sigma * rng.standard_normal(self.dim)


def smooth_target_action(mu_next, raw_noise, noise_clip):
    """TD3 target smoothing: clip the noise to +-noise_clip, then the action to [-1, 1]."""
    return np.clip(mu_next + np.clip(raw_noise, -noise_clip, noise_clip), -1.0, 1.0)


def action_gradient(critic, states, actions):
    """dQ/da for each row, through the critic's input layer."""
    x = np.concatenate([states, actions], axis=1)
    trace = forward(critic, x)
    _, gx = backward(critic, trace, np.ones_like(trace.output))
    return gx[:, states.shape[1]:]


@dataclass
class ContEpisodeRecord:
    episode: int
    reward: float
    steps: int
    outcome: str
    noise: float
    mean_loss: float


class ActorCriticAgent:
    """Holds the actor, one or two critics, their targets and the replay buffer.

    Observations are mapped from ``[obs_low, obs_high]`` to ``[-1, 1]`` before
    they reach any network.
    """

    def __init__(self, obs_dim, action_dim, config, rng, obs_low=0.0, obs_high=1.0):
        self.config = config
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.obs_low = np.broadcast_to(np.asarray(obs_low, dtype=np.float64), (obs_dim,)).copy()
        self.obs_high = np.broadcast_to(np.asarray(obs_high, dtype=np.float64), (obs_dim,)).copy()
        h = list(config.hidden)
        self.actor = build_mlp([obs_dim, *h, action_dim], output_activation="tanh", rng=rng)
        self.actor_target = self.actor.clone()
        n_critics = 2 if config.algo == "td3" else 1
        self.critics = [build_mlp([obs_dim + action_dim, *h, 1], rng=rng) for _ in range(n_critics)]
        self.critic_targets = [c.clone() for c in self.critics]
        self.actor_opt = AdamState(self.actor.size)
        self.critic_opts = [AdamState(c.size) for c in self.critics]
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.update_counter = 0
        if config.exploration == "ou":
            self.noise = OuNoise(action_dim, config.ou_theta, config.ou_sigma, config.ou_mu)
        else:
            self.noise = GaussianNoise(action_dim, config.exploration_sigma)

    @property
    def critic(self):
        return self.critics[0]

    def normalize(self, obs):
        return 2.0 * (np.asarray(obs, dtype=np.float64) - self.obs_low) / (self.obs_high - self.obs_low) - 1.0

    def policy(self, obs):
        return forward(self.actor, self.normalize(obs)).output

    def select_action(self, obs, mode="exploit", rng=None):
        mu = self.policy(obs)
        if mode == "exploit":
            return mu
        if mode != "explore":
            raise ValueError(f"mode must be 'explore' or 'exploit', got {mode!r}")
        return np.clip(mu + self.noise.sample(rng), -1.0, 1.0)

    # learning

    def _critic_step(self, k, x, y):
        critic = self.critics[k]
        trace = forward(critic, x)
        loss, g = mse_loss(trace.output[:, 0], y)
        if not np.isfinite(loss):
            raise NonFiniteError(f"non-finite critic loss at update {self.update_counter}")
        grads, _ = backward(critic, trace, g[:, None], input_grad=False)
        adam_step(critic.flat, grads, self.critic_opts[k], self.config.beta)
        return loss

    def _actor_step(self, states):
        a_trace = forward(self.actor, states)
        x = np.concatenate([states, a_trace.output], axis=1)
        c_trace = forward(self.critic, x)
        objective = float(c_trace.output.mean())
        n = len(states)
        # ascend mean Q: descend -Q/N
        _, gx = backward(self.critic, c_trace, np.full((n, 1), -1.0 / n))
        grads, _ = backward(self.actor, a_trace, gx[:, self.obs_dim:], input_grad=False)
        adam_step(self.actor.flat, grads, self.actor_opt, self.config.alpha)
        return objective

    def _soft_update_targets(self):
        tau = self.config.tau
        soft_update(self.actor_target, self.actor, tau)
        for tgt, src in zip(self.critic_targets, self.critics):
            soft_update(tgt, src, tau)

    def ddpg_targets(self, batch):
        mu_next = forward(self.actor_target, batch.next_states).output
        q_next = forward(self.critic_targets[0],
                         np.concatenate([batch.next_states, mu_next], axis=1)).output[:, 0]
        return batch.rewards + self.config.gamma * q_next * ~batch.terminated

    def td3_targets(self, batch, rng):
        mu_next = forward(self.actor_target, batch.next_states).output
        raw = self.config.smoothing_sigma * rng.standard_normal(mu_next.shape)
        a_next = smooth_target_action(mu_next, raw, self.config.noise_clip)
        x_next = np.concatenate([batch.next_states, a_next], axis=1)
        q1 = forward(self.critic_targets[0], x_next).output[:, 0]
        q2 = forward(self.critic_targets[1], x_next).output[:, 0]
        return batch.rewards + self.config.gamma * np.minimum(q1, q2) * ~batch.terminated

    def ddpg_update(self, batch):
        y = self.ddpg_targets(batch)
        x = np.concatenate([batch.states, batch.actions], axis=1)
        critic_loss = self._critic_step(0, x, y)
        objective = self._actor_step(batch.states)
        self._soft_update_targets()
        self.update_counter += 1
        return critic_loss, objective

    def td3_update(self, batch, rng):
        y = self.td3_targets(batch, rng)
        x = np.concatenate([batch.states, batch.actions], axis=1)
        critic_loss = 0.5 * (self._critic_step(0, x, y) + self._critic_step(1, x, y))
        self.update_counter += 1
        objective = None
        if self.update_counter % self.config.policy_update_every == 0:
            objective = self._actor_step(batch.states)
            self._soft_update_targets()
        return critic_loss, objective

    def update(self, batch, rng):
        if self.config.algo == "td3":
            return self.td3_update(batch, rng)
        return self.ddpg_update(batch)

    def networks(self):
        nets = {"actor": self.actor, "actor_target": self.actor_target}
        for i, (c, t) in enumerate(zip(self.critics, self.critic_targets), 1):
            nets[f"critic{i}"] = c
            nets[f"critic{i}_target"] = t
        return nets

    def save(self, directory, tag="final"):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, net in self.networks().items():
            save_checkpoint(net, directory / f"{name}_{tag}.npz")


@dataclass
class ContTrainResult:
    agent: ActorCriticAgent
    log: list = field(default_factory=list)
    wall_time: float = 0.0


def _streams(rng, n=4):
    seed_seq = getattr(rng.bit_generator, "seed_seq", None)
    if seed_seq is None:
        return (rng,) * n
    return tuple(np.random.Generator(type(rng.bit_generator)(s)) for s in seed_seq.spawn(n))


def train(env, config, rng, checkpoint_dir=None, callback=None, stop=None):
    """Actor-critic training loop; one gradient update per environment step.

    ``stop(log)`` may end training early once it returns True.
    """
    config.validate()
    init_rng, act_rng, sample_rng, update_rng = _streams(rng)
    agent = ActorCriticAgent(env.obs_dim, env.action_dim, config, init_rng,
                             obs_low=env.low, obs_high=env.high)
    log = []
    total_steps = 0
    t0 = time.perf_counter()
    for episode in range(1, config.episodes + 1):
        obs = env.reset()
        x = agent.normalize(obs)
        agent.noise.reset()
        ep_reward, losses, noise_mag = 0.0, [], []
        while True:
            if total_steps < config.warmup_steps:
                action = act_rng.uniform(-1.0, 1.0, size=env.action_dim)
            else:
                mu = forward(agent.actor, x).output
                action = np.clip(mu + agent.noise.sample(act_rng), -1.0, 1.0)
                noise_mag.append(float(np.abs(action - mu).mean()))
            res = env.step(action)
            x_next = agent.normalize(res.observation)
            # timeouts are truncations: keep bootstrapping through them
            agent.buffer.push(state=x, action=action, reward=res.reward, next_state=x_next,
                              terminated=res.reached_goal or res.collided)
            total_steps += 1
            if total_steps >= config.warmup_steps and agent.buffer.can_sample(config.batch_size):
                loss, _ = agent.update(agent.buffer.sample(config.batch_size, sample_rng), update_rng)
                losses.append(loss)
            ep_reward += res.reward
            x = x_next
            if res.terminated:
                break
        row = ContEpisodeRecord(episode, ep_reward, env.step_count, res.outcome,
                                float(np.mean(noise_mag)) if noise_mag else 0.0,
                                float(np.mean(losses)) if losses else float("nan"))
        log.append(row)
        if callback is not None:
            callback(row)
        if checkpoint_dir is not None and episode % config.checkpoint_every == 0:
            agent.save(checkpoint_dir, tag=f"ep{episode}")
        if stop is not None and stop(log):
            break
    if checkpoint_dir is not None:
        agent.save(checkpoint_dir)
    return ContTrainResult(agent, log, time.perf_counter() - t0)


def greedy_rollout(agent, env):
    """Noise-free episode from the start; returns (positions, last step result)."""
    obs = env.reset()
    path = [obs]
    while True:
        res = env.step(agent.select_action(obs, "exploit"))
        obs = res.observation
        path.append(obs)
        if res.terminated:
            break
    return np.array(path), res
