"""DQN, Double DQN and Dueling (Double) DQN for the grid field."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..nn import AdamState, NonFiniteError, adam_step, backward, build_mlp, forward, mse_loss
from ..replay import ReplayBuffer

VARIANTS = ("dqn", "double", "dueling")


@dataclass
class DqnConfig:
    variant: str = "dqn"
    learning_rate: float = 1e-3
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.995
    epsilon_min: float = 0.01
    buffer_capacity: int = 100_000
    batch_size: int = 64
    target_update_every: int = 1000
    episodes: int = 10_000
    hidden: tuple = (128, 128)
    # the dueling variant uses the double-DQN target unless this is set
    pure_dueling: bool = False

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.epsilon_min <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_min <= epsilon_start <= 1")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError("epsilon_decay must lie in (0, 1]")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        for name in ("buffer_capacity", "batch_size", "target_update_every", "episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")

    @property
    def double_target(self):
        return self.variant == "double" or (self.variant == "dueling" and not self.pure_dueling)

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class EpisodeRecord:
    episode: int
    reward: float
    steps: int
    outcome: str
    epsilon: float
    mean_loss: float


@dataclass
class TrainResult:
    agent: "DqnAgent"
    log: list = field(default_factory=list)
    wall_time: float = 0.0


class DqnAgent:
    def __init__(self, n_inputs, n_actions, config, rng):
        self.config = config
        self.n_actions = n_actions
        sizes = [n_inputs, *config.hidden]
        if config.variant == "dueling":
            self.policy_net = build_mlp(sizes, head="dueling", n_actions=n_actions, rng=rng)
        else:
            self.policy_net = build_mlp(sizes + [n_actions], rng=rng)
        self.target_net = self.policy_net.clone()
        self.optimizer = AdamState(self.policy_net.size)
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.epsilon = config.epsilon_start
        self.global_step = 0
        self._grad = np.zeros(self.policy_net.size)

    def q_values(self, state):
        return forward(self.policy_net, state).output

    def select_action(self, state, rng, epsilon=None):
        eps = self.epsilon if epsilon is None else epsilon
        if eps > 0.0 and rng.random() < eps:
            return int(rng.integers(self.n_actions))
        # np.argmax breaks ties toward the lowest index
        return int(np.argmax(self.q_values(state)))

    def compute_targets(self, batch, double=None):
        double = self.config.double_target if double is None else double
        q_next = forward(self.target_net, batch.next_states).output
        if double:
            chosen = np.argmax(forward(self.policy_net, batch.next_states).output, axis=1)
            bootstrap = q_next[np.arange(len(chosen)), chosen]
        else:
            bootstrap = q_next.max(axis=1)
        return batch.rewards + self.config.gamma * bootstrap * ~batch.terminated

    def train_step(self, batch):
        """One Adam step on the policy net; returns the batch MSE."""
        y = self.compute_targets(batch)
        trace = forward(self.policy_net, batch.states)
        rows = np.arange(len(y))
        pred = trace.output[rows, batch.actions]
        loss, g_pred = mse_loss(pred, y)
        if not np.isfinite(loss):
            raise NonFiniteError(f"non-finite TD loss at global step {self.global_step}")
        # only the taken action's Q-value receives gradient
        g_out = np.zeros_like(trace.output)
        g_out[rows, batch.actions] = g_pred
        grads, _ = backward(self.policy_net, trace, g_out, grad_buf=self._grad, input_grad=False)
        adam_step(self.policy_net.flat, grads, self.optimizer, self.config.learning_rate)
        return loss

    def observe(self, state, action, reward, next_state, terminated, rng):
        """Store a transition, learn if possible, refresh the target on schedule."""
        self.buffer.push(state=state, action=action, reward=reward,
                         next_state=next_state, terminated=terminated)
        loss = None
        if self.buffer.can_sample(self.config.batch_size):
            loss = self.train_step(self.buffer.sample(self.config.batch_size, rng))
        self.global_step += 1
        if self.global_step % self.config.target_update_every == 0:
            self.target_net.copy_from(self.policy_net)
        return loss

    def decay_epsilon(self):
        self.epsilon = max(self.config.epsilon_min, self.epsilon * self.config.epsilon_decay)


def _streams(rng):
    """Independent child generators for init, acting, sampling and the env."""
    seeds = rng.bit_generator.seed_seq.spawn(4) if hasattr(rng.bit_generator, "seed_seq") else None
    if seeds is None:
        return rng, rng, rng, rng
    return tuple(np.random.Generator(type(rng.bit_generator)(s)) for s in seeds)


def train(env, config, rng, callback=None, stop=None):
    """Run the epsilon-greedy DQN loop for ``config.episodes`` episodes.

    ``stop(log)`` may end training early once it returns True.
    """
    config.validate()
    init_rng, act_rng, sample_rng, env_rng = _streams(rng)
    agent = DqnAgent(env.n_states, env.n_actions, config, init_rng)
    log = []
    t0 = time.perf_counter()
    for episode in range(1, config.episodes + 1):
        s = env.reset()
        x = env.encode_state(s)
        total, losses = 0.0, []
        while True:
            a = agent.select_action(x, act_rng)
            res = env.step(a, env_rng)
            x_next = env.encode_state(res.next_state)
            loss = agent.observe(x, a, res.reward, x_next, res.terminated, sample_rng)
            if loss is not None:
                losses.append(loss)
            total += res.reward
            x = x_next
            if res.terminated or res.truncated:
                break
        if res.terminated:
            outcome = "goal" if res.reward > 0 else "obstacle"
        else:
            outcome = "timeout"
        row = EpisodeRecord(episode, total, env.steps, outcome, agent.epsilon,
                            float(np.mean(losses)) if losses else float("nan"))
        log.append(row)
        agent.decay_epsilon()
        if callback is not None:
            callback(row)
        if stop is not None and stop(log):
            break
    return TrainResult(agent, log, time.perf_counter() - t0)


def extract_path(agent, env, rng=None):
    """Greedy rollout from the start, capped at the env's episode limit.

    Returns the visited state indices, start included.
    """
    s = env.reset()
    path = [s]
    while True:
        a = int(np.argmax(agent.q_values(env.encode_state(s))))
        res = env.step(a, rng)
        s = res.next_state
        path.append(s)
        if res.terminated or res.truncated:
            break
    env.reset()
    return path
