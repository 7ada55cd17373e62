"""
Double-DQN training and greedy / epsilon-test inference for the tuning env.

Random streams used by :func:`train`, spawned in this order from
``SeedSequence(train_config.seed)``:

0. weight initialisation
1. episode load sampling
2. epsilon-greedy draws
3. replay mini-batch sampling
4. dropout masks
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .dataset import LoadSample
from .env import ACTIONS, N_ACTIONS, STATE_DIM, EnvConfig, TuningEnv
from .nn import (AdamState, MlpSpec, NonFiniteGradientError, Weights, adam_step,
                 backward, forward, init_weights, predict)
from .records import TuningResult

log = logging.getLogger(__name__)

TRAIN_LOG_HEADER = "episode,cum_reward,final_gamma,steps,epsilon"


@dataclass(frozen=True)
class EpsSchedule:
    eps0: float = 1.0
    eps_min: float = 0.05
    decay: float = 1e-5

    def __call__(self, t: int) -> float:
        return max(self.eps_min, self.eps0 - self.decay * t)


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 300
    gamma: float = 0.95
    batch_size: int = 128
    target_sync: int = 5000
    max_steps: int = 1000
    buffer_capacity: int = 50_000
    lr: float = 5e-4
    eps: EpsSchedule = EpsSchedule()
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        for name in ("episodes", "batch_size", "target_sync", "max_steps", "buffer_capacity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions backed by preallocated arrays."""

    def __init__(self, capacity: int = 50_000, state_dim: int = STATE_DIM):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.s_next = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity, dtype=np.intp)
        self.r = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, s, a: int, r: float, s_next, terminal: bool) -> None:
        if not 0 <= a < N_ACTIONS:
            raise ValueError(f"invalid action {a}")
        if not np.isfinite(r):
            raise ValueError("reward must be finite")
        i = self._next
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.terminal[i] = terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._next) % self.capacity

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        return [Transition(self.s[i].copy(), int(self.a[i]), float(self.r[i]),
                           self.s_next[i].copy(), bool(self.terminal[i]))
                for i in self._order()]

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform draw without replacement within the batch."""
        if batch_size > self._size:
            raise ValueError("not enough transitions to sample from")
        return rng.choice(self._size, size=batch_size, replace=False)

    def batch(self, idx: np.ndarray):
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.terminal[idx]


def select_action(q_values, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties go to the lowest index.

    One uniform draw is always consumed so that streams stay aligned across
    different epsilon values.
    """
    if rng.random() < eps:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(q_values))


def ddqn_targets(r, s_next, terminal, online: Weights, target: Weights, gamma: float) -> np.ndarray:
    """Vectorised Double-DQN targets; terminal rows are not bootstrapped."""
    s_next = np.atleast_2d(s_next)
    a_star = np.argmax(predict(online, s_next), axis=1)
    q_next = predict(target, s_next)[np.arange(s_next.shape[0]), a_star]
    return np.asarray(r, dtype=float) + gamma * np.where(terminal, 0.0, q_next)


def ddqn_target(r: float, s_next, terminal: bool, online: Weights, target: Weights,
                gamma: float) -> float:
    return float(ddqn_targets([r], s_next, [terminal], online, target, gamma)[0])


@dataclass
class EpisodeLog:
    episode: int
    cum_reward: float
    final_gamma: float
    steps: int
    epsilon: float

    def csv_row(self) -> str:
        return f"{self.episode},{self.cum_reward!r},{self.final_gamma!r},{self.steps},{self.epsilon!r}"


class QAgent:
    """Online/target network pair plus optimiser and replay memory."""

    def __init__(self, spec: MlpSpec, cfg: TrainConfig, rng_init, rng_replay, rng_dropout):
        if spec.layer_sizes[0] != STATE_DIM or spec.layer_sizes[-1] != N_ACTIONS:
            raise ValueError(f"Q-network must map {STATE_DIM} inputs to {N_ACTIONS} outputs")
        self.cfg = cfg
        self.online = init_weights(spec, rng_init)
        self.target = self.online.copy()
        self.adam = AdamState(lr=cfg.lr)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.rng_replay = rng_replay
        self.rng_dropout = rng_dropout
        self.updates = 0

    def sync_target(self) -> None:
        self.target = self.online.copy()

    def update(self) -> float:
        idx = self.buffer.sample_indices(self.cfg.batch_size, self.rng_replay)
        s, a, r, s_next, term = self.buffer.batch(idx)
        y = ddqn_targets(r, s_next, term, self.online, self.target, self.cfg.gamma)
        cache = forward(self.online, s, self.rng_dropout)
        loss, grads = backward(self.online, cache, a, y)
        adam_step(self.online, grads, self.adam)
        self.updates += 1
        return loss


def train(pool_train: list[LoadSample], env_config: EnvConfig | None = None,
          train_config: TrainConfig | None = None, net_spec: MlpSpec | None = None,
          callback=None) -> tuple[Weights, list[EpisodeLog]]:
    """Run Double-DQN training; returns the online weights and one log row per episode.

    The target network is synchronised every ``target_sync`` environment
    steps counted across episodes, and one gradient update follows every
    environment step once the buffer holds a full mini-batch.
    """
    if not pool_train:
        raise ValueError("training pool is empty")
    env_config = env_config or EnvConfig()
    cfg = train_config or TrainConfig()
    spec = net_spec or MlpSpec()
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(5)]
    rng_init, rng_episode, rng_explore, rng_replay, rng_dropout = streams

    agent = QAgent(spec, cfg, rng_init, rng_replay, rng_dropout)
    env = TuningEnv(env_config, max_steps=cfg.max_steps)
    t_global = 0
    history: list[EpisodeLog] = []
    for episode in range(1, cfg.episodes + 1):
        sample = pool_train[int(rng_episode.integers(len(pool_train)))]
        s = env.reset(sample).as_array()
        cum = 0.0
        while not env.done:
            q = predict(agent.online, s)
            a = select_action(q, cfg.eps(t_global), rng_explore)
            out = env.step(a)
            t_global += 1
            s_next = out.next_state.as_array()
            agent.buffer.push(s, a, out.reward, s_next, out.terminal)
            cum += out.reward
            if len(agent.buffer) >= cfg.batch_size:
                try:
                    agent.update()
                except NonFiniteGradientError as exc:
                    raise NonFiniteGradientError(
                        f"{exc} at episode {episode}, step {env.steps} (global step {t_global})"
                    ) from None
                if t_global % cfg.target_sync == 0:
                    agent.sync_target()
            s = s_next
        row = EpisodeLog(episode, cum, env.gamma_mag, env.steps, cfg.eps(t_global))
        history.append(row)
        if callback is not None:
            callback(row)
        log.debug("episode %d reward %.2f |G| %.4g steps %d eps %.3f", *row.__dict__.values())
    return agent.online, history


def tune(sample: LoadSample, weights: Weights, eps_test: float = 0.0, max_steps: int = 200,
         rng: np.random.Generator | None = None, env_config: EnvConfig | None = None,
         method: str = "agent") -> tuple[TuningResult, list[tuple[float, float]]]:
    """Roll out the trained policy on one load.

    Returns the result record and the visited ``(cp, cs)`` trajectory in F,
    starting with the initial capacitances.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    env = TuningEnv(env_config or EnvConfig(), max_steps=max_steps)
    start = time.perf_counter()
    state = env.reset(sample)
    trajectory = [(env.cp, env.cs)]
    s = state.as_array()
    while not env.done:
        a = select_action(predict(weights, s), eps_test, rng)
        s = env.step(a).next_state.as_array()
        trajectory.append((env.cp, env.cs))
    wall = time.perf_counter() - start
    g = env.gamma_mag
    result = TuningResult(sample.sample_id, method, eps_test, g, env.steps,
                          g < env.config.eps_threshold, wall, env.cp, env.cs)
    return result, trajectory


def norm_constants(env_config: EnvConfig) -> dict:
    return {"cap_min": env_config.cap_min, "cap_max": env_config.cap_max,
            "f_min": env_config.f_min, "f_max": env_config.f_max}


def action_table():
    return list(ACTIONS)
