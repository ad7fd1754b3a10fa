"""Double-DQN training: replay buffer, target computation, gradient steps.

Action selection masks illegal actions; the double-Q target picks the argmax
action with the online network and values it with the target network; the
target network tracks the online one by convex soft updates.  The optimizer
is plain SGD with global-norm gradient clipping by default, with Adam-style
moments available behind a config switch.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import qnet
from .observation import CH_LANDING, Observation
from .qnet import NUM_ACTIONS, QNetConfig, QNetworkParams
from .rng import (
    STREAM_ACTION,
    STREAM_INIT,
    STREAM_REPLAY,
    STREAM_TRAIN_EPISODE,
    derive_seed,
    stream,
)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ExplorationConfig:
    kind: str = "softmax"  # softmax | epsilon_greedy
    temperature: float = 0.1
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 10_000

    def validate(self) -> None:
        if self.kind not in ("softmax", "epsilon_greedy"):
            raise ValueError(f"unknown exploration kind {self.kind!r}")
        if self.temperature <= 0:
            raise ValueError("softmax temperature must be positive")
        if not (0 <= self.epsilon_end <= self.epsilon_start <= 1):
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")

    def value_at(self, step: int) -> float:
        """Temperature, or the linearly decayed epsilon, at a training step."""
        if self.kind == "softmax":
            return self.temperature
        frac = min(1.0, step / max(1, self.epsilon_decay_steps))
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


@dataclass(frozen=True)
class TrainerConfig:
    gamma: float = 0.95
    soft_update_eta: float = 0.005
    update_target_interval: int = 1
    learning_rate: float = 3e-4
    batch_size: int = 128
    buffer_capacity: int = 50_000
    total_steps: int = 200_000
    exploration: ExplorationConfig = field(default_factory=ExplorationConfig)
    optimizer: str = "sgd"  # sgd | adam
    grad_clip_norm: float = 1.0
    log_interval: int = 1_000
    eval_interval: int = 0  # 0 disables in-training evaluation rows
    eval_episodes: int = 20

    def validate(self) -> None:
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must be in [0, 1]")
        if not 0 < self.soft_update_eta <= 1:
            raise ValueError("soft_update_eta must be in (0, 1]")
        if self.update_target_interval < 1:
            raise ValueError("update_target_interval must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.batch_size > self.buffer_capacity:
            raise ValueError("need 1 <= batch_size <= buffer_capacity")
        if self.total_steps < 0:
            raise ValueError("total_steps must be nonnegative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        self.exploration.validate()


@dataclass(frozen=True)
class Transition:
    obs: Observation
    action_index: int
    reward: float
    next_obs: Observation
    terminal: bool


class ReplayBuffer:
    """FIFO ring over preallocated arrays with uniform sampling."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.size = 0
        self._ptr = 0
        self._alloc: bool = False

    def _allocate(self, obs: Observation) -> None:
        cap = self.capacity
        self.local = np.empty((cap,) + obs.local_stack.shape)
        self.global_ = np.empty((cap,) + obs.global_stack.shape)
        self.battery = np.empty(cap)
        self.next_local = np.empty_like(self.local)
        self.next_global = np.empty_like(self.global_)
        self.next_battery = np.empty(cap)
        self.action = np.empty(cap, dtype=np.int64)
        self.reward = np.empty(cap)
        self.terminal = np.empty(cap, dtype=bool)
        self._alloc = True

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        if not self._alloc:
            self._allocate(t.obs)
        i = self._ptr
        self.local[i] = t.obs.local_stack
        self.global_[i] = t.obs.global_stack
        self.battery[i] = t.obs.battery_frac
        self.next_local[i] = t.next_obs.local_stack
        self.next_global[i] = t.next_obs.global_stack
        self.next_battery[i] = t.next_obs.battery_frac
        self.action[i] = t.action_index
        self.reward[i] = t.reward
        self.terminal[i] = t.terminal
        self._ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} < batch {batch_size}")
        return rng.choice(self.size, size=batch_size, replace=False)


def legal_mask_from_obs(local_stack: np.ndarray) -> np.ndarray:
    """Action legality recovered from an observation (batched or single).

    Movement and hover are always selectable (the safety controller handles
    blocked moves); LAND is legal iff the agent-centered landing channel is
    set at the center cell.
    """
    single = local_stack.ndim == 3
    if single:
        local_stack = local_stack[None]
    c = local_stack.shape[1] // 2
    mask = np.ones((local_stack.shape[0], NUM_ACTIONS), dtype=bool)
    mask[:, 5] = local_stack[:, c, c, CH_LANDING] > 0.5
    return mask[0] if single else mask


def select_action(
    q_values: np.ndarray,
    legal_mask: np.ndarray,
    rng: np.random.Generator,
    kind: str = "greedy",
    value: float = 0.0,
) -> int:
    """Pick an action index; illegal actions are masked out entirely.

    kind: greedy (masked argmax, ties to lowest index), softmax (Boltzmann
    over legal actions with temperature=value), or epsilon_greedy
    (epsilon=value chance of a uniform legal action).
    """
    legal_mask = np.asarray(legal_mask, dtype=bool)
    if not legal_mask.any():
        raise ValueError("no legal action")
    masked = np.where(legal_mask, q_values, -np.inf)
    if kind == "greedy":
        return int(np.argmax(masked))
    if kind == "softmax":
        z = (masked - masked.max()) / value
        p = np.exp(np.where(legal_mask, z, -np.inf))
        p /= p.sum()
        return int(rng.choice(NUM_ACTIONS, p=p))
    if kind == "epsilon_greedy":
        if rng.random() < value:
            return int(rng.choice(np.flatnonzero(legal_mask)))
        return int(np.argmax(masked))
    raise ValueError(f"unknown selection kind {kind!r}")


def double_q_targets(
    rewards: np.ndarray,
    terminal: np.ndarray,
    q_next_main: np.ndarray,
    q_next_target: np.ndarray,
    legal_next: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Double-Q targets: action chosen by the online values, scored by the
    target values.  Terminal transitions do not bootstrap."""
    masked = np.where(legal_next, q_next_main, -np.inf)
    a_star = np.argmax(masked, axis=1)
    boot = q_next_target[np.arange(len(rewards)), a_star]
    return rewards + gamma * boot * (~np.asarray(terminal, dtype=bool))


def ddqn_target(
    batch_next_local: np.ndarray,
    batch_next_global: np.ndarray,
    batch_next_battery: np.ndarray,
    rewards: np.ndarray,
    terminal: np.ndarray,
    main: QNetworkParams,
    target: QNetworkParams,
    gamma: float,
) -> np.ndarray:
    q_main, _ = qnet.forward_batch(main, batch_next_local, batch_next_global, batch_next_battery)
    q_tgt, _ = qnet.forward_batch(target, batch_next_local, batch_next_global, batch_next_battery)
    legal = legal_mask_from_obs(batch_next_local)
    return double_q_targets(rewards, terminal, q_main, q_tgt, legal, gamma)


def soft_update(target: QNetworkParams, main: QNetworkParams, eta: float) -> QNetworkParams:
    """In-place convex blend target <- (1-eta) * target + eta * main."""
    for name, arr in target.items():
        if arr.shape != main[name].shape:
            raise ValueError(f"shape mismatch for {name}")
        arr *= 1.0 - eta
        arr += eta * main[name]
    return target


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    clip_norm: float
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def apply_gradients(params: QNetworkParams, grads: dict, opt: OptimizerState) -> None:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    scale = 1.0
    if opt.clip_norm > 0 and norm > opt.clip_norm:
        scale = opt.clip_norm / norm
    opt.step += 1
    if opt.kind == "sgd":
        for name, arr in params.items():
            arr -= opt.learning_rate * scale * grads[name]
        return
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for name, arr in params.items():
        g = grads[name] * scale
        m = opt.m.setdefault(name, np.zeros_like(arr))
        v = opt.v.setdefault(name, np.zeros_like(arr))
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** opt.step)
        vhat = v / (1 - beta2 ** opt.step)
        arr -= opt.learning_rate * mhat / (np.sqrt(vhat) + eps)


def train_step(
    buffer: ReplayBuffer,
    main: QNetworkParams,
    target: QNetworkParams,
    config: TrainerConfig,
    rng: np.random.Generator,
    opt: OptimizerState,
) -> float:
    """One uniform minibatch MSE step on the online network; returns the loss."""
    idx = buffer.sample_indices(config.batch_size, rng)
    y = ddqn_target(
        np.ascontiguousarray(buffer.next_local[idx]),
        np.ascontiguousarray(buffer.next_global[idx]),
        buffer.next_battery[idx],
        buffer.reward[idx],
        buffer.terminal[idx],
        main,
        target,
        config.gamma,
    )
    q, cache = qnet.forward_batch(
        main,
        np.ascontiguousarray(buffer.local[idx]),
        np.ascontiguousarray(buffer.global_[idx]),
        buffer.battery[idx],
        need_cache=True,
    )
    actions = buffer.action[idx]
    rows = np.arange(len(idx))
    err = q[rows, actions] - y
    loss = float((err * err).mean())
    if not math.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss}")
    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * err / len(idx)
    grads = qnet.backward_batch(main, cache, dq)
    apply_gradients(main, grads, opt)
    return loss


@dataclass
class LogRow:
    step: int
    episode: int
    loss: float
    epsilon_or_temp: float
    eval_landing_ratio: float | None = None
    eval_primary_ratio: float | None = None


LOG_HEADER = ["step", "episode", "loss", "epsilon_or_temp",
              "eval_landing_ratio", "eval_primary_ratio"]


def write_log(path: str, rows: Sequence[LogRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_HEADER)
        for r in rows:
            writer.writerow([
                r.step, r.episode,
                "" if math.isnan(r.loss) else f"{r.loss:.10g}",
                f"{r.epsilon_or_temp:.10g}",
                "" if r.eval_landing_ratio is None else f"{r.eval_landing_ratio:.10g}",
                "" if r.eval_primary_ratio is None else f"{r.eval_primary_ratio:.10g}",
            ])


def run_training(
    env_factory: Callable,
    net_config: QNetConfig,
    config: TrainerConfig,
    seed: int,
    eval_fn: Callable[[QNetworkParams, int], tuple[float, float]] | None = None,
    progress: Callable[[int, float], None] | None = None,
) -> tuple[QNetworkParams, list[LogRow]]:
    """Run the full training loop; fully determined by (configs, seed).

    eval_fn, when provided together with config.eval_interval > 0, maps a
    parameter snapshot and step count to (landing_ratio, primary_ratio) for
    the periodic evaluation columns of the log.
    """
    config.validate()
    env = env_factory()
    main = qnet.init_params(net_config, derive_seed(seed, STREAM_INIT))
    target = main.copy()
    buffer = ReplayBuffer(config.buffer_capacity)
    action_rng = stream(seed, STREAM_ACTION)
    replay_rng = stream(seed, STREAM_REPLAY)
    opt = OptimizerState(config.optimizer, config.learning_rate, config.grad_clip_norm)
    explore = config.exploration

    rows: list[LogRow] = []
    step_i = 0
    episode = 0
    last_loss = math.nan

    def log(eval_pair=None) -> None:
        rows.append(
            LogRow(
                step=step_i,
                episode=episode,
                loss=last_loss,
                epsilon_or_temp=explore.value_at(step_i),
                eval_landing_ratio=None if eval_pair is None else eval_pair[0],
                eval_primary_ratio=None if eval_pair is None else eval_pair[1],
            )
        )

    while step_i < config.total_steps:
        obs = env.reset(derive_seed(seed, STREAM_TRAIN_EPISODE, episode))
        episode += 1
        while env.active and step_i < config.total_steps:
            q = qnet.q_forward(obs, main)
            kind = "softmax" if explore.kind == "softmax" else "epsilon_greedy"
            action = select_action(
                q, env.legal_mask(), action_rng, kind, explore.value_at(step_i)
            )
            result = env.step(action)
            buffer.push(
                Transition(obs, action, result.reward, result.obs, result.done)
            )
            obs = result.obs
            step_i += 1
            if buffer.size >= config.batch_size:
                last_loss = train_step(buffer, main, target, config, replay_rng, opt)
                if step_i % config.update_target_interval == 0:
                    soft_update(target, main, config.soft_update_eta)
            if config.log_interval > 0 and step_i % config.log_interval == 0:
                pair = None
                if eval_fn is not None and config.eval_interval > 0 and step_i % config.eval_interval == 0:
                    pair = eval_fn(main, step_i)
                log(pair)
                if progress is not None:
                    progress(step_i, last_loss)
    if not rows or rows[-1].step != step_i:
        log()
    return main, rows
