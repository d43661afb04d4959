"""Stage-one composition search with double deep Q-learning.

The composition of the six-component load is a point on the probability
simplex. Identification walks that simplex in fixed-size steps: an
action moves a fraction rho of load from one component to another, so
states stay on an integer lattice over the starting point and every
state can be cached and revisited exactly.

A state's score comes from the simulator: the candidate composition is
simulated under a batch of parameter draws (the second-stage unknowns)
and compared against the reference trajectory through the composite
reward. The agent therefore learns which direction of mass transfer
improves the fit, without gradients through the simulator.

Two small multilayer perceptrons estimate action values. The online
network picks actions and the periodically synchronized copy values
them, which keeps the maximization bias of a single estimator out of
the bootstrap targets. Everything is plain numpy with explicit
backpropagation and Adam, so training is deterministic for a fixed
seed.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .load_models import COMPONENT_ORDER, ParamRanges, sample_params
from .metrics import RewardConfig, reward, rmse_pq
from .simulator import (
    N_COMPONENTS,
    PQTrace,
    SimConfig,
    SimulationError,
    VoltageTrace,
    simulate_batch,
)


@dataclass(frozen=True)
class LoadComposition:
    """Fractions of total bus load per component; must sum to 1."""

    ma: float
    mb: float
    mc: float
    single_phase: float
    electronic: float
    zip: float

    def __post_init__(self) -> None:
        a = self.as_array()
        if not np.all(np.isfinite(a)) or np.any(a < -1e-12):
            raise ValueError("fractions must be finite and >= 0")
        if abs(float(a.sum()) - 1.0) > 1e-6:
            raise ValueError("fractions must sum to 1")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in COMPONENT_ORDER])

    @classmethod
    def from_array(cls, a) -> "LoadComposition":
        a = np.asarray(a, dtype=np.float64)
        if a.shape != (N_COMPONENTS,):
            raise ValueError(f"expected {N_COMPONENTS} fractions")
        return cls(**{name: float(v) for name, v in zip(COMPONENT_ORDER, a)})

    def to_dict(self) -> dict:
        return {name: float(getattr(self, name)) for name in COMPONENT_ORDER}

    @classmethod
    def from_dict(cls, d: dict) -> "LoadComposition":
        extra = set(d) - set(COMPONENT_ORDER)
        if extra:
            raise ValueError(f"unknown composition keys: {sorted(extra)}")
        return cls(**{name: float(d.get(name, 0.0)) for name in COMPONENT_ORDER})


# ---------------------------------------------------------------------------
# value network and optimizer
# ---------------------------------------------------------------------------


class ValueNet:
    """Two-hidden-layer ReLU network mapping a state to action values."""

    def __init__(self, n_in: int, n_out: int, hidden: int = 64, rng=None):
        if n_in < 1 or n_out < 1 or hidden < 1:
            raise ValueError("network dimensions must be >= 1")
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.n_in = n_in
        self.n_out = n_out
        self.hidden = hidden
        self.w1 = rng.standard_normal((n_in, hidden)) * math.sqrt(2.0 / n_in)
        self.b1 = np.zeros(hidden)
        self.w2 = rng.standard_normal((hidden, hidden)) * math.sqrt(2.0 / hidden)
        self.b2 = np.zeros(hidden)
        self.w3 = rng.standard_normal((hidden, n_out)) * math.sqrt(2.0 / hidden)
        self.b3 = np.zeros(n_out)

    def _params(self):
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self._params())

    def to_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self._params()])

    def from_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError("flat vector has wrong length")
        pos = 0
        for p in self._params():
            p[...] = flat[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    def copy(self) -> "ValueNet":
        other = ValueNet.__new__(ValueNet)
        other.n_in, other.n_out, other.hidden = self.n_in, self.n_out, self.hidden
        other.w1 = self.w1.copy()
        other.b1 = self.b1.copy()
        other.w2 = self.w2.copy()
        other.b2 = self.b2.copy()
        other.w3 = self.w3.copy()
        other.b3 = self.b3.copy()
        return other

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.n_in:
            raise ValueError("input width does not match the network")
        h1 = np.maximum(0.0, x @ self.w1 + self.b1)
        h2 = np.maximum(0.0, h1 @ self.w2 + self.b2)
        out = h2 @ self.w3 + self.b3
        return out[0] if single else out

    def loss_and_grads(self, x: np.ndarray, a_idx: np.ndarray,
                       targets: np.ndarray) -> tuple[float, np.ndarray]:
        """Sum of squared TD errors on the chosen actions, with gradients.

        The sum (not mean) reduction makes a transition that appears k
        times in a batch contribute exactly k times its single-copy
        gradient.
        """

        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        a_idx = np.asarray(a_idx, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.float64)
        k = x.shape[0]
        z1 = x @ self.w1 + self.b1
        h1 = np.maximum(0.0, z1)
        z2 = h1 @ self.w2 + self.b2
        h2 = np.maximum(0.0, z2)
        out = h2 @ self.w3 + self.b3

        rows = np.arange(k)
        err = out[rows, a_idx] - targets
        loss = float(np.sum(err ** 2))

        d_out = np.zeros_like(out)
        d_out[rows, a_idx] = 2.0 * err
        g_w3 = h2.T @ d_out
        g_b3 = d_out.sum(axis=0)
        d_h2 = d_out @ self.w3.T
        d_z2 = d_h2 * (z2 > 0.0)
        g_w2 = h1.T @ d_z2
        g_b2 = d_z2.sum(axis=0)
        d_h1 = d_z2 @ self.w2.T
        d_z1 = d_h1 * (z1 > 0.0)
        g_w1 = x.T @ d_z1
        g_b1 = d_z1.sum(axis=0)
        flat = np.concatenate([g.ravel() for g in
                               (g_w1, g_b1, g_w2, g_b2, g_w3, g_b3)])
        return loss, flat


class Adam:
    """Adam over a flat parameter vector."""

    def __init__(self, n: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0.0:
            raise ValueError("lr must be > 0")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads ** 2
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# simplex actions and replay
# ---------------------------------------------------------------------------


def action_pairs(d: int) -> list[tuple[int, int]]:
    """Ordered (source, destination) transfers over d components."""

    if d < 2:
        raise ValueError("need at least 2 active components")
    return [(s, t) for s in range(d) for t in range(d) if t != s]


def feasible_mask(state: np.ndarray, actions: Sequence[tuple[int, int]],
                  rho: float) -> np.ndarray:
    """An action is feasible when its source holds at least rho."""

    return np.array([state[s] >= rho - 1e-12 for s, _ in actions])


def apply_action(state: np.ndarray, action: tuple[int, int], rho: float) -> np.ndarray:
    """Move rho of load from action source to destination."""

    src, dst = action
    if state[src] < rho - 1e-12:
        raise ValueError("action source holds less than rho")
    out = state.astype(np.float64).copy()
    out[src] -= rho
    out[dst] += rho
    return np.clip(out, 0.0, None)


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Bounded FIFO of transitions with uniform sampling."""

    def __init__(self, maxlen: int = 2000):
        if maxlen < 1:
            raise ValueError("maxlen must be >= 1")
        self._buf: deque[Transition] = deque(maxlen=maxlen)

    def push(self, tr: Transition) -> None:
        self._buf.append(tr)

    def __len__(self) -> int:
        return len(self._buf)

    def sample(self, rng: np.random.Generator, k: int) -> list[Transition]:
        if not 1 <= k <= len(self._buf):
            raise ValueError("sample size out of range")
        idx = rng.choice(len(self._buf), size=k, replace=False)
        return [self._buf[int(i)] for i in idx]


# ---------------------------------------------------------------------------
# evaluation environment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalResult:
    """Score of one composition: reward plus the RMSE of its best draw."""

    reward: float
    p_rmse: float
    q_rmse: float


def micro_key(comp: np.ndarray) -> tuple[int, ...]:
    """Composition rounded to integer millionths; the cache identity."""

    return tuple(int(round(float(c) * 1e6)) for c in comp)


class IdentificationEnv:
    """Scores candidate compositions against a reference trajectory.

    Each distinct composition is simulated under n_eval parameter draws
    whose random streams are derived from the composition itself, so a
    state's score never depends on visit order and caching is exact.
    reduce picks how the draw rewards collapse to one score: the best
    draw (default) or the mean over draws. Draws that fail to simulate
    are dropped; a composition with no surviving draw raises
    SimulationError.
    """

    def __init__(self, ref: PQTrace, trace: VoltageTrace, sim_cfg: SimConfig,
                 ranges: ParamRanges, reward_cfg: RewardConfig,
                 n_eval: int = 20, active_idx: Sequence[int] | None = None,
                 seed: int = 0, reduce: str = "best", window_start: int = 0):
        if n_eval < 1:
            raise ValueError("n_eval must be >= 1")
        if reduce not in ("best", "mean"):
            raise ValueError("reduce must be 'best' or 'mean'")
        idx = tuple(range(N_COMPONENTS)) if active_idx is None else tuple(active_idx)
        if len(idx) < 2 or len(set(idx)) != len(idx):
            raise ValueError("active_idx needs at least 2 distinct entries")
        if any(not 0 <= i < N_COMPONENTS for i in idx):
            raise ValueError("active_idx entries must index the 6 components")
        if ref.p.size != sim_cfg.n_samples:
            raise ValueError("reference length does not match the simulation grid")
        if not 0 <= window_start < ref.p.size:
            raise ValueError("window_start out of range")
        self.ref = ref
        self.trace = trace
        self.sim_cfg = sim_cfg
        self.ranges = ranges
        self.reward_cfg = reward_cfg
        self.n_eval = int(n_eval)
        self.active_idx = idx
        self.seed = int(seed)
        self.reduce = reduce
        self.window_start = int(window_start)
        self._cache: dict[tuple[int, ...], EvalResult] = {}
        self.n_sim_evals = 0

    @property
    def d(self) -> int:
        return len(self.active_idx)

    def full_composition(self, active_comp: np.ndarray) -> np.ndarray:
        active_comp = np.asarray(active_comp, dtype=np.float64)
        if active_comp.shape != (self.d,):
            raise ValueError(f"expected {self.d} active fractions")
        full = np.zeros(N_COMPONENTS)
        full[list(self.active_idx)] = active_comp
        return full

    def _draws(self, key: tuple[int, ...]):
        ss = np.random.SeedSequence([self.seed] + [k + 1000 for k in key])
        rng = np.random.default_rng(ss)
        return [sample_params(self.ranges, rng) for _ in range(self.n_eval)]

    def evaluate(self, active_comp) -> EvalResult:
        active_comp = np.asarray(active_comp, dtype=np.float64)
        key = micro_key(active_comp)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        full = self.full_composition(active_comp)
        draws = self._draws(key)
        res = simulate_batch(full, draws, self.trace, self.sim_cfg)
        ok = np.flatnonzero(res.ok)
        if ok.size == 0:
            raise SimulationError("no parameter draw simulated successfully")
        rewards = np.array([
            reward(res.p[i], res.q[i], self.ref.p, self.ref.q,
                   self.reward_cfg, self.window_start) for i in ok])
        best = int(ok[int(np.argmax(rewards))])
        value = float(np.max(rewards)) if self.reduce == "best" else float(np.mean(rewards))
        rm = rmse_pq(res.p[best], res.q[best], self.ref.p, self.ref.q,
                     self.window_start)
        out = EvalResult(reward=value, p_rmse=rm.p, q_rmse=rm.q)
        self._cache[key] = out
        self.n_sim_evals += 1
        return out


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DdqnConfig:
    """Hyperparameters of the composition search."""

    episodes: int = 150
    max_steps: int = 40
    epsilon0: float = 1.0
    epsilon_decay: float = 0.97
    epsilon_floor: float = 0.05
    gamma: float = 0.9
    learning_rate: float = 1e-3
    rho: float = 0.01
    buffer_size: int = 2000
    batch_size: int = 32
    hidden: int = 64
    decoupled: bool = True
    top_k: int = 3

    def __post_init__(self) -> None:
        if self.episodes < 1 or self.max_steps < 1:
            raise ValueError("episodes and max_steps must be >= 1")
        if not (0.0 <= self.epsilon_floor <= self.epsilon0):
            raise ValueError("need 0 <= epsilon_floor <= epsilon0")
        if not (0.0 < self.epsilon_decay <= 1.0):
            raise ValueError("epsilon_decay must lie in (0, 1]")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("gamma must lie in [0, 1)")
        if self.rho <= 0.0:
            raise ValueError("rho must be > 0")
        if self.buffer_size < 1 or self.batch_size < 1 or self.top_k < 1:
            raise ValueError("buffer_size, batch_size and top_k must be >= 1")


@dataclass(frozen=True)
class Candidate:
    """A visited composition with its best observed score."""

    composition: np.ndarray
    reward: float
    p_rmse: float
    q_rmse: float


@dataclass(frozen=True)
class DdqnResult:
    candidates: list[Candidate]
    episode_rewards: np.ndarray
    episode_rmse: np.ndarray
    n_states_evaluated: int

    @property
    def best(self) -> Candidate:
        return self.candidates[0]


def _greedy_action(net: ValueNet, state: np.ndarray, mask: np.ndarray) -> int:
    q = net.forward(state)
    q = np.where(mask, q, -np.inf)
    return int(np.argmax(q))


def td_targets(net_a: ValueNet, net_b: ValueNet, batch, actions,
               cfg: DdqnConfig) -> np.ndarray:
    """Bootstrap targets for a batch of transitions.

    Terminal transitions (and states with no feasible action left) take
    the bare reward. Otherwise the action is chosen by net_a over the
    feasible set and valued by net_b when decoupled, or both by net_b.
    """

    next_states = np.stack([t.next_state for t in batch])
    q_next_a = net_a.forward(next_states)
    q_next_b = net_b.forward(next_states)
    targets = np.empty(len(batch))
    for i, tr in enumerate(batch):
        if tr.terminal:
            targets[i] = tr.reward
            continue
        mask = feasible_mask(tr.next_state, actions, cfg.rho)
        if not mask.any():
            targets[i] = tr.reward
            continue
        if cfg.decoupled:
            sel = int(np.argmax(np.where(mask, q_next_a[i], -np.inf)))
            boot = q_next_b[i, sel]
        else:
            boot = float(np.max(np.where(mask, q_next_b[i], -np.inf)))
        targets[i] = tr.reward + cfg.gamma * boot
    return targets


def _train_step(net_a: ValueNet, net_b: ValueNet, adam: Adam,
                buffer: ReplayBuffer, actions, cfg: DdqnConfig,
                rng: np.random.Generator) -> float:
    k = min(len(buffer), cfg.batch_size)
    batch = buffer.sample(rng, k)
    states = np.stack([t.state for t in batch])
    targets = td_targets(net_a, net_b, batch, actions, cfg)
    a_idx = np.array([t.action for t in batch], dtype=np.int64)
    loss, grads = net_a.loss_and_grads(states, a_idx, targets)
    net_a.from_flat(adam.step(net_a.to_flat(), grads))
    return loss


def epsilon_at(cfg: DdqnConfig, episode: int) -> float:
    """Exploration rate in force during a 0-based episode index.

    The rate decays at every episode start, so episode 0 already runs
    at epsilon0 * decay; the floor is applied after decay.
    """

    return max(cfg.epsilon_floor,
               cfg.epsilon0 * cfg.epsilon_decay ** (episode + 1))


def train(env: IdentificationEnv, cfg: DdqnConfig, start,
          seed: int = 0) -> DdqnResult:
    """Run the full episodic search from a starting composition.

    Every evaluated state is remembered with its best observed score;
    the result carries the top_k of them by reward. An episode ends
    early as soon as a state's reward clears the success threshold of
    the environment's reward settings; a threshold of -inf disables
    early exit, so every episode runs the full step cap.
    """

    start = np.asarray(start, dtype=np.float64)
    if start.shape != (env.d,):
        raise ValueError(f"start must have {env.d} active fractions")
    if np.any(start < -1e-12) or abs(float(start.sum()) - 1.0) > 1e-6:
        raise ValueError("start must be nonnegative and sum to 1")
    rng = np.random.default_rng(seed)
    actions = action_pairs(env.d)
    net_a = ValueNet(env.d, len(actions), cfg.hidden, rng)
    adam = Adam(net_a.n_params, cfg.learning_rate)
    buffer = ReplayBuffer(cfg.buffer_size)
    lam = env.reward_cfg.lambda_term

    candidates: dict[tuple[int, ...], tuple[float, np.ndarray, EvalResult]] = {}

    def note(comp: np.ndarray, ev: EvalResult) -> None:
        key = micro_key(comp)
        prev = candidates.get(key)
        if prev is None or ev.reward > prev[0]:
            candidates[key] = (ev.reward, comp.copy(), ev)

    ev0 = env.evaluate(start)
    note(start, ev0)

    episode_rewards = np.empty(cfg.episodes)
    episode_rmse = np.empty(cfg.episodes)
    for ep in range(cfg.episodes):
        net_b = net_a.copy()
        eps = epsilon_at(cfg, ep)
        state = start.copy()
        last_ev = ev0
        r_sum = 0.0
        for step in range(cfg.max_steps):
            mask = feasible_mask(state, actions, cfg.rho)
            if not mask.any():
                break
            if rng.random() < eps:
                a = int(rng.choice(np.flatnonzero(mask)))
            else:
                a = _greedy_action(net_a, state, mask)
            nxt = apply_action(state, actions[a], cfg.rho)
            ev = env.evaluate(nxt)
            r_sum += ev.reward
            note(nxt, ev)
            success = math.isfinite(lam) and ev.reward > lam
            terminal = success or step == cfg.max_steps - 1
            buffer.push(Transition(state.copy(), a, ev.reward, nxt.copy(), terminal))
            _train_step(net_a, net_b, adam, buffer, actions, cfg, rng)
            state = nxt
            last_ev = ev
            if success:
                break
        episode_rewards[ep] = r_sum
        episode_rmse[ep] = last_ev.p_rmse + last_ev.q_rmse

    ranked = sorted(candidates.values(), key=lambda t: -t[0])[:cfg.top_k]
    cands = [Candidate(composition=env.full_composition(comp), reward=r,
                       p_rmse=ev.p_rmse, q_rmse=ev.q_rmse)
             for r, comp, ev in ranked]
    return DdqnResult(candidates=cands,
                      episode_rewards=episode_rewards,
                      episode_rmse=episode_rmse,
                      n_states_evaluated=env.n_sim_evals)


__all__ = [
    "LoadComposition", "ValueNet", "Adam", "action_pairs", "feasible_mask",
    "apply_action", "Transition", "ReplayBuffer", "EvalResult", "micro_key",
    "IdentificationEnv", "DdqnConfig", "Candidate", "DdqnResult",
    "epsilon_at", "train",
]
