"""Dispatch agents (DQN, PPO, CEM) and the evaluation harness.

DQN learns state-action values over the joint discrete action index with a
replay buffer, target network, and epsilon-greedy exploration.  PPO is an
actor-critic with three factorized categorical heads (GT, P2G, BES) trained
on the clipped surrogate objective with GAE advantages.  CEM searches policy
(network) parameters directly with an elite-refit Gaussian.

Rewards are divided by ``reward_scale`` inside the agents only; everything
logged or reported stays in C$.  Evaluation is always a single greedy
rollout with reward shaping disabled, summarized as an :class:`EvalReport`
with the dispatch statistics used in the result tables.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .env import ActionSpec, DispatchEnv, DispatchLog
from .nn import (Adam, Mlp, categorical_entropy, log_softmax, mlp_grads_to_list,
                 softmax)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Transition:
    """One environment interaction as consumed by the agents."""

    obs: np.ndarray
    action: int | tuple[int, int, int]
    reward: float
    next_obs: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling.

    Transitions are stored in preallocated arrays (allocated lazily on the
    first push); stored data is never mutated afterwards, only overwritten
    once the ring wraps.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._size = 0
        self._cursor = 0
        self._obs = None

    def _allocate(self, obs_dim: int) -> None:
        self._obs = np.empty((self.capacity, obs_dim))
        self._next_obs = np.empty((self.capacity, obs_dim))
        self._actions = np.empty(self.capacity, dtype=np.intp)
        self._rewards = np.empty(self.capacity)
        self._dones = np.empty(self.capacity, dtype=bool)

    def push(self, transition: Transition) -> None:
        if self._obs is None:
            self._allocate(len(transition.obs))
        i = self._cursor
        self._obs[i] = transition.obs
        self._next_obs[i] = transition.next_obs
        self._actions[i] = transition.action
        self._rewards[i] = transition.reward
        self._dones[i] = transition.done
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def __len__(self) -> int:
        return self._size

    def sample(self, rng: np.random.Generator, batch_size: int):
        if self._size < batch_size:
            raise ValueError("not enough transitions to sample a batch")
        idx = rng.integers(0, self._size, size=batch_size)
        return (self._obs[idx], self._actions[idx], self._rewards[idx],
                self._next_obs[idx], self._dones[idx])


# ---------------------------------------------------------------------------
# Configurations


@dataclass
class DqnConfig:
    gamma: float = 0.99
    lr: float = 1e-3
    lr_final: float | None = None     # linear decay target; None keeps lr flat
    batch_size: int = 64
    buffer_capacity: int = 100_000
    eps_start: float = 1.0
    eps_end: float = 0.03
    eps_anneal_steps: int = 70_000
    target_update_interval: int = 500
    warmup_steps: int = 500
    train_every: int = 1
    total_steps: int = 120_000
    hidden: tuple[int, ...] = (64, 64)
    reward_scale: float = 10_000.0
    huber_delta: float = 1.0

    def validate(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be positive")


@dataclass
class PpoConfig:
    gamma: float = 0.997
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    epochs: int = 8
    minibatch_size: int = 256
    episodes_per_update: int = 8
    total_steps: int = 150_000
    hidden: tuple[int, ...] = (64, 64)
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    reward_scale: float = 1000.0
    kl_warn_threshold: float = 0.2

    def validate(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be positive")


@dataclass
class CemConfig:
    population: int = 32
    elite_frac: float = 0.25
    iterations: int = 40
    sigma_init: float = 0.5
    extra_noise: float = 0.1
    hidden: tuple[int, ...] = (32,)
    reward_scale: float = 1000.0  # unused by CEM, kept for config symmetry

    def validate(self) -> None:
        if self.population < 1 or self.iterations < 1:
            raise ValueError("population and iterations must be positive")
        if not 0.0 < self.elite_frac <= 1.0:
            raise ValueError("elite_frac must lie in (0, 1]")


# ---------------------------------------------------------------------------
# Policies


class DqnPolicy:
    """Greedy policy over the joint action index of a Q-network."""

    def __init__(self, net: Mlp, spec: ActionSpec):
        self.net = net
        self.spec = spec

    def act(self, obs: np.ndarray) -> int:
        return int(np.argmax(self.net.forward(obs)))


class HeadPolicy:
    """Greedy policy over three factorized categorical heads."""

    def __init__(self, net: Mlp, spec: ActionSpec):
        self.net = net
        self.spec = spec

    def head_logits(self, obs: np.ndarray) -> tuple[np.ndarray, ...]:
        out = self.net.forward(obs)
        return tuple(np.split(out, np.cumsum(self.spec.head_sizes)[:-1]))

    def act(self, obs: np.ndarray) -> tuple[int, int, int]:
        return tuple(int(np.argmax(h)) for h in self.head_logits(obs))


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class EvalReport:
    """Greedy-rollout economics and dispatch counts (one episode)."""

    episodic_reward: float
    gt_starts: int
    gt_hours: int
    p2g_hours: int
    bes_charge_steps: int
    bes_discharge_steps: int

    FIELDS = ("episodic_reward", "gt_starts", "gt_hours", "p2g_hours",
              "bes_charge_steps", "bes_discharge_steps")

    @classmethod
    def from_log(cls, dispatch_log: DispatchLog) -> "EvalReport":
        counts = dispatch_log.counts()
        return cls(episodic_reward=dispatch_log.reward_total(), **counts)


def evaluate(policy, env: DispatchEnv) -> tuple[EvalReport, DispatchLog]:
    """One greedy rollout with shaping off; returns the report and full log."""
    if env.training:
        raise ValueError("evaluate() needs an evaluation-mode environment")
    obs = env.reset()
    done = False
    while not done:
        obs, _, done, _ = env.step(policy.act(obs))
    return EvalReport.from_log(env.log), env.log


def aggregate_reports(reports: list[EvalReport]) -> dict[str, tuple[float, float]]:
    """Per-field mean and (population) standard deviation across seeds."""
    out = {}
    for name in EvalReport.FIELDS:
        vals = np.array([getattr(r, name) for r in reports], dtype=float)
        out[name] = (float(vals.mean()), float(vals.std()))
    return out


@dataclass
class TrainResult:
    algo: str
    seed: int
    policy: object
    curve: list[dict]
    nets: dict[str, Mlp] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# DQN


def dqn_td_target(rewards: np.ndarray, next_obs: np.ndarray, dones: np.ndarray,
                  target_net: Mlp, gamma: float) -> np.ndarray:
    """Bootstrap targets r + gamma * max_a' Q_target(s', a'); r at episode end."""
    q_next = target_net.forward(next_obs)
    return rewards + gamma * q_next.max(axis=1) * (~dones)


def _huber_grad(diff: np.ndarray, delta: float) -> np.ndarray:
    return np.clip(diff, -delta, delta)


def _huber_loss(diff: np.ndarray, delta: float) -> float:
    a = np.abs(diff)
    quad = 0.5 * diff ** 2
    lin = delta * (a - 0.5 * delta)
    return float(np.mean(np.where(a <= delta, quad, lin)))


def dqn_train(env_factory, config: DqnConfig, seed: int) -> TrainResult:
    """Train a DQN on the joint discrete action space."""
    config.validate()
    rng = np.random.default_rng(seed)
    env: DispatchEnv = env_factory(True)
    n_actions = env.n_actions
    net = Mlp.init_random((env.observation_size, *config.hidden, n_actions), rng)
    target = net.copy()
    opt = Adam(net.parameters(), lr=config.lr)
    buffer = ReplayBuffer(config.buffer_capacity)
    curve: list[dict] = []

    obs = env.reset()
    episode = 0
    ep_econ = ep_shaped = 0.0
    last_loss = float("nan")
    for step in range(1, config.total_steps + 1):
        frac = min(step / max(config.eps_anneal_steps, 1), 1.0)
        eps = config.eps_start + (config.eps_end - config.eps_start) * frac
        if rng.random() < eps:
            action = int(rng.integers(n_actions))
        else:
            action = int(np.argmax(net.forward(obs)))
        next_obs, reward, done, rec = env.step(action)
        buffer.push(Transition(obs, action, reward / config.reward_scale,
                               next_obs, done))
        ep_shaped += reward
        ep_econ += rec.economic_reward
        obs = next_obs

        if done:
            episode += 1
            curve.append({"step": step, "episode": episode,
                          "return_economic": ep_econ, "return_shaped": ep_shaped,
                          "loss": last_loss, "exploration": eps})
            obs = env.reset()
            ep_econ = ep_shaped = 0.0

        if len(buffer) >= max(config.warmup_steps, config.batch_size) \
                and step % config.train_every == 0:
            if config.lr_final is not None:
                progress = step / config.total_steps
                opt.lr = config.lr + (config.lr_final - config.lr) * progress
            b_obs, b_act, b_rew, b_next, b_done = buffer.sample(rng, config.batch_size)
            targets = dqn_td_target(b_rew, b_next, b_done, target, config.gamma)
            out, cache = net.forward_cached(b_obs)
            q = out[np.arange(len(b_act)), b_act]
            diff = q - targets
            last_loss = _huber_loss(diff, config.huber_delta)
            if not np.isfinite(last_loss):
                raise RuntimeError(f"DQN loss diverged at step {step}")
            grad_out = np.zeros_like(out)
            grad_out[np.arange(len(b_act)), b_act] = \
                _huber_grad(diff, config.huber_delta) / len(b_act)
            opt.step(mlp_grads_to_list(net.backward(cache, grad_out)))

        if step % config.target_update_interval == 0:
            target.copy_from(net)

    return TrainResult("dqn", seed, DqnPolicy(net, env.spec), curve,
                       nets={"q_net": net})


# ---------------------------------------------------------------------------
# PPO


def ppo_clip_objective(ratios: np.ndarray, advantages: np.ndarray,
                       clip_eps: float) -> float:
    """Mean clipped surrogate: E[min(r*A, clip(r, 1-eps, 1+eps)*A)]."""
    ratios = np.asarray(ratios, dtype=float)
    advantages = np.asarray(advantages, dtype=float)
    if ratios.shape != advantages.shape:
        raise ValueError("ratios and advantages must have equal length")
    clipped = np.clip(ratios, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    return float(np.mean(np.minimum(ratios * advantages, clipped)))


def gae_advantages(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                   gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimation; episodes end where dones is True."""
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        next_value = values[t + 1] * nonterminal if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv


def _split_logits(out: np.ndarray, head_sizes: tuple[int, int, int]):
    return np.split(out, np.cumsum(head_sizes)[:-1], axis=-1)


def ppo_train(env_factory, config: PpoConfig, seed: int) -> TrainResult:
    """Train PPO with factorized categorical heads."""
    config.validate()
    rng = np.random.default_rng(seed)
    env: DispatchEnv = env_factory(True)
    head_sizes = env.spec.head_sizes
    n_out = sum(head_sizes)
    actor = Mlp.init_random((env.observation_size, *config.hidden, n_out), rng)
    critic = Mlp.init_random((env.observation_size, *config.hidden, 1), rng)
    opt_actor = Adam(actor.parameters(), lr=config.lr)
    opt_critic = Adam(critic.parameters(), lr=config.lr)
    curve: list[dict] = []

    steps_done = 0
    episode = 0
    last_loss = float("nan")
    last_entropy = float("nan")
    while steps_done < config.total_steps:
        # Rollout collection (whole episodes, on-policy, discarded after use).
        all_obs, all_actions, all_logp, all_rewards, all_dones = [], [], [], [], []
        roll_econ = []
        for _ in range(config.episodes_per_update):
            obs = env.reset()
            done = False
            ep_econ = ep_shaped = 0.0
            while not done:
                logits = actor.forward(obs)
                heads = _split_logits(logits, head_sizes)
                action = []
                logp = 0.0
                for h in heads:
                    probs = softmax(h)
                    a = int(rng.choice(len(probs), p=probs))
                    logp += float(log_softmax(h)[a])
                    action.append(a)
                next_obs, reward, done, rec = env.step(tuple(action))
                all_obs.append(obs)
                all_actions.append(action)
                all_logp.append(logp)
                all_rewards.append(reward / config.reward_scale)
                all_dones.append(done)
                ep_shaped += reward
                ep_econ += rec.economic_reward
                obs = next_obs
                steps_done += 1
            episode += 1
            roll_econ.append(ep_econ)
            curve.append({"step": steps_done, "episode": episode,
                          "return_economic": ep_econ, "return_shaped": ep_shaped,
                          "loss": last_loss, "exploration": last_entropy})

        obs_arr = np.stack(all_obs)
        act_arr = np.array(all_actions, dtype=np.intp)
        logp_old = np.array(all_logp)
        rew_arr = np.array(all_rewards)
        done_arr = np.array(all_dones, dtype=bool)

        values = critic.forward(obs_arr).ravel()
        adv = gae_advantages(rew_arr, values, done_arr,
                             config.gamma, config.gae_lambda)
        returns = adv + values
        if len(adv) > 1 and adv.std() > 1e-8:
            norm_adv = (adv - adv.mean()) / adv.std()
        else:
            norm_adv = adv

        n = len(obs_arr)
        idx_all = np.arange(n)
        for _ in range(config.epochs):
            rng.shuffle(idx_all)
            for lo in range(0, n, config.minibatch_size):
                mb = idx_all[lo:lo + config.minibatch_size]
                out, cache = actor.forward_cached(obs_arr[mb])
                heads = _split_logits(out, head_sizes)
                b = len(mb)
                rows = np.arange(b)
                logp_new = np.zeros(b)
                probs_h, logp_h = [], []
                for k, h in enumerate(heads):
                    p = softmax(h)
                    lp = log_softmax(h)
                    probs_h.append(p)
                    logp_h.append(lp)
                    logp_new += lp[rows, act_arr[mb, k]]
                ratio = np.exp(logp_new - logp_old[mb])
                mb_adv = norm_adv[mb]
                surr1 = ratio * mb_adv
                surr2 = np.clip(ratio, 1.0 - config.clip_eps,
                                1.0 + config.clip_eps) * mb_adv
                policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
                entropy = sum(float(np.mean(categorical_entropy(h)))
                              for h in heads)
                last_loss = policy_loss
                last_entropy = entropy
                if not np.isfinite(policy_loss):
                    raise RuntimeError("PPO policy loss diverged")

                dlogp = np.where(surr1 <= surr2, ratio * mb_adv, 0.0) / b
                grad_out = np.empty_like(out)
                offset = 0
                for k, size in enumerate(head_sizes):
                    onehot = np.zeros((b, size))
                    onehot[rows, act_arr[mb, k]] = 1.0
                    g = -dlogp[:, None] * (onehot - probs_h[k])
                    h_ent = -(probs_h[k] * logp_h[k]).sum(axis=1, keepdims=True)
                    g += config.entropy_coef * probs_h[k] \
                        * (logp_h[k] + h_ent) / b
                    grad_out[:, offset:offset + size] = g
                    offset += size
                opt_actor.step(mlp_grads_to_list(actor.backward(cache, grad_out)))

                v_out, v_cache = critic.forward_cached(obs_arr[mb])
                v = v_out.ravel()
                v_err = v - returns[mb]
                grad_v = (2.0 * config.value_coef * v_err / b)[:, None]
                opt_critic.step(mlp_grads_to_list(critic.backward(v_cache, grad_v)))

        # One fresh pass for the approximate KL diagnostic.
        out = actor.forward(obs_arr)
        heads = _split_logits(out, head_sizes)
        logp_now = np.zeros(n)
        for k, h in enumerate(heads):
            logp_now += log_softmax(h)[np.arange(n), act_arr[:, k]]
        approx_kl = float(np.mean(logp_old - logp_now))
        if approx_kl > config.kl_warn_threshold:
            log.warning("PPO update moved far from the sampling policy "
                        "(approx KL %.3f)", approx_kl)

    return TrainResult("ppo", seed, HeadPolicy(actor, env.spec), curve,
                       nets={"actor": actor, "critic": critic})


# ---------------------------------------------------------------------------
# Cross-entropy method


def cem_train(env_factory, config: CemConfig, seed: int) -> TrainResult:
    """Evolutionary search over policy-network parameters."""
    config.validate()
    rng = np.random.default_rng(seed)
    env: DispatchEnv = env_factory(False)   # CEM evaluates raw economics
    head_sizes = env.spec.head_sizes
    net = Mlp.init_random((env.observation_size, *config.hidden,
                           sum(head_sizes)), rng)
    policy = HeadPolicy(net, env.spec)
    mean = net.flatten()
    sigma = np.full(mean.size, config.sigma_init)
    n_elite = max(1, int(round(config.elite_frac * config.population)))
    curve: list[dict] = []

    steps_done = 0
    for it in range(1, config.iterations + 1):
        samples = mean + sigma * rng.standard_normal((config.population, mean.size))
        returns = np.empty(config.population)
        for i in range(config.population):
            net.load_flat(samples[i])
            obs = env.reset()
            done = False
            total = 0.0
            while not done:
                obs, reward, done, _ = env.step(policy.act(obs))
                steps_done += 1
                total += reward
            returns[i] = total
        elite_idx = np.argsort(returns, kind="stable")[-n_elite:]
        elite = samples[elite_idx]
        mean = elite.mean(axis=0)
        decay = max(0.0, 1.0 - it / config.iterations)
        sigma = np.sqrt(elite.var(axis=0) + config.extra_noise * decay)
        curve.append({"step": steps_done, "episode": it,
                      "return_economic": float(returns[elite_idx].mean()),
                      "return_shaped": float(returns.max()),
                      "loss": float(sigma.mean()), "exploration": float("nan")})

    net.load_flat(mean)
    return TrainResult("cem", seed, HeadPolicy(net, env.spec), curve,
                       nets={"policy": net})
