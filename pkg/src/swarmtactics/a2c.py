"""Advantage actor-critic baseline with a self-contained differentiable MLP.

The policy is a diagonal Gaussian over the 27 raw action outputs: a
tanh-squashed mean from a two-hidden-layer (64, 64, tanh) trunk plus a
state-independent log-std vector, with a linear value head off the same
trunk.  Gradients are derived by hand and checked against central finite
differences; updates use gradient clipping and RMS-style per-parameter
scaling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .episode import Mission
from .reward import RewardConfig, scenario_reward

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
HIDDEN = 64
LOG_2PI = math.log(2.0 * math.pi)

PARAM_NAMES = ("w1", "b1", "w2", "b2", "wm", "bm", "wv", "bv", "log_std")


class A2CError(ValueError):
    pass


@dataclass(frozen=True)
class A2CConfig:
    max_timesteps: int = 300_000
    lr: float = 7e-4
    gamma: float = 0.99
    n_steps: int = 5
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    rms_decay: float = 0.99
    rms_epsilon: float = 1e-5
    eval_interval: int = 25    # updates between greedy evaluations
    seed: int = 0

    def __post_init__(self):
        for name in ("max_timesteps", "lr", "gamma", "n_steps"):
            if getattr(self, name) <= 0:
                raise A2CError(f"{name} must be positive")


def init_params(obs_dim: int, act_dim: int, rng,
                init_log_std: float = -0.5) -> dict[str, np.ndarray]:
    def layer(n_in, n_out):
        scale = math.sqrt(2.0 / n_in)
        return rng.normal(0.0, scale, size=(n_in, n_out))

    return {
        "w1": layer(obs_dim, HIDDEN),
        "b1": np.zeros(HIDDEN),
        "w2": layer(HIDDEN, HIDDEN),
        "b2": np.zeros(HIDDEN),
        "wm": layer(HIDDEN, act_dim) * 0.01,
        "bm": np.zeros(act_dim),
        "wv": layer(HIDDEN, 1) * 0.1,
        "bv": np.zeros(1),
        "log_std": np.full(act_dim, init_log_std),
    }


def _clamped_log_std(params):
    return np.clip(params["log_std"], LOG_STD_MIN, LOG_STD_MAX)


def policy_forward(params, obs):
    """(action mean in [-1,1], clamped log-std, state value) for a batch."""
    x = np.atleast_2d(np.asarray(obs, dtype=float))
    if x.shape[1] != params["w1"].shape[0]:
        raise A2CError(
            f"observation width {x.shape[1]} != expected {params['w1'].shape[0]}"
        )
    h1 = np.tanh(x @ params["w1"] + params["b1"])
    h2 = np.tanh(h1 @ params["w2"] + params["b2"])
    mean = np.tanh(h2 @ params["wm"] + params["bm"])
    value = (h2 @ params["wv"] + params["bv"])[:, 0]
    return mean, _clamped_log_std(params), value


def sample_action(params, obs, rng):
    mean, log_std, _ = policy_forward(params, obs)
    return mean[0] + rng.normal(size=mean.shape[1]) * np.exp(log_std)


def n_step_returns(rewards, values, terminals, bootstrap: float,
                   gamma: float = 0.99):
    """Backward-accumulated n-step targets with terminal masking."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    terminals = np.asarray(terminals, dtype=bool)
    if not (len(rewards) == len(values) == len(terminals)):
        raise A2CError("rewards/values/terminals must be aligned")
    targets = np.empty_like(rewards)
    running = float(bootstrap)
    for i in range(len(rewards) - 1, -1, -1):
        if terminals[i]:
            running = 0.0
        running = rewards[i] + gamma * running
        targets[i] = running
    advantages = targets - values
    return advantages, targets


def a2c_loss_and_grads(params, obs, actions, advantages, targets,
                       cfg: A2CConfig):
    """Hand-derived gradients of policy + value (+ entropy) loss."""
    x = np.atleast_2d(np.asarray(obs, dtype=float))
    a = np.atleast_2d(np.asarray(actions, dtype=float))
    adv = np.asarray(advantages, dtype=float)
    tgt = np.asarray(targets, dtype=float)
    batch = x.shape[0]

    z1 = x @ params["w1"] + params["b1"]
    h1 = np.tanh(z1)
    z2 = h1 @ params["w2"] + params["b2"]
    h2 = np.tanh(z2)
    zm = h2 @ params["wm"] + params["bm"]
    mean = np.tanh(zm)
    value = (h2 @ params["wv"] + params["bv"])[:, 0]
    log_std = _clamped_log_std(params)
    std = np.exp(log_std)
    var = std**2

    diff = a - mean
    log_prob = (-0.5 * (diff**2) / var - log_std - 0.5 * LOG_2PI).sum(axis=1)
    entropy = float((log_std + 0.5 * (LOG_2PI + 1.0)).sum())
    policy_loss = float(-(log_prob * adv).mean())
    value_err = value - tgt
    value_loss = float((value_err**2).mean())
    total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    grads = {}
    # d policy_loss / d mean = -adv * (a - mean) / var / batch
    d_mean = (-adv[:, None] * diff / var) / batch
    d_zm = d_mean * (1.0 - mean**2)
    grads["wm"] = h2.T @ d_zm
    grads["bm"] = d_zm.sum(axis=0)
    # d policy_loss / d log_std = -adv * (diff^2/var - 1) / batch, clamp-gated
    d_log_std = (-(adv[:, None] * (diff**2 / var - 1.0))).mean(axis=0)
    d_log_std -= cfg.entropy_coef  # d(-coef * entropy)/d log_std
    gate = (params["log_std"] > LOG_STD_MIN) & (params["log_std"] < LOG_STD_MAX)
    grads["log_std"] = d_log_std * gate
    # value head: d value_loss / d value = 2 (v - target) / batch
    d_value = (cfg.value_coef * 2.0 * value_err / batch)[:, None]
    grads["wv"] = h2.T @ d_value
    grads["bv"] = d_value.sum(axis=0)
    # trunk
    d_h2 = d_zm @ params["wm"].T + d_value @ params["wv"].T
    d_z2 = d_h2 * (1.0 - h2**2)
    grads["w2"] = h1.T @ d_z2
    grads["b2"] = d_z2.sum(axis=0)
    d_h1 = d_z2 @ params["w2"].T
    d_z1 = d_h1 * (1.0 - h1**2)
    grads["w1"] = x.T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)

    breakdown = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "total": total,
    }
    return total, grads, breakdown


def a2c_loss(params, obs, actions, advantages, targets, cfg: A2CConfig) -> float:
    total, _, _ = a2c_loss_and_grads(params, obs, actions, advantages, targets, cfg)
    return total


def global_grad_norm(grads) -> float:
    return math.sqrt(sum(float((g**2).sum()) for g in grads.values()))


def clip_grads(grads, max_norm: float) -> float:
    """Scale gradients in place to the norm cap; returns the pre-clip norm."""
    norm = global_grad_norm(grads)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class RmsOptimizer:
    """Per-parameter RMS scaling, the usual A2C companion."""

    def __init__(self, cfg: A2CConfig):
        self.cfg = cfg
        self.cache: dict[str, np.ndarray] = {}

    def step(self, params, grads) -> None:
        for name, g in grads.items():
            if name not in self.cache:
                self.cache[name] = np.zeros_like(g)
            c = self.cache[name]
            c *= self.cfg.rms_decay
            c += (1.0 - self.cfg.rms_decay) * g**2
            params[name] -= self.cfg.lr * g / (np.sqrt(c) + self.cfg.rms_epsilon)


def a2c_update(params, batch, cfg: A2CConfig, optimizer: RmsOptimizer):
    """One clipped RMS step on a rollout batch; returns the loss breakdown."""
    obs, actions, advantages, targets = batch
    total, grads, breakdown = a2c_loss_and_grads(
        params, obs, actions, advantages, targets, cfg
    )
    if not math.isfinite(total):
        raise A2CError(f"non-finite loss: {breakdown}")
    breakdown["grad_norm"] = clip_grads(grads, cfg.max_grad_norm)
    optimizer.step(params, grads)
    return breakdown


# ---------------------------------------------------------------------------
# Decision-level environment wrapper and the training loop.

class MissionStepper:
    """Streams (obs, reward, done) decisions over a cycling scenario list.

    Rewards are end-of-mission: zero at every decision except the last,
    which carries the scenario reward total.
    """

    def __init__(self, scenario_list, rtc, encoding_mode, reward_cfg):
        if not scenario_list:
            raise A2CError("need at least one scenario")
        self.scenarios = list(scenario_list)
        self.rtc = rtc
        self.mode = encoding_mode
        self.reward_cfg = reward_cfg
        self._idx = 0
        self._mission = None
        self.obs = None

    def reset(self):
        sc = self.scenarios[self._idx % len(self.scenarios)]
        self._idx += 1
        self._mission = Mission(sc, self.rtc, self.mode)
        self.obs = self._mission.observe()
        return self.obs

    def step(self, action):
        self._mission.act(action)
        done = self._mission.advance()
        if done:
            result = self._mission.result()
            reward = scenario_reward(result, self.reward_cfg).total
            self.obs = self.reset()
            return reward, True
        self.obs = self._mission.observe()
        return 0.0, False


def evaluate_policy(params, scenarios, rtc, encoding_mode, reward_cfg) -> float:
    """Greedy (mean-action) mean reward over a scenario list."""
    from .episode import run_episode

    total = 0.0
    for sc in scenarios:
        policy = lambda obs: policy_forward(params, obs)[0][0]  # noqa: E731
        result = run_episode(sc, policy, rtc, encoding_mode)
        total += scenario_reward(result, reward_cfg).total
    return total / len(scenarios)


def a2c_train(cfg: A2CConfig, scenario_list, rtc=None, encoding_mode="both",
              reward_cfg: RewardConfig | None = None, eval_scenarios=None):
    """Rollout/update loop; returns (best params, training log rows).

    One timestep is one tactical decision.  The log has one row per update:
    (timestep, policy_loss, value_loss, grad_norm, eval_reward), where
    eval_reward is the most recent greedy evaluation (NaN before the first).
    """
    from .sim import RuntimeConfig

    rtc = rtc if rtc is not None else RuntimeConfig()
    reward_cfg = reward_cfg if reward_cfg is not None else RewardConfig()
    eval_scenarios = list(eval_scenarios or scenario_list)
    rng = np.random.default_rng(cfg.seed)

    env = MissionStepper(scenario_list, rtc, encoding_mode, reward_cfg)
    obs = env.reset()
    obs_dim = obs.shape[0]
    params = init_params(obs_dim, 27, rng)
    optimizer = RmsOptimizer(cfg)

    log: list[dict] = []
    timestep = 0
    updates = 0
    best_eval = -math.inf
    best_params = {k: v.copy() for k, v in params.items()}
    last_eval = math.nan

    while timestep < cfg.max_timesteps:
        batch_obs, batch_act, batch_rew, batch_done, batch_val = [], [], [], [], []
        for _ in range(cfg.n_steps):
            mean, log_std, value = policy_forward(params, obs)
            action = mean[0] + rng.normal(size=mean.shape[1]) * np.exp(log_std)
            reward, done = env.step(np.clip(action, -1.0, 1.0))
            batch_obs.append(obs)
            batch_act.append(np.clip(action, -1.0, 1.0))
            batch_rew.append(reward)
            batch_done.append(done)
            batch_val.append(float(value[0]))
            obs = env.obs
            timestep += 1
            if timestep >= cfg.max_timesteps:
                break
        bootstrap = 0.0
        if not batch_done[-1]:
            bootstrap = float(policy_forward(params, obs)[2][0])
        advantages, targets = n_step_returns(
            batch_rew, batch_val, batch_done, bootstrap, cfg.gamma
        )
        breakdown = a2c_update(
            params,
            (np.array(batch_obs), np.array(batch_act), advantages, targets),
            cfg,
            optimizer,
        )
        updates += 1
        if updates % cfg.eval_interval == 0 or timestep >= cfg.max_timesteps:
            last_eval = evaluate_policy(
                params, eval_scenarios, rtc, encoding_mode, reward_cfg
            )
            if last_eval > best_eval:
                best_eval = last_eval
                best_params = {k: v.copy() for k, v in params.items()}
        log.append(
            {
                "timestep": timestep,
                "policy_loss": breakdown["policy_loss"],
                "value_loss": breakdown["value_loss"],
                "grad_norm": breakdown["grad_norm"],
                "eval_reward": last_eval,
            }
        )
    if math.isinf(best_eval):
        best_params = params
    return best_params, log


# ---------------------------------------------------------------------------
# Checkpoints.

def params_to_dict(params, extra: dict | None = None) -> dict:
    doc = {
        "kind": "a2c",
        "params": {
            name: {"shape": list(v.shape), "data": v.ravel().tolist()}
            for name, v in params.items()
        },
    }
    if extra:
        doc.update(extra)
    return doc


def params_from_dict(doc: dict) -> dict[str, np.ndarray]:
    if doc.get("kind") != "a2c":
        raise A2CError("not an a2c checkpoint")
    out = {}
    for name, blob in doc["params"].items():
        out[name] = np.array(blob["data"], dtype=float).reshape(blob["shape"])
    return out


def save_params(params, path, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params, extra), fh)


def load_params(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))
