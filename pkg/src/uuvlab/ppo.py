"""PPO with GAE on a small tanh MLP actor-critic, written against numpy.

The update phase is single-threaded and fully deterministic given the seed;
rollout collection delegates to :meth:`uuvlab.env.VecEnv.step`.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from .env import ACT_DIM, OBS_DIM, VecEnv

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0
CURVE_FIELDS = ("iteration", "steps", "mean_reward", "episode_return", "mse_probe", "approx_kl", "clip_fraction")


class ConfigurationError(ValueError):
    pass


# --------------------------------------------------------------------- MLP
def init_mlp(sizes, rng: np.random.Generator, out_gain: float = 1.0) -> list:
    """Orthogonal-ish scaled Gaussian init; returns ``[(W, b), ...]``."""
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if i == len(sizes) - 2 else math.sqrt(2.0)
        w = rng.standard_normal((a, b)) * gain / math.sqrt(a)
        layers.append((w, np.zeros(b)))
    return layers


def mlp_forward(layers, x):
    """Dense tanh network with a linear output. Returns ``(y, cache)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != layers[0][0].shape[0]:
        raise ConfigurationError(f"input width {x.shape[-1]} does not match layer width {layers[0][0].shape[0]}")
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def mlp_backward(layers, cache, grad_out):
    """Exact gradients ``([(dW, db), ...], d_input)`` for upstream ``grad_out``."""
    grads = [None] * len(layers)
    g = np.asarray(grad_out, dtype=float)
    if g.shape != cache[-1].shape:
        raise ConfigurationError(f"upstream gradient shape {g.shape} != output shape {cache[-1].shape}")
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        if i < len(layers) - 1:
            g = g * (1.0 - cache[i + 1] ** 2)
        a = cache[i]
        grads[i] = (a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1]), g.reshape(-1, g.shape[-1]).sum(axis=0))
        g = g @ w.T
    return grads, g


# ------------------------------------------------------------ actor-critic
@dataclass
class PolicyParams:
    actor: list
    critic: list
    log_std: np.ndarray

    @classmethod
    def init(cls, rng: np.random.Generator, hidden=(64, 64), init_log_std: float = 0.0) -> "PolicyParams":
        return cls(
            actor=init_mlp([OBS_DIM, *hidden, ACT_DIM], rng, out_gain=0.01),
            critic=init_mlp([OBS_DIM, *hidden, 1], rng, out_gain=1.0),
            log_std=np.full(ACT_DIM, float(init_log_std)),
        )

    def flat(self) -> np.ndarray:
        parts = [p.ravel() for layer in self.actor + self.critic for p in layer]
        return np.concatenate(parts + [self.log_std])

    def unflat(self, vec: np.ndarray) -> "PolicyParams":
        i = 0

        def take(shape):
            nonlocal i
            k = int(np.prod(shape))
            out = vec[i : i + k].reshape(shape)
            i += k
            return out

        actor = [(take(w.shape), take(b.shape)) for w, b in self.actor]
        critic = [(take(w.shape), take(b.shape)) for w, b in self.critic]
        return PolicyParams(actor, critic, take(self.log_std.shape).copy())

    @property
    def hidden(self) -> tuple:
        return tuple(w.shape[1] for w, _ in self.actor[:-1])

    def mean(self, obs):
        z, _ = mlp_forward(self.actor, obs)
        return np.tanh(z)

    def value(self, obs):
        v, _ = mlp_forward(self.critic, obs)
        return v[..., 0]

    def act(self, obs, rng: np.random.Generator):
        mu = self.mean(obs)
        std = np.exp(self.log_std)
        a = mu + std * rng.standard_normal(mu.shape)
        return a, gaussian_logprob(a, mu, self.log_std), self.value(obs)


def gaussian_logprob(a, mu, log_std):
    std = np.exp(log_std)
    return np.sum(-0.5 * ((a - mu) / std) ** 2 - log_std - 0.5 * math.log(2.0 * math.pi), axis=-1)


# ------------------------------------------------------------------ buffer
@dataclass
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_ratio: float = 0.2
    epochs: int = 4
    minibatches: int = 4
    lr: float = 1e-3
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 1.0
    num_envs: int = 64
    horizon: int = 16
    total_steps: int = 1_000_000
    hidden: tuple = (64, 64)
    init_log_std: float = 0.0
    seed: int = 0
    workers: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ConfigurationError("gamma and lambda must lie in [0, 1]")
        if self.clip_ratio <= 0:
            raise ConfigurationError("clip_ratio must be positive")
        self.hidden = tuple(self.hidden)

    @property
    def iterations(self) -> int:
        return self.total_steps // (self.num_envs * self.horizon)


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (T, N, 9)
    actions: np.ndarray  # (T, N, 4)
    logprobs: np.ndarray  # (T, N)
    values: np.ndarray  # (T, N)
    rewards: np.ndarray  # (T, N)
    dones: np.ndarray  # (T, N)
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    @classmethod
    def empty(cls, horizon: int, n: int) -> "RolloutBuffer":
        return cls(
            np.zeros((horizon, n, OBS_DIM)),
            np.zeros((horizon, n, ACT_DIM)),
            np.zeros((horizon, n)),
            np.zeros((horizon, n)),
            np.zeros((horizon, n)),
            np.zeros((horizon, n)),
        )


def compute_gae(rewards, values, dones, bootstrap, gamma: float, lam: float):
    """Reverse-recursive GAE with done masking; returns ``(advantages, returns)``.

    ``dones[t]`` marks that the transition at ``t`` ended its episode, so no
    value is carried over from ``t + 1``.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0])
    next_value = np.asarray(bootstrap, dtype=float)
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=float)
    return (adv - adv.mean()) / (adv.std() + 1e-12)


# -------------------------------------------------------------------- Adam
@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    t: int = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ------------------------------------------------------------------ losses
def ppo_loss_and_grad(params: PolicyParams, obs, actions, old_logp, adv, returns, cfg: PPOConfig):
    """Clipped-surrogate loss, its flat gradient and diagnostics for one minibatch."""
    B = obs.shape[0]
    z, a_cache = mlp_forward(params.actor, obs)
    mu = np.tanh(z)
    log_std = params.log_std
    std = np.exp(log_std)
    logp = gaussian_logprob(actions, mu, log_std)
    log_ratio = logp - old_logp
    ratio = np.exp(log_ratio)
    clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
    surr1 = ratio * adv
    surr2 = clipped * adv
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    entropy = float(np.sum(log_std + 0.5 * math.log(2.0 * math.pi * math.e)))

    v, c_cache = mlp_forward(params.critic, obs)
    v = v[:, 0]
    value_loss = np.mean((v - returns) ** 2)
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # d(policy_loss)/d(logp): gradient flows where the unclipped term is active
    active = surr1 <= surr2
    d_logp = np.where(active, -adv * ratio / B, 0.0)
    diff = (actions - mu) / std
    d_mu = d_logp[:, None] * diff / std
    d_logstd = np.sum(d_logp[:, None] * (diff**2 - 1.0), axis=0) - cfg.entropy_coef
    d_z = d_mu * (1.0 - mu**2)
    a_grads, _ = mlp_backward(params.actor, a_cache, d_z)
    d_v = (cfg.value_coef * 2.0 / B) * (v - returns)
    c_grads, _ = mlp_backward(params.critic, c_cache, d_v[:, None])
    grad = np.concatenate([g.ravel() for layer in a_grads + c_grads for g in layer] + [d_logstd])
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": entropy,
        "approx_kl": float(np.mean((ratio - 1.0) - log_ratio)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_ratio)),
        "loss": float(loss),
    }
    return float(loss), grad, stats


def ppo_update(params: PolicyParams, buf: RolloutBuffer, cfg: PPOConfig, opt: Adam, rng: np.random.Generator):
    """Minibatch epochs over a filled buffer. Returns ``(params, stats)``.

    A non-finite loss aborts the remaining update and sets ``stats['aborted']``.
    """
    T, N = buf.rewards.shape
    total = T * N
    obs = buf.obs.reshape(total, OBS_DIM)
    act = buf.actions.reshape(total, ACT_DIM)
    old_logp = buf.logprobs.reshape(total)
    adv = normalize_advantages(buf.advantages.reshape(total))
    ret = buf.returns.reshape(total)
    mb = total // cfg.minibatches
    theta = params.flat()
    agg = {"policy_loss": [], "value_loss": [], "approx_kl": [], "clip_fraction": []}
    aborted = False
    for _ in range(cfg.epochs):
        perm = rng.permutation(total)
        for k in range(cfg.minibatches):
            idx = perm[k * mb : (k + 1) * mb]
            loss, grad, st = ppo_loss_and_grad(params, obs[idx], act[idx], old_logp[idx], adv[idx], ret[idx], cfg)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                aborted = True
                break
            gnorm = float(np.sqrt(np.sum(grad * grad)))
            if gnorm > cfg.max_grad_norm:
                grad = grad * (cfg.max_grad_norm / gnorm)
            theta = opt.step(theta, grad)
            params = params.unflat(theta)
            params.log_std = np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX)
            theta = params.flat()
            for key in agg:
                agg[key].append(st[key])
        if aborted:
            break
    stats = {k: float(np.mean(v)) if v else float("nan") for k, v in agg.items()}
    stats["aborted"] = aborted
    return params, stats


# ------------------------------------------------------------- checkpoint
def save_checkpoint(path, params: PolicyParams, extra: Optional[dict] = None, arrays: Optional[dict] = None) -> None:
    """Write an ``.npz`` holding weights (``actor_W0``, ``actor_b0``, ..., ``log_std``)
    plus a JSON ``meta`` string with the version and architecture."""
    path = Path(path)
    out = {}
    for name, layers in (("actor", params.actor), ("critic", params.critic)):
        for i, (w, b) in enumerate(layers):
            out[f"{name}_W{i}"] = w
            out[f"{name}_b{i}"] = b
    out["log_std"] = params.log_std
    meta = {"version": CHECKPOINT_VERSION, "obs_dim": OBS_DIM, "act_dim": ACT_DIM, "hidden": list(params.hidden)}
    meta.update(extra or {})
    out["meta"] = np.array(json.dumps(meta))
    for k, v in (arrays or {}).items():
        out["x_" + k] = v
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, **out)
    tmp.replace(path)


def load_checkpoint(path):
    """Returns ``(params, meta, arrays)``; raises ``ConfigurationError`` on a layout mismatch."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {meta.get('version')}")
        if meta.get("obs_dim") != OBS_DIM or meta.get("act_dim") != ACT_DIM:
            raise ConfigurationError("checkpoint observation/action sizes do not match this build")
        n_layers = len(meta["hidden"]) + 1
        actor = [(z[f"actor_W{i}"].copy(), z[f"actor_b{i}"].copy()) for i in range(n_layers)]
        critic = [(z[f"critic_W{i}"].copy(), z[f"critic_b{i}"].copy()) for i in range(n_layers)]
        params = PolicyParams(actor, critic, z["log_std"].copy())
        arrays = {k[2:]: z[k].copy() for k in z.files if k.startswith("x_")}
    return params, meta, arrays


# ------------------------------------------------------------------- train
@dataclass
class TrainResult:
    params: PolicyParams
    curve: List[dict] = field(default_factory=list)


def _rng_state_json(rng: np.random.Generator) -> str:
    return json.dumps(rng.bit_generator.state)


def _rng_from_json(s: str) -> np.random.Generator:
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = json.loads(s)
    return rng


def write_curve_csv(path, curve) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CURVE_FIELDS, extrasaction="ignore")
        w.writeheader()
        for row in curve:
            w.writerow({k: (repr(float(row[k])) if k not in ("iteration", "steps") else int(row[k])) for k in CURVE_FIELDS})


def train(
    cfg: PPOConfig,
    env_factory: Callable[[int, int], VecEnv],
    controller_kind: str = "assurface",
    checkpoint_path=None,
    resume_from=None,
    stop_after: Optional[int] = None,
    progress: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Collect -> GAE -> update loop.

    ``env_factory(num_envs, seed)`` builds the training environment.
    ``checkpoint_path`` (optional) receives a resumable checkpoint every
    ``cfg.checkpoint_every`` iterations and at the end; ``resume_from`` restarts
    from such a file. ``stop_after`` halts after that many iterations (used to
    exercise resumption).
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    params = PolicyParams.init(rng, cfg.hidden, cfg.init_log_std)
    opt = Adam(cfg.lr)
    env = env_factory(cfg.num_envs, cfg.seed)
    if env.kind != controller_kind:
        raise ConfigurationError(f"environment controller {env.kind!r} != requested {controller_kind!r}")
    curve: list = []
    start = 0
    if cfg.iterations == 0:
        return TrainResult(params, curve)
    if resume_from is not None:
        params, meta, arrays = load_checkpoint(resume_from)
        start = meta["iteration"]
        rng = _rng_from_json(meta["rng"])
        opt = Adam(cfg.lr, m=arrays["adam_m"], v=arrays["adam_v"], t=meta["adam_t"])
        curve = meta["curve"]
        env.load_state_dict({k[4:]: v for k, v in arrays.items() if k.startswith("env_")})
        env.seed = meta["env_seed"]
        obs = arrays["obs"]
    else:
        obs = env.reset(seed=cfg.seed)
    steps = start * cfg.num_envs * cfg.horizon
    last_return = curve[-1]["episode_return"] if curve else float("nan")
    for it in range(start, cfg.iterations):
        buf = RolloutBuffer.empty(cfg.horizon, cfg.num_envs)
        sq_err = []
        raw_rewards = []
        finished = []
        for t in range(cfg.horizon):
            a, logp, v = params.act(obs, rng)
            buf.obs[t], buf.actions[t], buf.logprobs[t], buf.values[t] = obs, a, logp, v
            obs, r, done, info = env.step(a, workers=cfg.workers)
            raw_rewards.append(r)
            if np.any(info["timeout"]):
                # bootstrap through time-limit truncation
                r = r + cfg.gamma * info["timeout"] * params.value(info["terminal_obs"])
            buf.rewards[t] = r
            buf.dones[t] = done
            sq_err.append(info["sq_err"])
            finished.extend(info["episode_return"][done].tolist())
        bootstrap = params.value(obs)
        buf.advantages, buf.returns = compute_gae(buf.rewards, buf.values, buf.dones, bootstrap, cfg.gamma, cfg.lam)
        params, stats = ppo_update(params, buf, cfg, opt, rng)
        steps += cfg.num_envs * cfg.horizon
        if finished:
            last_return = float(np.mean(finished))
        row = {
            "iteration": it + 1,
            "steps": steps,
            "mean_reward": float(np.mean(raw_rewards)),
            "episode_return": last_return,
            "mse_probe": float(np.mean(sq_err)),
            "approx_kl": stats["approx_kl"],
            "clip_fraction": stats["clip_fraction"],
            "aborted": stats["aborted"],
        }
        curve.append(row)
        if progress:
            progress(row)
        if stats["aborted"]:
            log.warning("non-finite PPO loss at iteration %d; update aborted", it + 1)
        done_iters = it + 1
        last = done_iters == cfg.iterations or (stop_after is not None and done_iters - start >= stop_after)
        if checkpoint_path is not None and (last or (cfg.checkpoint_every and done_iters % cfg.checkpoint_every == 0)):
            extra = {
                "iteration": done_iters,
                "rng": _rng_state_json(rng),
                "adam_t": opt.t,
                "curve": curve,
                "env_seed": env.seed,
                "controller_kind": controller_kind,
                "ppo": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
            }
            arrays = {"adam_m": opt.m, "adam_v": opt.v, "obs": obs}
            arrays.update({"env_" + k: v for k, v in env.state_dict().items()})
            save_checkpoint(checkpoint_path, params, extra, arrays)
        if stop_after is not None and done_iters - start >= stop_after:
            break
    return TrainResult(params, curve)
