"""
Training a residual policy
==========================

A small PPO run on top of the adaptive S-Surface controller. The policy sees
the current and desired attitude plus the depth error and nudges the
controller setpoints; the controller does the actual stabilization.

The full-size run (64 environments, one million steps) takes under two
minutes per controller on one desktop core. This demo uses a fifth of that.
Writes ``demo_output/curve.svg`` and ``demo_output/policy.npz``.
"""

from pathlib import Path

import numpy as np

from uuvlab.env import env_factory
from uuvlab.eval.protocols import evaluate_policy
from uuvlab.eval.tasks import TaskSpec
from uuvlab.ppo import PPOConfig, load_checkpoint, train
from uuvlab.svg import line_plot

out = Path("demo_output")
out.mkdir(exist_ok=True)

###############################################################################
# Train under small domain randomization: COB offset, volume and controller
# gains are perturbed around nominal at every episode start.
cfg = PPOConfig(total_steps=200_000, seed=1)
res = train(
    cfg,
    env_factory("assurface", "SDR"),
    "assurface",
    checkpoint_path=out / "policy.npz",
    progress=lambda r: print(f"iter {r['iteration']:4d}  reward {r['mean_reward']:.3f}  mse {r['mse_probe']:.4f}") if r["iteration"] % 40 == 0 else None,
)
reward = np.array([r["mean_reward"] for r in res.curve])
line_plot(out / "curve.svg", np.arange(1, len(reward) + 1), {"mean reward": reward}, title="training", xlabel="iteration")
print(f"first 10 iterations {reward[:10].mean():.3f}, last 10 {reward[-10:].mean():.3f}")

###############################################################################
# The per-step reward is bounded by wq + wp + wz = 1.6 and an untrained
# policy already starts near 1.15, so the curve can rise by at most ~40%.

###############################################################################
# Deterministic evaluation (policy mean, no exploration noise) with and
# without the policy on Task 1. The checkpoint on disk reloads to the same
# weights.
params, meta, _ = load_checkpoint(out / "policy.npz")
task = TaskSpec.task1()
with_rl = evaluate_policy(params, "assurface", task, episodes=4)
without = evaluate_policy(None, "assurface", task, episodes=4)
print(f"task1 mse: without policy {without.report.mse_total:.4f}, with policy {with_rl.report.mse_total:.4f}")
print(f"task1 compound error: {without.report.compound_mean:.3f} -> {with_rl.report.compound_mean:.3f}")
