"""Evaluation protocols: policy/controller evaluation, the controller comparison
grid and the domain-randomization generalization table."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np

from ..env import DomainRandomizationConfig, EpisodeConfig, RewardConfig, VecEnv
from ..hydro import VehicleParams
from .metrics import MetricsReport, merge_reports, metrics_from_arrays
from .tasks import TaskSpec

BUOYANCY_CONDITIONS = {"in_domain": 1.0, "pos_buoy": 0.95, "neg_buoy": 1.05}

TRACE_FIELDS = (
    ["episode", "time", "roll", "pitch", "yaw", "roll_ref", "pitch_ref", "yaw_ref", "depth", "depth_ref"]
    + ["fx", "fy", "fz", "tx", "ty", "tz"]
    + [f"cmd{i}" for i in range(8)]
    + ["saturation", "rq", "rp", "rz", "compound_error"]
)


@dataclass
class EvalRun:
    report: MetricsReport
    per_episode: list
    trace_rows: list


def evaluate_policy(
    policy,
    controller_kind: str,
    task: TaskSpec,
    vehicle: Optional[VehicleParams] = None,
    episodes: int = 4,
    seed: int = 1000,
    episode_cfg: Optional[EpisodeConfig] = None,
    controller=None,
    reward: Optional[RewardConfig] = None,
    keep_trace: bool = False,
    workers: int = 1,
) -> EvalRun:
    """Deterministic evaluation (policy mean action; ``policy=None`` is the
    controller-only arm). Episodes run side by side and always last the full
    horizon of ``task.duration``; MSE compares tracked Euler angles with the
    raw references after wrapping the difference."""
    cfg = episode_cfg or EpisodeConfig()
    horizon = int(round(task.duration / cfg.control_dt))
    cfg = EpisodeConfig(
        horizon=horizon,
        control_dt=cfg.control_dt,
        physics_substeps=cfg.physics_substeps,
        policy_decimation=cfg.policy_decimation,
        termination_angle=np.inf,
        action_scale=cfg.action_scale,
        init_attitude_range=cfg.init_attitude_range,
        disturbance=cfg.disturbance,
    )
    env = VecEnv(
        episodes,
        controller_kind,
        task,
        drc=DomainRandomizationConfig("NDR", seed=seed),
        episode=cfg,
        reward=reward,
        vehicle=vehicle,
        controller=controller,
        auto_reset=False,
        record=True,
    )
    obs = env.reset(seed=seed)
    comps = []
    faults = np.zeros(episodes, dtype=bool)
    for _ in range(cfg.policy_horizon):
        a = np.zeros((episodes, 4)) if policy is None else policy.mean(obs)
        obs, _, done, info = env.step(a, workers=workers)
        faults |= info["fault"]
        comps.append((info["rq"], info["rp"], info["rz"]))
        if np.all(done):
            break
    hist = env.history
    times = np.array([h["t"][0] for h in hist])
    euler = np.stack([h["euler"] for h in hist], axis=1)  # (E, T, 3)
    ref = np.stack([h["ref"] for h in hist], axis=1)
    reports = []
    for e in range(episodes):
        f = ["non-finite state"] if faults[e] else []
        reports.append(metrics_from_arrays(times, euler[e], ref[e, :, :3], faults=f))
    rows = []
    if keep_trace:
        dec = cfg.policy_decimation
        for e in range(episodes):
            for k, h in enumerate(hist):
                rq, rp, rz = (c[e] for c in comps[min(k // dec, len(comps) - 1)])
                row = [e, h["t"][e], *h["euler"][e], *h["ref"][e, :3], h["depth"][e], h["ref"][e, 3]]
                row += list(h["wrench"][e]) + list(h["commands"][e])
                row += [h["sat"][e], rq, rp, rz, reports[e].compound_series[k]]
                rows.append(dict(zip(TRACE_FIELDS, (float(v) if i else int(v) for i, v in enumerate(row)))))
    return EvalRun(merge_reports(reports), reports, rows)


def write_trace_csv(path, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=TRACE_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def controller_grid(policies: Dict[str, object], tasks: Dict[str, TaskSpec], episodes: int = 4, seed: int = 1000, **kw):
    """MSE for every ``controller x task x {rl, no_rl}`` cell.

    ``policies`` maps controller kind to a trained policy (or ``None``)."""
    rows = []
    for kind, pol in policies.items():
        for tname, task in tasks.items():
            arms = [("no_rl", None)] + ([("rl", pol)] if pol is not None else [])
            for arm, p in arms:
                run = evaluate_policy(p, kind, task, episodes=episodes, seed=seed, **kw)
                rows.append({"controller": kind, "task": tname, "arm": arm, **run.report.as_row()})
    return rows


def buoyancy_vehicle(ratio: float, base: Optional[VehicleParams] = None) -> VehicleParams:
    """Volume rescaled at fixed mass so that vehicle density is ``ratio`` x fluid density."""
    base = base or VehicleParams()
    return base if ratio == 1.0 else base.with_volume_for_density_ratio(ratio)


def dr_generalization_protocol(policies: Dict[str, object], tasks: Dict[str, TaskSpec], episodes: int = 4, seed: int = 1000, **kw):
    """Table of MSE for each DR level's policy under in-domain and buoyancy-shifted vehicles.

    Returns rows ``{task, condition, NDR, SDR, LDR}`` (levels present in ``policies``)."""
    rows = []
    for tname, task in tasks.items():
        for cond, ratio in BUOYANCY_CONDITIONS.items():
            row = {"task": tname, "condition": cond}
            for level, pol in policies.items():
                run = evaluate_policy(pol, "assurface", task, vehicle=buoyancy_vehicle(ratio), episodes=episodes, seed=seed, **kw)
                row[level] = run.report.mse_total
            rows.append(row)
    return rows


def degradation_ratios(table, level: str):
    """``{(task, condition): out/in}`` for one DR level of a generalization table."""
    out = {}
    by_task = {}
    for r in table:
        by_task.setdefault(r["task"], {})[r["condition"]] = r[level]
    for task, conds in by_task.items():
        for cond in ("pos_buoy", "neg_buoy"):
            out[(task, cond)] = conds[cond] / conds["in_domain"]
    return out


def write_rows_csv(path, rows) -> None:
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
