"""Command-line entry point: ``uuvlab {train,eval,tune,replay}``.

Exit codes: 0 success, 2 configuration/input error, 3 runtime fault.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .control import KINDS, AttitudeController
from .env import LEVELS, Disturbance, EpisodeConfig, RewardConfig, env_factory
from .eval.metrics import merge_reports, metrics_from_arrays
from .eval.protocols import TRACE_FIELDS, evaluate_policy, write_rows_csv, write_trace_csv
from .eval.tasks import TaskSpec
from .hydro import VehicleParams, solid_box_inertia
from .ppo import ConfigurationError, PPOConfig, load_checkpoint, train, write_curve_csv
from .svg import line_plot, tracking_plot
from .tuner import HTTPBackend, MockBackend, RuleConfig, TurbulenceScenario, tune

log = logging.getLogger("uuvlab")

EXIT_OK, EXIT_CONFIG, EXIT_FAULT = 0, 2, 3

_num = {"type": "number"}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}


def _block(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


CONFIG_SCHEMA = _block(
    {
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "controllers": {"type": "array", "items": {"enum": list(KINDS)}, "minItems": 1},
        "vehicle": _block(
            {
                "mass": _num,
                "half_dims": _vec3,
                "volume": _num,
                "cob_offset": _vec3,
                "fluid_density": _num,
                "viscosity": _num,
            }
        ),
        "controller": _block({k: {"type": "array", "items": _num, "minItems": 4, "maxItems": 4} for k in ("zeta1", "zeta2", "alpha", "kp", "ki", "kd", "output_scale")}),
        "env": _block(
            {
                "num_envs": {"type": "integer", "minimum": 1},
                "dr_level": {"enum": list(LEVELS)},
                "train_tasks": {"type": "array", "items": {"enum": ["task1", "task2", "hold"]}, "minItems": 1},
                "horizon": {"type": "integer", "minimum": 1},
                "control_dt": _num,
                "physics_substeps": {"type": "integer", "minimum": 1},
                "policy_decimation": {"type": "integer", "minimum": 1},
                "termination_angle": _num,
                "init_attitude_range": _num,
                "reward": _block({"wq": _num, "wp": _num, "wz": _num, "b": _num}),
            }
        ),
        "ppo": _block(
            {
                "gamma": _num,
                "lam": _num,
                "clip_ratio": _num,
                "epochs": {"type": "integer", "minimum": 1},
                "minibatches": {"type": "integer", "minimum": 1},
                "lr": _num,
                "entropy_coef": _num,
                "value_coef": _num,
                "max_grad_norm": _num,
                "horizon": {"type": "integer", "minimum": 1},
                "total_steps": {"type": "integer", "minimum": 0},
                "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "init_log_std": _num,
                "checkpoint_every": {"type": "integer", "minimum": 0},
            }
        ),
        "task": _block(
            {
                "names": {"type": "array", "items": {"enum": ["task1", "task2", "hold"]}, "minItems": 1},
                "episodes": {"type": "integer", "minimum": 1},
                "duration": _num,
                "depth": _num,
            }
        ),
        "tuner": _block(
            {
                "controller": {"enum": list(KINDS)},
                "rounds": {"type": "integer", "minimum": 0},
                "target_mse": _num,
                "channels": {"type": "array", "items": {"enum": ["roll", "pitch", "yaw", "depth"]}, "minItems": 1},
                "oscillation_action": {"enum": ["soften", "damp"]},
                "task": {"enum": ["task1", "task2", "hold"]},
                "window": _num,
                "sigma_force": _num,
                "sigma_torque": _num,
                "correlation_time": _num,
                "scenario_seed": {"type": "integer", "minimum": 0},
                "mock_script": {"type": "string"},
                "timeout": _num,
            }
        ),
    }
)


class CLIError(Exception):
    def __init__(self, msg: str, code: int = EXIT_CONFIG):
        super().__init__(msg)
        self.code = code


# ------------------------------------------------------------------ config
def load_config(path) -> dict:
    if path is None:
        cfg = {}
    else:
        p = Path(path)
        if not p.is_file():
            raise CLIError(f"config file not found: {p}")
        try:
            cfg = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise CLIError(f"{p}: invalid JSON: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    errors = sorted(jsonschema.Draft7Validator(CONFIG_SCHEMA).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        lines = [f"  {'/'.join(str(p) for p in e.path) or '<root>'}: {e.message}" for e in errors]
        raise CLIError("invalid configuration:\n" + "\n".join(lines))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def build_vehicle(cfg: dict) -> VehicleParams:
    v = dict(cfg.get("vehicle", {}))
    kw = {}
    if "mass" in v or "half_dims" in v:
        from .hydro import NOMINAL_HALF_DIMS, NOMINAL_MASS

        m = v.get("mass", NOMINAL_MASS)
        kw["mass"] = m
        kw["inertia"] = solid_box_inertia(m, v.get("half_dims", NOMINAL_HALF_DIMS))
    for k in ("volume", "cob_offset", "fluid_density", "viscosity"):
        if k in v:
            kw[k] = v[k]
    return VehicleParams(**kw)


def build_episode(cfg: dict, disturbance: Disturbance | None = None) -> EpisodeConfig:
    e = cfg.get("env", {})
    kw = {k: e[k] for k in ("horizon", "control_dt", "physics_substeps", "policy_decimation", "termination_angle", "init_attitude_range") if k in e}
    if disturbance is not None:
        kw["disturbance"] = disturbance
    return EpisodeConfig(**kw)


def build_controller(cfg: dict, kind: str) -> AttitudeController:
    return AttitudeController.default(kind, **{k: tuple(v) for k, v in cfg.get("controller", {}).items()})


def build_ppo(cfg: dict, seed: int, workers: int) -> PPOConfig:
    p = dict(cfg.get("ppo", {}))
    p["num_envs"] = cfg.get("env", {}).get("num_envs", PPOConfig.num_envs)
    return PPOConfig(seed=seed, workers=workers, **p)


def tasks_of(cfg: dict) -> dict:
    t = cfg.get("task", {})
    kw = {k: t[k] for k in ("duration", "depth") if k in t}
    return {n: TaskSpec.by_name(n, **kw) for n in t.get("names", ["task1", "task2"])}


# --------------------------------------------------------------- run dirs
class RunDir:
    def __init__(self, root, cfg: dict, seed: int, command: str, argv):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.cfg, self.seed, self.command, self.argv = cfg, seed, command, list(argv)
        self.start = time.time()
        self.artifacts: list = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        if name not in self.artifacts:
            self.artifacts.append(name)
        return p

    def write_manifest(self, status: str = "ok") -> None:
        manifest = {
            "command": self.command,
            "argv": self.argv,
            "config": self.cfg,
            "config_hash": config_hash(self.cfg),
            "code_version": __version__,
            "seed": self.seed,
            "start": self.start,
            "end": time.time(),
            "status": status,
            "artifacts": sorted(self.artifacts),
        }
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".manifest.", suffix=".json")
        with os.fdopen(fd, "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
        os.replace(tmp, self.root / "manifest.json")


# ---------------------------------------------------------------- commands
def cmd_train(args, cfg) -> int:
    seed = _seed(args, cfg)
    out = RunDir(_out(args, cfg), cfg, seed, "train", args.argv)
    env_cfg = cfg.get("env", {})
    episode = build_episode(cfg)
    reward = RewardConfig(**env_cfg.get("reward", {}))
    vehicle = build_vehicle(cfg)
    for kind in cfg.get("controllers", ["assurface"]):
        pcfg = build_ppo(cfg, seed, args.workers)
        factory = env_factory(
            kind,
            env_cfg.get("dr_level", "NDR"),
            env_cfg.get("train_tasks", ["task1"]),
            episode=episode,
            reward=reward,
            vehicle=vehicle,
            controller=build_controller(cfg, kind),
        )
        log.info("training %s for %d iterations", kind, pcfg.iterations)
        res = train(pcfg, factory, kind, checkpoint_path=out.path(f"{kind}/checkpoint.npz"))
        write_curve_csv(out.path(f"{kind}/curve.csv"), res.curve)
        if args.plot and res.curve:
            it = [r["iteration"] for r in res.curve]
            line_plot(out.path(f"{kind}/curve.svg"), it, {"mean reward": [r["mean_reward"] for r in res.curve]}, title=f"{kind} training", xlabel="iteration")
    out.write_manifest()
    return EXIT_OK


def _load_policies(paths):
    pols = {}
    for p in paths or []:
        if not Path(p).is_file():
            raise CLIError(f"checkpoint not found: {p}")
        try:
            params, meta, _ = load_checkpoint(p)
        except (ConfigurationError, KeyError, ValueError, OSError) as exc:
            raise CLIError(f"{p}: incompatible checkpoint: {exc}") from None
        kind = meta.get("controller_kind", "assurface")
        pols[kind] = params
    return pols


def cmd_eval(args, cfg) -> int:
    seed = _seed(args, cfg)
    policies = _load_policies(args.checkpoint)
    out = RunDir(_out(args, cfg), cfg, seed, "eval", args.argv)
    episodes = cfg.get("task", {}).get("episodes", 4)
    kinds = cfg.get("controllers", list(policies) or ["assurface"])
    for k in policies:
        if k not in kinds:
            kinds.append(k)
    vehicle = build_vehicle(cfg)
    episode = build_episode(cfg)
    rows = []
    for kind in kinds:
        for tname, task in tasks_of(cfg).items():
            arms = [("no_rl", None)] + ([("rl", policies[kind])] if kind in policies else [])
            for arm, pol in arms:
                run = evaluate_policy(
                    pol, kind, task, vehicle=vehicle, episodes=episodes, seed=seed, episode_cfg=episode,
                    controller=build_controller(cfg, kind), keep_trace=args.trace or args.plot, workers=args.workers,
                )
                faults = len(run.report.faults)
                rows.append({"controller": kind, "task": tname, "arm": arm, **run.report.as_row(), "faults": faults})
                tag = f"{kind}_{tname}_{arm}"
                if args.trace:
                    write_trace_csv(out.path(f"traces/{tag}.csv"), run.trace_rows)
                if args.plot:
                    tracking_plot(out.path(f"plots/{tag}.svg"), [r for r in run.trace_rows if r["episode"] == 0], title=tag)
    write_rows_csv(out.path("metrics.csv"), rows)
    out.write_manifest()
    return EXIT_OK


def cmd_tune(args, cfg) -> int:
    seed = _seed(args, cfg)
    t = cfg.get("tuner", {})
    policies = _load_policies(args.checkpoint)
    kind = t.get("controller", "assurface")
    out = RunDir(_out(args, cfg), cfg, seed, "tune", args.argv)
    scenario = TurbulenceScenario(
        **{k: t[k] for k in ("task", "window", "sigma_force", "sigma_torque", "correlation_time") if k in t},
        seed=t.get("scenario_seed", TurbulenceScenario.seed),
    )
    rules = RuleConfig(**{k: (tuple(v) if k == "channels" else v) for k, v in t.items() if k in ("target_mse", "channels", "oscillation_action")})
    client = None
    if args.backend == "http":
        client = HTTPBackend()
    elif args.backend == "mock":
        script = t.get("mock_script")
        if script is None:
            raise CLIError("backend 'mock' needs tuner.mock_script in the config")
        try:
            client = MockBackend(script)
        except (OSError, ValueError) as exc:
            raise CLIError(f"mock script {script}: {exc}") from None
    rounds = args.rounds if args.rounds is not None else t.get("rounds", 2)
    log_path = out.path("llm_log.jsonl") if client is not None else None
    if log_path is not None:
        log_path.write_text("")
    tr = tune(build_controller(cfg, kind), scenario, rounds, args.backend, client, policy=policies.get(kind), rules=rules, log_path=log_path)
    rows = [{"round": r["round"], **{f"mse_{k}": v for k, v in r["mse"].items()}} for r in tr.rounds]
    write_rows_csv(out.path("tuning.csv"), rows)
    with open(out.path("transcript.json"), "w") as f:
        json.dump({"backend": args.backend, "rounds": tr.rounds}, f, indent=2)
    if args.plot:
        line_plot(out.path("tuning.svg"), [r["round"] for r in rows], {"yaw mse": [r["mse_yaw"] for r in rows]}, title="yaw MSE per round", xlabel="round", ylabel="rad^2")
    out.write_manifest()
    return EXIT_OK


def read_trace(path):
    """Parse a trace CSV; raises :class:`CLIError` naming the offending line."""
    p = Path(path)
    if not p.is_file():
        raise CLIError(f"trace not found: {p}")
    rows = []
    with open(p, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise CLIError(f"{p}: empty trace")
        if header != TRACE_FIELDS:
            raise CLIError(f"{p}:1: header does not match the trace schema")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(TRACE_FIELDS):
                raise CLIError(f"{p}:{lineno}: expected {len(TRACE_FIELDS)} fields, got {len(rec)}")
            try:
                row = {k: (int(v) if k == "episode" else float(v)) for k, v in zip(TRACE_FIELDS, rec)}
            except ValueError as exc:
                raise CLIError(f"{p}:{lineno}: {exc}") from None
            rows.append(row)
    if not rows:
        raise CLIError(f"{p}: empty trace")
    return rows


def replay_metrics(rows):
    """``(merged report, per-episode reports, max compound-series mismatch)``."""
    by_ep: dict = {}
    for r in rows:
        by_ep.setdefault(r["episode"], []).append(r)
    reports, mismatch = [], 0.0
    for ep in sorted(by_ep):
        rs = by_ep[ep]
        t = np.array([r["time"] for r in rs])
        act = np.array([[r["roll"], r["pitch"], r["yaw"]] for r in rs])
        ref = np.array([[r["roll_ref"], r["pitch_ref"], r["yaw_ref"]] for r in rs])
        rep = metrics_from_arrays(t, act, ref)
        logged = np.array([r["compound_error"] for r in rs])
        mismatch = max(mismatch, float(np.max(np.abs(rep.compound_series - logged))))
        reports.append(rep)
    return merge_reports(reports), reports, mismatch


def cmd_replay(args, cfg) -> int:
    rows = read_trace(args.trace_csv)
    report, _, mismatch = replay_metrics(rows)
    out = RunDir(_out(args, cfg), cfg, _seed(args, cfg), "replay", args.argv)
    write_rows_csv(out.path("metrics.csv"), [{**report.as_row(), "compound_mismatch": mismatch}])
    tracking_plot(out.path("replay.svg"), [r for r in rows if r["episode"] == rows[0]["episode"]], title=Path(args.trace_csv).stem)
    out.write_manifest()
    if mismatch > 1e-9:
        log.error("recomputed compound error differs from the logged series by %.3g", mismatch)
        return EXIT_FAULT
    return EXIT_OK


# ------------------------------------------------------------------- main
def _seed(args, cfg) -> int:
    return args.seed if args.seed is not None else cfg.get("seed", 0)


def _out(args, cfg) -> str:
    return args.out or cfg.get("output", "runs")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--out", help="output directory")
    common.add_argument("--dry-run", action="store_true", help="validate the configuration and exit")
    common.add_argument("--plot", action="store_true", help="also write SVG plots")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="uuvlab", description="UUV attitude-control training and evaluation")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train PPO policies")
    p = sub.add_parser("eval", parents=[common], help="evaluate controllers with/without RL")
    p.add_argument("--checkpoint", action="append", help="trained policy (repeatable); absent = controller-only")
    p.add_argument("--trace", action="store_true", help="write per-run trace CSVs")
    p = sub.add_parser("tune", parents=[common], help="run the turbulence tuning scenario")
    p.add_argument("--backend", choices=("rule", "http", "mock"), default="rule")
    p.add_argument("--rounds", type=int)
    p.add_argument("--checkpoint", action="append")
    p = sub.add_parser("replay", parents=[common], help="recompute metrics from a trace CSV")
    p.add_argument("trace_csv")
    return ap


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "tune": cmd_tune, "replay": cmd_replay}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.workers < 1:
            raise CLIError("--workers must be >= 1")
        if args.dry_run:
            print(f"configuration OK ({config_hash(cfg)[:12]})")
            return EXIT_OK
        return COMMANDS[args.command](args, cfg)
    except CLIError as exc:
        print(f"uuvlab: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigurationError, ValueError, TypeError) as exc:
        print(f"uuvlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, ArithmeticError, RuntimeError) as exc:
        print(f"uuvlab: runtime fault: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
