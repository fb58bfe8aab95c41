"""Batched RL environment: observation/action/reward wiring, domain randomization,
disturbances and episode management.

One :class:`VecEnv` holds ``n`` independent vehicles in struct-of-arrays form.
All per-vehicle arithmetic is elementwise, so a vehicle's trajectory does not
depend on which other vehicles share its batch; :meth:`VecEnv.step` exploits
this to split the batch across worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import actuation, hydro
from .control import CHANNELS, GAIN_FIELDS, AttitudeController, controller_step
from .eval.tasks import AXES, TaskSpec
from .mathcore import _hamilton, canonical, conj, euler_to_quat, integrate_arrays, quat_to_euler, wrap_angle

OBS_DIM = 9
ACT_DIM = 4
LEVELS = ("NDR", "SDR", "LDR")
CONTROLLER_FIELDS = ("zeta1", "zeta2", "alpha", "du", "kp", "ki", "kd", "integrator", "output_scale")


@dataclass(frozen=True)
class RewardConfig:
    wq: float = 1.0
    wp: float = 0.1
    wz: float = 0.5
    b: float = 1.0


@dataclass(frozen=True)
class DomainRandomizationConfig:
    """Ranges of the per-episode parameter perturbation.

    LDR uses the large ranges verbatim: COB-COM offset magnitude in
    (0.075, 0.15) m with a direction uniform on the sphere, volume in
    (1.5, 3) L, relative gain perturbation magnitude in (15, 30) %. SDR uses
    half-width ranges centred on the nominal vehicle; NDR keeps it nominal.
    """

    level: str = "NDR"
    cob_offset_range: tuple = (0.0, 0.0)  # m, magnitude
    cob_relative: bool = False  # add to the nominal offset instead of replacing it
    volume_range: Optional[tuple] = None  # L; None keeps nominal
    gain_perturb_range: tuple = (0.0, 0.0)  # fraction
    seed: int = 0

    @classmethod
    def for_level(cls, level: str, seed: int = 0, nominal_volume_l: float = hydro.NOMINAL_VOLUME * 1e3):
        level = level.upper()
        if level == "NDR":
            return cls("NDR", seed=seed)
        if level == "LDR":
            return cls("LDR", (0.075, 0.15), False, (1.5, 3.0), (0.15, 0.30), seed)
        if level == "SDR":
            hw_vol = (3.0 - 1.5) / 4.0
            return cls(
                "SDR",
                (0.0, (0.15 - 0.075) / 2.0),
                True,
                (nominal_volume_l - hw_vol, nominal_volume_l + hw_vol),
                (0.075, 0.15),
                seed,
            )
        raise ValueError(f"unknown randomization level {level!r}; expected one of {LEVELS}")


@dataclass(frozen=True)
class Disturbance:
    """External wrench disturbance.

    ``turbulence`` is an Ornstein-Uhlenbeck wrench with stationary standard
    deviations ``sigma_force``/``sigma_torque`` and correlation time
    ``correlation_time``. ``transient`` adds ``impulse`` (6-vector, body frame)
    for ``impulse_duration`` seconds starting at each of ``times``. Both may be
    combined by setting ``kind='both'``.
    """

    kind: str = "none"
    sigma_force: float = 0.0
    sigma_torque: float = 0.0
    correlation_time: float = 0.5
    times: tuple = ()
    impulse: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    impulse_duration: float = 0.2

    def __post_init__(self):
        if self.kind not in ("none", "turbulence", "transient", "both"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")

    @property
    def turbulent(self) -> bool:
        return self.kind in ("turbulence", "both")

    @property
    def transient(self) -> bool:
        return self.kind in ("transient", "both")


@dataclass(frozen=True)
class EpisodeConfig:
    horizon: int = 500  # control steps
    control_dt: float = 0.02
    physics_substeps: int = 2
    policy_decimation: int = 2
    termination_angle: float = 2.5  # rad, tilt of the body z-axis from vertical
    action_scale: tuple = (0.5, 0.5, 0.5, 0.5)
    init_attitude_range: float = 0.3
    disturbance: Disturbance = field(default_factory=Disturbance)

    def __post_init__(self):
        if self.horizon <= 0 or self.physics_substeps <= 0 or self.policy_decimation <= 0:
            raise ValueError("horizon, physics_substeps and policy_decimation must be positive")
        if not 0.0 < self.control_dt / self.physics_substeps <= 0.1:
            raise ValueError("physics dt must lie in (0, 0.1]")

    @property
    def physics_dt(self) -> float:
        return self.control_dt / self.physics_substeps

    @property
    def policy_dt(self) -> float:
        return self.control_dt * self.policy_decimation

    @property
    def policy_horizon(self) -> int:
        return math.ceil(self.horizon / self.policy_decimation)


def episode_rng(seed: int, env_index: int, episode: int) -> np.random.Generator:
    """Counter-based stream keyed by ``(seed, env_index, episode)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(env_index), int(episode)])))


def uniform_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_randomization(drc: DomainRandomizationConfig, rng: np.random.Generator, n: int, nominal: hydro.VehicleParams):
    """Draw ``n`` perturbations: cob offsets ``(n, 3)`` m, volumes ``(n,)`` m^3 and
    multiplicative gain factors ``(n, len(GAIN_FIELDS), 4)``."""
    if drc.level == "NDR":
        return (
            np.broadcast_to(nominal.cob_offset, (n, 3)).copy(),
            np.full(n, nominal.volume),
            np.ones((n, len(GAIN_FIELDS), 4)),
        )
    lo, hi = drc.cob_offset_range
    offset = uniform_sphere(rng, n) * rng.uniform(lo, hi, size=(n, 1))
    if drc.cob_relative:
        offset = offset + nominal.cob_offset
    if drc.volume_range is None:
        vol = np.full(n, nominal.volume)
    else:
        vol = rng.uniform(*drc.volume_range, size=n) * 1e-3
    glo, ghi = drc.gain_perturb_range
    mag = rng.uniform(glo, ghi, size=(n, len(GAIN_FIELDS), 4))
    sign = np.where(rng.random((n, len(GAIN_FIELDS), 4)) < 0.5, -1.0, 1.0)
    return offset, vol, 1.0 + sign * mag


def compute_reward(quat, quat_des, action_raw, dz, cfg: RewardConfig):
    """``(r, (rq, rp, rz))`` for batched inputs.

    ``rq`` uses the norm of the vector part of ``q ⊗ q_des*``, i.e. the sine of
    half the rotation angle between the two attitudes.
    """
    err = _hamilton(np.asarray(quat, dtype=float), conj(quat_des))
    rq = np.exp(-np.sqrt(np.sum(err[..., 1:] ** 2, axis=-1)))
    rp = np.exp(-np.sum(np.abs(action_raw), axis=-1) ** cfg.b)
    rz = np.exp(-np.asarray(dz, dtype=float) ** 2)
    return cfg.wq * rq + cfg.wp * rp + cfg.wz * rz, (rq, rp, rz)


def _task_arrays(tasks: Sequence[TaskSpec]):
    nf = max([len(t.freqs.get(a, ())) for t in tasks for a in AXES] + [1])
    amp = np.zeros((len(tasks), 3))
    freq = np.zeros((len(tasks), 3, nf))
    hold = np.zeros((len(tasks), 3))
    depth = np.zeros(len(tasks))
    for i, t in enumerate(tasks):
        depth[i] = t.depth
        if t.kind == "hold":
            hold[i] = t.hold
            continue
        for j, a in enumerate(AXES):
            amp[i, j] = t.amplitude[a]
            fs = t.freqs[a]
            freq[i, j, : len(fs)] = fs
    return amp, freq, hold, depth


class VecEnv:
    """``n`` vehicles stepped in lock-step.

    Parameters
    ----------
    n : int
        Number of environments.
    controller_kind : {'pid', 'ssurface', 'assurface'}
    tasks : TaskSpec or sequence of TaskSpec
        Reference per environment (cycled if shorter than ``n``).
    drc : DomainRandomizationConfig
    episode : EpisodeConfig
    reward : RewardConfig
    vehicle : VehicleParams
        Nominal vehicle; randomization perturbs COB offset, volume and gains.
    controller : AttitudeController, optional
        Nominal gains (unbatched). Defaults to the built-in gains.
    auto_reset : bool
        Start a new episode in place whenever one ends (training mode).
    controllers_enabled : bool
        With ``False`` the vehicle is unactuated (for equilibrium checks).
    """

    def __init__(
        self,
        n: int = 1,
        controller_kind: str = "assurface",
        tasks=None,
        drc: Optional[DomainRandomizationConfig] = None,
        episode: Optional[EpisodeConfig] = None,
        reward: Optional[RewardConfig] = None,
        vehicle: Optional[hydro.VehicleParams] = None,
        controller: Optional[AttitudeController] = None,
        auto_reset: bool = True,
        controllers_enabled: bool = True,
        disabled_channels: Sequence[str] = (),
        env_index_offset: int = 0,
        record: bool = False,
    ):
        self.n = int(n)
        self.kind = controller_kind
        tasks = [TaskSpec.task1()] if tasks is None else tasks
        if isinstance(tasks, TaskSpec):
            tasks = [tasks]
        self.tasks = [tasks[i % len(tasks)] for i in range(self.n)]
        self.drc = drc or DomainRandomizationConfig()
        self.cfg = episode or EpisodeConfig()
        self.reward_cfg = reward or RewardConfig()
        self.vehicle = vehicle or hydro.VehicleParams()
        self.layout = self.vehicle.layout or actuation.ThrusterLayout.default()
        base = controller if controller is not None else AttitudeController.default(controller_kind)
        if base.kind != controller_kind:
            base = base.replace(kind=controller_kind)
        self.base_controller = base
        self.auto_reset = auto_reset
        self.controllers_enabled = controllers_enabled
        self.channel_mask = np.array([0.0 if c in disabled_channels else 1.0 for c in CHANNELS])
        self.env_index_offset = env_index_offset
        self.record = record
        self.history: list = []
        self._alloc()

    # ------------------------------------------------------------------ state
    def _alloc(self):
        n = self.n
        amp, freq, hold, depth = _task_arrays(self.tasks)
        box = self.vehicle.box
        inertia = self.vehicle.inertia
        self.s = {
            "pos": np.zeros((n, 3)),
            "quat": np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
            "v": np.zeros((n, 3)),
            "w": np.zeros((n, 3)),
            "step": np.zeros(n, dtype=np.int64),
            "episode": np.full(n, -1, dtype=np.int64),
            "ret": np.zeros(n),
            "mass": np.full(n, self.vehicle.mass),
            "inertia": np.broadcast_to(inertia, (n, 3, 3)).copy(),
            "inertia_inv": np.broadcast_to(np.linalg.inv(inertia), (n, 3, 3)).copy(),
            "box_r": np.broadcast_to(box.r, (n, 3)).copy(),
            "box_req": np.full(n, float(box.r_eq)),
            "volume": np.full(n, self.vehicle.volume),
            "cob": np.zeros((n, 3)),
            "rho": np.full(n, self.vehicle.fluid_density),
            "beta": np.full(n, self.vehicle.viscosity),
            "amp": amp,
            "freq": freq,
            "hold": hold,
            "depth_ref": depth,
            "ou": np.zeros((n, 6)),
            "noise": np.zeros((n, self.cfg.horizon if self.cfg.disturbance.turbulent else 0, 6)),
            "last_action": np.zeros((n, ACT_DIM)),
        }
        c = self.base_controller
        for name in CONTROLLER_FIELDS:
            self.s["c_" + name] = np.broadcast_to(getattr(c, name), (n, 4)).copy()
        self.seed = self.drc.seed

    def controller_view(self, sl=slice(None)) -> AttitudeController:
        c = self.base_controller
        return c.replace(**{k[2:]: v[sl] for k, v in self.s.items() if k.startswith("c_")})

    def state_dict(self) -> dict:
        return {k: v.copy() for k, v in self.s.items()}

    def load_state_dict(self, d: dict) -> None:
        for k, v in d.items():
            self.s[k] = np.array(v, dtype=self.s[k].dtype).reshape(self.s[k].shape if k != "noise" else np.shape(v))

    # ------------------------------------------------------------------ reset
    def _reset_one(self, s: dict, j: int, global_index: int) -> None:
        ep = int(s["episode"][j]) + 1
        rng = episode_rng(self.seed, global_index, ep)
        cob, vol, gain = sample_randomization(self.drc, rng, 1, self.vehicle)
        r = self.cfg.init_attitude_range
        euler0 = rng.uniform(-r, r, size=3)
        s["episode"][j] = ep
        s["step"][j] = 0
        s["ret"][j] = 0.0
        s["cob"][j] = cob[0]
        s["volume"][j] = vol[0]
        c = self.base_controller
        for k, name in enumerate(GAIN_FIELDS):
            s["c_" + name][j] = np.asarray(getattr(c, name)) * gain[0, k]
        s["c_du"][j] = 0.0
        s["c_integrator"][j] = 0.0
        s["pos"][j] = (0.0, 0.0, s["depth_ref"][j])
        s["quat"][j] = euler_to_quat(euler0)
        s["v"][j] = 0.0
        s["w"][j] = 0.0
        s["ou"][j] = 0.0
        s["last_action"][j] = 0.0
        if self.cfg.disturbance.turbulent:
            s["noise"][j] = rng.standard_normal((self.cfg.horizon, 6))

    def reset(self, seed: Optional[int] = None):
        """Start the next episode in every environment; returns observations."""
        if seed is not None:
            self.seed = int(seed)
        for j in range(self.n):
            self._reset_one(self.s, j, j + self.env_index_offset)
        self.history.clear()
        return self._observe(self.s)

    def params_of(self, j: int) -> hydro.VehicleParams:
        return self.vehicle.replace(volume=float(self.s["volume"][j]), cob_offset=self.s["cob"][j].copy())

    def set_vehicle_override(self, volume=None, cob_offset=None) -> None:
        """Force parameters after reset (e.g. out-of-domain buoyancy)."""
        if volume is not None:
            self.s["volume"][:] = volume
        if cob_offset is not None:
            self.s["cob"][:] = cob_offset

    # ---------------------------------------------------------------- helpers
    def _reference(self, s, step):
        t = (step * self.cfg.control_dt)[:, None, None]
        att = s["amp"] * np.sum(np.sin(2.0 * np.pi * s["freq"] * t), axis=-1) + s["hold"]
        return np.concatenate([att, s["depth_ref"][:, None]], axis=-1)

    def _observe(self, s):
        ref = self._reference(s, s["step"])
        q_des = euler_to_quat(ref[:, :3])
        dz = ref[:, 3] - s["pos"][:, 2]
        return np.concatenate([canonical(s["quat"]), q_des, dz[:, None]], axis=-1)

    def _disturbance(self, s, step):
        d = self.cfg.disturbance
        n = len(step)
        out = np.zeros((n, 6))
        if d.turbulent:
            dt = self.cfg.control_dt
            tau = d.correlation_time
            sig = np.array([d.sigma_force] * 3 + [d.sigma_torque] * 3)
            idx = np.minimum(step, s["noise"].shape[1] - 1)
            xi = s["noise"][np.arange(n), idx]
            s["ou"][:] = s["ou"] + (-dt / tau) * s["ou"] + sig * math.sqrt(2.0 * dt / tau) * xi
            out = out + s["ou"]
        if d.transient:
            t = step * self.cfg.control_dt
            active = np.zeros(n, dtype=bool)
            for t0 in d.times:
                active |= (t >= t0 - 1e-9) & (t < t0 + d.impulse_duration - 1e-9)
            out = out + active[:, None] * np.asarray(d.impulse, dtype=float)
        return out

    # ------------------------------------------------------------------- step
    def _advance(self, s: dict, actions: np.ndarray, index0: int):
        cfg = self.cfg
        n = actions.shape[0]
        raw = np.clip(actions, -1.0, 1.0)
        delta = raw * np.asarray(cfg.action_scale)
        ctrl = self.base_controller.replace(**{k[2:]: v for k, v in s.items() if k.startswith("c_")})
        sat_acc = np.zeros(n)
        gimbal = np.zeros(n, dtype=bool)
        rec = [] if self.record else None
        for _ in range(cfg.policy_decimation):
            ref = self._reference(s, s["step"])
            setp = ref + delta
            if self.controllers_enabled:
                out = controller_step(ctrl, setp, s["quat"], s["pos"][:, 2], s["v"], s["w"], cfg.control_dt)
                ctrl = out.controller
                gimbal |= out.gimbal
                cmd_wrench = self._mask_wrench(out)
                commands, sat = self.layout.allocate(cmd_wrench)
                thrust_wrench = self.layout.wrench_from_thrust(actuation.thrust_from_command(commands))
            else:
                commands = np.zeros((n, 8))
                sat = np.zeros(n)
                thrust_wrench = np.zeros((n, 6))
                cmd_wrench = np.zeros((n, 6))
            sat_acc += sat
            ext = thrust_wrench + self._disturbance(s, s["step"])
            for _ in range(cfg.physics_substeps):
                box = hydro.EquivalentBox(s["box_r"], s["box_req"])
                fd, gd = hydro.drag_wrench(box, s["v"], s["w"], s["rho"])
                fv, gv = hydro.viscous_wrench(box, s["v"], s["w"], s["beta"])
                fr, gr = hydro.restoring_arrays(s["quat"], s["mass"], s["volume"], s["cob"], s["rho"], self.vehicle.gravity)
                force = ext[:, :3] + fd + fv + fr
                torque = ext[:, 3:] + gd + gv + gr
                s["pos"], s["quat"], s["v"], s["w"] = integrate_arrays(
                    s["pos"], s["quat"], s["v"], s["w"], force, torque, s["mass"], s["inertia"], s["inertia_inv"], cfg.physics_dt
                )
            s["step"] = s["step"] + 1
            if rec is not None:
                rec.append(
                    {
                        "t": s["step"] * cfg.control_dt,
                        "euler": quat_to_euler(s["quat"]),
                        "ref": self._reference(s, s["step"]),
                        "depth": s["pos"][:, 2].copy(),
                        "wrench": cmd_wrench,
                        "commands": commands,
                        "sat": sat,
                    }
                )
        for k in CONTROLLER_FIELDS:
            s["c_" + k] = getattr(ctrl, k)
        obs = self._observe(s)
        q_des = obs[:, 4:8]
        reward, comps = compute_reward(s["quat"], q_des, raw, obs[:, 8], self.reward_cfg)
        s["ret"] = s["ret"] + reward
        s["last_action"] = raw
        finite = np.isfinite(s["pos"]).all(1) & np.isfinite(s["quat"]).all(1) & np.isfinite(s["v"]).all(1) & np.isfinite(s["w"]).all(1)
        tilt = np.arccos(np.clip(1.0 - 2.0 * (s["quat"][:, 1] ** 2 + s["quat"][:, 2] ** 2), -1.0, 1.0))
        diverged = ~finite | (tilt > cfg.termination_angle)
        timeout = (s["step"] >= cfg.horizon) & ~diverged
        done = diverged | timeout
        reward = np.where(finite, reward, 0.0)
        euler = quat_to_euler(s["quat"])
        ref_now = self._reference(s, s["step"])
        sq_err = np.mean(wrap_angle(euler - ref_now[:, :3]) ** 2, axis=-1)
        info = {
            "sq_err": sq_err,
            "rq": comps[0],
            "rp": comps[1],
            "rz": comps[2],
            "saturation": sat_acc / cfg.policy_decimation,
            "gimbal": gimbal,
            "fault": ~finite,
            "timeout": timeout,
            "episode_return": np.where(done, s["ret"], np.nan),
            "episode_length": np.where(done, s["step"], 0),
            "terminal_obs": obs.copy(),
            "record": rec,
        }
        return obs, reward, done, info

    def _mask_wrench(self, out):
        m = self.channel_mask
        torque = out.torque * m[:3]
        force = out.force * m[3]
        return np.concatenate([force, torque], axis=-1)

    def _step_slice(self, sl: slice, actions: np.ndarray):
        sub = {k: v[sl] for k, v in self.s.items()}
        obs, reward, done, info = self._advance(sub, actions, sl.start)
        for k, v in sub.items():
            self.s[k][sl] = v
        if self.auto_reset and np.any(done):
            for j in np.flatnonzero(done):
                self._reset_one(self.s, sl.start + j, sl.start + j + self.env_index_offset)
            fresh = {k: v[sl] for k, v in self.s.items()}
            obs = np.where(done[:, None], self._observe(fresh), obs)
        return obs, reward, done, info

    def step(self, actions, workers: int = 1):
        """Advance every environment by one policy step.

        Returns ``(obs, reward, done, info)``; ``info`` arrays are per env.
        With ``workers > 1`` contiguous slices run on a thread pool; the
        outputs are identical for any worker count.
        """
        actions = np.asarray(actions, dtype=float).reshape(self.n, ACT_DIM)
        workers = max(1, min(int(workers), self.n))
        bounds = np.linspace(0, self.n, workers + 1).astype(int)
        slices = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        if len(slices) == 1:
            parts = [self._step_slice(slices[0], actions)]
        else:
            with ThreadPoolExecutor(max_workers=len(slices)) as pool:
                parts = list(pool.map(lambda sl: self._step_slice(sl, actions[sl]), slices))
        obs = np.concatenate([p[0] for p in parts])
        reward = np.concatenate([p[1] for p in parts])
        done = np.concatenate([p[2] for p in parts])
        info = {}
        for k in parts[0][3]:
            if k == "record":
                continue
            info[k] = np.concatenate([p[3][k] for p in parts])
        if self.record:
            recs = [p[3]["record"] for p in parts]
            for i in range(len(recs[0])):
                self.history.append({k: np.concatenate([r[i][k] for r in recs]) for k in recs[0][i]})
        return obs, reward, done, info


def batch_step(env: VecEnv, actions, workers: int = 1):
    """Functional alias of :meth:`VecEnv.step`."""
    return env.step(actions, workers=workers)


def env_factory(
    controller_kind: str,
    level: str = "NDR",
    tasks: Sequence[str] = ("task1",),
    episode: Optional[EpisodeConfig] = None,
    reward: Optional[RewardConfig] = None,
    vehicle: Optional[hydro.VehicleParams] = None,
    controller: Optional[AttitudeController] = None,
):
    """``(n, seed) -> VecEnv`` for :func:`uuvlab.ppo.train`."""
    specs = [TaskSpec.by_name(t) for t in tasks]

    def make(n: int, seed: int) -> VecEnv:
        return VecEnv(
            n,
            controller_kind,
            specs,
            drc=DomainRandomizationConfig.for_level(level, seed),
            episode=episode,
            reward=reward,
            vehicle=vehicle,
            controller=controller,
        )

    return make
