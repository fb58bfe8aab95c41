"""Per-channel attitude/depth controllers: PID, S-Surface and adaptive S-Surface.

Channels are ordered ``(roll, pitch, yaw, depth)``. An :class:`AttitudeController`
stores one value per channel for every gain, so the same code drives a single
vehicle (arrays of shape ``(4,)``) or a batch (``(n, 4)``).
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import NamedTuple

import numpy as np

from .mathcore import euler_rates, quat_to_euler, rotate, rotate_inv, wrap_angle

CHANNELS = ("roll", "pitch", "yaw", "depth")
KINDS = ("pid", "ssurface", "assurface")
DU_MAX = 0.5
I_MAX = 0.5

DEFAULT_GAINS = {
    "zeta1": (4.0, 4.0, 4.0, 2.0),
    "zeta2": (2.0, 2.0, 2.0, 3.0),
    "alpha": (0.02, 0.02, 0.02, 0.02),
    "kp": (3.0, 3.0, 3.0, 3.0),
    "ki": (0.2, 0.2, 0.2, 0.2),
    "kd": (1.5, 1.5, 1.5, 1.5),
    "output_scale": (2.0, 2.0, 2.0, 15.0),
}
TUNABLE = ("zeta1", "zeta2", "alpha")
GAIN_FIELDS = ("zeta1", "zeta2", "kp", "ki", "kd")


def s_surface_output(zeta1, zeta2, e, e_dot, du=0.0):
    """``u = 2 / (1 + exp(-zeta1 e - zeta2 e_dot)) - 1 + du`` (unclamped)."""
    x = zeta1 * np.asarray(e, dtype=float) + zeta2 * np.asarray(e_dot, dtype=float)
    # 2*sigmoid(x) - 1 == tanh(x/2), without exp overflow
    return np.tanh(0.5 * x) + du


def adapt_update(du, alpha, e, u, du_max=DU_MAX):
    """Adaptive compensation step ``du + alpha * e * sign(u)``, clamped to ``+-du_max``."""
    return np.clip(du + alpha * np.asarray(e, dtype=float) * np.sign(u), -du_max, du_max)


def pid_output(kp, ki, kd, integrator, e, e_dot, dt, i_max=I_MAX):
    """Clamped PID output; returns ``(u, new_integrator)``."""
    integ = np.clip(integrator + np.asarray(e, dtype=float) * dt, -i_max, i_max)
    u = np.clip(kp * e + ki * integ + kd * e_dot, -1.0, 1.0)
    return u, integ


@dataclass(frozen=True)
class AttitudeController:
    """Gains and internal state of the four-channel controller."""

    kind: str
    zeta1: np.ndarray
    zeta2: np.ndarray
    alpha: np.ndarray
    du: np.ndarray
    kp: np.ndarray
    ki: np.ndarray
    kd: np.ndarray
    integrator: np.ndarray
    output_scale: np.ndarray
    du_max: float = DU_MAX
    i_max: float = I_MAX

    @classmethod
    def default(cls, kind: str = "assurface", batch: int | None = None, **overrides) -> "AttitudeController":
        if kind not in KINDS:
            raise ValueError(f"unknown controller kind {kind!r}; expected one of {KINDS}")
        shape = (4,) if batch is None else (batch, 4)
        vals = {}
        for name, default in DEFAULT_GAINS.items():
            v = np.asarray(overrides.pop(name, default), dtype=float)
            vals[name] = np.broadcast_to(v, shape).copy()
        if overrides:
            raise TypeError(f"unknown controller fields: {sorted(overrides)}")
        return cls(kind=kind, du=np.zeros(shape), integrator=np.zeros(shape), **vals)

    def replace(self, **kw) -> "AttitudeController":
        return replace(self, **kw)

    def reset_state(self) -> "AttitudeController":
        return replace(self, du=np.zeros_like(self.du), integrator=np.zeros_like(self.integrator))

    def get(self, channel: str, name: str) -> float:
        return float(getattr(self, name)[..., CHANNELS.index(channel)])

    def set(self, channel: str, name: str, value: float) -> "AttitudeController":
        arr = np.array(getattr(self, name), dtype=float)
        arr[..., CHANNELS.index(channel)] = value
        return replace(self, **{name: arr})

    def gains_dict(self) -> dict:
        return {
            f.name: np.asarray(getattr(self, f.name)).tolist()
            for f in fields(self)
            if f.name not in ("kind", "du", "integrator", "du_max", "i_max")
        }


class ControlOutput(NamedTuple):
    force: np.ndarray  # body frame, N
    torque: np.ndarray  # body frame, N m
    controller: "AttitudeController"
    u: np.ndarray  # normalized channel outputs
    gimbal: np.ndarray  # gimbal-proximity flag from the Euler extraction


def channel_errors(setpoints, quat, depth, lin_vel, ang_vel):
    """Per-channel ``(e, e_dot)`` plus the gimbal flag.

    Attitude errors are wrapped to (-pi, pi]; rates come from the body rates
    mapped to Euler rates. Depth error is ``depth_sp - z`` with ``e_dot = -z_dot``.
    """
    euler, gimbal = quat_to_euler(quat, return_flag=True)
    e_att = wrap_angle(setpoints[..., :3] - euler)
    edot_att = -euler_rates(euler, ang_vel)
    z_dot = rotate(quat, lin_vel)[..., 2]
    e = np.concatenate([e_att, (setpoints[..., 3] - depth)[..., None]], axis=-1)
    e_dot = np.concatenate([edot_att, -z_dot[..., None]], axis=-1)
    return e, e_dot, gimbal


def controller_step(c: AttitudeController, setpoints, quat, depth, lin_vel, ang_vel, dt: float):
    """One control tick.

    Attitude channels map to body torques (roll->x, pitch->y, yaw->z). The
    depth channel commands a world-frame vertical force that is expressed in
    the body frame.
    """
    setpoints = np.asarray(setpoints, dtype=float)
    quat = np.asarray(quat, dtype=float)
    e, e_dot, gimbal = channel_errors(setpoints, quat, depth, lin_vel, ang_vel)
    if c.kind == "pid":
        u, integ = pid_output(c.kp, c.ki, c.kd, c.integrator, e, e_dot, dt, c.i_max)
        c = replace(c, integrator=integ)
    else:
        du = c.du if c.kind == "assurface" else 0.0
        u = s_surface_output(c.zeta1, c.zeta2, e, e_dot, du)
        if c.kind == "assurface":
            c = replace(c, du=adapt_update(c.du, c.alpha, e, u, c.du_max))
    out = c.output_scale * u
    torque = out[..., :3]
    zeros = np.zeros_like(out[..., 3])
    force = rotate_inv(quat, np.stack([zeros, zeros, out[..., 3]], axis=-1))
    return ControlOutput(force, torque, c, u, gimbal)


def controller_step_state(c: AttitudeController, setpoints: dict, state, dt: float):
    """Convenience wrapper taking a setpoint dict and a :class:`RigidBodyState`."""
    sp = np.array([setpoints["roll"], setpoints["pitch"], setpoints["yaw"], setpoints["depth"]], dtype=float)
    out = controller_step(c, sp, state.orientation, state.position[..., 2], state.lin_vel, state.ang_vel, dt)
    return out.force, out.torque, out.controller
