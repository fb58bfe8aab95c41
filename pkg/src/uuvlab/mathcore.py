"""Quaternion algebra, Euler conversions and the rigid-body integrator.

Conventions
-----------
* Quaternions are scalar-first ``[w, x, y, z]``, Hamilton product, and rotate
  body-frame vectors into the world frame.
* World frame is z-down (z is depth).
* Euler angles are Z-Y-X intrinsic: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``,
  stored as ``[roll, pitch, yaw]``.

Every function accepts arrays with arbitrary leading batch dimensions; the
last axis holds the components.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

GIMBAL_MARGIN = 1e-6

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


class IntegrationFault(FloatingPointError):
    """Raised when integration produces a non-finite quantity."""

    def __init__(self, quantity: str):
        super().__init__(f"non-finite {quantity} after integration step")
        self.quantity = quantity


def wrap_angle(a):
    """Wrap angles to ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def canonical(q):
    """Resolve the double cover so that ``w >= 0``."""
    q = np.asarray(q, dtype=float)
    return np.where(q[..., :1] < 0.0, -q, q)


def normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.sqrt(np.sum(q * q, axis=-1, keepdims=True))


def conj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def _hamilton(a, b):
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_mul(a, b):
    """Hamilton product ``a ⊗ b``, renormalized, with canonical sign."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return canonical(normalize(_hamilton(a, b)))


def quat_to_matrix(q):
    """Rotation matrix (body -> world) of a unit quaternion, shape ``(..., 3, 3)``."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rows = [
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def rotate(q, v):
    """Rotate body-frame vectors ``v`` into the world frame."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def rotate_inv(q, v):
    """Express world-frame vectors ``v`` in the body frame."""
    return rotate(conj(q), v)


def euler_to_quat(e):
    """Z-Y-X intrinsic ``[roll, pitch, yaw]`` to a canonical unit quaternion."""
    e = np.asarray(e, dtype=float)
    hr, hp, hy = 0.5 * e[..., 0], 0.5 * e[..., 1], 0.5 * e[..., 2]
    cr, sr = np.cos(hr), np.sin(hr)
    cp, sp = np.cos(hp), np.sin(hp)
    cy, sy = np.cos(hy), np.sin(hy)
    q = np.stack(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ],
        axis=-1,
    )
    return canonical(normalize(q))


def gimbal_proximity(q):
    """True where ``|pitch|`` is within ``GIMBAL_MARGIN`` of ``pi/2``."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    s = np.clip(2.0 * (w * y - z * x), -1.0, 1.0)
    return np.abs(np.arcsin(s)) > np.pi / 2 - GIMBAL_MARGIN


def quat_to_euler(q, return_flag: bool = False):
    """Unit quaternion to Z-Y-X ``[roll, pitch, yaw]``.

    Near gimbal lock the roll/yaw split is ambiguous; roll is then set to 0 and
    the combined rotation is reported as yaw. With ``return_flag`` the gimbal
    proximity mask is returned alongside the angles.
    """
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    s = np.clip(2.0 * (w * y - z * x), -1.0, 1.0)
    pitch = np.arcsin(s)
    roll = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    yaw = np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    flag = np.abs(pitch) > np.pi / 2 - GIMBAL_MARGIN
    if np.any(flag):
        yaw_g = np.arctan2(-2.0 * (x * y - w * z), 1.0 - 2.0 * (x * x + z * z))
        roll = np.where(flag, 0.0, roll)
        yaw = np.where(flag, yaw_g, yaw)
    # atan2 can return exactly -pi; the convention is (-pi, pi]
    roll = np.where(roll == -np.pi, np.pi, roll)
    yaw = np.where(yaw == -np.pi, np.pi, yaw)
    e = np.stack([roll, pitch, yaw], axis=-1)
    if return_flag:
        return e, flag
    return e


def euler_rates(euler, ang_vel):
    """Map body angular velocity to Euler-angle rates.

    Falls back to the raw body rates where the transform is singular.
    """
    euler = np.asarray(euler, dtype=float)
    w = np.asarray(ang_vel, dtype=float)
    r, p = euler[..., 0], euler[..., 1]
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    sr, cr = np.sin(r), np.cos(r)
    cp = np.cos(p)
    near = np.abs(p) > np.pi / 2 - 1e-3
    cp_safe = np.where(near, 1.0, cp)
    tp = np.sin(p) / cp_safe
    rates = np.stack(
        [
            wx + sr * tp * wy + cr * tp * wz,
            cr * wy - sr * wz,
            (sr * wy + cr * wz) / cp_safe,
        ],
        axis=-1,
    )
    return np.where(near[..., None], w, rates)


def rotation_angle(q):
    """Rotation angle in ``[0, pi]`` encoded by a unit quaternion."""
    q = np.asarray(q, dtype=float)
    v = np.sqrt(np.sum(q[..., 1:] ** 2, axis=-1))
    return 2.0 * np.arctan2(v, np.abs(q[..., 0]))


@dataclass(frozen=True)
class RigidBodyState:
    """Pose and body-frame twist. Arrays may carry a leading batch axis."""

    position: np.ndarray  # world, m, z down
    orientation: np.ndarray  # body -> world
    lin_vel: np.ndarray  # body, m/s
    ang_vel: np.ndarray  # body, rad/s

    @classmethod
    def at_rest(cls, position=(0.0, 0.0, 0.0), orientation=IDENTITY_QUAT):
        return cls(
            position=np.array(position, dtype=float),
            orientation=canonical(normalize(np.array(orientation, dtype=float))),
            lin_vel=np.zeros(3),
            ang_vel=np.zeros(3),
        )

    def replace(self, **kw) -> "RigidBodyState":
        return replace(self, **kw)


def _matvec(m, v):
    # explicit per-element sums keep results independent of batch size
    return np.stack(
        [m[..., i, 0] * v[..., 0] + m[..., i, 1] * v[..., 1] + m[..., i, 2] * v[..., 2] for i in range(3)],
        axis=-1,
    )


def integrate_arrays(pos, quat, v, w, force, torque, mass, inertia, inertia_inv, dt):
    """Array-level semi-implicit Euler step used by the batched environment.

    ``mass`` has shape ``(...,)``, ``inertia``/``inertia_inv`` shape ``(..., 3, 3)``.
    """
    m = np.asarray(mass, dtype=float)[..., None]
    v_dot = force / m - np.cross(w, v)
    w_dot = _matvec(inertia_inv, torque - np.cross(w, _matvec(inertia, w)))
    v_new = v + dt * v_dot
    w_new = w + dt * w_dot
    pos_new = pos + dt * rotate(quat, v_new)
    omega = np.concatenate([np.zeros(w_new.shape[:-1] + (1,)), w_new], axis=-1)
    q_new = quat + (0.5 * dt) * _hamilton(quat, omega)
    q_new = canonical(normalize(q_new))
    return pos_new, q_new, v_new, w_new


def integrate_step(s: RigidBodyState, force, torque, params, dt: float) -> RigidBodyState:
    """Advance ``s`` by one semi-implicit Euler step.

    Body velocities are updated from the Newton-Euler equations (including the
    gyroscopic term), then the pose is advanced with the new velocities.
    ``params`` needs ``mass`` and ``inertia`` attributes (see ``VehicleParams``).

    Raises
    ------
    IntegrationFault
        If any output component is not finite.
    """
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must lie in (0, 0.1], got {dt}")
    inertia = np.asarray(params.inertia, dtype=float)
    out = integrate_arrays(
        np.asarray(s.position, dtype=float),
        np.asarray(s.orientation, dtype=float),
        np.asarray(s.lin_vel, dtype=float),
        np.asarray(s.ang_vel, dtype=float),
        np.asarray(force, dtype=float),
        np.asarray(torque, dtype=float),
        params.mass,
        inertia,
        np.linalg.inv(inertia),
        dt,
    )
    for name, arr in zip(("position", "orientation", "lin_vel", "ang_vel"), out):
        if not np.all(np.isfinite(arr)):
            raise IntegrationFault(name)
    return RigidBodyState(*out)
