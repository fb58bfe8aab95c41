"""Phenomenological fluid forces and the gravity/buoyancy restoring wrench.

The vehicle is replaced by an equivalent inertia box whose half-dimensions
follow from mass and inertia; quadratic drag and linear viscous damping are
evaluated axis by axis on that box.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .mathcore import rotate_inv

AXES = "xyz"

NOMINAL_MASS = 2.25  # kg
NOMINAL_HALF_DIMS = (0.15, 0.125, 0.10)  # m
NOMINAL_VOLUME = 2.25e-3  # m^3, neutral at 1000 kg/m^3
NOMINAL_COB_OFFSET = (0.0, 0.0, -0.02)  # COB above COM
WATER_DENSITY = 1000.0
WATER_VISCOSITY = 1.0e-3
GRAVITY = 9.81


class ParameterError(ValueError):
    """Invalid physical parameters."""


class Wrench(NamedTuple):
    force: np.ndarray
    torque: np.ndarray

    def __add__(self, other):  # type: ignore[override]
        return Wrench(self.force + other.force, self.torque + other.torque)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque], axis=-1)


class EquivalentBox(NamedTuple):
    r: np.ndarray  # half-dimensions (..., 3)
    r_eq: np.ndarray  # mean half-dimension (...,)


def solid_box_inertia(mass: float, half_dims) -> np.ndarray:
    """Principal inertia tensor of a homogeneous box with the given half-dimensions."""
    rx, ry, rz = (float(v) for v in half_dims)
    return np.diag([mass * (ry**2 + rz**2) / 3.0, mass * (rx**2 + rz**2) / 3.0, mass * (rx**2 + ry**2) / 3.0])


def equivalent_box(mass, inertia) -> EquivalentBox:
    """Half-dimensions of the box that has the given mass and principal moments.

    ``r_i = sqrt(3/(2m) * (I_jj + I_kk - I_ii))``. Works on batched inputs
    (``mass`` shape ``(...)``, ``inertia`` shape ``(..., 3, 3)``).
    """
    m = np.asarray(mass, dtype=float)
    inertia = np.asarray(inertia, dtype=float)
    d = np.diagonal(inertia, axis1=-2, axis2=-1)
    radicand = np.stack(
        [d[..., 1] + d[..., 2] - d[..., 0], d[..., 0] + d[..., 2] - d[..., 1], d[..., 0] + d[..., 1] - d[..., 2]],
        axis=-1,
    )
    bad = (radicand <= 0.0).reshape(-1, 3).any(axis=0)
    if bad.any():
        axis = AXES[int(np.argmax(bad))]
        raise ParameterError(f"inertia violates the triangle inequality on axis {axis}")
    r = np.sqrt(3.0 / (2.0 * m[..., None]) * radicand)
    return EquivalentBox(r, (r[..., 0] + r[..., 1] + r[..., 2]) / 3.0)


def _cyclic(r):
    return r[..., [1, 2, 0]], r[..., [2, 0, 1]]


def drag_wrench(box: EquivalentBox, v, w, rho) -> Wrench:
    """Quadratic drag: ``f_i = -2 rho r_j r_k |v_i| v_i``,
    ``g_i = -rho/2 r_i (r_j^4 + r_k^4) |w_i| w_i``."""
    r = np.asarray(box.r, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    rho = np.asarray(rho, dtype=float)[..., None]
    rj, rk = _cyclic(r)
    f = -2.0 * rho * rj * rk * np.abs(v) * v
    g = -0.5 * rho * r * (rj**4 + rk**4) * np.abs(w) * w
    return Wrench(f, g)


def viscous_wrench(box: EquivalentBox, v, w, beta) -> Wrench:
    """Linear viscous damping on the equivalent radius ``r_eq``."""
    r_eq = np.asarray(box.r_eq, dtype=float)[..., None]
    beta = np.asarray(beta, dtype=float)[..., None]
    f = -6.0 * beta * np.pi * r_eq * np.asarray(v, dtype=float)
    g = -8.0 * beta * np.pi * r_eq**3 * np.asarray(w, dtype=float)
    return Wrench(f, g)


def restoring_arrays(quat, mass, volume, cob, rho, g):
    """Body-frame gravity + buoyancy force and the buoyancy moment about the COM."""
    mass = np.asarray(mass, dtype=float)
    buoy = np.asarray(rho, dtype=float) * np.asarray(volume, dtype=float) * g
    zeros = np.zeros_like(mass - buoy)
    f_grav = rotate_inv(quat, np.stack([zeros, zeros, mass * g + zeros], axis=-1))
    f_buoy = rotate_inv(quat, np.stack([zeros, zeros, -buoy + zeros], axis=-1))
    return f_grav + f_buoy, np.cross(cob, f_buoy)


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of one vehicle; the domain-randomization target."""

    mass: float = NOMINAL_MASS
    inertia: np.ndarray = field(default_factory=lambda: solid_box_inertia(NOMINAL_MASS, NOMINAL_HALF_DIMS))
    volume: float = NOMINAL_VOLUME
    cob_offset: np.ndarray = field(default_factory=lambda: np.array(NOMINAL_COB_OFFSET))
    fluid_density: float = WATER_DENSITY
    viscosity: float = WATER_VISCOSITY
    gravity: float = GRAVITY
    layout: Optional[object] = None  # ThrusterLayout; None selects the default

    def __post_init__(self):
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float))
        object.__setattr__(self, "cob_offset", np.asarray(self.cob_offset, dtype=float))
        self.validate()

    def validate(self) -> None:
        if not self.mass > 0:
            raise ParameterError("mass must be positive")
        if not self.volume > 0:
            raise ParameterError("volume must be positive")
        if not self.fluid_density > 0:
            raise ParameterError("fluid density must be positive")
        if self.viscosity < 0:
            raise ParameterError("viscosity must be non-negative")
        inertia = self.inertia
        if inertia.shape != (3, 3) or not np.allclose(inertia, inertia.T):
            raise ParameterError("inertia must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(inertia) <= 0):
            raise ParameterError("inertia must be positive definite")
        equivalent_box(self.mass, inertia)

    @property
    def box(self) -> EquivalentBox:
        return equivalent_box(self.mass, self.inertia)

    def with_volume_for_density_ratio(self, ratio: float) -> "VehicleParams":
        """Scale volume at fixed mass so that vehicle density = ratio * fluid density."""
        return replace(self, volume=self.mass / (ratio * self.fluid_density))

    def replace(self, **kw) -> "VehicleParams":
        return replace(self, **kw)


def restoring_wrench(state, p: VehicleParams) -> Wrench:
    """Gravity at the COM plus buoyancy at ``COM + cob_offset``, body frame."""
    f, t = restoring_arrays(state.orientation, p.mass, p.volume, p.cob_offset, p.fluid_density, p.gravity)
    return Wrench(f, t)


def hydro_wrench(state, p: VehicleParams) -> Wrench:
    """Drag plus viscous wrench for a single vehicle state."""
    box = p.box
    return drag_wrench(box, state.lin_vel, state.ang_vel, p.fluid_density) + viscous_wrench(
        box, state.lin_vel, state.ang_vel, p.viscosity
    )
