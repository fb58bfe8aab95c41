"""Thruster force curve, its inverse, and wrench allocation over eight thrusters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# forward branch a in (0.08, 1]
POS_COEF = (29.54, 26.10, -2.44)
# reverse branch a in [-1, -0.08)
NEG_COEF = (-21.75, 21.75, 2.07)
DEADBAND = 0.08


def thrust_from_command(a):
    """Thrust in N for normalized command ``a`` (clamped to [-1, 1]).

    The piecewise quadratic is evaluated verbatim, including the small negative
    values of the forward branch just above the deadband edge.
    """
    a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
    pos = (POS_COEF[0] * a + POS_COEF[1]) * a + POS_COEF[2]
    neg = (NEG_COEF[0] * a + NEG_COEF[1]) * a + NEG_COEF[2]
    return np.where(a > DEADBAND, pos, np.where(a < -DEADBAND, neg, 0.0))


def _root(c2, c1, c0, tau, sign):
    disc = c1 * c1 - 4.0 * c2 * (c0 - tau)
    return (-c1 + sign * np.sqrt(np.maximum(disc, 0.0))) / (2.0 * c2)


POS_ZERO = float(_root(*POS_COEF, 0.0, 1.0))  # ~ 0.0853
NEG_ZERO = float(_root(*NEG_COEF, 0.0, 1.0))  # ~ -0.0875
MAX_THRUST = float(thrust_from_command(1.0))  # 53.20 N
MIN_THRUST = float(thrust_from_command(-1.0))  # -41.43 N


def command_from_thrust(tau):
    """Inverse of :func:`thrust_from_command` on its monotone regions.

    Zero thrust maps to 0, positive thrust to ``[POS_ZERO, 1]`` and negative
    thrust to ``[-1, NEG_ZERO]``; unattainable thrust saturates at +-1.
    """
    tau = np.asarray(tau, dtype=float)
    tp = np.minimum(np.maximum(tau, 0.0), MAX_THRUST)
    tn = np.maximum(np.minimum(tau, 0.0), MIN_THRUST)
    a_pos = np.clip(_root(*POS_COEF, tp, 1.0), POS_ZERO, 1.0)
    a_neg = np.clip(_root(*NEG_COEF, tn, 1.0), -1.0, NEG_ZERO)
    a = np.where(tau > 0.0, a_pos, np.where(tau < 0.0, a_neg, 0.0))
    # saturated requests map to the exact command limits
    return np.where(tau >= MAX_THRUST, 1.0, np.where(tau <= MIN_THRUST, -1.0, a))


@dataclass(frozen=True)
class Thruster:
    position: tuple
    direction: tuple


class ThrusterLayout:
    """Eight thrusters and the derived 6x8 allocation matrix and its pseudo-inverse."""

    def __init__(self, thrusters: Sequence[Thruster]):
        if len(thrusters) != 8:
            raise ValueError(f"expected 8 thrusters, got {len(thrusters)}")
        self.thrusters = tuple(thrusters)
        pos = np.array([t.position for t in thrusters], dtype=float)
        d = np.array([t.direction for t in thrusters], dtype=float)
        norms = np.linalg.norm(d, axis=1)
        if np.any(norms < 1e-9):
            raise ValueError("thruster direction must be non-zero")
        d = d / norms[:, None]
        self.positions = pos
        self.directions = d
        self.allocation_matrix = np.vstack([d.T, np.cross(pos, d).T])
        if np.linalg.matrix_rank(self.allocation_matrix) < 6:
            raise ValueError("thruster layout is not fully actuated (rank < 6)")
        self.pseudo_inverse = np.linalg.pinv(self.allocation_matrix)
        self.allocation_matrix.setflags(write=False)
        self.pseudo_inverse.setflags(write=False)

    @classmethod
    def default(cls) -> "ThrusterLayout":
        """Heavy ROV style: four 45-degree vectored horizontal and four vertical thrusters."""
        s = 1.0 / np.sqrt(2.0)
        thr = []
        corners = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
        for sx, sy in corners:
            thr.append(Thruster((0.12 * sx, 0.10 * sy, 0.0), (s, -sx * sy * s, 0.0)))
        for sx, sy in corners:
            thr.append(Thruster((0.12 * sx, 0.10 * sy, 0.0), (0.0, 0.0, 1.0)))
        return cls(thr)

    def to_dict(self) -> dict:
        return {
            "thrusters": [
                {"position": list(map(float, t.position)), "direction": list(map(float, t.direction))}
                for t in self.thrusters
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ThrusterLayout":
        return cls([Thruster(tuple(t["position"]), tuple(t["direction"])) for t in data["thrusters"]])

    def thruster_forces(self, wrench6):
        """Minimum-norm per-thruster forces for wrench rows ``[F; T]`` (shape ``(..., 6)``)."""
        w = np.asarray(wrench6, dtype=float)
        # elementwise product + short reduction: batch-size independent bits
        return np.sum(w[..., None, :] * self.pseudo_inverse, axis=-1)

    def wrench_from_thrust(self, thrust):
        t = np.asarray(thrust, dtype=float)
        return np.sum(t[..., None, :] * self.allocation_matrix, axis=-1)

    def allocate(self, wrench6):
        """Commands and saturation fraction for a commanded wrench.

        Returns ``(commands, saturation_fraction)`` where the fraction counts
        thrusters whose requested force lies outside the attainable range.
        """
        f = self.thruster_forces(wrench6)
        sat = np.mean((f > MAX_THRUST) | (f < MIN_THRUST), axis=-1)
        return command_from_thrust(f), sat


def allocate(wrench, layout: ThrusterLayout | None = None):
    """Map a :class:`~uuvlab.hydro.Wrench` (or 6-vector) onto thruster commands."""
    layout = layout or ThrusterLayout.default()
    if hasattr(wrench, "force"):
        wrench = np.concatenate([wrench.force, wrench.torque], axis=-1)
    return layout.allocate(wrench)
