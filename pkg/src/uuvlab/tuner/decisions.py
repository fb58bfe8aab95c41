"""Windowed log summaries, fuzzy-scaled tuning decisions and the rule backend."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..control import AttitudeController, CHANNELS
from ..mathcore import wrap_angle

SCALES = (2.0, 1.5, 1.0, 0.67, 0.5)
PARAMETERS = ("zeta1", "zeta2", "alpha")
DIRECTIONS = ("increase", "decrease", "hold")
BOUNDS = {"zeta1": (0.1, 50.0), "zeta2": (0.1, 50.0), "alpha": (0.0, 0.2)}
DEFAULT_TARGET_MSE = 0.02  # rad^2 per axis

# error columns in a trace: (actual, reference) per channel
_CHANNEL_COLUMNS = {
    "roll": ("roll", "roll_ref"),
    "pitch": ("pitch", "pitch_ref"),
    "yaw": ("yaw", "yaw_ref"),
    "depth": ("depth", "depth_ref"),
}


class DecisionError(ValueError):
    pass


@dataclass(frozen=True)
class TuningDecision:
    channel: str
    parameter: str
    direction: str
    scale: float
    rationale: str = ""

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise DecisionError(f"unknown channel {self.channel!r}")
        if self.parameter not in PARAMETERS:
            raise DecisionError(f"unknown parameter {self.parameter!r}")
        if self.direction not in DIRECTIONS:
            raise DecisionError(f"unknown direction {self.direction!r}")
        if self.scale not in SCALES:
            raise DecisionError(f"scale {self.scale!r} not in {SCALES}")
        if (self.direction == "hold") != (self.scale == 1.0):
            raise DecisionError("hold requires scale 1.0 and scale 1.0 requires hold")
        if self.direction == "increase" and self.scale < 1.0:
            raise DecisionError(f"increase with shrinking scale {self.scale}")

    @property
    def multiplier(self) -> float:
        """Factor applied to the parameter. A decrease divides by the scale;
        the sub-unity scales 0.67 and 0.5 name the factor directly."""
        if self.direction == "increase":
            return self.scale
        if self.direction == "decrease":
            return self.scale if self.scale < 1.0 else 1.0 / self.scale
        return 1.0

    @classmethod
    def hold(cls, channel: str, rationale: str = "within target") -> "TuningDecision":
        return cls(channel, "zeta1", "hold", 1.0, rationale)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AxisSummary:
    mse: float
    mean_abs_error: float
    mean_error: float
    oscillation_score: float
    saturation_fraction: float


@dataclass
class ControlLogSummary:
    window: tuple
    per_axis: dict
    current_gains: dict
    history: list = field(default_factory=list)

    def to_text(self) -> str:
        """Compact textual log handed to the language-model backend."""
        lines = [f"window: {self.window[0]:.2f}-{self.window[1]:.2f} s"]
        for ch, a in self.per_axis.items():
            g = self.current_gains.get(ch, {})
            gains = ", ".join(f"{k}={v:.4g}" for k, v in g.items())
            unit = "m" if ch == "depth" else "rad"
            lines.append(
                f"{ch}: mse={a.mse:.5f} {unit}^2, mean_abs_error={a.mean_abs_error:.4f}, "
                f"mean_error={a.mean_error:+.4f}, oscillation={a.oscillation_score:.3f}, "
                f"saturation={a.saturation_fraction:.3f}; gains: {gains}"
            )
        for i, h in enumerate(self.history):
            ds = "; ".join(f"{d['channel']} {d['parameter']} {d['direction']} x{d['scale']}" for d in h["decisions"])
            lines.append(f"round {i + 1}: {ds or 'none'} -> yaw mse {h['mse'].get('yaw', float('nan')):.5f}")
        return "\n".join(lines)


def _column(rows, key):
    try:
        return np.array([float(r[key]) for r in rows])
    except KeyError:
        raise ValueError(f"trace is missing column {key!r}") from None


def oscillation_score(err) -> float:
    """Fraction of consecutive error-derivative samples that change sign."""
    d = np.diff(np.asarray(err, dtype=float))
    if d.size < 2:
        return 0.0
    s = np.sign(d)
    nz = s[s != 0]
    if nz.size < 2:
        return 0.0
    return float(np.count_nonzero(nz[1:] != nz[:-1]) / (d.size - 1))


def summarize(
    trace: Sequence[dict],
    window: Optional[float | tuple] = None,
    controller: Optional[AttitudeController] = None,
    history: Optional[list] = None,
) -> ControlLogSummary:
    """Summarize trace rows (the eval trace format) over a time window.

    ``window`` is either ``(t_start, t_end)`` or a duration taken from the end
    of the trace; ``None`` uses the whole trace. Attitude errors are wrapped.
    """
    rows = list(trace)
    if not rows:
        raise ValueError("empty trace")
    t = _column(rows, "time")
    if window is None:
        lo, hi = float(t.min()), float(t.max())
    elif np.isscalar(window):
        hi = float(t.max())
        lo = hi - float(window)
    else:
        lo, hi = (float(v) for v in window)
    sel = (t >= lo - 1e-9) & (t <= hi + 1e-9)
    if not np.any(sel):
        raise ValueError(f"window ({lo}, {hi}) contains no samples")
    picked = [r for r, k in zip(rows, sel) if k]
    cmd_keys = sorted(k for k in picked[0] if k.startswith("cmd"))
    if cmd_keys:
        cmds = np.array([[float(r[k]) for k in cmd_keys] for r in picked])
        sat = float(np.mean(np.abs(cmds) >= 1.0 - 1e-9))
    else:
        sat = 0.0
    per_axis = {}
    for ch, (act, ref) in _CHANNEL_COLUMNS.items():
        e = _column(picked, ref) - _column(picked, act)
        if ch != "depth":
            e = wrap_angle(e)
        per_axis[ch] = AxisSummary(
            mse=float(np.mean(e**2)),
            mean_abs_error=float(np.mean(np.abs(e))),
            mean_error=float(np.mean(e)),
            oscillation_score=oscillation_score(e),
            saturation_fraction=sat,
        )
    gains = {}
    if controller is not None:
        gains = {ch: {p: controller.get(ch, p) for p in PARAMETERS} for ch in CHANNELS}
    return ControlLogSummary((lo, hi), per_axis, gains, list(history or []))


@dataclass(frozen=True)
class RuleConfig:
    target_mse: float = DEFAULT_TARGET_MSE
    oscillation_threshold: float = 0.25
    bias_fraction: float = 0.8  # |mean error| / mean |error| above this is a persistent bias
    channels: tuple = ("roll", "pitch", "yaw")
    oscillation_action: str = "soften"  # "soften": zeta1 down, "damp": zeta2 up


def rule_decide(s: ControlLogSummary, cfg: RuleConfig = RuleConfig()) -> list:
    """Deterministic fuzzy rule table, at most one decision per channel."""
    out = []
    for ch in cfg.channels:
        a = s.per_axis[ch]
        if a.mse <= cfg.target_mse:
            out.append(TuningDecision.hold(ch))
            continue
        major = a.mse > 4.0 * cfg.target_mse
        if a.oscillation_score > cfg.oscillation_threshold:
            if cfg.oscillation_action == "soften":
                out.append(TuningDecision(ch, "zeta1", "decrease", 0.5 if major else 0.67, "oscillating: soften slope"))
            else:
                out.append(TuningDecision(ch, "zeta2", "increase", 2.0 if major else 1.5, "oscillating: add damping"))
        elif a.mean_abs_error > 0 and abs(a.mean_error) >= cfg.bias_fraction * a.mean_abs_error:
            out.append(TuningDecision(ch, "alpha", "increase", 2.0 if major else 1.5, "persistent signed bias"))
        else:
            out.append(TuningDecision(ch, "zeta1", "increase", 2.0 if major else 1.5, "sluggish tracking"))
    return out


def apply_decision(c: AttitudeController, d: TuningDecision) -> AttitudeController:
    """``p * scale`` for increase, ``p / scale`` for decrease, clamped to safe bounds."""
    if d.direction == "hold":
        return c
    lo, hi = BOUNDS[d.parameter]
    arr = np.array(getattr(c, d.parameter), dtype=float)
    i = CHANNELS.index(d.channel)
    if d.direction == "increase" or d.scale < 1.0:
        v = arr[..., i] * d.multiplier
    else:
        v = arr[..., i] / d.scale
    arr[..., i] = np.clip(v, lo, hi)
    return c.replace(**{d.parameter: arr})


def apply_decisions(c: AttitudeController, decisions) -> AttitudeController:
    for d in decisions:
        c = apply_decision(c, d)
    return c
