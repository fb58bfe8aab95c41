"""Reference trajectories: sums of sines per attitude axis plus a depth hold."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

AXES = ("roll", "pitch", "yaw")

TASK2_AMPLITUDE = {"roll": 0.95, "pitch": 1.10, "yaw": 1.35}
TASK2_FREQS = {
    "roll": (0.15, 0.3, 0.5, -0.9, 1.8, -3.0),
    "pitch": (-0.1, 0.2, 0.5, -1.0, 2.0, 3.5),
    "yaw": (-0.1, 0.2, 0.4, 0.8, 1.6, -3.2),
}
TASK1_FREQ = 0.1


@dataclass(frozen=True)
class TaskSpec:
    """Multi-sine attitude reference ``A * sum(sin(2 pi f t))`` per axis.

    ``depth`` is the constant depth setpoint (m, positive down).
    """

    kind: str
    amplitude: dict = field(default_factory=dict)
    freqs: dict = field(default_factory=dict)
    duration: float = 10.0
    depth: float = 1.0
    hold: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("task1", "task2", "hold"):
            raise ValueError(f"unknown task kind {self.kind!r}")

    @classmethod
    def task1(cls, duration: float = 10.0, depth: float = 1.0) -> "TaskSpec":
        return cls("task1", dict(TASK2_AMPLITUDE), {a: (TASK1_FREQ,) for a in AXES}, duration, depth)

    @classmethod
    def task2(cls, duration: float = 10.0, depth: float = 1.0) -> "TaskSpec":
        return cls("task2", dict(TASK2_AMPLITUDE), dict(TASK2_FREQS), duration, depth)

    @classmethod
    def hold_attitude(cls, euler=(0.0, 0.0, 0.0), duration: float = 10.0, depth: float = 1.0) -> "TaskSpec":
        return cls("hold", {}, {}, duration, depth, tuple(float(v) for v in euler))

    @classmethod
    def by_name(cls, name: str, **kw) -> "TaskSpec":
        makers = {"task1": cls.task1, "task2": cls.task2, "hold": cls.hold_attitude}
        try:
            return makers[name](**kw)
        except KeyError:
            raise ValueError(f"unknown task {name!r}") from None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "duration": self.duration, "depth": self.depth}


def reference(task: TaskSpec, axis: str, t):
    """Raw (unwrapped) reference angle in rad for ``axis`` at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    if task.kind == "hold":
        return np.full_like(t, task.hold[AXES.index(axis)])
    total = np.zeros_like(t)
    for f in task.freqs[axis]:
        total = total + np.sin(2.0 * np.pi * f * t)
    return task.amplitude[axis] * total


def reference_vector(task: TaskSpec, t):
    """``(..., 4)`` array of roll, pitch, yaw references and the depth setpoint."""
    t = np.asarray(t, dtype=float)
    cols = [reference(task, a, t) for a in AXES]
    cols.append(np.full_like(t, task.depth))
    return np.stack(cols, axis=-1)
