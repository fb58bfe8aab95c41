"""Tracking metrics: per-axis MSE on wrapped errors and the compound error."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mathcore import wrap_angle


def compound_error(actual, desired):
    """Sum over roll, pitch, yaw of ``|wrap(actual - desired)|``; works on ``(..., 3)``."""
    d = wrap_angle(np.asarray(actual, dtype=float) - np.asarray(desired, dtype=float))
    return np.sum(np.abs(d), axis=-1)


@dataclass
class MetricsReport:
    mse_per_axis: np.ndarray  # rad^2, (roll, pitch, yaw)
    mse_total: float
    times: np.ndarray
    compound_series: np.ndarray
    compound_mean: float
    compound_std: float
    faults: list = field(default_factory=list)

    def as_row(self) -> dict:
        return {
            "mse_roll": float(self.mse_per_axis[0]),
            "mse_pitch": float(self.mse_per_axis[1]),
            "mse_yaw": float(self.mse_per_axis[2]),
            "mse_total": float(self.mse_total),
            "compound_mean": float(self.compound_mean),
            "compound_std": float(self.compound_std),
        }


def metrics_from_arrays(times, actual, desired, faults=None) -> MetricsReport:
    """Metrics for euler trajectories ``actual``/``desired`` of shape ``(T, 3)``.

    MSE is averaged over time then over axes.
    """
    actual = np.asarray(actual, dtype=float)
    desired = np.asarray(desired, dtype=float)
    err = wrap_angle(actual - desired)
    mse_axis = np.mean(err**2, axis=0)
    series = np.sum(np.abs(err), axis=-1)
    return MetricsReport(
        mse_per_axis=mse_axis,
        mse_total=float(np.mean(mse_axis)),
        times=np.asarray(times, dtype=float),
        compound_series=series,
        compound_mean=float(np.mean(series)),
        compound_std=float(np.std(series)),
        faults=list(faults or []),
    )


def merge_reports(reports) -> MetricsReport:
    """Concatenate episodes: MSE and compound statistics over all samples."""
    reports = list(reports)
    n = np.array([len(r.compound_series) for r in reports], dtype=float)
    mse_axis = np.sum([r.mse_per_axis * k for r, k in zip(reports, n)], axis=0) / n.sum()
    series = np.concatenate([r.compound_series for r in reports])
    times = np.concatenate([r.times for r in reports])
    faults = [f for r in reports for f in r.faults]
    return MetricsReport(mse_axis, float(np.mean(mse_axis)), times, series, float(series.mean()), float(series.std()), faults)
