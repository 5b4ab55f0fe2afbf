"""Angle/delay measurements to 3D position fixes and error reporting.

A station measures (azimuth, elevation, delay); the single-station fix is

    X = X_s + r sin(theta) cos(phi)
    Y = Y_s + r sin(theta) sin(phi)
    Z = Z_s + r cos(theta),        r = c * delay

in the standard spherical convention (azimuth from +x, polar angle from
+z).  Multi-station fusion is the coordinate-wise mean of the per-station
fixes, so with independent zero-mean per-station errors the fused MSE drops
as 1/N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .util import SPEED_OF_LIGHT, fmt_float


@dataclass(frozen=True)
class StationPose:
    position_m: np.ndarray
    name: str = ""

    def __post_init__(self):
        p = np.asarray(self.position_m, dtype=float).reshape(3)
        object.__setattr__(self, "position_m", p)


@dataclass(frozen=True)
class PositionFix:
    position_m: np.ndarray
    station: StationPose
    azimuth_deg: float
    elevation_deg: float
    delay_s: float


def range_from_delay(delay_s: float) -> float:
    """One-way range r = c * delay with the exact speed of light."""
    if delay_s < 0:
        raise ValueError("delay must be non-negative")
    return SPEED_OF_LIGHT * delay_s


def single_station_fix(
    station: StationPose, azimuth_deg: float, elevation_deg: float, delay_s: float
) -> PositionFix:
    r = range_from_delay(delay_s)
    ph = np.deg2rad(azimuth_deg)
    th = np.deg2rad(elevation_deg)
    offset = r * np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    return PositionFix(
        position_m=station.position_m + offset,
        station=station,
        azimuth_deg=azimuth_deg,
        elevation_deg=elevation_deg,
        delay_s=delay_s,
    )


def multi_station_average(fixes: list[PositionFix]) -> np.ndarray:
    """Coordinate-wise mean of the per-station positions."""
    if not fixes:
        raise ValueError("need at least one fix")
    return np.mean([f.position_m for f in fixes], axis=0)


@dataclass
class RmseReport:
    """Per-trial 3D errors plus summary statistics.

    A single trial's error is the Euclidean norm of the position error
    vector; ``mean_rmse_m`` is the mean of those norms and
    ``running_mean_m`` its cumulative average (the convergence trace a
    Monte Carlo plot shows).  The histogram is density-normalized so the
    bin areas sum to one.
    """

    errors_m: np.ndarray
    mean_rmse_m: float
    running_mean_m: np.ndarray
    hist_density: np.ndarray
    hist_edges: np.ndarray

    @property
    def n_trials(self) -> int:
        return self.errors_m.size


def score_trials(
    estimated_m: np.ndarray, truth_m: np.ndarray, n_bins: int = 30
) -> RmseReport:
    est = np.atleast_2d(np.asarray(estimated_m, dtype=float))
    tru = np.atleast_2d(np.asarray(truth_m, dtype=float))
    if est.shape != tru.shape:
        raise ValueError("estimate/truth shape mismatch")
    errors = np.linalg.norm(est - tru, axis=1)
    running = np.cumsum(errors) / np.arange(1, errors.size + 1)
    if np.ptp(errors) == 0.0:
        # degenerate all-equal case still needs a valid density
        edges = np.array([errors[0], errors[0] + 1.0])
        density = np.array([1.0])
    else:
        density, edges = np.histogram(errors, bins=n_bins, density=True)
    return RmseReport(
        errors_m=errors,
        mean_rmse_m=float(np.mean(errors)),
        running_mean_m=running,
        hist_density=density,
        hist_edges=edges,
    )


def save_report_csv(report: RmseReport, path) -> None:
    """trial, error_m, running_mean_rmse_m."""
    lines = ["trial,error_m,running_mean_rmse_m"]
    for i in range(report.n_trials):
        lines.append(
            "%d,%s,%s"
            % (i, fmt_float(report.errors_m[i]), fmt_float(report.running_mean_m[i]))
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def save_histogram_csv(report: RmseReport, path) -> None:
    """bin_lo_m, bin_hi_m, density."""
    lines = ["bin_lo_m,bin_hi_m,density"]
    for i in range(report.hist_density.size):
        lines.append(
            "%s,%s,%s"
            % (
                fmt_float(report.hist_edges[i]),
                fmt_float(report.hist_edges[i + 1]),
                fmt_float(report.hist_density[i]),
            )
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
