"""Aligns the two sampling streams of a pass and positions every vibration sample.

The robot stream gives sparse, exact positions; the accelerometer stream is
faster and carries the texture signal. Per pass we (1) locate the constant
velocity stretch from the position samples, (2) fit its motion line by least
squares, (3) cut the accelerometer stream down to that time window, and
(4) assign each remaining acceleration sample the position the fitted line
predicts for its timestamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scansim import AccelSample, RobotSample, ScanPass


class WOutOfRange(ValueError):
    """Window fraction must satisfy 0 < w <= 0.5."""


class TooFewSamples(ValueError):
    """Not enough robot samples to locate a cruise window."""


class DegenerateWindow(ValueError):
    """All window timestamps coincide; no line can be fitted."""


class EmptyWindow(ValueError):
    """Accel window came out empty (end index before start index)."""


class NonMonotonicTimestamps(ValueError):
    """Sample timestamps within a pass must be strictly increasing."""


@dataclass(frozen=True)
class CruiseWindow:
    """Robot-sample indices bracketing the constant-velocity stretch.

    lo_index is the sample nearest the below-midpoint target, hi_index the
    one nearest the above-midpoint target. On a -Y pass the low target is
    reached last, so lo_index > hi_index there; t_start/t_end are already
    ordered ascending regardless of direction.
    """

    lo_index: int
    hi_index: int
    t_start: float
    t_end: float


@dataclass(frozen=True)
class LinearFit:
    """Least-squares motion line y = slope * t + intercept over [t_lo, t_hi]."""

    slope_mm_s: float
    intercept_mm: float
    t_lo: float
    t_hi: float
    rmse_mm: float

    def y_at(self, t: float) -> float:
        return self.slope_mm_s * t + self.intercept_mm


@dataclass(frozen=True)
class PositionedVibration:
    acc_g: float
    x_mm: float
    y_mm: float


def _argmin_abs(values: np.ndarray, target: float) -> int:
    # np.argmin keeps the lowest index on ties, matching a linear scan
    return int(np.argmin(np.abs(values - target)))


def cruise_indices(robot: list[RobotSample], travel_len_mm: float, window_frac: float) -> CruiseWindow:
    """Locate the cruise stretch: samples nearest midpoint -/+ window_frac * travel.

    The midpoint is approximated by the arithmetic mean of the Y samples.
    Ties in the nearest-sample search resolve to the lowest index.
    """
    if not (0 < window_frac <= 0.5):
        raise WOutOfRange(f"window_frac must be in (0, 0.5], got {window_frac}")
    if len(robot) < 4:
        raise TooFewSamples(f"need at least 4 robot samples, got {len(robot)}")

    ys = np.array([s.y_mm for s in robot], dtype=np.float64)
    y_mid = math.fsum(s.y_mm for s in robot) / len(robot)
    lo = _argmin_abs(ys, y_mid - window_frac * travel_len_mm)
    hi = _argmin_abs(ys, y_mid + window_frac * travel_len_mm)

    t_lo = robot[lo].t
    t_hi = robot[hi].t
    return CruiseWindow(
        lo_index=lo, hi_index=hi, t_start=min(t_lo, t_hi), t_end=max(t_lo, t_hi)
    )


def fit_cruise_line(robot: list[RobotSample], win: CruiseWindow) -> LinearFit:
    """Ordinary least squares of Y on t across the cruise window (inclusive)."""
    first = min(win.lo_index, win.hi_index)
    last = max(win.lo_index, win.hi_index)
    ts = np.array([s.t for s in robot[first : last + 1]], dtype=np.float64)
    ys = np.array([s.y_mm for s in robot[first : last + 1]], dtype=np.float64)
    if len(ts) < 2 or np.ptp(ts) == 0.0:
        raise DegenerateWindow("window has no two distinct timestamps")

    t_mean = ts.mean()
    y_mean = ys.mean()
    slope = float(np.sum((ts - t_mean) * (ys - y_mean)) / np.sum((ts - t_mean) ** 2))
    intercept = float(y_mean - slope * t_mean)
    residuals = ys - (slope * ts + intercept)
    rmse = float(np.sqrt(np.mean(residuals**2)))
    return LinearFit(
        slope_mm_s=slope,
        intercept_mm=intercept,
        t_lo=float(ts[0]),
        t_hi=float(ts[-1]),
        rmse_mm=rmse,
    )


def accel_window(accel: list[AccelSample], t_start: float, t_end: float) -> tuple[int, int]:
    """Accelerometer index span for the cruise interval.

    Start index: nearest-sample to t_start, plus one; end index: nearest-sample
    to t_end, minus one. The one-sample pull-in on both ends keeps the window
    clear of samples taken outside the fitted interval.
    """
    ts = np.array([s.t for s in accel], dtype=np.float64)
    j_first = _argmin_abs(ts, t_start) + 1
    j_last = _argmin_abs(ts, t_end) - 1
    if j_first > j_last:
        raise EmptyWindow(f"window [{t_start}, {t_end}] selects no accel samples")
    return j_first, j_last


def position_accels(
    accel: list[AccelSample], win: tuple[int, int], fit: LinearFit, x_mm: float
) -> list[PositionedVibration]:
    """Pair each windowed acceleration with the position the fit predicts for it."""
    j_first, j_last = win
    return [
        PositionedVibration(acc_g=s.acc_g, x_mm=x_mm, y_mm=fit.y_at(s.t))
        for s in accel[j_first : j_last + 1]
    ]


def _check_monotonic(ts: list[float], what: str) -> None:
    for a, b in zip(ts, ts[1:]):
        if b <= a:
            raise NonMonotonicTimestamps(f"{what} timestamps not strictly increasing")


def align_pass(
    scan_pass: ScanPass, travel_len_mm: float, window_frac: float
) -> tuple[list[PositionedVibration], LinearFit]:
    """Full per-pass chain: cruise window -> line fit -> accel cut -> positions.

    Validates timestamp monotonicity first so corrupted passes fail loudly
    instead of producing silently misplaced samples.
    """
    _check_monotonic([s.t for s in scan_pass.robot], "robot")
    _check_monotonic([s.t for s in scan_pass.accel], "accel")
    win = cruise_indices(scan_pass.robot, travel_len_mm, window_frac)
    fit = fit_cruise_line(scan_pass.robot, win)
    jw = accel_window(scan_pass.accel, win.t_start, win.t_end)
    return position_accels(scan_pass.accel, jw, fit, scan_pass.x_mm), fit
