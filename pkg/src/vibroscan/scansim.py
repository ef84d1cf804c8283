"""Synthetic raster-scan generator standing in for the physical rig.

A scan session sweeps a stylus back and forth along Y in fixed-X lanes,
with a trapezoidal velocity profile per pass. Position samples come from
an exactly-known trajectory; acceleration samples read a ground-truth
intensity field through an independently clocked, optionally noisy sensor.
Everything is deterministic for a fixed seed, which makes sessions usable
as end-to-end verification fixtures.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np


class TOutOfRange(ValueError):
    """Queried time is outside the pass duration."""


class ConfigError(ValueError):
    """Scan configuration violates an invariant."""


@dataclass(frozen=True)
class IntensityField:
    """Analytic ground-truth vibration intensity over the object plane (g units).

    kinds:
        constant(value)
        checkerboard(period_mm, lo, hi)  -- square tiles of side period_mm
        sinusoid(period_mm, amplitude)   -- along y, offset to stay >= 0
        step_edge(edge_y_mm, lo, hi)     -- lo below the edge, hi at/above it
    """

    kind: str
    params: dict = field(default_factory=dict)

    def eval(self, x_mm: float, y_mm: float) -> float:
        p = self.params
        if self.kind == "constant":
            return p["value"]
        if self.kind == "checkerboard":
            period = p["period_mm"]
            tile = math.floor(x_mm / period) + math.floor(y_mm / period)
            return p["hi"] if tile % 2 else p["lo"]
        if self.kind == "sinusoid":
            return p["amplitude"] * 0.5 * (1.0 + math.sin(2.0 * math.pi * y_mm / p["period_mm"]))
        if self.kind == "step_edge":
            return p["hi"] if y_mm >= p["edge_y_mm"] else p["lo"]
        raise ConfigError(f"unknown field kind {self.kind!r}")

    @staticmethod
    def constant(value: float) -> "IntensityField":
        return IntensityField("constant", {"value": value})

    @staticmethod
    def checkerboard(period_mm: float, lo: float, hi: float) -> "IntensityField":
        return IntensityField("checkerboard", {"period_mm": period_mm, "lo": lo, "hi": hi})

    @staticmethod
    def sinusoid(period_mm: float, amplitude: float) -> "IntensityField":
        return IntensityField("sinusoid", {"period_mm": period_mm, "amplitude": amplitude})

    @staticmethod
    def step_edge(edge_y_mm: float, lo: float, hi: float) -> "IntensityField":
        return IntensityField("step_edge", {"edge_y_mm": edge_y_mm, "lo": lo, "hi": hi})

    def to_json(self) -> dict:
        return {"kind": self.kind, **self.params}

    @staticmethod
    def from_json(obj: dict) -> "IntensityField":
        obj = dict(obj)
        kind = obj.pop("kind")
        return IntensityField(kind, obj)


@dataclass(frozen=True)
class ScanConfig:
    y_start_mm: float = 0.0
    y_len_mm: float = 100.0
    lanes: int = 1
    lane_pitch_mm: float = 2.0
    passes_per_lane: int = 8
    cruise_speed_mm_s: float = 10.0
    accel_mm_s2: float = 100.0
    robot_rate_hz: float = 125.0
    accel_rate_hz: float = 1000.0
    clock_offset_s: float = 0.003
    noise_sigma_g: float = 0.0
    seed: int = 0
    x_origin_mm: float = 0.0

    def __post_init__(self):
        if self.y_len_mm <= 0:
            raise ConfigError("y_len_mm must be > 0")
        if self.lanes < 1:
            raise ConfigError("lanes must be >= 1")
        if self.passes_per_lane < 2 or self.passes_per_lane % 2 != 0:
            raise ConfigError("passes_per_lane must be even and >= 2")
        if self.robot_rate_hz <= 0 or self.accel_rate_hz <= 0:
            raise ConfigError("sample rates must be > 0")
        if self.cruise_speed_mm_s <= 0 or self.accel_mm_s2 <= 0:
            raise ConfigError("cruise speed and acceleration must be > 0")
        if self.noise_sigma_g < 0:
            raise ConfigError("noise_sigma_g must be >= 0")
        # both ramps must fit inside the travel with cruise time left over
        ramp = self.cruise_speed_mm_s**2 / self.accel_mm_s2
        if ramp >= self.y_len_mm:
            raise ConfigError(
                f"no cruise phase: ramp distance {ramp:.3f} mm >= travel {self.y_len_mm} mm"
            )

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(obj: dict) -> "ScanConfig":
        return ScanConfig(**obj)


@dataclass(frozen=True)
class RobotSample:
    t: float
    x_mm: float
    y_mm: float


@dataclass(frozen=True)
class AccelSample:
    t: float
    acc_g: float


@dataclass
class ScanPass:
    lane_index: int
    x_mm: float
    direction: int  # +1 along +Y, -1 along -Y
    robot: list[RobotSample]
    accel: list[AccelSample]


@dataclass
class ScanSession:
    config: ScanConfig
    passes: list[ScanPass]


def ramp_time(cfg: ScanConfig) -> float:
    return cfg.cruise_speed_mm_s / cfg.accel_mm_s2


def cruise_interval(cfg: ScanConfig) -> tuple[float, float]:
    """Analytic (start, end) of the constant-velocity phase, in pass time."""
    t_ramp = ramp_time(cfg)
    ramp_dist = cfg.cruise_speed_mm_s**2 / cfg.accel_mm_s2
    t_cruise = (cfg.y_len_mm - ramp_dist) / cfg.cruise_speed_mm_s
    return t_ramp, t_ramp + t_cruise


def pass_duration(cfg: ScanConfig) -> float:
    t0, t1 = cruise_interval(cfg)
    return t1 + t0


def trapezoid_position(t: float, cfg: ScanConfig, direction: int = 1) -> float:
    """Y position at pass time t: quadratic ramp, linear cruise, mirrored ramp.

    A +Y pass runs y_start -> y_start + y_len; a -Y pass is the reflected
    path starting at y_start + y_len.
    """
    total = pass_duration(cfg)
    if t < 0 or t > total:
        raise TOutOfRange(f"t={t} outside [0, {total}]")
    t_ramp = ramp_time(cfg)
    v = cfg.cruise_speed_mm_s
    a = cfg.accel_mm_s2
    if t <= t_ramp:
        offset = 0.5 * a * t * t
    elif t <= total - t_ramp:
        offset = 0.5 * a * t_ramp * t_ramp + v * (t - t_ramp)
    else:
        dt = total - t
        offset = cfg.y_len_mm - 0.5 * a * dt * dt
    if direction >= 0:
        return cfg.y_start_mm + offset
    return cfg.y_start_mm + cfg.y_len_mm - offset


def _sample_times(duration: float, rate_hz: float) -> np.ndarray:
    n = int(math.floor(duration * rate_hz)) + 1
    return np.arange(n, dtype=np.float64) / rate_hz


def _simulate_pass(
    field: IntensityField, cfg: ScanConfig, lane_index: int, pass_index: int
) -> ScanPass:
    direction = 1 if pass_index % 2 == 0 else -1
    x = cfg.x_origin_mm + lane_index * cfg.lane_pitch_mm
    duration = pass_duration(cfg)

    robot = [
        RobotSample(float(t), x, trapezoid_position(float(t), cfg, direction))
        for t in _sample_times(duration, cfg.robot_rate_hz)
    ]

    rng = np.random.default_rng([cfg.seed, lane_index, pass_index])
    true_times = _sample_times(duration, cfg.accel_rate_hz)
    signs = rng.integers(0, 2, size=len(true_times)) * 2 - 1
    noise = (
        rng.normal(0.0, cfg.noise_sigma_g, size=len(true_times))
        if cfg.noise_sigma_g > 0
        else np.zeros(len(true_times))
    )
    accel = []
    for tau, s, n in zip(true_times, signs, noise):
        y = trapezoid_position(float(tau), cfg, direction)
        acc = 1.0 + float(s) * field.eval(x, y) + float(n)
        # sensor clock runs ahead of the robot clock by the offset
        accel.append(AccelSample(float(tau) + cfg.clock_offset_s, acc))

    return ScanPass(lane_index=lane_index, x_mm=x, direction=direction, robot=robot, accel=accel)


def simulate_session(field: IntensityField, cfg: ScanConfig) -> ScanSession:
    """Generate all lanes x passes deterministically from (field, cfg, seed)."""
    passes = [
        _simulate_pass(field, cfg, lane, p)
        for lane in range(cfg.lanes)
        for p in range(cfg.passes_per_lane)
    ]
    return ScanSession(config=cfg, passes=passes)


def save_session(session: ScanSession, directory) -> None:
    """Write session.json plus per-pass robot_<k>.csv / accel_<k>.csv files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = []
    for k, p in enumerate(session.passes):
        robot_name = f"robot_{k}.csv"
        accel_name = f"accel_{k}.csv"
        with (directory / robot_name).open("w", newline="\n", encoding="utf-8") as f:
            f.write("t,x_mm,y_mm\n")
            for s in p.robot:
                f.write(f"{s.t!r},{s.x_mm!r},{s.y_mm!r}\n")
        with (directory / accel_name).open("w", newline="\n", encoding="utf-8") as f:
            f.write("t,acc_g\n")
            for s in p.accel:
                f.write(f"{s.t!r},{s.acc_g!r}\n")
        manifest.append(
            {
                "index": k,
                "lane_index": p.lane_index,
                "x_mm": p.x_mm,
                "direction": p.direction,
                "robot_csv": robot_name,
                "accel_csv": accel_name,
            }
        )
    payload = {"config": session.config.to_json(), "passes": manifest}
    with (directory / "session.json").open("w", newline="\n", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def load_session(directory) -> ScanSession:
    directory = Path(directory)
    with (directory / "session.json").open(encoding="utf-8") as f:
        payload = json.load(f)
    cfg = ScanConfig.from_json(payload["config"])
    passes = []
    for entry in payload["passes"]:
        robot = []
        with (directory / entry["robot_csv"]).open(encoding="utf-8") as f:
            assert f.readline().strip() == "t,x_mm,y_mm"
            for line in f:
                t, x, y = (float(c) for c in line.split(","))
                robot.append(RobotSample(t, x, y))
        accel = []
        with (directory / entry["accel_csv"]).open(encoding="utf-8") as f:
            assert f.readline().strip() == "t,acc_g"
            for line in f:
                t, a = (float(c) for c in line.split(","))
                accel.append(AccelSample(t, a))
        passes.append(
            ScanPass(
                lane_index=entry["lane_index"],
                x_mm=entry["x_mm"],
                direction=entry["direction"],
                robot=robot,
                accel=accel,
            )
        )
    return ScanSession(config=cfg, passes=passes)
