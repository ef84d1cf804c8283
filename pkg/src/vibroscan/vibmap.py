"""Vibration maps: taxel binning, pixel rasterization, normalization, file I/O.

Positioned acceleration samples become vibration intensities, get averaged
into 1 mm taxels along each lane, and are splatted into a pixel grid through
the camera projection with a short stripe perpendicular to the lane so each
taxel occupies a visible band. Maps carry their pre-normalization statistics
and a touched-pixel mask so later consumers can tell signal from background.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .alignment import PositionedVibration
from .geometry import CameraProjection, WorldPoint, project

MAP_MAGIC = b"VMAP1"


class LaneMismatch(ValueError):
    """A sample's x coordinate does not belong to the lane being binned."""


class BinOutOfRange(ValueError):
    """A sample falls outside the configured bin range."""


class ProjectionOutOfFrame(ValueError):
    """Every taxel projects outside the image guard band."""


class NoTouchedPixels(ValueError):
    """Map has no rasterized pixels to take statistics over."""


class MalformedFile(ValueError):
    """Map file failed structural validation."""


def to_intensity(d: list[PositionedVibration], baseline_g: float = 1.0) -> list[PositionedVibration]:
    """Replace accelerations with vibration intensity: distance from baseline gravity.

    baseline_g is 1.0 for sensors reporting g units; use 9.81 for m/s^2 data.
    """
    return [
        PositionedVibration(acc_g=abs(p.acc_g - baseline_g), x_mm=p.x_mm, y_mm=p.y_mm)
        for p in d
    ]


def sort_by_position(d: list[PositionedVibration]) -> list[PositionedVibration]:
    """Stable ascending sort by (x, y); back-and-forth passes interleave otherwise."""
    return sorted(d, key=lambda p: (p.x_mm, p.y_mm))


@dataclass
class TaxelLane:
    """Per-lane taxel row: mean intensity per pitch-sized bin along y."""

    x_mm: float
    y0_mm: float
    pitch_mm: float = 1.0
    values: list[float] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)


def bin_taxels(
    d_sorted: list[PositionedVibration],
    lane_x: float,
    y0_mm: float,
    n_bins: int,
    pitch_mm: float = 1.0,
) -> TaxelLane:
    """Average intensities into consecutive [y0 + k*pitch, y0 + (k+1)*pitch) bins.

    Bins nobody hit stay at value 0 with count 0; counts are the authority on
    which taxels carry data.
    """
    sums = [0.0] * n_bins
    counts = [0] * n_bins
    for p in d_sorted:
        if p.x_mm != lane_x:
            raise LaneMismatch(f"sample at x={p.x_mm} in lane x={lane_x}")
        k = int(math.floor((p.y_mm - y0_mm) / pitch_mm))
        if k < 0 or k >= n_bins:
            raise BinOutOfRange(f"y={p.y_mm} outside [{y0_mm}, {y0_mm + n_bins * pitch_mm})")
        sums[k] += p.acc_g
        counts[k] += 1
    values = [s / c if c > 0 else 0.0 for s, c in zip(sums, counts)]
    return TaxelLane(x_mm=lane_x, y0_mm=y0_mm, pitch_mm=pitch_mm, values=values, counts=counts)


class VibrationMap:
    """Pixel grid of vibration intensity plus raw statistics and touched mask.

    data is float32 (the storage precision); raw_* statistics always describe
    the grid before normalization, over touched pixels only.
    """

    def __init__(
        self,
        data: np.ndarray,
        touched: np.ndarray,
        normalized: bool,
        raw_min: float | None,
        raw_max: float | None,
        raw_mean: float | None,
        raw_std: float | None,
        taxel_pitch_mm: float = 1.0,
    ):
        data = np.asarray(data, dtype=np.float32)
        touched = np.asarray(touched, dtype=bool)
        if data.shape != touched.shape or data.ndim != 2:
            raise ValueError("data and touched must be matching 2D arrays")
        self.data = data
        self.touched = touched
        self.normalized = normalized
        self.raw_min = raw_min
        self.raw_max = raw_max
        self.raw_mean = raw_mean
        self.raw_std = raw_std
        self.taxel_pitch_mm = taxel_pitch_mm

    @property
    def height_px(self) -> int:
        return self.data.shape[0]

    @property
    def width_px(self) -> int:
        return self.data.shape[1]

    @property
    def touched_count(self) -> int:
        return int(self.touched.sum())

    def __eq__(self, other):
        if not isinstance(other, VibrationMap):
            return NotImplemented
        return (
            np.array_equal(self.data, other.data)
            and np.array_equal(self.touched, other.touched)
            and self.normalized == other.normalized
            and self.raw_min == other.raw_min
            and self.raw_max == other.raw_max
            and self.raw_mean == other.raw_mean
            and self.raw_std == other.raw_std
            and self.taxel_pitch_mm == other.taxel_pitch_mm
        )

    def __repr__(self):
        return (
            f"VibrationMap({self.width_px}x{self.height_px}, "
            f"normalized={self.normalized}, touched={self.touched_count})"
        )


def _stats_over(values: np.ndarray) -> tuple[float, float, float, float]:
    v = values.astype(np.float64)
    return float(v.min()), float(v.max()), float(v.mean()), float(v.std())


def rasterize(
    lanes: list[TaxelLane],
    proj: CameraProjection,
    width_px: int,
    height_px: int,
    stretch_px: int = 3,
) -> VibrationMap:
    """Project taxel centers into the image and paint perpendicular stripes.

    Each populated taxel writes its value to the pixel under its projected
    center and to stretch_px pixels on each side, perpendicular to the lane's
    projected axis. Pixels covered by several taxels take the mean. Taxels
    projecting outside a guard band twice the image size are skipped; if all
    of them are, the projection cannot belong to this image.
    """
    acc = np.zeros((height_px, width_px), dtype=np.float64)
    cnt = np.zeros((height_px, width_px), dtype=np.int64)
    any_in_guard = False
    any_taxel = False

    for lane in lanes:
        span = len(lane.values) * lane.pitch_mm
        p0 = project(proj, WorldPoint(lane.x_mm, lane.y0_mm))
        p1 = project(proj, WorldPoint(lane.x_mm, lane.y0_mm + span))
        du, dv = p1.u_px - p0.u_px, p1.v_px - p0.v_px
        norm = math.hypot(du, dv)
        if norm == 0.0:
            raise ProjectionOutOfFrame("lane projects to a single point")
        # stripe runs perpendicular to the projected lane axis
        perp_u, perp_v = -dv / norm, du / norm

        for k, (value, count) in enumerate(zip(lane.values, lane.counts)):
            if count == 0:
                continue
            any_taxel = True
            center = project(
                proj, WorldPoint(lane.x_mm, lane.y0_mm + (k + 0.5) * lane.pitch_mm)
            )
            u, v = center.u_px, center.v_px
            if not (-width_px / 2 <= u < 1.5 * width_px and -height_px / 2 <= v < 1.5 * height_px):
                continue
            any_in_guard = True
            seen = set()
            for s in range(-stretch_px, stretch_px + 1):
                px = int(math.floor(u + s * perp_u + 0.5))
                py = int(math.floor(v + s * perp_v + 0.5))
                if (px, py) in seen:
                    continue
                seen.add((px, py))
                if 0 <= px < width_px and 0 <= py < height_px:
                    acc[py, px] += value
                    cnt[py, px] += 1

    if any_taxel and not any_in_guard:
        raise ProjectionOutOfFrame("all taxels project outside the image guard band")

    touched = cnt > 0
    with np.errstate(invalid="ignore"):
        data = np.where(touched, acc / np.maximum(cnt, 1), 0.0).astype(np.float32)

    if touched.any():
        raw_min, raw_max, raw_mean, raw_std = _stats_over(data[touched])
    else:
        raw_min = raw_max = raw_mean = raw_std = None
    return VibrationMap(
        data=data,
        touched=touched,
        normalized=False,
        raw_min=raw_min,
        raw_max=raw_max,
        raw_mean=raw_mean,
        raw_std=raw_std,
        taxel_pitch_mm=lanes[0].pitch_mm if lanes else 1.0,
    )


def normalize(m: VibrationMap) -> VibrationMap:
    """Min-max rescale of touched pixels to [0, 1]; untouched pixels stay 0.

    A constant map collapses to all-zero. Raw statistics ride along
    unchanged. Running this on already normalized data is the identity,
    since its touched extremes are exactly 0 and 1.
    """
    if not m.touched.any():
        return VibrationMap(
            data=m.data.copy(),
            touched=m.touched.copy(),
            normalized=True,
            raw_min=m.raw_min,
            raw_max=m.raw_max,
            raw_mean=m.raw_mean,
            raw_std=m.raw_std,
            taxel_pitch_mm=m.taxel_pitch_mm,
        )
    vals = m.data[m.touched].astype(np.float64)
    lo = float(vals.min())
    hi = float(vals.max())
    if hi > lo:
        scaled = (m.data.astype(np.float64) - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(m.data, dtype=np.float64)
    data = np.where(m.touched, scaled, 0.0).astype(np.float32)
    return VibrationMap(
        data=data,
        touched=m.touched.copy(),
        normalized=True,
        raw_min=m.raw_min,
        raw_max=m.raw_max,
        raw_mean=m.raw_mean,
        raw_std=m.raw_std,
        taxel_pitch_mm=m.taxel_pitch_mm,
    )


def map_stats(m: VibrationMap) -> tuple[float, float, float]:
    """(scale, mean, std) of the raw intensities: scale = max - min, population std."""
    if m.touched_count == 0 or m.raw_min is None:
        raise NoTouchedPixels("map has no touched pixels")
    return m.raw_max - m.raw_min, m.raw_mean, m.raw_std


def stats_csv_line(m: VibrationMap) -> str:
    scale, mean, std = map_stats(m)
    return f"{scale:.3f},{mean:.3f},{std:.3f}"


def write_map(m: VibrationMap, path) -> None:
    """Binary map file: magic, JSON header, float32 grid, packed touched mask."""
    header = {
        "width_px": m.width_px,
        "height_px": m.height_px,
        "taxel_pitch_mm": m.taxel_pitch_mm,
        "normalized": m.normalized,
        "raw_min": m.raw_min,
        "raw_max": m.raw_max,
        "raw_mean": m.raw_mean,
        "raw_std": m.raw_std,
        "touched_count": m.touched_count,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    grid = np.ascontiguousarray(m.data, dtype="<f4").tobytes()
    mask = np.packbits(m.touched.astype(np.uint8), axis=None).tobytes()
    with Path(path).open("wb") as f:
        f.write(MAP_MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(grid)
        f.write(mask)


def read_map(path) -> VibrationMap:
    raw = Path(path).read_bytes()
    if raw[: len(MAP_MAGIC)] != MAP_MAGIC:
        raise MalformedFile(f"{path}: bad magic")
    off = len(MAP_MAGIC)
    if len(raw) < off + 4:
        raise MalformedFile(f"{path}: truncated header length")
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    if len(raw) < off + hlen:
        raise MalformedFile(f"{path}: truncated header")
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedFile(f"{path}: unreadable header: {e}") from e
    off += hlen

    w = header["width_px"]
    h = header["height_px"]
    n = w * h
    grid_bytes = n * 4
    mask_bytes = (n + 7) // 8
    if len(raw) != off + grid_bytes + mask_bytes:
        raise MalformedFile(
            f"{path}: size mismatch (have {len(raw)}, want {off + grid_bytes + mask_bytes})"
        )
    data = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(h, w)
    if not np.all(np.isfinite(data)):
        raise MalformedFile(f"{path}: grid contains non-finite values")
    mask_arr = np.frombuffer(raw, dtype=np.uint8, offset=off + grid_bytes)
    touched = np.unpackbits(mask_arr, count=n).astype(bool).reshape(h, w)

    m = VibrationMap(
        data=data.copy(),
        touched=touched,
        normalized=header["normalized"],
        raw_min=header["raw_min"],
        raw_max=header["raw_max"],
        raw_mean=header["raw_mean"],
        raw_std=header["raw_std"],
        taxel_pitch_mm=header["taxel_pitch_mm"],
    )
    if m.touched_count != header["touched_count"]:
        raise MalformedFile(f"{path}: touched mask disagrees with header count")
    return m


def fill_untouched_rows(m: VibrationMap) -> np.ndarray:
    """Visualization helper: fill untouched pixels from the nearest touched
    pixel in the same row. Never feeds the server; previews only."""
    out = m.data.astype(np.float64).copy()
    for row in range(m.height_px):
        touched_idx = np.flatnonzero(m.touched[row])
        if len(touched_idx) == 0:
            continue
        cols = np.arange(m.width_px)
        nearest = touched_idx[np.argmin(np.abs(cols[:, None] - touched_idx[None, :]), axis=1)]
        out[row] = out[row][nearest]
    return out


def write_preview(m: VibrationMap, path, fill: bool = False) -> None:
    """8-bit grayscale PNG of the grid: value * 255, rounded half-up."""
    data = fill_untouched_rows(m) if fill else m.data.astype(np.float64)
    levels = np.floor(np.clip(data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(levels, mode="L").save(Path(path), format="PNG")


def read_preview(path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)
