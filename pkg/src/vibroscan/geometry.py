"""Planar camera geometry: calibration, world-to-pixel projection, rectification.

The scanned objects are treated as planar (Z = 0), so the full camera model
collapses to a single 3x3 homography between world millimetres on the object
plane and image pixels. Calibration recovers that homography from marked
point correspondences; the same matrix then projects taxel positions into
the image and drives perspective rectification of captured grids.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HOMOGENEOUS_EPS = 1e-12


class FewerThan8Points(ValueError):
    """Calibration needs at least 8 correspondences."""


class DegenerateConfiguration(ValueError):
    """Correspondences do not constrain the projection (rank-deficient system)."""


class PointAtInfinity(ValueError):
    """Projected homogeneous coordinate vanished; the point has no finite image."""


class NonConvexQuad(ValueError):
    """Source quad must be strictly convex."""


@dataclass(frozen=True)
class WorldPoint:
    """Point on the object plane, in millimetres (the plane's normal axis is 0)."""

    x_mm: float
    y_mm: float

    def __post_init__(self):
        if not (math.isfinite(self.x_mm) and math.isfinite(self.y_mm)):
            raise ValueError(f"world point must be finite, got ({self.x_mm}, {self.y_mm})")


@dataclass(frozen=True)
class PixelPoint:
    u_px: float
    v_px: float

    def __post_init__(self):
        if not (math.isfinite(self.u_px) and math.isfinite(self.v_px)):
            raise ValueError(f"pixel point must be finite, got ({self.u_px}, {self.v_px})")


@dataclass(frozen=True)
class Correspondence:
    world: WorldPoint
    pixel: PixelPoint


class CameraProjection:
    """3x3 homogeneous projection from plane millimetres to image pixels.

    The matrix is defined up to scale and stored normalized so that
    ``h[2, 2] == 1``. The per-point scale factor is carried by the
    homogeneous third coordinate and divided out on projection.
    """

    def __init__(self, h):
        h = np.asarray(h, dtype=np.float64)
        if h.shape != (3, 3):
            raise ValueError(f"projection matrix must be 3x3, got {h.shape}")
        if abs(h[2, 2]) < HOMOGENEOUS_EPS:
            raise DegenerateConfiguration("cannot normalize: h[2,2] is ~0")
        h = h / h[2, 2]
        if abs(np.linalg.det(h)) < HOMOGENEOUS_EPS:
            raise DegenerateConfiguration("projection matrix is singular")
        self.h = h
        self.h.setflags(write=False)

    def inverse(self) -> "CameraProjection":
        return CameraProjection(np.linalg.inv(self.h))

    def __repr__(self):
        return f"CameraProjection(h={self.h.tolist()!r})"


@dataclass(frozen=True)
class Quad:
    """Four pixel corners in order: top-left, top-right, bottom-right, bottom-left."""

    tl: PixelPoint
    tr: PixelPoint
    br: PixelPoint
    bl: PixelPoint

    def corners(self) -> np.ndarray:
        return np.array(
            [
                [self.tl.u_px, self.tl.v_px],
                [self.tr.u_px, self.tr.v_px],
                [self.br.u_px, self.br.v_px],
                [self.bl.u_px, self.bl.v_px],
            ],
            dtype=np.float64,
        )

    def is_convex(self) -> bool:
        """Strict convexity: all corner cross products share one sign."""
        c = self.corners()
        signs = []
        for i in range(4):
            a = c[(i + 1) % 4] - c[i]
            b = c[(i + 2) % 4] - c[(i + 1) % 4]
            signs.append(a[0] * b[1] - a[1] * b[0])
        return all(s > 0 for s in signs) or all(s < 0 for s in signs)


def _normalization_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity transform taking the centroid to the origin and the mean
    distance from it to sqrt(2). Conditions the linear system before solving."""
    centroid = pts.mean(axis=0)
    dists = np.linalg.norm(pts - centroid, axis=1)
    mean_dist = dists.mean()
    if mean_dist < 1e-12:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2.0) / mean_dist
    return np.array(
        [
            [s, 0.0, -s * centroid[0]],
            [0.0, s, -s * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def _apply_h(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    ph = np.column_stack([pts, np.ones(len(pts))]) @ h.T
    return ph[:, :2] / ph[:, 2:3]


def calibrate_planar(points: list[Correspondence]) -> tuple[CameraProjection, float]:
    """Least-squares planar projection from world/pixel correspondences.

    Solves the direct linear transform on normalized coordinates and returns
    the recovered projection together with its reprojection RMSE in pixels.

    Raises:
        FewerThan8Points: fewer than 8 correspondences supplied.
        DegenerateConfiguration: the points do not determine a projection
            (collinear/coincident layouts leave the system rank-deficient).
    """
    if len(points) < 8:
        raise FewerThan8Points(f"need at least 8 correspondences, got {len(points)}")

    world = np.array([[c.world.x_mm, c.world.y_mm] for c in points])
    pixel = np.array([[c.pixel.u_px, c.pixel.v_px] for c in points])

    t_world = _normalization_transform(world)
    t_pixel = _normalization_transform(pixel)
    wn = _apply_h(t_world, world)
    pn = _apply_h(t_pixel, pixel)

    a = np.zeros((2 * len(points), 9))
    for i, ((x, y), (u, v)) in enumerate(zip(wn, pn)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y, -u]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y, -v]

    if np.linalg.matrix_rank(a, tol=1e-9 * max(1.0, np.abs(a).max())) < 8:
        raise DegenerateConfiguration("design matrix rank < 8")

    _, _, vh = np.linalg.svd(a)
    hn = vh[-1].reshape(3, 3)
    h = np.linalg.inv(t_pixel) @ hn @ t_world

    proj = CameraProjection(h)
    reproj = _apply_h(proj.h, world)
    rmse = float(np.sqrt(np.mean(np.sum((reproj - pixel) ** 2, axis=1))))
    return proj, rmse


def project(proj: CameraProjection, p: WorldPoint) -> PixelPoint:
    """Dehomogenized image of a world point under the projection."""
    vec = proj.h @ np.array([p.x_mm, p.y_mm, 1.0])
    if abs(vec[2]) < HOMOGENEOUS_EPS:
        raise PointAtInfinity(f"({p.x_mm}, {p.y_mm}) maps to the line at infinity")
    return PixelPoint(vec[0] / vec[2], vec[1] / vec[2])


def _quad_homography(src: Quad, out_w: int, out_h: int) -> np.ndarray:
    """Homography taking the out_w x out_h rectangle corners onto src corners."""
    dst = np.array(
        [[0.0, 0.0], [out_w - 1.0, 0.0], [out_w - 1.0, out_h - 1.0], [0.0, out_h - 1.0]]
    )
    sc = src.corners()
    if np.array_equal(sc, dst):
        return np.eye(3)

    # 4 exact correspondences -> 8x8 linear system, h22 pinned to 1.
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(dst, sc)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        b[2 * i] = u
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i + 1] = v
    coeffs = np.linalg.solve(a, b)
    return np.append(coeffs, 1.0).reshape(3, 3)


def bilinear_sample(grid: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of grid[y, x] at float positions; 0 outside."""
    h, w = grid.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    out = np.zeros(xs.shape, dtype=np.float64)

    def corner(ix, iy, weight):
        valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        ixc = np.clip(ix, 0, w - 1)
        iyc = np.clip(iy, 0, h - 1)
        contrib = np.where(valid, grid[iyc, ixc], 0.0) * weight
        return contrib

    out += corner(x0, y0, (1 - fx) * (1 - fy))
    out += corner(x0 + 1, y0, fx * (1 - fy))
    out += corner(x0, y0 + 1, (1 - fx) * fy)
    out += corner(x0 + 1, y0 + 1, fx * fy)
    return out


def warp_perspective(grid, src: Quad, out_w: int, out_h: int) -> np.ndarray:
    """Resample a grid so that src's quad fills an out_w x out_h rectangle.

    Each output pixel is bilinearly sampled from the input at the position
    the rectangle-to-quad homography assigns it; samples falling outside the
    input grid read 0. The four output corners sample the src corners
    exactly, independent of solver rounding.
    """
    if out_w < 2 or out_h < 2:
        raise ValueError(f"output must be at least 2x2, got {out_w}x{out_h}")
    if not src.is_convex():
        raise NonConvexQuad("source corners do not form a strictly convex quad")

    grid = np.asarray(grid, dtype=np.float64)
    hq = _quad_homography(src, out_w, out_h)

    xs, ys = np.meshgrid(np.arange(out_w, dtype=np.float64), np.arange(out_h, dtype=np.float64))
    denom = hq[2, 0] * xs + hq[2, 1] * ys + hq[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (hq[0, 0] * xs + hq[0, 1] * ys + hq[0, 2]) / denom
        sy = (hq[1, 0] * xs + hq[1, 1] * ys + hq[1, 2]) / denom
    # pixels whose ray passes through infinity sample nothing
    bad = ~(np.isfinite(sx) & np.isfinite(sy))
    sx[bad] = -1.0e12
    sy[bad] = -1.0e12

    corners = src.corners()
    for (ox, oy), (cx, cy) in zip(
        [(0, 0), (out_w - 1, 0), (out_w - 1, out_h - 1), (0, out_h - 1)], corners
    ):
        sx[oy, ox] = cx
        sy[oy, ox] = cy

    return bilinear_sample(grid, sx, sy)


CORRESPONDENCE_HEADER = ["x_mm", "y_mm", "u_px", "v_px"]


def load_correspondences(path) -> list[Correspondence]:
    """Read a correspondence CSV (header x_mm,y_mm,u_px,v_px)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != CORRESPONDENCE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CORRESPONDENCE_HEADER)}")
        out = []
        for row in reader:
            if not row:
                continue
            x, y, u, v = (float(c) for c in row)
            out.append(Correspondence(WorldPoint(x, y), PixelPoint(u, v)))
    return out


def save_correspondences(points: list[Correspondence], path) -> None:
    path = Path(path)
    with path.open("w", newline="\n", encoding="utf-8") as f:
        f.write(",".join(CORRESPONDENCE_HEADER) + "\n")
        for c in points:
            f.write(
                f"{float(c.world.x_mm)!r},{float(c.world.y_mm)!r},"
                f"{float(c.pixel.u_px)!r},{float(c.pixel.v_px)!r}\n"
            )
