"""Camera-to-radar-plane calibration and subject localization.

A planar homography maps image pixels to ground-plane metres. It is fit with
the direct linear transform on normalized coordinates and refined online by
snapping projected subject centers to the strongest nearby radar peak.
"""

from __future__ import annotations

import dataclasses
from typing import List, Optional, Sequence, Tuple

import numpy as np

from carryscan.imaging import RadarCube3D


@dataclasses.dataclass(frozen=True)
class OccupancyRegion:
    center_x_m: float
    center_y_m: float
    width_m: float
    length_m: float


@dataclasses.dataclass
class OffsetState:
    """Running mean of (snapped - projected) center offsets, metres."""

    window: int = 50
    samples: Tuple[Tuple[float, float], ...] = ()

    def mean(self) -> Tuple[float, float]:
        if not self.samples:
            return (0.0, 0.0)
        arr = np.asarray(self.samples)
        return (float(arr[:, 0].mean()), float(arr[:, 1].mean()))

    def updated(self, dx: float, dy: float) -> "OffsetState":
        samples = (self.samples + ((dx, dy),))[-self.window :]
        return OffsetState(window=self.window, samples=samples)


def _normalization(points: np.ndarray) -> np.ndarray:
    """Similarity transform taking points to centroid 0, mean distance sqrt(2)."""
    centroid = points.mean(axis=0)
    dist = np.sqrt(((points - centroid) ** 2).sum(axis=1)).mean()
    scale = np.sqrt(2.0) / dist if dist > 0 else 1.0
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def _canonical(h: np.ndarray) -> np.ndarray:
    h = h / np.linalg.norm(h)
    if h[2, 2] < 0:
        h = -h
    return h


def estimate_homography(
    image_points: Sequence[Tuple[float, float]],
    plane_points: Sequence[Tuple[float, float]],
) -> np.ndarray:
    """DLT fit of the 3x3 map taking image pixels (u, v) to plane metres (x, y).

    Requires at least 4 correspondences and a non-degenerate configuration.
    The result has unit Frobenius norm and a non-negative bottom-right entry.
    """
    src = np.asarray(image_points, dtype=float).reshape(-1, 2)
    dst = np.asarray(plane_points, dtype=float).reshape(-1, 2)
    if src.shape != dst.shape:
        raise ValueError("point lists must have equal length")
    n = src.shape[0]
    if n < 4:
        raise ValueError(f"insufficient correspondences: need at least 4, got {n}")
    t_src = _normalization(src)
    t_dst = _normalization(dst)
    sn = (t_src @ np.column_stack((src, np.ones(n))).T).T
    dn = (t_dst @ np.column_stack((dst, np.ones(n))).T).T
    a = np.zeros((2 * n, 9))
    for i in range(n):
        u, v = sn[i, 0], sn[i, 1]
        x, y = dn[i, 0], dn[i, 1]
        a[2 * i] = [u, v, 1, 0, 0, 0, -x * u, -x * v, -x]
        a[2 * i + 1] = [0, 0, 0, u, v, 1, -y * u, -y * v, -y]
    _, s, vt = np.linalg.svd(a)
    # Rank below 8 means the solution is not unique (e.g. collinear points).
    if s[7] < 1e-8 * s[0]:
        raise ValueError("degenerate point configuration for homography")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_norm @ t_src
    return _canonical(h)


def project(h: np.ndarray, point_uv: Tuple[float, float]) -> Tuple[float, float]:
    """Apply the homography to one pixel and dehomogenize."""
    vec = h @ np.array([point_uv[0], point_uv[1], 1.0])
    if abs(vec[2]) < 1e-12 * max(1.0, abs(vec[0]), abs(vec[1])):
        raise ValueError("projected point at infinity")
    return (float(vec[0] / vec[2]), float(vec[1] / vec[2]))


def occupancy_region(
    h: np.ndarray,
    box: Tuple[float, float, float, float],
    length_m: float = 1.0,
) -> OccupancyRegion:
    """Ground-plane footprint of a camera box (u, v, w, l), v axis downward.

    The center is the projected bottom-center pixel; the width spans the
    projected bottom vertices; the length along range is predefined.
    """
    u, v, w, l = box
    bottom = v + l / 2.0
    cx, cy = project(h, (u, bottom))
    x1, _ = project(h, (u - w / 2.0, bottom))
    x2, _ = project(h, (u + w / 2.0, bottom))
    return OccupancyRegion(
        center_x_m=cx, center_y_m=cy, width_m=abs(x1 - x2), length_m=length_m
    )


def region_polar(region: OccupancyRegion) -> Tuple[float, float]:
    """(range m, azimuth deg) of a region center; boresight is +y."""
    r = float(np.hypot(region.center_x_m, region.center_y_m))
    az = float(np.degrees(np.arctan2(region.center_x_m, region.center_y_m)))
    return r, az


def refine_center(
    region: OccupancyRegion,
    cube: RadarCube3D,
    state: Optional[OffsetState] = None,
    range_tolerance_m: float = 0.5,
    azimuth_tolerance_deg: float = 2.0,
    floor_factor: float = 5.0,
) -> Tuple[OccupancyRegion, OffsetState]:
    """Snap a projected region center to the strongest nearby radar peak.

    `region` must carry the raw homography projection: the running-mean
    offset is applied here, and each offset sample is measured against the
    raw projection, so a constant projection bias is learned exactly.
    Passes the region through unchanged when the search window is empty or
    holds no peak above the noise floor.
    """
    if state is None:
        state = OffsetState()
    off_x, off_y = state.mean()
    guess_x = region.center_x_m + off_x
    guess_y = region.center_y_m + off_y
    r0 = float(np.hypot(guess_x, guess_y))
    a0 = float(np.degrees(np.arctan2(guess_x, guess_y)))

    r_mask = np.abs(cube.range_axis_m - r0) <= range_tolerance_m
    a_mask = np.abs(cube.azimuth_axis_deg - a0) <= azimuth_tolerance_deg
    if not r_mask.any() or not a_mask.any():
        return region, state
    window = cube.data[np.ix_(r_mask, a_mask)].sum(axis=2)
    floor = floor_factor * np.median(cube.data.sum(axis=2))
    if window.max() <= floor:
        return region, state
    ri, ai = np.unravel_index(int(np.argmax(window)), window.shape)
    r_peak = cube.range_axis_m[np.flatnonzero(r_mask)[ri]]
    a_peak = np.radians(cube.azimuth_axis_deg[np.flatnonzero(a_mask)[ai]])
    snapped_x = float(r_peak * np.sin(a_peak))
    snapped_y = float(r_peak * np.cos(a_peak))
    state = state.updated(snapped_x - region.center_x_m, snapped_y - region.center_y_m)
    refined = OccupancyRegion(
        center_x_m=snapped_x,
        center_y_m=snapped_y,
        width_m=region.width_m,
        length_m=region.length_m,
    )
    return refined, state


def load_correspondences(path: str) -> Tuple[List[Tuple[float, float]], List[Tuple[float, float]]]:
    """Read calibration points from a text file of 'u v x y' lines."""
    image_points: List[Tuple[float, float]] = []
    plane_points: List[Tuple[float, float]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'u v x y', got {line!r}")
            u, v, x, y = (float(p) for p in parts)
            image_points.append((u, v))
            plane_points.append((x, y))
    return image_points, plane_points


def leave_one_out_errors(
    image_points: Sequence[Tuple[float, float]],
    plane_points: Sequence[Tuple[float, float]],
) -> np.ndarray:
    """Projection error of each held-out point under a fit to the rest.

    A rejected fit (degenerate subset, point at infinity) yields NaN for
    that position rather than aborting the whole cross-validation.
    """
    n = len(image_points)
    errors = np.zeros(n)
    for i in range(n):
        keep = [j for j in range(n) if j != i]
        try:
            h = estimate_homography(
                [image_points[j] for j in keep], [plane_points[j] for j in keep]
            )
            px, py = project(h, image_points[i])
        except ValueError:
            errors[i] = np.nan
            continue
        errors[i] = np.hypot(px - plane_points[i][0], py - plane_points[i][1])
    return errors


def plane_to_image_homography(
    focal_px: float,
    principal_point: Tuple[float, float],
    height_m: float,
    tilt_deg: float,
) -> np.ndarray:
    """Ground-plane-to-pixel map of an ideal pinhole camera.

    The camera sits at height `height_m` over the plane origin, looks along
    +y and is tilted down by `tilt_deg`. Inverting the result gives the
    pixel-to-plane homography that estimate_homography recovers.
    """
    theta = np.radians(tilt_deg)
    s, c = np.sin(theta), np.cos(theta)
    k = np.array(
        [
            [focal_px, 0.0, principal_point[0]],
            [0.0, focal_px, principal_point[1]],
            [0.0, 0.0, 1.0],
        ]
    )
    extrinsic = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, -s, height_m * c],
            [0.0, c, height_m * s],
        ]
    )
    return k @ extrinsic
