"""Constant-false-alarm-rate detection on range-azimuth power maps.

The detector is cell-averaging CFAR with a per-cell threshold scale
alpha = N * (pfa**(-1/N) - 1), which is exact for exponentially
distributed power cells. Training windows truncate at the map edges and N
follows the truncated count, so edge cells keep the design false-alarm
rate. Feed power (squared magnitude), not magnitude: the scale is
calibrated for the exponential tail.
"""

from __future__ import annotations

import dataclasses
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np


def _integral(m: np.ndarray) -> np.ndarray:
    out = np.zeros((m.shape[0] + 1, m.shape[1] + 1))
    out[1:, 1:] = np.cumsum(np.cumsum(m, axis=0), axis=1)
    return out


def _box_sum(integral: np.ndarray, half_r: int, half_c: int, shape) -> Tuple[np.ndarray, np.ndarray]:
    """Sum and cell count of the (2*half_r+1) x (2*half_c+1) box around every
    cell, truncated at the edges."""
    rows, cols = shape
    r = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    r0 = np.clip(r - half_r, 0, rows - 1)
    r1 = np.clip(r + half_r, 0, rows - 1)
    c0 = np.clip(c - half_c, 0, cols - 1)
    c1 = np.clip(c + half_c, 0, cols - 1)
    s = (
        integral[r1 + 1, c1 + 1]
        - integral[r0, c1 + 1]
        - integral[r1 + 1, c0]
        + integral[r0, c0]
    )
    count = (r1 - r0 + 1) * (c1 - c0 + 1)
    return s, count


@dataclasses.dataclass(frozen=True)
class DetectionPoint:
    """One cell that beat its CFAR threshold.

    range_m and azimuth_deg fall back to bin indices when the caller gives
    no axes; row/col always carry the cell position.
    """

    range_m: float
    azimuth_deg: float
    magnitude: float
    row: int
    col: int


def cfar_mask(
    power_map: np.ndarray,
    guard: Tuple[int, int] = (2, 2),
    train: Tuple[int, int] = (8, 8),
    pfa: float = 1e-3,
) -> np.ndarray:
    """Boolean detection mask for a 2D power map."""
    power_map = np.asarray(power_map, dtype=float)
    if power_map.ndim != 2:
        raise ValueError("power map must be 2D")
    if not 0.0 < pfa < 1.0:
        raise ValueError("pfa must be in (0, 1)")
    if np.any(power_map < 0):
        raise ValueError("power map must be non-negative")
    gr, gc = guard
    tr, tc = train
    if min(gr, gc, tr, tc) < 1:
        raise ValueError("guard and training cells must be >= 1")
    need = (2 * (gr + tr) + 1, 2 * (gc + tc) + 1)
    if power_map.shape[0] < need[0] or power_map.shape[1] < need[1]:
        raise ValueError(
            f"power map {power_map.shape} too small for CFAR window {need}"
        )
    integral = _integral(power_map)
    outer_sum, outer_n = _box_sum(integral, gr + tr, gc + tc, power_map.shape)
    inner_sum, inner_n = _box_sum(integral, gr, gc, power_map.shape)
    train_sum = outer_sum - inner_sum
    train_n = outer_n - inner_n
    alpha = train_n * (pfa ** (-1.0 / train_n) - 1.0)
    return power_map > alpha * train_sum / train_n


def ca_cfar_2d(
    power_map: np.ndarray,
    guard: Tuple[int, int] = (2, 2),
    train: Tuple[int, int] = (8, 8),
    pfa: float = 1e-3,
    range_axis_m: Optional[np.ndarray] = None,
    azimuth_axis_deg: Optional[np.ndarray] = None,
) -> List[DetectionPoint]:
    """Detect cells on a range x azimuth power map.

    Returns one DetectionPoint per cell above threshold, strongest first.
    Axes map rows to metres and columns to degrees; without them the
    coordinates are plain bin indices.
    """
    power_map = np.asarray(power_map, dtype=float)
    mask = cfar_mask(power_map, guard=guard, train=train, pfa=pfa)
    if range_axis_m is not None and len(range_axis_m) != power_map.shape[0]:
        raise ValueError("range axis does not match map rows")
    if azimuth_axis_deg is not None and len(azimuth_axis_deg) != power_map.shape[1]:
        raise ValueError("azimuth axis does not match map columns")
    points: List[DetectionPoint] = []
    for row, col in np.argwhere(mask):
        r = float(range_axis_m[row]) if range_axis_m is not None else float(row)
        a = float(azimuth_axis_deg[col]) if azimuth_axis_deg is not None else float(col)
        points.append(
            DetectionPoint(
                range_m=r,
                azimuth_deg=a,
                magnitude=float(power_map[row, col]),
                row=int(row),
                col=int(col),
            )
        )
    points.sort(key=lambda p: -p.magnitude)
    return points


def nonstatic_filter(
    power_map: np.ndarray,
    previous: Optional[np.ndarray],
    threshold_db: float = 3.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Zero out cells whose power barely changed since the previous frame.

    A cell survives when |dB(now) - dB(previous)| >= threshold_db, so
    stationary reflectors (walls, furniture, a subject standing still)
    vanish while anything moving through range or azimuth bins stays.
    Returns (filtered map, reference) where the reference is the raw map
    to hand back on the next call. The first call (previous None)
    suppresses everything, a one-frame warmup.
    """
    power_map = np.asarray(power_map, dtype=float)
    if threshold_db <= 0.0:
        raise ValueError("threshold_db must be positive")
    if previous is None:
        return np.zeros_like(power_map), power_map.copy()
    previous = np.asarray(previous, dtype=float)
    if previous.shape != power_map.shape:
        raise ValueError("previous map shape does not match power map")
    # floor keeps log10 finite; a zero->signal transition still clears 3 dB
    tiny = 1e-300
    delta_db = 10.0 * np.abs(
        np.log10(np.maximum(power_map, tiny)) - np.log10(np.maximum(previous, tiny))
    )
    keep = delta_db >= threshold_db
    return np.where(keep, power_map, 0.0), power_map.copy()


@dataclasses.dataclass(frozen=True)
class Cluster:
    range_m: float
    azimuth_deg: float
    x_m: float
    y_m: float
    magnitude: float
    n_points: int


def cluster(
    points: Sequence[DetectionPoint],
    radius: Tuple[float, float] = (0.3, 4.0),
    min_points: int = 2,
) -> List[Cluster]:
    """Group detection points by single linkage and reduce each group to a
    magnitude-weighted centroid.

    Two points link when (dr/radius_r)^2 + (da/radius_a)^2 <= 1 with dr in
    metres and da in degrees. Groups smaller than min_points are dropped
    as isolated spikes. Clusters come back strongest first.
    """
    rr, ra = radius
    if rr <= 0 or ra <= 0:
        raise ValueError("cluster radius must be positive")
    if min_points < 1:
        raise ValueError("min_points must be at least 1")
    n = len(points)
    if n == 0:
        return []

    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri

    for i in range(n):
        for j in range(i + 1, n):
            dr = (points[i].range_m - points[j].range_m) / rr
            da = (points[i].azimuth_deg - points[j].azimuth_deg) / ra
            if dr * dr + da * da <= 1.0:
                union(i, j)

    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)

    out: List[Cluster] = []
    for members in groups.values():
        if len(members) < min_points:
            continue
        w = np.array([points[i].magnitude for i in members])
        total = float(w.sum())
        if total <= 0:
            continue
        r = float(np.dot(w, [points[i].range_m for i in members]) / total)
        a = float(np.dot(w, [points[i].azimuth_deg for i in members]) / total)
        out.append(
            Cluster(
                range_m=r,
                azimuth_deg=a,
                x_m=r * math.sin(math.radians(a)),
                y_m=r * math.cos(math.radians(a)),
                magnitude=total,
                n_points=len(members),
            )
        )
    out.sort(key=lambda c: -c.magnitude)
    return out
