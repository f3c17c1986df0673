"""Frame-by-frame multi-object tracking of boxes with a constant-velocity
Kalman filter, IoU gating and minimum-cost assignment.

Boxes are (center u, center v, width w, length l). The same machinery tracks
camera boxes in pixels and nominal-size boxes around radar centroids in
metres; only the noise scales differ (see TrackerConfig).
"""

from __future__ import annotations

import dataclasses
import itertools
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

Box = Tuple[float, float, float, float]

SENTINEL_COST = 1e6  # pads rectangular cost matrices to square


@dataclasses.dataclass(frozen=True)
class Detection:
    box: Box
    confidence: float = 1.0


@dataclasses.dataclass(frozen=True)
class TrackerConfig:
    birth_frames: int = 20  # consecutive matches before a tracklet turns active
    death_frames: int = 40  # consecutive misses before any tracklet dies
    iou_gate: float = 0.3
    nms_overlap: float = 0.7
    process_noise_pos: float = 1.0  # px^2 (or m^2 for radar-plane tracking)
    process_noise_vel: float = 0.25
    measurement_noise: float = 4.0
    initial_pos_var: float = 10.0
    initial_vel_var: float = 100.0
    min_extent: float = 1.0  # w, l clamped to at least this after update


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two center-format boxes."""
    ax1, ay1 = a[0] - a[2] / 2, a[1] - a[3] / 2
    ax2, ay2 = a[0] + a[2] / 2, a[1] + a[3] / 2
    bx1, by1 = b[0] - b[2] / 2, b[1] - b[3] / 2
    bx2, by2 = b[0] + b[2] / 2, b[1] + b[3] / 2
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return float(inter / union) if union > 0 else 0.0


def filter_detections(detections: Sequence[Detection], overlap_threshold: float = 0.7) -> List[Detection]:
    """Greedy non-maximum suppression by descending confidence.

    A box is dropped when it overlaps an already kept box beyond the
    threshold; later boxes are only compared against kept ones.
    """
    ordered = sorted(detections, key=lambda d: -d.confidence)
    kept: List[Detection] = []
    for det in ordered:
        if all(iou(det.box, k.box) <= overlap_threshold for k in kept):
            kept.append(det)
    return kept


def jv_assign(cost: np.ndarray) -> List[Tuple[int, int]]:
    """Minimum-total-cost one-to-one assignment on a rectangular matrix.

    Backed by scipy's solver; callers pad placeholder rows/columns with a
    large finite sentinel. Costs must be finite.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise ValueError("assignment costs must be finite")
    rows, cols = linear_sum_assignment(cost)
    return list(zip(rows.tolist(), cols.tolist()))


# Constant-velocity state transition and measurement matrices for the
# 6-state box model (u, v, w, l, du, dv).
_F = np.eye(6)
_F[0, 4] = 1.0
_F[1, 5] = 1.0
_H = np.eye(4, 6)


class Tracklet:
    """One tracked box with Kalman state and lifecycle counters."""

    def __init__(self, tracklet_id: int, det: Detection, cfg: TrackerConfig):
        self.id = tracklet_id
        self.cfg = cfg
        self.mean = np.array([*det.box, 0.0, 0.0], dtype=float)
        self.cov = np.diag(
            [cfg.initial_pos_var] * 4 + [cfg.initial_vel_var] * 2
        ).astype(float)
        self.status = "tentative"
        self.consecutive_hits = 1  # the seeding detection counts
        self.consecutive_misses = 0
        self.confidence = det.confidence
        self._q = np.diag([cfg.process_noise_pos] * 4 + [cfg.process_noise_vel] * 2)
        self._r = np.eye(4) * cfg.measurement_noise

    @property
    def box(self) -> Box:
        return tuple(self.mean[:4])

    def predict(self) -> Box:
        """Advance one frame under the constant-velocity model."""
        self.mean = _F @ self.mean
        self.cov = _F @ self.cov @ _F.T + self._q
        return self.box

    def update(self, det: Detection) -> None:
        innovation = np.asarray(det.box) - _H @ self.mean
        s = _H @ self.cov @ _H.T + self._r
        gain = self.cov @ _H.T @ np.linalg.inv(s)
        self.mean = self.mean + gain @ innovation
        self.cov = (np.eye(6) - gain @ _H) @ self.cov
        self.mean[2] = max(self.mean[2], self.cfg.min_extent)
        self.mean[3] = max(self.mean[3], self.cfg.min_extent)
        self.confidence = det.confidence

    def mark_hit(self, det: Detection) -> None:
        self.update(det)
        self.consecutive_hits += 1
        self.consecutive_misses = 0
        if self.status == "tentative" and self.consecutive_hits >= self.cfg.birth_frames:
            self.status = "active"

    def mark_miss(self) -> None:
        self.consecutive_misses += 1
        self.consecutive_hits = 0
        if self.consecutive_misses >= self.cfg.death_frames:
            self.status = "dead"


class Tracker:
    """Associates detections to tracklets frame by frame. Ids never recur."""

    def __init__(self, cfg: Optional[TrackerConfig] = None):
        self.cfg = cfg or TrackerConfig()
        self.tracklets: List[Tracklet] = []
        self._ids = itertools.count(1)

    def step(self, detections: Sequence[Detection]) -> List[Tracklet]:
        """One frame: predict, suppress, assign, update lifecycles.

        Returns the alive tracklets (tentative ones included; downstream
        consumers filter on status == "active").
        """
        cfg = self.cfg
        dets = filter_detections(detections, cfg.nms_overlap)
        predicted = [t.predict() for t in self.tracklets]

        n_t, n_d = len(self.tracklets), len(dets)
        matched_t: Dict[int, int] = {}
        if n_t and n_d:
            side = max(n_t, n_d)
            cost = np.full((side, side), SENTINEL_COST)
            for i, pbox in enumerate(predicted):
                for j, det in enumerate(dets):
                    cost[i, j] = 1.0 - iou(pbox, det.box)
            for i, j in jv_assign(cost):
                if i >= n_t or j >= n_d:
                    continue  # sentinel padding
                if iou(predicted[i], dets[j].box) < cfg.iou_gate:
                    continue
                matched_t[i] = j

        for i, tracklet in enumerate(self.tracklets):
            if i in matched_t:
                tracklet.mark_hit(dets[matched_t[i]])
            else:
                tracklet.mark_miss()

        unmatched_dets = [j for j in range(n_d) if j not in matched_t.values()]
        for j in unmatched_dets:
            self.tracklets.append(Tracklet(next(self._ids), dets[j], cfg))

        self.tracklets = [t for t in self.tracklets if t.status != "dead"]
        return list(self.tracklets)

    def active(self) -> List[Tracklet]:
        return [t for t in self.tracklets if t.status == "active"]
