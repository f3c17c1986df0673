"""Detection and tracking metrics.

Rates with an empty denominator are reported as None rather than zero: a
run with no negative samples has no false-positive rate, and collapsing
that to 0.0 would fabricate a perfect score.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .fusion import FusionConfig, fuse_stream, res_vote


@dataclasses.dataclass(frozen=True)
class DetectionMetrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def fpr(self) -> Optional[float]:
        n = self.fp + self.tn
        return self.fp / n if n else None

    @property
    def miss_rate(self) -> Optional[float]:
        n = self.fn + self.tp
        return self.fn / n if n else None

    @property
    def accuracy(self) -> Optional[float]:
        n = self.tp + self.fp + self.tn + self.fn
        return (self.tp + self.tn) / n if n else None


def confusion_counts(predicted: Sequence[bool], actual: Sequence[bool]) -> DetectionMetrics:
    if len(predicted) != len(actual):
        raise ValueError("prediction and truth sequences must align")
    tp = fp = tn = fn = 0
    for p, a in zip(predicted, actual):
        if p and a:
            tp += 1
        elif p and not a:
            fp += 1
        elif not p and a:
            fn += 1
        else:
            tn += 1
    return DetectionMetrics(tp=tp, fp=fp, tn=tn, fn=fn)


def macro_average(per_class: Mapping[str, DetectionMetrics]) -> Dict[str, Optional[float]]:
    """Unweighted mean of each rate over the classes where it is defined."""
    out: Dict[str, Optional[float]] = {}
    for name in ("fpr", "miss_rate", "accuracy"):
        vals = [getattr(m, name) for m in per_class.values()]
        vals = [v for v in vals if v is not None]
        out[name] = float(np.mean(vals)) if vals else None
    return out


@dataclasses.dataclass(frozen=True)
class ClassifierReport:
    per_class: Dict[str, DetectionMetrics]
    macro: Dict[str, Optional[float]]


def detection_metrics(
    decisions: Mapping[str, Sequence[bool]],
    truths: Mapping[str, Sequence[bool]],
) -> ClassifierReport:
    """Score carried/not-carried decisions per object class.

    Both mappings go class name -> aligned decision sequence. Returns the
    per-class confusion metrics plus their unweighted macro average.
    """
    if set(decisions) != set(truths):
        raise ValueError("decision and truth classes must match")
    if not decisions:
        raise ValueError("no classes to score")
    per_class = {c: confusion_counts(decisions[c], truths[c]) for c in sorted(decisions)}
    return ClassifierReport(per_class=per_class, macro=macro_average(per_class))


# Track / ground-truth instances are (frame, id, x, y) rows.
Instance = Tuple[int, int, float, float]


@dataclasses.dataclass(frozen=True)
class TrackingMetrics:
    matched: int
    false_instances: int
    missed_instances: int

    @property
    def fpr(self) -> Optional[float]:
        n = self.matched + self.false_instances
        return self.false_instances / n if n else None

    @property
    def miss_rate(self) -> Optional[float]:
        n = self.matched + self.missed_instances
        return self.missed_instances / n if n else None


def _greedy_match(tracks, truths, max_distance_m):
    """Greedy nearest-pair matching within one frame; returns index pairs."""
    if not tracks or not truths:
        return []
    ta = np.asarray([(x, y) for _, _, x, y in tracks])
    ga = np.asarray([(x, y) for _, _, x, y in truths])
    dist = np.hypot(ta[:, 0:1] - ga[None, :, 0], ta[:, 1:2] - ga[None, :, 1])
    pairs = []
    used_t: set = set()
    used_g: set = set()
    order = np.argsort(dist, axis=None)
    for flat in order:
        i, j = divmod(int(flat), dist.shape[1])
        if dist[i, j] > max_distance_m:
            break
        if i in used_t or j in used_g:
            continue
        used_t.add(i)
        used_g.add(j)
        pairs.append((i, j))
    return pairs


def tracking_metrics(
    tracks: Sequence[Instance],
    truths: Sequence[Instance],
    max_distance_m: float = 0.5,
    mode: str = "frame",
    coverage: float = 0.5,
) -> TrackingMetrics:
    """Screen tracklet output against ground truth.

    mode="frame" counts instances: a track instance with no truth within
    max_distance_m is false, a truth instance with no track nearby is
    missed. mode="trajectory" aggregates per id: a track id is false when
    fewer than `coverage` of its instances matched, a truth id is missed
    under the same rule.
    """
    if mode not in ("frame", "trajectory"):
        raise ValueError(f"unknown mode {mode!r}")
    frames = sorted({f for f, _, _, _ in tracks} | {f for f, _, _, _ in truths})
    t_matched: Dict[int, int] = {}
    t_total: Dict[int, int] = {}
    g_matched: Dict[int, int] = {}
    g_total: Dict[int, int] = {}
    inst_matched = inst_false = inst_missed = 0
    for f in frames:
        tf = [t for t in tracks if t[0] == f]
        gf = [g for g in truths if g[0] == f]
        pairs = _greedy_match(tf, gf, max_distance_m)
        hit_t = {i for i, _ in pairs}
        hit_g = {j for _, j in pairs}
        inst_matched += len(pairs)
        inst_false += len(tf) - len(hit_t)
        inst_missed += len(gf) - len(hit_g)
        for i, t in enumerate(tf):
            t_total[t[1]] = t_total.get(t[1], 0) + 1
            if i in hit_t:
                t_matched[t[1]] = t_matched.get(t[1], 0) + 1
        for j, g in enumerate(gf):
            g_total[g[1]] = g_total.get(g[1], 0) + 1
            if j in hit_g:
                g_matched[g[1]] = g_matched.get(g[1], 0) + 1
    if mode == "frame":
        return TrackingMetrics(inst_matched, inst_false, inst_missed)
    good_tracks = sum(
        1 for tid, n in t_total.items() if t_matched.get(tid, 0) >= coverage * n
    )
    good_truths = sum(
        1 for gid, n in g_total.items() if g_matched.get(gid, 0) >= coverage * n
    )
    return TrackingMetrics(
        matched=good_tracks,
        false_instances=len(t_total) - good_tracks,
        missed_instances=len(g_total) - good_truths,
    )


@dataclasses.dataclass(frozen=True)
class StreamRecord:
    """One (tracklet, class) probability stream with its true label."""

    probabilities: Tuple[float, ...]
    ranges: Tuple[float, ...]
    label: bool

    def __post_init__(self):
        if len(self.probabilities) != len(self.ranges):
            raise ValueError("probability and range streams must align")
        if not self.probabilities:
            raise ValueError("empty stream")


def decide_stream(
    record: StreamRecord,
    length: int,
    method: str = "knwltrf",
    cfg: Optional[FusionConfig] = None,
) -> bool:
    """Carried/not-carried decision after observing the first `length` frames."""
    cfg = cfg or FusionConfig()
    n = min(length, len(record.probabilities))
    ps = record.probabilities[:n]
    rs = record.ranges[:n]
    if method == "knwltrf":
        fused = fuse_stream(ps, rs, cfg)
        return bool(fused[-1] > cfg.p_thr)
    if method == "vote":
        decisions = [p > cfg.p_thr for p in ps]
        return res_vote(decisions, window=cfg.vote_window)
    raise ValueError(f"unknown fusion method {method!r}")


def metrics_at_length(
    records: Sequence[StreamRecord],
    length: int,
    method: str = "knwltrf",
    cfg: Optional[FusionConfig] = None,
) -> DetectionMetrics:
    if not records:
        raise ValueError("no streams to score")
    if length < 1:
        raise ValueError("tracking length must be at least 1")
    decisions = [decide_stream(r, length, method, cfg) for r in records]
    return confusion_counts(decisions, [r.label for r in records])


def accuracy_at_length(
    records: Sequence[StreamRecord],
    length: int,
    method: str = "knwltrf",
    cfg: Optional[FusionConfig] = None,
) -> float:
    acc = metrics_at_length(records, length, method, cfg).accuracy
    assert acc is not None  # records is non-empty
    return acc


@dataclasses.dataclass(frozen=True)
class SweepRow:
    length: int
    fpr: Optional[float]
    miss_rate: Optional[float]
    accuracy: float


def length_sweep(
    records: Sequence[StreamRecord],
    lengths: Sequence[int],
    methods: Sequence[str] = ("knwltrf", "vote"),
    cfg: Optional[FusionConfig] = None,
) -> Dict[str, Tuple[SweepRow, ...]]:
    """False-positive rate, miss rate, and accuracy as a function of the
    observed tracking length, one row per requested length in the order
    given."""
    out: Dict[str, Tuple[SweepRow, ...]] = {}
    for m in methods:
        rows = []
        for n in lengths:
            dm = metrics_at_length(records, n, m, cfg)
            assert dm.accuracy is not None
            rows.append(SweepRow(length=n, fpr=dm.fpr, miss_rate=dm.miss_rate, accuracy=dm.accuracy))
        out[m] = tuple(rows)
    return out
