"""Report artifacts: the metrics CSV, an aligned text summary, and the
matplotlib figures written next to them.

Numbers are serialized with repr() so a fixed seed reproduces the metrics
file byte for byte.
"""

from __future__ import annotations

import csv
from typing import Dict, Mapping, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scene import CLASSES


def fmt_value(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # repr round-trips, so reruns match byte for byte
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_metrics_csv(path, rows: Sequence[Tuple[str, object]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for key, value in rows:
            writer.writerow([key, fmt_value(value)])


def write_report_txt(path, title: str, sections: Sequence[Tuple[str, Sequence[Tuple[str, object]]]]) -> None:
    lines = [title, "=" * len(title), ""]
    for heading, rows in sections:
        lines.append(heading)
        lines.append("-" * len(heading))
        if rows:
            width = max(len(str(k)) for k, _ in rows)
            for key, value in rows:
                lines.append(f"{key:<{width}}  {fmt_value(value)}")
        else:
            lines.append("(empty)")
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def fig_trajectories(path, gt_rows, track_rows) -> None:
    """Ground-truth paths as lines, tracker output as points."""
    fig, ax = plt.subplots(figsize=(6, 6))
    by_subject: Dict[int, list] = {}
    for frame, sid, x, y, _carried in gt_rows:
        by_subject.setdefault(sid, []).append((frame, x, y))
    for sid, rows in sorted(by_subject.items()):
        rows.sort()
        xs = [r[1] for r in rows]
        ys = [r[2] for r in rows]
        ax.plot(xs, ys, lw=2, alpha=0.7, label=f"subject {sid}")
    by_track: Dict[int, list] = {}
    for frame, tid, x, y in track_rows:
        by_track.setdefault(tid, []).append((frame, x, y))
    for tid, rows in sorted(by_track.items()):
        rows.sort()
        xs = [r[1] for r in rows]
        ys = [r[2] for r in rows]
        ax.scatter(xs, ys, s=4, alpha=0.5, label=f"track {tid}")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title("Plane trajectories")
    ax.axis("equal")
    if by_subject or by_track:
        ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_fused_timeline(path, fused_rows, p_thr: float = 0.5) -> None:
    """Fused probability per (track, class) against the decision line."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    series: Dict[Tuple[int, str], list] = {}
    for frame, tid, cls, _p, p_hat, *_rest in fused_rows:
        series.setdefault((tid, cls), []).append((frame, p_hat))
    for (tid, cls), rows in sorted(series.items()):
        rows.sort()
        ax.plot([r[0] for r in rows], [r[1] for r in rows], lw=1.2, label=f"t{tid}/{cls}")
    ax.axhline(p_thr, color="k", ls="--", lw=0.8)
    ax.set_xlabel("frame")
    ax.set_ylabel("fused probability")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("Carried-object evidence over time")
    if series:
        ax.legend(fontsize=6, ncol=2, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_range_azimuth(path, cube) -> None:
    """Elevation-collapsed range-azimuth map in dB."""
    power = (np.asarray(cube.data, dtype=float) ** 2).sum(axis=2)
    db = 10.0 * np.log10(np.maximum(power, power.max() * 1e-12 + 1e-300))
    fig, ax = plt.subplots(figsize=(6, 5))
    mesh = ax.pcolormesh(
        cube.azimuth_axis_deg, cube.range_axis_m, db, shading="nearest", cmap="viridis"
    )
    fig.colorbar(mesh, ax=ax, label="power (dB)")
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("range (m)")
    ax.set_title("Range-azimuth map")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_sweep(path, sweep: Mapping[str, Sequence], title: str = "Decision quality vs tracking length") -> None:
    """Accuracy / FPR / miss-rate curves per fusion method."""
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.6), sharex=True)
    panels = (("accuracy", "accuracy"), ("fpr", "false positive rate"), ("miss_rate", "miss rate"))
    for ax, (attr, label) in zip(axes, panels):
        for method, rows in sorted(sweep.items()):
            xs = [r.length for r in rows]
            ys = [getattr(r, attr) for r in rows]
            ax.plot(xs, ys, marker="o", ms=3, label=method)
        ax.set_xlabel("tracking length (frames)")
        ax.set_ylabel(label)
        ax.set_ylim(-0.02, 1.02)
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_class_probabilities(path, pred_rows) -> None:
    """Raw per-frame class probabilities for every track."""
    fig, axes = plt.subplots(len(CLASSES), 1, figsize=(8, 6), sharex=True)
    by_cls: Dict[str, Dict[int, list]] = {c: {} for c in CLASSES}
    for frame, tid, p_laptop, p_phone, p_knife in pred_rows:
        ps = {"laptop": p_laptop, "phone": p_phone, "knife": p_knife}
        for c in CLASSES:
            by_cls[c].setdefault(tid, []).append((frame, ps[c]))
    for ax, c in zip(axes, CLASSES):
        for tid, rows in sorted(by_cls[c].items()):
            rows.sort()
            ax.plot([r[0] for r in rows], [r[1] for r in rows], lw=0.9, label=f"track {tid}")
        ax.set_ylabel(f"p({c})")
        ax.set_ylim(-0.02, 1.02)
        ax.axhline(0.5, color="k", ls="--", lw=0.6)
    axes[-1].set_xlabel("frame")
    handles, labels = axes[0].get_legend_handles_labels()
    if handles:
        axes[0].legend(fontsize=6, ncol=3, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
