"""End-to-end orchestration: simulate, image, track, classify, fuse, evaluate.

The pipeline runs in one pass (`run`) or stage by stage from dumped
intermediates; both routes share the same per-stage cores, and numbers cross
the CSV boundary via repr() round-trips, so a stage-wise rerun reproduces the
end-to-end outputs byte for byte. The in-memory path quantizes images to
float32 at the same point the dump format does.

Every random draw descends from the scenario seed: the simulator derives its
per-frame streams internally and the probability oracle keys its draws on
(seed, frame, subject, class).
"""

from __future__ import annotations

import contextlib
import dataclasses
import csv
import math
from collections import Counter
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import report
from .calib import (
    OccupancyRegion,
    OffsetState,
    estimate_homography,
    leave_one_out_errors,
    load_correspondences,
    occupancy_region,
    plane_to_image_homography,
    refine_center,
    region_polar,
)
from .cfar import ca_cfar_2d, cluster, nonstatic_filter
from .classify import OracleParams, energy_template_predict, oracle_predict
from .config import RadarConfig, derive_specs, load_config
from .cubeio import read_cube, write_cube
from .fusion import FusionConfig, KnwlTrfState, knwltrf_step, res_vote
from .imaging import RadarCube3D, crop_and_pad, form_virtual_array, image_3d, image_axes, range_compensate
from .metrics import StreamRecord, TrackingMetrics, decide_stream, detection_metrics, tracking_metrics
from .scene import CLASSES, Scenario, ground_truth, load_scenario, synth_camera_detections, synth_if_frame
from .tracker import Detection, Tracker, TrackerConfig

TRUE_HOMOGRAPHY = "use-true-homography"
CLASSIFIERS = ("energy", "oracle")
FUSION_METHODS = ("knwltrf", "vote", "single")

GT_MATCH_RADIUS_M = 0.75  # track-to-truth association for labels and the oracle
FALSE_TRACK_SUBJECT = 100000  # oracle stream key offset for unmatched tracks

GT_CSV = "gt.csv"
DETS_CSV = "camera_dets.csv"
TRACKS_CSV = "tracks.csv"
PRED_CSV = "predictions.csv"
FUSED_CSV = "fused.csv"
METRICS_CSV = "metrics.csv"
REPORT_TXT = "report.txt"
SWEEP_CSV = "sweep.csv"
HOMOGRAPHY_CSV = "homography.csv"
CALIB_ERRORS_CSV = "calib_errors.csv"
CUBES_DIR = "cubes"
IMAGES_DIR = "images"
FRAME_FMT = "frame_{:05d}.cube"

# Radar-plane tracking constants (metres, not pixels): quick birth/death since
# CFAR detections flicker, small noise scales for sub-metre motion per frame.
RADAR_ARM_TRACKER = TrackerConfig(
    birth_frames=3,
    death_frames=15,
    measurement_noise=0.05,
    process_noise_pos=0.2,
    process_noise_vel=0.05,
    initial_pos_var=1.0,
    initial_vel_var=1.0,
)


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and, when per-frame,
    the frame index."""

    def __init__(self, stage: str, message: str, frame: Optional[int] = None):
        self.stage = stage
        self.frame = frame
        at = f" at frame {frame}" if frame is not None else ""
        super().__init__(f"stage '{stage}'{at}: {message}")


@contextlib.contextmanager
def stage_guard(stage: str, frame: Optional[int] = None) -> Iterator[None]:
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, str(exc), frame) from exc


@dataclasses.dataclass(frozen=True)
class PipelineRunConfig:
    """Everything one end-to-end run needs.

    calibration is either a correspondences file path or the sentinel
    "use-true-homography", which derives the projection from the scenario's
    own camera model. seed/frames, when set, override the scenario.
    """

    scenario_path: str
    out_dir: str
    radar_path: Optional[str] = None
    calibration: str = TRUE_HOMOGRAPHY
    classifier: str = "energy"
    fusion_method: str = "knwltrf"
    p_thr: float = 0.5
    seed: Optional[int] = None
    frames: Optional[int] = None
    dump: bool = False

    def __post_init__(self):
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.classifier!r}, expected one of {CLASSIFIERS}")
        if self.fusion_method not in FUSION_METHODS:
            raise ValueError(f"unknown fusion method {self.fusion_method!r}, expected one of {FUSION_METHODS}")
        if not 0.0 < self.p_thr < 1.0:
            raise ValueError("p_thr must sit strictly inside (0, 1)")
        if self.frames is not None and self.frames < 1:
            raise ValueError("frames cap must be at least 1")


# ---------------------------------------------------------------------------
# CSV plumbing

def _write_rows(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([report.fmt_value(v) for v in row])


def _read_rows(path) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _parse_gt(path) -> List[Tuple[int, int, float, float, Tuple[str, ...]]]:
    out = []
    for r in _read_rows(path):
        carried = tuple(c for c in r["carried"].split("|") if c)
        out.append((int(r["frame"]), int(r["subject"]), float(r["x_m"]), float(r["y_m"]), carried))
    return out


def _parse_tracks(path) -> List[Tuple[int, int, float, float, float, float]]:
    return [
        (int(r["frame"]), int(r["track"]), float(r["x_m"]), float(r["y_m"]),
         float(r["width_m"]), float(r["length_m"]))
        for r in _read_rows(path)
    ]


def _parse_predictions(path) -> List[Tuple[int, int, float, float, float]]:
    return [
        (int(r["frame"]), int(r["subject"]), float(r["p_laptop"]),
         float(r["p_phone"]), float(r["p_knife"]))
        for r in _read_rows(path)
    ]


# ---------------------------------------------------------------------------
# input resolution

def resolve_homography(calibration: str, scenario: Optional[Scenario] = None) -> np.ndarray:
    """Pixel-to-plane homography from a correspondences file or, with the
    sentinel, inverted from the scenario's own camera model."""
    if calibration == TRUE_HOMOGRAPHY:
        if scenario is None or scenario.camera is None:
            raise ValueError("use-true-homography needs a scenario with a camera model")
        cam = scenario.camera
        h_img = plane_to_image_homography(cam.focal_px, (cam.cx_px, cam.cy_px), cam.height_m, cam.tilt_deg)
        return np.linalg.inv(h_img)
    image_pts, plane_pts = load_correspondences(calibration)
    return estimate_homography(image_pts, plane_pts)


def load_run_inputs(cfg: PipelineRunConfig) -> Tuple[Scenario, RadarConfig, np.ndarray]:
    with stage_guard("config"):
        scenario = load_scenario(cfg.scenario_path)
        if cfg.seed is not None:
            scenario = dataclasses.replace(scenario, seed=cfg.seed)
        if cfg.frames is not None:
            scenario = dataclasses.replace(scenario, n_frames=min(scenario.n_frames, cfg.frames))
        radar = load_config(cfg.radar_path) if cfg.radar_path else scenario.radar
        if scenario.camera is None:
            raise ValueError("scenario has no camera model; the run pipeline is camera-led")
        homography = resolve_homography(cfg.calibration, scenario)
    return scenario, radar, homography


def _float32_image(if_cube: np.ndarray, radar: RadarConfig, varray) -> RadarCube3D:
    # images cross the dump boundary as float32; quantize the in-memory path
    # at the same point so both routes see identical numbers
    img = image_3d(if_cube, radar, varray)
    return dataclasses.replace(img, data=img.data.astype(np.float32))


def _load_image(path, radar: RadarConfig) -> RadarCube3D:
    data = read_cube(path)
    r_axis, a_axis, e_axis = image_axes(radar, data.shape[1], data.shape[2], data.shape[0])
    return RadarCube3D(data=data, range_axis_m=r_axis, azimuth_axis_deg=a_axis, elevation_axis_deg=e_axis)


# ---------------------------------------------------------------------------
# stage: simulate

def simulate_stage(scenario: Scenario, out_dir, radar: Optional[RadarConfig] = None,
                   write_cubes: bool = True) -> None:
    """Write ground truth, camera detections, and (optionally) raw IF cubes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    radar = radar or scenario.radar
    varray = form_virtual_array(radar)
    cubes = out / CUBES_DIR
    if write_cubes:
        cubes.mkdir(exist_ok=True)
    gt_rows: List[tuple] = []
    det_rows: List[tuple] = []
    for frame in range(scenario.n_frames):
        with stage_guard("simulate", frame):
            for g in ground_truth(scenario, frame):
                gt_rows.append((frame, g.sid, g.x_m, g.y_m, "|".join(g.carried)))
            for d in synth_camera_detections(scenario, frame):
                u, v, w, h = d.box
                det_rows.append((frame, u, v, w, h, d.confidence))
            if write_cubes:
                write_cube(cubes / FRAME_FMT.format(frame), synth_if_frame(scenario, frame, radar, varray))
    with stage_guard("simulate"):
        _write_rows(out / GT_CSV, ("frame", "subject", "x_m", "y_m", "carried"), gt_rows)
        _write_rows(out / DETS_CSV, ("frame", "u_px", "v_px", "w_px", "h_px", "confidence"), det_rows)


# ---------------------------------------------------------------------------
# stage: image

def image_stage(cubes_dir, radar: RadarConfig, out_dir) -> None:
    """3D-image every dumped IF cube; magnitude volumes are stored float32."""
    files = sorted(Path(cubes_dir).glob("frame_*.cube"))
    if not files:
        raise StageError("image", f"no IF cubes found under {cubes_dir}")
    out = Path(out_dir) / IMAGES_DIR
    out.mkdir(parents=True, exist_ok=True)
    varray = form_virtual_array(radar)
    for path in files:
        frame = int(path.stem.split("_")[1])
        with stage_guard("image", frame):
            cube = read_cube(path)
            img = _float32_image(cube, radar, varray)
            write_cube(out / path.name, img.data)


# ---------------------------------------------------------------------------
# stage: track

def track_stage(dets_csv, homography: np.ndarray, n_frames: int, out_dir,
                images_dir=None, radar: Optional[RadarConfig] = None,
                tracker_cfg: Optional[TrackerConfig] = None) -> None:
    """Track camera boxes, project to the plane, and (with images) snap each
    center to the nearest radar peak."""
    if images_dir is not None and radar is None:
        raise StageError("track", "radar config required to interpret dumped images")
    dets_by_frame: Dict[int, List[Detection]] = {}
    with stage_guard("track"):
        for r in _read_rows(dets_csv):
            box = (float(r["u_px"]), float(r["v_px"]), float(r["w_px"]), float(r["h_px"]))
            dets_by_frame.setdefault(int(r["frame"]), []).append(
                Detection(box=box, confidence=float(r["confidence"]))
            )
    tracker = Tracker(tracker_cfg)
    offsets: Dict[int, OffsetState] = {}
    rows: List[tuple] = []
    for frame in range(n_frames):
        with stage_guard("track", frame):
            img = None
            if images_dir is not None:
                img = _load_image(Path(images_dir) / FRAME_FMT.format(frame), radar)
            tracker.step(dets_by_frame.get(frame, []))
            rows.extend(_project_active(tracker, homography, img, offsets, frame))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / TRACKS_CSV, ("frame", "track", "x_m", "y_m", "width_m", "length_m"), rows)


def _project_active(tracker: Tracker, homography: np.ndarray, img: Optional[RadarCube3D],
                    offsets: Dict[int, OffsetState], frame: int) -> List[tuple]:
    """Plane regions for this frame's active tracklets, radar-refined when an
    image is at hand. Offset state of dead tracklets is dropped."""
    rows = []
    for t in tracker.active():
        region = occupancy_region(homography, t.box)
        if img is not None:
            region, offsets[t.id] = refine_center(region, img, offsets.get(t.id))
        rows.append((frame, t.id, region.center_x_m, region.center_y_m, region.width_m, region.length_m))
    alive = {t.id for t in tracker.tracklets}
    for tid in [k for k in offsets if k not in alive]:
        del offsets[tid]
    return rows


# ---------------------------------------------------------------------------
# stage: calibrate

def calibrate_stage(correspondences_path, out_dir) -> Tuple[np.ndarray, np.ndarray]:
    """Fit the pixel-to-plane homography and cross-validate it point by point."""
    with stage_guard("calibrate"):
        image_pts, plane_pts = load_correspondences(correspondences_path)
        h = estimate_homography(image_pts, plane_pts)
        errors = leave_one_out_errors(image_pts, plane_pts)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / HOMOGRAPHY_CSV, ("h00", "h01", "h02"), [tuple(row) for row in h])
        _write_rows(
            out / CALIB_ERRORS_CSV,
            ("point", "error_m"),
            [(i, None if math.isnan(e) else float(e)) for i, e in enumerate(errors)],
        )
    return h, errors


# ---------------------------------------------------------------------------
# stage: fuse

def _fuse_core(pred_rows: Sequence[Tuple[int, int, float, float, float]],
               range_by_frame_track: Mapping[Tuple[int, int], float],
               method: str, cfg: FusionConfig) -> List[tuple]:
    """Fused rows per (frame, track, class), in prediction file order."""
    if method not in FUSION_METHODS:
        raise ValueError(f"unknown fusion method {method!r}")
    knwl: Dict[Tuple[int, str], KnwlTrfState] = {}
    votes: Dict[Tuple[int, str], List[bool]] = {}
    rows: List[tuple] = []
    for frame, tid, p_laptop, p_phone, p_knife in pred_rows:
        key_r = (frame, tid)
        if key_r not in range_by_frame_track:
            raise ValueError(f"no track position for track {tid} at frame {frame}")
        r = range_by_frame_track[key_r]
        ps = {"phone": p_phone, "knife": p_knife, "laptop": p_laptop}
        for cls in CLASSES:
            p = ps[cls]
            key = (tid, cls)
            if method == "knwltrf":
                state, p_hat = knwltrf_step(knwl.get(key, KnwlTrfState()), p, r, cfg)
                knwl[key] = state
                rows.append((frame, tid, cls, p, p_hat, state.g, state.c_g,
                             state.s, state.c_s, state.transfer_fired))
            elif method == "vote":
                hist = votes.setdefault(key, [])
                hist.append(p > cfg.p_thr)
                p_hat = 1.0 if res_vote(hist, window=cfg.vote_window) else 0.0
                rows.append((frame, tid, cls, p, p_hat, None, None, None, None, None))
            else:  # single: the latest frame stands alone
                rows.append((frame, tid, cls, p, p, None, None, None, None, None))
    return rows


def fuse_stage(pred_csv, tracks_csv, out_dir, method: str = "knwltrf",
               cfg: Optional[FusionConfig] = None) -> None:
    """Fuse per-frame class probabilities along each track."""
    with stage_guard("fuse"):
        cfg = cfg or FusionConfig()
        preds = _parse_predictions(pred_csv)
        ranges = {
            (f, tid): float(np.hypot(x, y)) for f, tid, x, y, _w, _l in _parse_tracks(tracks_csv)
        }
        rows = _fuse_core(preds, ranges, method, cfg)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / FUSED_CSV, _FUSED_HEADER, rows)


_FUSED_HEADER = ("frame", "subject", "class", "p", "p_hat", "g", "c_g", "s", "c_s", "transfer_fired")


# ---------------------------------------------------------------------------
# stage: evaluate

def _track_truths(track_rows, gt_rows, radius: float = GT_MATCH_RADIUS_M) -> Dict[int, Tuple[str, ...]]:
    """True carried classes per track id: each frame votes for the nearest
    subject within `radius`, the modal subject wins. No match means the
    track is treated as a false alarm carrying nothing."""
    gt_by_frame: Dict[int, List[tuple]] = {}
    carried_by_sid: Dict[int, Tuple[str, ...]] = {}
    for frame, sid, x, y, carried in gt_rows:
        gt_by_frame.setdefault(frame, []).append((sid, x, y))
        carried_by_sid.setdefault(sid, carried)
    votes: Dict[int, Counter] = {}
    track_ids = []
    for frame, tid, x, y, *_ in track_rows:
        if tid not in votes:
            votes[tid] = Counter()
            track_ids.append(tid)
        best, best_d = None, radius
        for sid, gx, gy in gt_by_frame.get(frame, []):
            d = math.hypot(x - gx, y - gy)
            if d <= best_d:
                best, best_d = sid, d
        if best is not None:
            votes[tid][best] += 1
    truths: Dict[int, Tuple[str, ...]] = {}
    for tid in track_ids:
        if votes[tid]:
            sid = sorted(votes[tid].items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
            truths[tid] = carried_by_sid[sid]
        else:
            truths[tid] = ()
    return truths


def _stream_decisions(pred_rows, track_rows, method: str, cfg: FusionConfig) -> Dict[int, Dict[str, bool]]:
    """Terminal carried/not decision per (track, class) under the chosen
    fusion method, from the full observed stream."""
    ranges = {(f, tid): math.hypot(x, y) for f, tid, x, y, *_ in track_rows}
    streams: Dict[int, Dict[str, List[float]]] = {}
    stream_ranges: Dict[int, List[float]] = {}
    order: List[int] = []
    for frame, tid, p_laptop, p_phone, p_knife in pred_rows:
        if tid not in streams:
            streams[tid] = {c: [] for c in CLASSES}
            stream_ranges[tid] = []
            order.append(tid)
        streams[tid]["phone"].append(p_phone)
        streams[tid]["knife"].append(p_knife)
        streams[tid]["laptop"].append(p_laptop)
        stream_ranges[tid].append(ranges[(frame, tid)])
    out: Dict[int, Dict[str, bool]] = {}
    for tid in order:
        rs = tuple(stream_ranges[tid])
        out[tid] = {}
        for cls in CLASSES:
            ps = tuple(streams[tid][cls])
            if method == "single":
                out[tid][cls] = ps[-1] > cfg.p_thr
            else:
                record = StreamRecord(probabilities=ps, ranges=rs, label=False)
                out[tid][cls] = decide_stream(record, len(ps), method, cfg)
    return out


def _evaluate_core(gt_rows, track_rows, pred_rows, method: str, p_thr: float,
                   cfg: FusionConfig) -> List[Tuple[str, object]]:
    """The metrics table: tracking quality plus per-class carry decisions."""
    frames = max((f for f, *_ in gt_rows), default=-1) + 1
    subjects = sorted({sid for _f, sid, *_ in gt_rows})
    track_instances = [(f, tid, x, y) for f, tid, x, y, _w, _l in track_rows]
    truth_instances = [(f, sid, x, y) for f, sid, x, y, _c in gt_rows]
    tm_frame = tracking_metrics(track_instances, truth_instances, mode="frame")
    tm_traj = tracking_metrics(track_instances, truth_instances, mode="trajectory")

    rows: List[Tuple[str, object]] = [
        ("frames", frames),
        ("subjects", len(subjects)),
        ("tracks", len({tid for _f, tid, *_ in track_rows})),
        ("fusion_method", method),
        ("p_thr", p_thr),
        ("track_fpr_frame", tm_frame.fpr),
        ("track_miss_rate_frame", tm_frame.miss_rate),
        ("track_fpr_trajectory", tm_traj.fpr),
        ("track_miss_rate_trajectory", tm_traj.miss_rate),
    ]

    decisions = _stream_decisions(pred_rows, track_rows, method, cfg)
    truths = _track_truths(track_rows, gt_rows)
    scored = sorted(decisions)
    if scored:
        dec_by_cls = {c: [decisions[tid][c] for tid in scored] for c in CLASSES}
        truth_by_cls = {c: [c in truths[tid] for tid in scored] for c in CLASSES}
        rep = detection_metrics(dec_by_cls, truth_by_cls)
        for cls in CLASSES:
            dm = rep.per_class[cls]
            rows.append((f"{cls}_fpr", dm.fpr))
            rows.append((f"{cls}_miss_rate", dm.miss_rate))
            rows.append((f"{cls}_accuracy", dm.accuracy))
        rows.append(("macro_fpr", rep.macro["fpr"]))
        rows.append(("macro_miss_rate", rep.macro["miss_rate"]))
        rows.append(("macro_accuracy", rep.macro["accuracy"]))
    else:
        for cls in CLASSES:
            rows.extend([(f"{cls}_fpr", None), (f"{cls}_miss_rate", None), (f"{cls}_accuracy", None)])
        rows.extend([("macro_fpr", None), ("macro_miss_rate", None), ("macro_accuracy", None)])
    return rows


def _write_evaluation(out_dir, rows, gt_rows, track_rows, pred_rows, fused_rows, p_thr: float) -> None:
    out = Path(out_dir)
    report.write_metrics_csv(out / METRICS_CSV, rows)
    report.write_report_txt(
        out / REPORT_TXT,
        "Carried-object screening report",
        [
            ("Run", [r for r in rows if r[0] in ("frames", "subjects", "tracks", "fusion_method", "p_thr")]),
            ("Tracking (frame / trajectory modes)", [r for r in rows if r[0].startswith("track_")]),
            ("Carry decisions per class", [r for r in rows if any(r[0].startswith(c) for c in CLASSES)]),
            ("Macro averages", [r for r in rows if r[0].startswith("macro_")]),
        ],
    )
    report.fig_trajectories(out / "fig_trajectories.png",
                            [(f, sid, x, y, c) for f, sid, x, y, c in gt_rows],
                            [(f, tid, x, y) for f, tid, x, y, _w, _l in track_rows])
    report.fig_fused_timeline(out / "fig_fused.png", fused_rows, p_thr)
    report.fig_class_probabilities(out / "fig_classes.png", pred_rows)


def evaluate_stage(out_dir, method: str = "knwltrf", p_thr: float = 0.5,
                   cfg: Optional[FusionConfig] = None,
                   gt_csv=None, tracks_csv=None, pred_csv=None, fused_csv=None) -> List[Tuple[str, object]]:
    """Score dumped artifacts; writes metrics.csv, report.txt and figures."""
    out = Path(out_dir)
    with stage_guard("evaluate"):
        cfg = cfg or FusionConfig(p_thr=p_thr)
        gt_rows = _parse_gt(gt_csv or out / GT_CSV)
        track_rows = _parse_tracks(tracks_csv or out / TRACKS_CSV)
        pred_rows = _parse_predictions(pred_csv or out / PRED_CSV)
        fused_path = Path(fused_csv or out / FUSED_CSV)
        fused_rows = []
        if fused_path.exists():
            for r in _read_rows(fused_path):
                fused_rows.append((int(r["frame"]), int(r["subject"]), r["class"],
                                   float(r["p"]), float(r["p_hat"])))
        rows = _evaluate_core(gt_rows, track_rows, pred_rows, method, p_thr, cfg)
        out.mkdir(parents=True, exist_ok=True)
        _write_evaluation(out, rows, gt_rows, track_rows, pred_rows, fused_rows, p_thr)
    return rows


# ---------------------------------------------------------------------------
# end to end

def run(cfg: PipelineRunConfig) -> List[Tuple[str, object]]:
    """One-pass pipeline over a scenario; returns the metrics table rows.

    Writes the same artifacts the individual stages produce (cubes and
    images only under dump=True), so any stage can be rerun from this
    output directory and reproduce it.
    """
    scenario, radar, homography = load_run_inputs(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cubes_dir = out / CUBES_DIR
    images_dir = out / IMAGES_DIR
    if cfg.dump:
        cubes_dir.mkdir(exist_ok=True)
        images_dir.mkdir(exist_ok=True)

    varray = form_virtual_array(radar)
    tracker = Tracker()
    offsets: Dict[int, OffsetState] = {}
    oracle = OracleParams(seed=scenario.seed) if cfg.classifier == "oracle" else None
    fusion_cfg = FusionConfig(range_bin_width_m=derive_specs(radar).range_bin_width_m, p_thr=cfg.p_thr)

    gt_rows: List[tuple] = []
    det_rows: List[tuple] = []
    track_rows: List[tuple] = []
    pred_rows: List[Tuple[int, int, float, float, float]] = []
    skipped_crops = 0
    mid_image: Optional[RadarCube3D] = None

    for frame in range(scenario.n_frames):
        with stage_guard("simulate", frame):
            truths = ground_truth(scenario, frame)
            for g in truths:
                gt_rows.append((frame, g.sid, g.x_m, g.y_m, "|".join(g.carried)))
            dets = synth_camera_detections(scenario, frame)
            for d in dets:
                u, v, w, h = d.box
                det_rows.append((frame, u, v, w, h, d.confidence))
            if_cube = synth_if_frame(scenario, frame, radar, varray)
            if cfg.dump:
                write_cube(cubes_dir / FRAME_FMT.format(frame), if_cube)
        with stage_guard("image", frame):
            img = _float32_image(if_cube, radar, varray)
            if cfg.dump:
                write_cube(images_dir / FRAME_FMT.format(frame), img.data)
            if frame == scenario.n_frames // 2:
                mid_image = img
        with stage_guard("track", frame):
            tracker.step(dets)
            frame_tracks = _project_active(tracker, homography, img, offsets, frame)
            track_rows.extend(frame_tracks)
        with stage_guard("classify", frame):
            for _f, tid, x, y, w, l in frame_tracks:
                region = OccupancyRegion(center_x_m=x, center_y_m=y, width_m=w, length_m=l)
                probs = _classify_region(cfg.classifier, img, region, oracle, truths, frame, tid)
                if probs is None:
                    skipped_crops += 1
                    continue
                pred_rows.append((frame, tid, probs.p_laptop, probs.p_phone, probs.p_knife))

    with stage_guard("simulate"):
        _write_rows(out / GT_CSV, ("frame", "subject", "x_m", "y_m", "carried"), gt_rows)
        _write_rows(out / DETS_CSV, ("frame", "u_px", "v_px", "w_px", "h_px", "confidence"), det_rows)
    with stage_guard("track"):
        _write_rows(out / TRACKS_CSV, ("frame", "track", "x_m", "y_m", "width_m", "length_m"), track_rows)
    with stage_guard("classify"):
        _write_rows(out / PRED_CSV, ("frame", "subject", "p_laptop", "p_phone", "p_knife"), pred_rows)
    with stage_guard("fuse"):
        ranges = {(f, tid): float(np.hypot(x, y)) for f, tid, x, y, _w, _l in track_rows}
        fused_rows = _fuse_core(pred_rows, ranges, cfg.fusion_method, fusion_cfg)
        _write_rows(out / FUSED_CSV, _FUSED_HEADER, fused_rows)
    with stage_guard("evaluate"):
        rows = _evaluate_core(gt_rows, track_rows, pred_rows, cfg.fusion_method, cfg.p_thr, fusion_cfg)
        fused_plot = [(f, tid, c, p, ph) for f, tid, c, p, ph, *_ in fused_rows]
        _write_evaluation(out, rows, gt_rows, track_rows, pred_rows, fused_plot, cfg.p_thr)
        if mid_image is not None:
            report.fig_range_azimuth(out / "fig_range_azimuth.png", mid_image)
    if skipped_crops:
        rows = rows + [("skipped_crops_note", f"{skipped_crops} crops fell outside the cube extent")]
    return rows


def _classify_region(classifier: str, img: RadarCube3D, region: OccupancyRegion,
                     oracle: Optional[OracleParams], truths, frame: int, tid: int):
    """Per-frame class probabilities for one refined region, or None when the
    energy crop falls outside the cube."""
    if classifier == "energy":
        try:
            crop = crop_and_pad(img, region=region)
        except ValueError:
            return None
        comp = range_compensate(crop)
        return energy_template_predict(comp.data, (comp.center_range_m, comp.center_azimuth_deg))
    # oracle: look up who the track is actually following
    best, best_d = None, GT_MATCH_RADIUS_M
    for g in truths:
        d = math.hypot(region.center_x_m - g.x_m, region.center_y_m - g.y_m)
        if d <= best_d:
            best, best_d = g, d
    if best is None:
        return oracle_predict((), oracle, frame, FALSE_TRACK_SUBJECT + tid)
    return oracle_predict(best.carried, oracle, frame, best.sid)


# ---------------------------------------------------------------------------
# camera-aided vs radar-only comparison

@dataclasses.dataclass(frozen=True)
class ArmComparison:
    camera: TrackingMetrics
    radar: TrackingMetrics
    camera_instances: Tuple[Tuple[int, int, float, float], ...]
    radar_instances: Tuple[Tuple[int, int, float, float], ...]
    truth_instances: Tuple[Tuple[int, int, float, float], ...]


def radar_frame_detections(img: RadarCube3D, previous_power: Optional[np.ndarray],
                           pfa: float = 1e-3, cluster_radius: Tuple[float, float] = (0.4, 6.0),
                           min_points: int = 2) -> Tuple[List[Detection], np.ndarray]:
    """CFAR the raw power map, keep only cells that moved since the last
    frame, and cluster what survives into plane detections.

    CFAR must see the raw map: zeroing static cells first would poison the
    training-cell averages and wreck the false-alarm calibration.
    """
    power = (np.asarray(img.data, dtype=np.float64) ** 2).sum(axis=2)
    points = ca_cfar_2d(power, range_axis_m=img.range_axis_m, azimuth_axis_deg=img.azimuth_axis_deg, pfa=pfa)
    filtered, reference = nonstatic_filter(power, previous_power)
    moving = [p for p in points if filtered[p.row, p.col] > 0.0]
    clusters = cluster(moving, radius=cluster_radius, min_points=min_points)
    dets = [Detection(box=(c.x_m, c.y_m, 1.0, 1.0), confidence=1.0) for c in clusters]
    return dets, reference


def compare_arms(scenario: Scenario, radar: Optional[RadarConfig] = None,
                 warmup: int = 60, pfa: float = 1e-3,
                 cluster_radius: Tuple[float, float] = (0.4, 6.0), min_points: int = 2,
                 match_radius_m: float = 0.5, window: str = "hann") -> ArmComparison:
    """Localize the same simulated frames twice: camera boxes projected and
    radar-refined, versus a radar-only CFAR/cluster/track chain.

    Frames before `warmup` feed both trackers but are not scored, so each
    arm's confirmation latency is off the books. Detection maps are windowed
    (Hann by default): a rectangular window leaves moving FFT sidelobes all
    over the map, and those both pass the frame differencing and seed
    persistent fake tracks.
    """
    if scenario.camera is None:
        raise ValueError("comparison needs a scenario with a camera model")
    radar = radar or scenario.radar
    varray = form_virtual_array(radar)
    homography = resolve_homography(TRUE_HOMOGRAPHY, scenario)
    cam_tracker = Tracker()
    radar_tracker = Tracker(RADAR_ARM_TRACKER)
    offsets: Dict[int, OffsetState] = {}
    prev_power: Optional[np.ndarray] = None
    cam_inst: List[Tuple[int, int, float, float]] = []
    rad_inst: List[Tuple[int, int, float, float]] = []
    truth_inst: List[Tuple[int, int, float, float]] = []
    for frame in range(scenario.n_frames):
        if_cube = synth_if_frame(scenario, frame, radar, varray)
        img = image_3d(if_cube, radar, varray, window=window)
        rdets, prev_power = radar_frame_detections(img, prev_power, pfa, cluster_radius, min_points)
        radar_tracker.step(rdets)
        cam_tracker.step(synth_camera_detections(scenario, frame))
        cam_rows = _project_active(cam_tracker, homography, img, offsets, frame)
        if frame < warmup:
            continue
        for g in ground_truth(scenario, frame):
            truth_inst.append((frame, g.sid, g.x_m, g.y_m))
        for _f, tid, x, y, _w, _l in cam_rows:
            cam_inst.append((frame, tid, x, y))
        for t in radar_tracker.active():
            rad_inst.append((frame, t.id, t.box[0], t.box[1]))
    return ArmComparison(
        camera=tracking_metrics(cam_inst, truth_inst, max_distance_m=match_radius_m),
        radar=tracking_metrics(rad_inst, truth_inst, max_distance_m=match_radius_m),
        camera_instances=tuple(cam_inst),
        radar_instances=tuple(rad_inst),
        truth_instances=tuple(truth_inst),
    )


# ---------------------------------------------------------------------------
# tracking-length sweep

@dataclasses.dataclass(frozen=True)
class TrendResult:
    """Pooled length sweep plus per-scenario terminal accuracies."""

    sweep: Dict[str, Tuple]
    single_frame_accuracy: float
    terminal: Dict[str, float]
    per_scenario_terminal: Tuple[Tuple[float, float], ...]  # (knwltrf, vote) pairs
    records: Tuple[StreamRecord, ...]


def oracle_stream_records(
    n_scenarios: int = 20,
    subjects_per_scenario: int = 10,
    frames: int = 150,
    seed: int = 0,
    delta_low: float = 0.02,
    delta_high: float = 0.13,
    kappa: float = 7.0,
    start_range_m: float = 9.0,
    end_range_m: float = 3.5,
) -> List[List[StreamRecord]]:
    """Per-scenario oracle streams for walking subjects.

    Each subject gets a difficulty margin delta drawn uniformly, a Bernoulli
    half/half label per class, and per-frame probabilities from the beta
    oracle with means 0.5 +/- delta. Ranges walk inbound so the fuser sees a
    fresh bin every frame or two.
    """
    out: List[List[StreamRecord]] = []
    for scen in range(n_scenarios):
        rng = np.random.default_rng(np.random.SeedSequence((seed, scen)))
        deltas = rng.uniform(delta_low, delta_high, subjects_per_scenario)
        labels = rng.random((subjects_per_scenario, len(CLASSES))) < 0.5
        starts = start_range_m + rng.uniform(-0.4, 0.4, subjects_per_scenario)
        records: List[StreamRecord] = []
        for j in range(subjects_per_scenario):
            params = OracleParams(
                mu_pos=0.5 + float(deltas[j]),
                mu_neg=0.5 - float(deltas[j]),
                kappa=kappa,
                seed=seed * n_scenarios + scen,
            )
            carried = tuple(c for k, c in enumerate(CLASSES) if labels[j, k])
            rate = (starts[j] - end_range_m) / frames
            ranges = tuple(float(starts[j] - rate * t) for t in range(frames))
            probs = {c: [] for c in CLASSES}
            for t in range(frames):
                ps = oracle_predict(carried, params, t, j)
                probs["phone"].append(ps.p_phone)
                probs["knife"].append(ps.p_knife)
                probs["laptop"].append(ps.p_laptop)
            for k, c in enumerate(CLASSES):
                records.append(StreamRecord(
                    probabilities=tuple(probs[c]), ranges=ranges, label=bool(labels[j, k])
                ))
        out.append(records)
    return out


def fusion_trend_experiment(
    n_scenarios: int = 20,
    subjects_per_scenario: int = 10,
    frames: int = 150,
    lengths: Sequence[int] = (1, 5, 15, 40, 150),
    seed: int = 0,
    delta_low: float = 0.02,
    delta_high: float = 0.13,
    kappa: float = 7.0,
    cfg: Optional[FusionConfig] = None,
) -> TrendResult:
    """Decision quality versus observed tracking length, knowledge transfer
    against the running-vote baseline, pooled over seeded scenarios."""
    from .metrics import accuracy_at_length, length_sweep, metrics_at_length

    cfg = cfg or FusionConfig()
    per_scenario = oracle_stream_records(
        n_scenarios, subjects_per_scenario, frames, seed, delta_low, delta_high, kappa
    )
    pooled = [r for recs in per_scenario for r in recs]
    sweep = length_sweep(pooled, list(lengths), methods=("knwltrf", "vote"), cfg=cfg)
    full = max(lengths)
    terminal = {m: accuracy_at_length(pooled, full, m, cfg) for m in ("knwltrf", "vote")}
    per_scen = tuple(
        (accuracy_at_length(recs, full, "knwltrf", cfg), accuracy_at_length(recs, full, "vote", cfg))
        for recs in per_scenario
    )
    return TrendResult(
        sweep=sweep,
        single_frame_accuracy=accuracy_at_length(pooled, 1, "knwltrf", cfg),
        terminal=terminal,
        per_scenario_terminal=per_scen,
        records=tuple(pooled),
    )


def write_sweep_outputs(result: TrendResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for method in sorted(result.sweep):
        for r in result.sweep[method]:
            rows.append((method, r.length, r.fpr, r.miss_rate, r.accuracy))
    _write_rows(out / SWEEP_CSV, ("method", "length", "fpr", "miss_rate", "accuracy"), rows)
    report.fig_sweep(out / "fig_sweep.png", result.sweep)
    report.write_report_txt(
        out / REPORT_TXT,
        "Tracking-length sweep",
        [
            ("Summary", [
                ("streams", len(result.records)),
                ("single_frame_accuracy", result.single_frame_accuracy),
                ("terminal_knwltrf", result.terminal["knwltrf"]),
                ("terminal_vote", result.terminal["vote"]),
            ]),
        ],
    )
