"""Scenario simulation: moving subjects with carried objects, wall ghosts,
static clutter, IF-signal synthesis, and a noisy overhead camera.

Geometry: the radar sits at the origin at RADAR_HEIGHT_M above the floor,
x to the right, y downrange, z up. Subjects follow piecewise-linear
waypoint paths on the floor; each subject is a fixed constellation of body
scatterers plus an optional carried-object scatterer held at waist height
ahead of the direction of motion. Multipath ghosts are image sources
mirrored about a vertical wall plane x = const, which reproduces the
reflected path length exactly.

Synthesis treats every chirp as one full snapshot of the virtual array
(the time-division multiplexing is assumed demultiplexed upstream) and
neglects intra-frame motion: at walking speed a subject moves millimetres
per frame, well under a range bin.
"""

from __future__ import annotations

import dataclasses
import functools
import math
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .config import C, RadarConfig, default_config, derive_specs
from .imaging import VirtualArray, form_virtual_array
from .tracker import Box, Detection

CLASSES = ("phone", "knife", "laptop")

# Carried-object scatterer amplitude relative to the torso return. Spread
# wide enough that the object/torso energy ratio bands stay separable after
# imaging.
OBJECT_AMPLITUDE = {"phone": 0.35, "knife": 0.60, "laptop": 1.05}
OBJECT_OFFSET_M = 0.30
OBJECT_HEIGHT_M = 1.0
RADAR_HEIGHT_M = 1.0
BODY_RADIUS_M = 0.12

# rng stream tags so independent draws never collide
_STREAM_BODY = 17
_STREAM_NOISE = 23
_STREAM_CAMERA = 29
_STREAM_GHOST = 31


@dataclasses.dataclass(frozen=True)
class Waypoint:
    t_s: float
    x_m: float
    y_m: float


@dataclasses.dataclass(frozen=True)
class Subject:
    sid: int
    waypoints: Tuple[Waypoint, ...]
    carried: Tuple[str, ...] = ()
    height_m: float = 1.7
    n_scatterers: int = 7

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError(f"subject {self.sid}: needs at least one waypoint")
        if isinstance(self.carried, str):  # tolerate a bare class name
            object.__setattr__(self, "carried", (self.carried,))
        for cls in self.carried:
            if cls not in CLASSES:
                raise ValueError(f"subject {self.sid}: unknown carried class {cls!r}")
        if len(set(self.carried)) != len(self.carried):
            raise ValueError(f"subject {self.sid}: duplicate carried classes")
        ts = [w.t_s for w in self.waypoints]
        if ts != sorted(ts):
            raise ValueError(f"subject {self.sid}: waypoints must be time-ordered")


@dataclasses.dataclass(frozen=True)
class ClutterPoint:
    x_m: float
    y_m: float
    z_m: float
    amplitude: float


@dataclasses.dataclass(frozen=True)
class GhostEpisode:
    """Mirror image of one subject about the wall plane x = wall_x_m,
    active for a contiguous run of frames."""

    source_sid: int
    wall_x_m: float
    start_frame: int
    n_frames: int
    amplitude: float


@dataclasses.dataclass(frozen=True)
class CameraModel:
    focal_px: float = 500.0
    cx_px: float = 320.0
    cy_px: float = 240.0
    image_width: int = 640
    image_height: int = 480
    height_m: float = 2.0
    tilt_deg: float = 10.0
    miss_prob: float = 0.0
    false_prob: float = 0.0
    jitter_px: float = 0.0  # box-centre jitter
    size_jitter_px: float = 0.0
    aspect: float = 0.35  # box width as a fraction of box height


@dataclasses.dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    n_frames: int
    radar: RadarConfig
    subjects: Tuple[Subject, ...]
    clutter: Tuple[ClutterPoint, ...] = ()
    ghosts: Tuple[GhostEpisode, ...] = ()
    multipath_ghost_rate: float = 0.0  # probability/frame of a new mirrored episode
    ghost_wall_x_m: float = 2.5
    camera: Optional[CameraModel] = None

    def __post_init__(self):
        sids = [s.sid for s in self.subjects]
        if len(sids) != len(set(sids)):
            raise ValueError("subject ids must be unique")
        if not 0.0 <= self.multipath_ghost_rate <= 1.0:
            raise ValueError("multipath_ghost_rate must be in [0, 1]")
        for g in self.ghosts:
            if g.source_sid not in sids:
                raise ValueError(f"ghost episode references unknown subject {g.source_sid}")

    def frame_time(self, frame: int) -> float:
        return frame * self.radar.frame_duration_s


@dataclasses.dataclass(frozen=True)
class GroundTruth:
    sid: int
    x_m: float
    y_m: float
    carried: Tuple[str, ...]


def subject_position(subject: Subject, t_s: float) -> Tuple[float, float]:
    """Piecewise-linear position, clamped at the path ends."""
    wps = subject.waypoints
    if t_s <= wps[0].t_s:
        return wps[0].x_m, wps[0].y_m
    for a, b in zip(wps, wps[1:]):
        if t_s <= b.t_s:
            span = b.t_s - a.t_s
            f = 0.0 if span == 0 else (t_s - a.t_s) / span
            return a.x_m + f * (b.x_m - a.x_m), a.y_m + f * (b.y_m - a.y_m)
    return wps[-1].x_m, wps[-1].y_m


def subject_velocity(subject: Subject, t_s: float) -> Tuple[float, float]:
    wps = subject.waypoints
    if len(wps) == 1 or t_s <= wps[0].t_s or t_s > wps[-1].t_s:
        return 0.0, 0.0
    for a, b in zip(wps, wps[1:]):
        if t_s <= b.t_s:
            span = b.t_s - a.t_s
            if span == 0:
                return 0.0, 0.0
            return (b.x_m - a.x_m) / span, (b.y_m - a.y_m) / span
    return 0.0, 0.0


def body_scatterers(scenario: Scenario, subject: Subject) -> np.ndarray:
    """Fixed per-subject constellation: rows (dx, dy, z, amplitude, phase).

    The torso reference sits at the subject centre, waist height, unit
    amplitude; the minor scatterers are scattered over the body volume with
    random phases fixed for the whole scenario so per-frame crops do not
    scintillate.
    """
    rng = np.random.default_rng(np.random.SeedSequence((scenario.seed, _STREAM_BODY, subject.sid)))
    n = max(1, subject.n_scatterers)
    rows = np.zeros((n, 5))
    rows[0] = (0.0, 0.0, OBJECT_HEIGHT_M, 1.0, 0.0)
    if n > 1:
        # torso radius well inside OBJECT_OFFSET_M so carried objects stay
        # outside the body's range-azimuth footprint
        rows[1:, 0] = rng.uniform(-BODY_RADIUS_M, BODY_RADIUS_M, n - 1)
        rows[1:, 1] = rng.uniform(-BODY_RADIUS_M, BODY_RADIUS_M, n - 1)
        rows[1:, 2] = rng.uniform(0.5, 0.94 * subject.height_m, n - 1)
        rows[1:, 3] = rng.uniform(0.2, 0.5, n - 1)
        rows[1:, 4] = rng.uniform(0.0, 2.0 * math.pi, n - 1)
    return rows


def _object_offset(subject: Subject, t_s: float, index: int) -> Tuple[float, float]:
    """Offset of the index-th carried object: held ahead of the direction of
    motion, additional objects fanned out around it."""
    vx, vy = subject_velocity(subject, t_s)
    speed = math.hypot(vx, vy)
    if speed < 0.05:
        fx, fy = 0.0, 1.0
    else:
        fx, fy = vx / speed, vy / speed
    rot = math.radians(40.0 * index)
    ox = fx * math.cos(rot) - fy * math.sin(rot)
    oy = fx * math.sin(rot) + fy * math.cos(rot)
    return OBJECT_OFFSET_M * ox, OBJECT_OFFSET_M * oy


@functools.lru_cache(maxsize=32)
def ghost_episodes(scenario: Scenario) -> Tuple[GhostEpisode, ...]:
    """Explicit episodes plus episodes spawned by the per-frame ghost rate,
    derived deterministically from the scenario seed."""
    episodes = list(scenario.ghosts)
    if scenario.multipath_ghost_rate > 0.0 and scenario.subjects:
        rng = np.random.default_rng(np.random.SeedSequence((scenario.seed, _STREAM_GHOST)))
        busy_until = 0
        for frame in range(scenario.n_frames):
            spawn = rng.random() < scenario.multipath_ghost_rate
            if frame < busy_until or not spawn:
                continue
            duration = int(rng.integers(30, 91))
            source = scenario.subjects[int(rng.integers(len(scenario.subjects)))]
            episodes.append(
                GhostEpisode(
                    source_sid=source.sid,
                    wall_x_m=scenario.ghost_wall_x_m,
                    start_frame=frame,
                    n_frames=duration,
                    amplitude=float(rng.uniform(0.35, 0.65)),
                )
            )
            busy_until = frame + duration
    return tuple(episodes)


def scatterers_at(scenario: Scenario, frame: int) -> np.ndarray:
    """World-frame scatterer table for one frame: rows (x, y, z, amp, phase)."""
    t = scenario.frame_time(frame)
    rows: List[Tuple[float, float, float, float, float]] = []

    def subject_rows(subject: Subject) -> List[Tuple[float, float, float, float, float]]:
        x, y = subject_position(subject, t)
        out = []
        for dx, dy, z, amp, ph in body_scatterers(scenario, subject):
            out.append((x + dx, y + dy, z, amp, ph))
        for k, cls in enumerate(subject.carried):
            ox, oy = _object_offset(subject, t, k)
            out.append((x + ox, y + oy, OBJECT_HEIGHT_M, OBJECT_AMPLITUDE[cls], 0.0))
        return out

    for subject in scenario.subjects:
        rows.extend(subject_rows(subject))
    for g in ghost_episodes(scenario):
        if not (g.start_frame <= frame < g.start_frame + g.n_frames):
            continue
        source = next(s for s in scenario.subjects if s.sid == g.source_sid)
        for x, y, z, amp, ph in subject_rows(source):
            rows.append((2.0 * g.wall_x_m - x, y, z, amp * g.amplitude, ph))
    for c in scenario.clutter:
        rows.append((c.x_m, c.y_m, c.z_m, c.amplitude, 0.0))
    return np.asarray(rows, dtype=float).reshape(-1, 5)


def synth_if_frame(
    scenario: Scenario,
    frame: int,
    cfg: Optional[RadarConfig] = None,
    varray: Optional[VirtualArray] = None,
) -> np.ndarray:
    """Simulate one frame of IF samples as a 4D complex64 cube indexed
    [fast_time][slow_time][tx][rx].

    Each scatterer contributes a beat tone at 2*r*S/c with two-way 1/r^2
    amplitude spreading and the virtual-element steering phase; the TXs fire
    sequentially within a chirp block, but with no intra-frame motion the
    demultiplexed snapshot is what remains. Scatterers beyond the
    unambiguous range are dropped with a warning.
    """
    if frame < 0 or frame >= scenario.n_frames:
        raise ValueError(f"frame {frame} outside scenario duration {scenario.n_frames}")
    cfg = cfg or scenario.radar
    varray = varray or form_virtual_array(cfg)
    specs = derive_specs(cfg)
    n_tx = len(cfg.tx_positions)
    n_rx = len(cfg.rx_positions)
    n_ch = varray.elements.shape[0]
    n_s = cfg.samples_per_chirp
    n_c = cfg.chirps_per_frame

    t_n = np.arange(n_s) / cfg.sample_rate_sps
    signal = np.zeros((n_ch, n_s), dtype=np.complex128)
    for x, y, z, amp, phase in scatterers_at(scenario, frame):
        z_rel = z - RADAR_HEIGHT_M
        r = math.sqrt(x * x + y * y + z_rel * z_rel)
        if r < 1e-6:
            continue
        if r > specs.max_range_m:
            warnings.warn(
                f"scatterer at {r:.1f} m is beyond the unambiguous range "
                f"({specs.max_range_m:.1f} m); dropped",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        az = math.atan2(x, y)
        el = math.asin(z_rel / r)
        u = math.sin(az) * math.cos(el)
        w = math.sin(el)
        f_beat = 2.0 * r * cfg.sweep_slope_hz_per_s / C
        tone = np.exp(1j * (2.0 * math.pi * f_beat * t_n + phase))
        steer = np.exp(
            1j * 2.0 * math.pi * (varray.elements[:, 0] * u + varray.elements[:, 1] * w)
        )
        signal += (amp / (r * r)) * steer[:, None] * tone[None, :]

    # (channels, samples) -> [fast][slow][tx][rx]
    cube = np.broadcast_to(
        signal.reshape(n_tx, n_rx, n_s).transpose(2, 0, 1), (n_c, n_s, n_tx, n_rx)
    ).transpose(1, 0, 2, 3).astype(np.complex64)
    if cfg.noise_power > 0.0:
        rng = np.random.default_rng(
            np.random.SeedSequence((scenario.seed, _STREAM_NOISE, frame))
        )
        sigma = math.sqrt(cfg.noise_power / 2.0)
        noise = rng.normal(0.0, sigma, size=(2,) + cube.shape)
        cube = cube + (noise[0] + 1j * noise[1]).astype(np.complex64)
    else:
        cube = cube.copy()
    return cube


def project_point(cam: CameraModel, x: float, y: float, z: float) -> Tuple[float, float]:
    """Pinhole projection of a world point; camera above the radar origin,
    looking downrange with a downward tilt."""
    theta = math.radians(cam.tilt_deg)
    xc = x
    yc = -y * math.sin(theta) + (cam.height_m - z) * math.cos(theta)
    zc = y * math.cos(theta) + (cam.height_m - z) * math.sin(theta)
    if zc <= 1e-9:
        raise ValueError("point is behind the camera plane")
    return cam.focal_px * xc / zc + cam.cx_px, cam.focal_px * yc / zc + cam.cy_px


def subject_box(cam: CameraModel, x: float, y: float, height_m: float) -> Box:
    """Ideal image box (center u, center v, w, h) for a standing subject at
    floor point (x, y)."""
    u_bottom, v_bottom = project_point(cam, x, y, 0.0)
    _, v_top = project_point(cam, x, y, height_m)
    h = v_bottom - v_top
    w = cam.aspect * h
    return (u_bottom, (v_top + v_bottom) / 2.0, w, h)


def synth_camera_detections(scenario: Scenario, frame: int) -> List[Detection]:
    """Noisy camera boxes: per-subject misses, centre/size jitter, and
    transient false boxes that never persist across frames."""
    cam = scenario.camera
    if cam is None:
        return []
    rng = np.random.default_rng(np.random.SeedSequence((scenario.seed, _STREAM_CAMERA, frame)))
    t = scenario.frame_time(frame)
    out: List[Detection] = []
    for subject in scenario.subjects:
        if rng.random() < cam.miss_prob:
            continue
        x, y = subject_position(subject, t)
        u, v, w, h = subject_box(cam, x, y, subject.height_m)
        if cam.jitter_px > 0.0:
            du, dv = rng.normal(0.0, cam.jitter_px, 2)
            u, v = u + du, v + dv
        if cam.size_jitter_px > 0.0:
            dw, dh = rng.normal(0.0, cam.size_jitter_px, 2)
            w, h = max(2.0, w + dw), max(2.0, h + dh)
        out.append(Detection(box=(u, v, w, h), confidence=float(rng.uniform(0.8, 1.0))))
    if rng.random() < cam.false_prob:
        h = float(rng.uniform(40.0, 200.0))
        w = cam.aspect * h
        u = float(rng.uniform(w / 2.0, cam.image_width - w / 2.0))
        v = float(rng.uniform(h / 2.0, cam.image_height - h / 2.0))
        out.append(Detection(box=(u, v, w, h), confidence=float(rng.uniform(0.3, 0.7))))
    return out


def calibration_correspondences(
    cam: CameraModel, xs: Sequence[float], ys: Sequence[float]
) -> Tuple[List[Tuple[float, float]], List[Tuple[float, float]]]:
    """Image/ground point pairs over a floor grid, for homography fitting."""
    image, plane = [], []
    for y in ys:
        for x in xs:
            image.append(project_point(cam, x, y, 0.0))
            plane.append((x, y))
    return image, plane


def ground_truth(scenario: Scenario, frame: int) -> List[GroundTruth]:
    t = scenario.frame_time(frame)
    out = []
    for s in scenario.subjects:
        x, y = subject_position(s, t)
        out.append(GroundTruth(sid=s.sid, x_m=x, y_m=y, carried=s.carried))
    return out


# ---------------------------------------------------------------------------
# serialization

def _scenario_dict(s: Scenario) -> dict:
    d: dict = {
        "name": s.name,
        "seed": s.seed,
        "n_frames": s.n_frames,
        "radar": {
            "carrier_frequency_hz": s.radar.carrier_frequency_hz,
            "bandwidth_hz": s.radar.bandwidth_hz,
            "sweep_slope_hz_per_s": s.radar.sweep_slope_hz_per_s,
            "sample_rate_sps": s.radar.sample_rate_sps,
            "chirps_per_frame": s.radar.chirps_per_frame,
            "samples_per_chirp": s.radar.samples_per_chirp,
            "chirp_duration_s": s.radar.chirp_duration_s,
            "frame_duration_s": s.radar.frame_duration_s,
            "noise_power": s.radar.noise_power,
            "tx_positions": [list(p) for p in s.radar.tx_positions],
            "rx_positions": [list(p) for p in s.radar.rx_positions],
        },
        "subjects": [
            {
                "sid": sub.sid,
                "carried": list(sub.carried),
                "height_m": sub.height_m,
                "n_scatterers": sub.n_scatterers,
                "waypoints": [[w.t_s, w.x_m, w.y_m] for w in sub.waypoints],
            }
            for sub in s.subjects
        ],
        "clutter": [[c.x_m, c.y_m, c.z_m, c.amplitude] for c in s.clutter],
        "ghosts": [
            {
                "source_sid": g.source_sid,
                "wall_x_m": g.wall_x_m,
                "start_frame": g.start_frame,
                "n_frames": g.n_frames,
                "amplitude": g.amplitude,
            }
            for g in s.ghosts
        ],
        "multipath_ghost_rate": s.multipath_ghost_rate,
        "ghost_wall_x_m": s.ghost_wall_x_m,
    }
    if s.camera is not None:
        d["camera"] = dataclasses.asdict(s.camera)
    return d


def save_scenario(scenario: Scenario, path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(_scenario_dict(scenario), fh, sort_keys=True)


def load_scenario(path: Union[str, Path]) -> Scenario:
    with open(path) as fh:
        d = yaml.safe_load(fh)
    if not isinstance(d, dict):
        raise ValueError(f"{path}: scenario file must hold a mapping")
    try:
        radar_d = dict(d["radar"])
        radar = RadarConfig(
            carrier_frequency_hz=float(radar_d.pop("carrier_frequency_hz")),
            bandwidth_hz=float(radar_d.pop("bandwidth_hz")),
            sweep_slope_hz_per_s=float(radar_d.pop("sweep_slope_hz_per_s")),
            sample_rate_sps=float(radar_d.pop("sample_rate_sps")),
            chirps_per_frame=int(radar_d.pop("chirps_per_frame")),
            samples_per_chirp=int(radar_d.pop("samples_per_chirp")),
            chirp_duration_s=float(radar_d.pop("chirp_duration_s")),
            frame_duration_s=float(radar_d.pop("frame_duration_s")),
            noise_power=float(radar_d.pop("noise_power")),
            tx_positions=tuple(tuple(float(v) for v in p) for p in radar_d.pop("tx_positions")),
            rx_positions=tuple(tuple(float(v) for v in p) for p in radar_d.pop("rx_positions")),
        )
        if radar_d:
            raise ValueError(f"unknown radar keys: {sorted(radar_d)}")
        subjects = tuple(
            Subject(
                sid=int(sd["sid"]),
                carried=tuple(sd.get("carried") or ()),
                height_m=float(sd.get("height_m", 1.7)),
                n_scatterers=int(sd.get("n_scatterers", 7)),
                waypoints=tuple(Waypoint(*[float(v) for v in w]) for w in sd["waypoints"]),
            )
            for sd in d.get("subjects", [])
        )
        clutter = tuple(ClutterPoint(*[float(v) for v in c]) for c in d.get("clutter", []))
        ghosts = tuple(
            GhostEpisode(
                source_sid=int(g["source_sid"]),
                wall_x_m=float(g["wall_x_m"]),
                start_frame=int(g["start_frame"]),
                n_frames=int(g["n_frames"]),
                amplitude=float(g["amplitude"]),
            )
            for g in d.get("ghosts", [])
        )
        camera = None
        if d.get("camera") is not None:
            camera = CameraModel(**d["camera"])
        return Scenario(
            name=str(d["name"]),
            seed=int(d["seed"]),
            n_frames=int(d["n_frames"]),
            radar=radar,
            subjects=subjects,
            clutter=clutter,
            ghosts=ghosts,
            multipath_ghost_rate=float(d.get("multipath_ghost_rate", 0.0)),
            ghost_wall_x_m=float(d.get("ghost_wall_x_m", 2.5)),
            camera=camera,
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing scenario key {exc}") from exc


# ---------------------------------------------------------------------------
# canned scenario builders

def _fast_radar(noise_power: float, chirps: int = 10) -> RadarConfig:
    return dataclasses.replace(default_config(noise_power=noise_power), chirps_per_frame=chirps)


def make_demo_scenario(
    seed: int = 0,
    n_frames: int = 90,
    carried: Sequence[Tuple[str, ...]] = (("laptop",), ()),
    noise_power: float = 1e-6,
    chirps: int = 10,
) -> Scenario:
    """Small hall scene: subjects walk inbound lanes, camera on, no ghosts."""
    dur = n_frames / 30.0
    subjects = []
    for i, classes in enumerate(carried):
        x0 = -1.5 + 1.5 * i
        subjects.append(
            Subject(
                sid=i + 1,
                carried=tuple(classes),
                waypoints=(
                    Waypoint(0.0, x0, 9.0),
                    Waypoint(dur, x0 + 0.5, 3.5),
                ),
            )
        )
    return Scenario(
        name="demo-hall",
        seed=seed,
        n_frames=n_frames,
        radar=_fast_radar(noise_power, chirps),
        subjects=tuple(subjects),
        clutter=(ClutterPoint(-2.5, 7.0, 0.8, 0.25),),
        camera=CameraModel(miss_prob=0.05, false_prob=0.05, jitter_px=1.5, size_jitter_px=1.0),
    )


def make_ghost_scenario(
    seed: int = 0,
    n_frames: int = 240,
    noise_power: float = 4e-7,
    chirps: int = 10,
    multipath_ghost_rate: float = 0.08,
) -> Scenario:
    """Corridor with a reflective wall: one walking subject with a long pause
    mid-route, rate-spawned mirrored ghosts, and a noisy camera."""
    subjects = (
        Subject(
            sid=1,
            carried=("knife",),
            waypoints=(
                Waypoint(0.0, -0.5, 9.5),
                Waypoint(n_frames / 3.0 / 30.0, 0.0, 6.5),
                Waypoint(2.0 * n_frames / 3.0 / 30.0, 0.0, 6.5),  # pause
                Waypoint(n_frames / 30.0, 0.5, 3.5),
            ),
        ),
    )
    return Scenario(
        name="ghost-corridor",
        seed=seed,
        n_frames=n_frames,
        radar=_fast_radar(noise_power, chirps),
        subjects=subjects,
        clutter=(ClutterPoint(2.0, 10.5, 0.6, 0.3), ClutterPoint(-3.0, 5.0, 0.4, 0.2)),
        multipath_ghost_rate=multipath_ghost_rate,
        ghost_wall_x_m=2.5,
        # miss_prob kept small: confirmation needs birth_frames consecutive
        # hits, and long miss-free runs get rare fast as the rate grows
        camera=CameraModel(miss_prob=0.03, false_prob=0.05, jitter_px=1.5, size_jitter_px=1.0),
    )
