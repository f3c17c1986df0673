"""Command line front end for the screening pipeline.

Subcommands mirror the pipeline stages (simulate, image, track, calibrate,
fuse, evaluate) plus the end-to-end `run` and the `sweep-length` experiment.
Scenario, radar, and calibration arguments accept filesystem paths or the
bundled names (demo, ghost, default-radar, calibration-points).

Exit codes: 0 success, 1 configuration error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from . import pipeline, report
from .config import derive_specs, load_config
from .fusion import FusionConfig
from .pipeline import CLASSIFIERS, FUSION_METHODS, TRUE_HOMOGRAPHY, PipelineRunConfig, StageError
from .scene import Scenario, load_scenario

_BUNDLED = {
    "demo": "demo_scenario.yaml",
    "ghost": "ghost_scenario.yaml",
    "default-radar": "default_radar.yaml",
    "calibration-points": "calibration_points.txt",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; that's a config error here, code 1
    def error(self, message):
        raise UsageError(message)


def resolve_input(name: str) -> str:
    """A real path as given, or one of the bundled data files by name."""
    if Path(name).exists():
        return name
    key = name.lower()
    fname = _BUNDLED.get(key, key if key in _BUNDLED.values() else None)
    if fname is not None:
        bundled = resources.files("carryscan.data").joinpath(fname)
        if bundled.is_file():
            return str(bundled)
    raise FileNotFoundError(
        f"no such file or bundled input: {name} (bundled names: {', '.join(sorted(_BUNDLED))})"
    )


def _print_table(rows) -> None:
    width = max(len(str(k)) for k, _ in rows)
    for key, value in rows:
        print(f"{key:<{width}}  {report.fmt_value(value)}")


def _load_scenario(args) -> Scenario:
    scn = load_scenario(resolve_input(args.scenario))
    seed = getattr(args, "seed", None)
    frames = getattr(args, "frames", None)
    if seed is not None:
        scn = dataclasses.replace(scn, seed=seed)
    if frames is not None:
        scn = dataclasses.replace(scn, n_frames=min(scn.n_frames, frames))
    return scn


def _radar_from(args, scenario: Optional[Scenario] = None):
    if getattr(args, "radar", None):
        return load_config(resolve_input(args.radar))
    return scenario.radar if scenario is not None else None


def _fusion_config(args, radar=None) -> FusionConfig:
    if radar is None:
        return FusionConfig(p_thr=args.p_thr)
    return FusionConfig(range_bin_width_m=derive_specs(radar).range_bin_width_m, p_thr=args.p_thr)


# ---------------------------------------------------------------------------
# subcommands

def _cmd_run(args) -> None:
    calibration = args.calibration
    if calibration != TRUE_HOMOGRAPHY:
        calibration = resolve_input(calibration)
    cfg = PipelineRunConfig(
        scenario_path=resolve_input(args.scenario),
        out_dir=args.out,
        radar_path=resolve_input(args.radar) if args.radar else None,
        calibration=calibration,
        classifier=args.classifier,
        fusion_method=args.fusion,
        p_thr=args.p_thr,
        seed=args.seed,
        frames=args.frames,
        dump=args.dump,
    )
    rows = pipeline.run(cfg)
    _print_table(rows)


def _cmd_simulate(args) -> None:
    scn = _load_scenario(args)
    pipeline.simulate_stage(scn, args.out, radar=_radar_from(args, scn))


def _cmd_image(args) -> None:
    scn = _load_scenario(args) if args.scenario else None
    radar = _radar_from(args, scn)
    if radar is None:
        raise ValueError("image needs --radar or --scenario to interpret the cubes")
    pipeline.image_stage(args.cubes, radar, args.out)


def _cmd_track(args) -> None:
    scn = _load_scenario(args) if args.scenario else None
    if args.calibration == TRUE_HOMOGRAPHY:
        if scn is None:
            raise ValueError("use-true-homography needs --scenario")
        homography = pipeline.resolve_homography(TRUE_HOMOGRAPHY, scn)
    else:
        homography = pipeline.resolve_homography(resolve_input(args.calibration))
    radar = _radar_from(args, scn)
    if args.images and radar is None:
        raise ValueError("track with --images needs --radar or --scenario")
    n_frames = args.frames or (scn.n_frames if scn else None)
    if n_frames is None:
        with open(args.dets, newline="") as fh:
            frames = [int(r["frame"]) for r in csv.DictReader(fh)]
        if not frames:
            raise ValueError("cannot infer frame count from an empty detections file; pass --frames")
        n_frames = max(frames) + 1
    pipeline.track_stage(args.dets, homography, n_frames, args.out,
                         images_dir=args.images, radar=radar)


def _cmd_calibrate(args) -> None:
    h, errors = pipeline.calibrate_stage(resolve_input(args.correspondences), args.out)
    import numpy as np

    good = errors[~np.isnan(errors)]
    _print_table([
        ("points", errors.size),
        ("rejected", int(np.isnan(errors).sum())),
        ("mean_error_m", float(good.mean()) if good.size else None),
        ("max_error_m", float(good.max()) if good.size else None),
    ])


def _cmd_fuse(args) -> None:
    scn = _load_scenario(args) if args.scenario else None
    cfg = _fusion_config(args, _radar_from(args, scn))
    pipeline.fuse_stage(args.predictions, args.tracks, args.out, method=args.fusion, cfg=cfg)


def _cmd_evaluate(args) -> None:
    scn = _load_scenario(args) if args.scenario else None
    cfg = _fusion_config(args, _radar_from(args, scn))
    rows = pipeline.evaluate_stage(
        args.out, method=args.fusion, p_thr=args.p_thr, cfg=cfg,
        gt_csv=args.gt, tracks_csv=args.tracks, pred_csv=args.predictions, fused_csv=args.fused,
    )
    _print_table(rows)


def _cmd_sweep_length(args) -> None:
    result = pipeline.fusion_trend_experiment(
        n_scenarios=args.scenarios,
        subjects_per_scenario=args.subjects,
        frames=args.frames,
        seed=args.seed,
    )
    pipeline.write_sweep_outputs(result, args.out)
    _print_table([
        ("streams", len(result.records)),
        ("single_frame_accuracy", result.single_frame_accuracy),
        ("terminal_knwltrf", result.terminal["knwltrf"]),
        ("terminal_vote", result.terminal["vote"]),
    ])


_DISPATCH = {
    "run": _cmd_run,
    "simulate": _cmd_simulate,
    "image": _cmd_image,
    "track": _cmd_track,
    "calibrate": _cmd_calibrate,
    "fuse": _cmd_fuse,
    "evaluate": _cmd_evaluate,
    "sweep-length": _cmd_sweep_length,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="carryscan", description="Radar + camera carried-object screening pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full pipeline: simulate through evaluate")
    run.add_argument("--scenario", required=True, help="scenario YAML path or bundled name")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--radar", help="radar config YAML overriding the scenario's")
    run.add_argument("--calibration", default=TRUE_HOMOGRAPHY,
                     help=f"correspondences file or '{TRUE_HOMOGRAPHY}' (default)")
    run.add_argument("--classifier", choices=CLASSIFIERS, default="energy")
    run.add_argument("--fusion", choices=FUSION_METHODS, default="knwltrf")
    run.add_argument("--p-thr", type=float, default=0.5, help="decision threshold on fused probability")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--frames", type=int, help="cap the number of simulated frames")
    run.add_argument("--dump", action="store_true", help="also write raw IF cubes and images")

    sim = sub.add_parser("simulate", help="write IF cubes, camera boxes, and ground truth")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--radar")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--frames", type=int)

    img = sub.add_parser("image", help="3D-image dumped IF cubes")
    img.add_argument("--cubes", required=True, help="directory of frame_*.cube files")
    img.add_argument("--out", required=True)
    img.add_argument("--radar")
    img.add_argument("--scenario", help="takes the radar config from a scenario")

    trk = sub.add_parser("track", help="track camera boxes and project to the radar plane")
    trk.add_argument("--dets", required=True, help="camera detections CSV")
    trk.add_argument("--out", required=True)
    trk.add_argument("--calibration", default=TRUE_HOMOGRAPHY)
    trk.add_argument("--scenario", help="camera truth for the homography sentinel and frame count")
    trk.add_argument("--images", help="directory of imaged frames for radar refinement")
    trk.add_argument("--radar")
    trk.add_argument("--frames", type=int)
    trk.add_argument("--seed", type=int, help=argparse.SUPPRESS)

    cal = sub.add_parser("calibrate", help="fit the pixel-to-plane homography")
    cal.add_argument("--correspondences", required=True, help="text file of 'u v x y' lines")
    cal.add_argument("--out", required=True)

    fus = sub.add_parser("fuse", help="fuse per-frame probabilities along tracks")
    fus.add_argument("--predictions", required=True)
    fus.add_argument("--tracks", required=True)
    fus.add_argument("--out", required=True)
    fus.add_argument("--fusion", choices=FUSION_METHODS, default="knwltrf")
    fus.add_argument("--p-thr", type=float, default=0.5)
    fus.add_argument("--scenario")
    fus.add_argument("--radar")

    ev = sub.add_parser("evaluate", help="score tracks and decisions against ground truth")
    ev.add_argument("--out", required=True, help="directory holding (and receiving) the artifacts")
    ev.add_argument("--gt")
    ev.add_argument("--tracks")
    ev.add_argument("--predictions")
    ev.add_argument("--fused")
    ev.add_argument("--fusion", choices=FUSION_METHODS, default="knwltrf")
    ev.add_argument("--p-thr", type=float, default=0.5)
    ev.add_argument("--scenario")
    ev.add_argument("--radar")

    swp = sub.add_parser("sweep-length", help="decision quality vs tracking length")
    swp.add_argument("--out", required=True)
    swp.add_argument("--seed", type=int, default=0)
    swp.add_argument("--frames", type=int, default=150)
    swp.add_argument("--scenarios", type=int, default=20)
    swp.add_argument("--subjects", type=int, default=10)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        _DISPATCH[args.command](args)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1 if e.stage == "config" else 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
