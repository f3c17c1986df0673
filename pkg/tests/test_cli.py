"""CLI contract: exit codes, bundled input names, staged subcommands, and the
printed metrics table."""

import pytest

from carryscan import make_demo_scenario, save_scenario
from carryscan.cli import main, resolve_input


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    scenario = root / "scene.yaml"
    save_scenario(make_demo_scenario(seed=5, n_frames=30), scenario)
    out = root / "run"
    code = main([
        "run", "--scenario", str(scenario), "--out", str(out),
        "--classifier", "oracle", "--dump",
    ])
    return root, scenario, out, code


class TestRun:
    def test_exit_zero_and_artifacts(self, cli_run):
        _, _, out, code = cli_run
        assert code == 0
        for name in ("gt.csv", "camera_dets.csv", "tracks.csv", "predictions.csv",
                     "fused.csv", "metrics.csv", "report.txt"):
            assert (out / name).is_file(), name

    def test_prints_metrics_table(self, cli_run, capsys):
        root, scenario, out, _ = cli_run
        code = main(["run", "--scenario", str(scenario),
                     "--out", str(root / "run2"), "--classifier", "oracle"])
        assert code == 0
        shown = capsys.readouterr().out
        assert "macro_accuracy" in shown
        assert "track_miss_rate_frame" in shown

    def test_rerun_metrics_identical(self, cli_run):
        root, _, out, _ = cli_run
        a = (out / "metrics.csv").read_bytes()
        b = (root / "run2" / "metrics.csv").read_bytes()
        assert a == b

    def test_missing_scenario_exits_one_and_names_path(self, capsys):
        code = main(["run", "--scenario", "/nowhere/scene.yaml", "--out", "/tmp/x"])
        assert code == 1
        assert "/nowhere/scene.yaml" in capsys.readouterr().err

    def test_bad_flag_value_exits_one(self, capsys):
        code = main(["run", "--scenario", "demo", "--out", "/tmp/x",
                     "--classifier", "cnn"])
        assert code == 1

    def test_bad_p_thr_exits_one(self, tmp_path, capsys):
        code = main(["run", "--scenario", "demo", "--out", str(tmp_path),
                     "--p-thr", "1.5", "--frames", "4"])
        assert code == 1


class TestStagedSubcommands:
    def test_image_track_fuse_evaluate_chain(self, cli_run, capsys):
        root, scenario, out, _ = cli_run
        staged = root / "staged"
        assert main(["image", "--cubes", str(out / "cubes"),
                     "--scenario", str(scenario), "--out", str(staged)]) == 0
        assert main(["track", "--dets", str(out / "camera_dets.csv"),
                     "--scenario", str(scenario),
                     "--images", str(staged / "images"),
                     "--out", str(staged)]) == 0
        assert main(["fuse", "--predictions", str(out / "predictions.csv"),
                     "--tracks", str(staged / "tracks.csv"),
                     "--out", str(staged)]) == 0
        assert main(["evaluate", "--out", str(staged),
                     "--gt", str(out / "gt.csv"),
                     "--predictions", str(out / "predictions.csv")]) == 0
        for name in ("tracks.csv", "fused.csv", "metrics.csv", "report.txt"):
            assert (staged / name).read_bytes() == (out / name).read_bytes(), name

    def test_image_without_radar_source_exits_one(self, cli_run, capsys):
        root, _, out, _ = cli_run
        code = main(["image", "--cubes", str(out / "cubes"),
                     "--out", str(root / "no_radar")])
        assert code == 1

    def test_simulate_writes_inputs(self, cli_run):
        root, scenario, _, _ = cli_run
        out = root / "sim"
        assert main(["simulate", "--scenario", str(scenario), "--out", str(out),
                     "--frames", "6"]) == 0
        assert (out / "gt.csv").is_file()
        assert (out / "camera_dets.csv").is_file()
        assert len(list((out / "cubes").glob("*.cube"))) == 6

    def test_calibrate_bundled_points(self, tmp_path, capsys):
        code = main(["calibrate", "--correspondences", "calibration-points",
                     "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "homography.csv").is_file()
        assert (tmp_path / "calib_errors.csv").is_file()
        assert "mean" in capsys.readouterr().out

    def test_sweep_length_small(self, tmp_path):
        code = main(["sweep-length", "--out", str(tmp_path), "--scenarios", "3",
                     "--subjects", "4", "--frames", "40", "--seed", "2"])
        assert code == 0
        sweep = (tmp_path / "sweep.csv").read_text().strip().splitlines()
        assert sweep[0] == "method,length,fpr,miss_rate,accuracy"
        assert len(sweep) > 2
        assert (tmp_path / "fig_sweep.png").stat().st_size > 0


class TestBundledInputs:
    def test_names_resolve_to_files(self):
        import os

        for name in ("demo", "ghost", "default-radar", "calibration-points"):
            assert os.path.isfile(resolve_input(name)), name

    def test_real_paths_pass_through(self, tmp_path):
        p = tmp_path / "x.yaml"
        p.write_text("name: x\n")
        assert resolve_input(str(p)) == str(p)

    def test_unknown_name_lists_bundled(self):
        with pytest.raises(FileNotFoundError, match="demo"):
            resolve_input("no-such-input")
