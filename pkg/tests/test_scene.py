"""Simulator checks: tone frequency against the beat-frequency formula,
spreading loss, camera geometry against the plane homography, ghost
mirroring, determinism, and scenario serialization."""

import dataclasses
import math

import numpy as np
import pytest

from carryscan.calib import estimate_homography, occupancy_region, plane_to_image_homography, project
from carryscan.config import RadarConfig, derive_specs
from carryscan.cubeio import read_cube, write_cube
from carryscan.scene import (
    CameraModel,
    ClutterPoint,
    GhostEpisode,
    GroundTruth,
    RADAR_HEIGHT_M,
    Scenario,
    Subject,
    Waypoint,
    calibration_correspondences,
    synth_camera_detections,
    ground_truth,
    load_scenario,
    make_demo_scenario,
    make_ghost_scenario,
    project_point,
    save_scenario,
    scatterers_at,
    subject_box,
    subject_position,
    subject_velocity,
    synth_if_frame,
)


def single_channel_radar(noise_power=0.0, chirps=2):
    return RadarConfig(
        carrier_frequency_hz=77e9,
        bandwidth_hz=2.5e9,
        sweep_slope_hz_per_s=79e12,
        sample_rate_sps=8e6,
        chirps_per_frame=chirps,
        samples_per_chirp=256,
        chirp_duration_s=540e-6,
        frame_duration_s=1.0 / 30.0,
        noise_power=noise_power,
        tx_positions=((0.0, 0.0),),
        rx_positions=((0.0, 0.0),),
    )


def point_scenario(x, y, seed=0, noise_power=0.0, carried=()):
    # torso at waist height == radar height, so slant range equals hypot(x, y)
    return Scenario(
        name="point",
        seed=seed,
        n_frames=4,
        radar=single_channel_radar(noise_power),
        subjects=(
            Subject(sid=1, carried=carried, n_scatterers=1, waypoints=(Waypoint(0.0, x, y),)),
        ),
    )


class TestCubeIO:
    def test_complex_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        cube = (rng.normal(size=(3, 4, 5)) + 1j * rng.normal(size=(3, 4, 5))).astype(np.complex64)
        path = tmp_path / "c.cube"
        write_cube(path, cube)
        back = read_cube(path)
        assert back.dtype == np.complex64
        assert np.array_equal(back, cube)

    def test_float_round_trip(self, tmp_path):
        cube = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
        path = tmp_path / "f.cube"
        write_cube(path, cube)
        back = read_cube(path)
        assert back.dtype == np.float32
        assert np.array_equal(back, cube)

    def test_four_dims(self, tmp_path):
        cube = np.zeros((2, 3, 4, 5), dtype=np.float32)
        write_cube(tmp_path / "d.cube", cube)
        assert read_cube(tmp_path / "d.cube").shape == (2, 3, 4, 5)

    def test_too_many_dims(self, tmp_path):
        with pytest.raises(ValueError, match="dimensions"):
            write_cube(tmp_path / "x.cube", np.zeros((1, 1, 1, 1, 1)))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.cube"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(ValueError, match="not a cube file"):
            read_cube(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.cube"
        write_cube(path, np.ones((4, 4), dtype=np.float32))
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(ValueError, match="truncated"):
            read_cube(path)


class TestTrajectory:
    def test_midpoint_interpolation(self):
        s = Subject(sid=1, waypoints=(Waypoint(0.0, 0.0, 0.0), Waypoint(2.0, 2.0, 4.0)))
        assert subject_position(s, 1.0) == pytest.approx((1.0, 2.0))

    def test_clamped_outside_path(self):
        s = Subject(sid=1, waypoints=(Waypoint(1.0, 3.0, 5.0), Waypoint(2.0, 4.0, 6.0)))
        assert subject_position(s, 0.0) == pytest.approx((3.0, 5.0))
        assert subject_position(s, 9.0) == pytest.approx((4.0, 6.0))

    def test_velocity_on_segment(self):
        s = Subject(sid=1, waypoints=(Waypoint(0.0, 0.0, 0.0), Waypoint(2.0, 2.0, 4.0)))
        assert subject_velocity(s, 1.0) == pytest.approx((1.0, 2.0))

    def test_velocity_zero_when_parked(self):
        s = Subject(sid=1, waypoints=(Waypoint(0.0, 1.0, 1.0),))
        assert subject_velocity(s, 1.0) == (0.0, 0.0)

    def test_unordered_waypoints_rejected(self):
        with pytest.raises(ValueError, match="time-ordered"):
            Subject(sid=1, waypoints=(Waypoint(1.0, 0, 0), Waypoint(0.0, 1, 1)))

    def test_ground_truth_tracks_position(self):
        sc = point_scenario(0.0, 5.0)
        gt = ground_truth(sc, 2)
        assert gt == [GroundTruth(sid=1, x_m=0.0, y_m=5.0, carried=())]


class TestSynthesis:
    def test_beat_frequency_bin(self):
        # r = 5 m: beat 2*r*S/c = 2.633 MHz -> bin round(f/fs * Ns) = 84
        sc = point_scenario(0.0, 5.0)
        cube = synth_if_frame(sc, 0)
        assert cube.shape == (256, 2, 1, 1)  # fast, slow, tx, rx
        spec = np.abs(np.fft.fft(cube[:, 0, 0, 0]))
        assert int(np.argmax(spec[:128])) == 84

    def test_chirps_share_the_tone(self):
        cube = synth_if_frame(point_scenario(0.0, 5.0), 0)
        assert np.array_equal(cube[:, 0], cube[:, 1])

    def test_spreading_loss_ratio(self):
        near = synth_if_frame(point_scenario(0.0, 2.5), 0)
        far = synth_if_frame(point_scenario(0.0, 5.0), 0)
        ratio = np.abs(near).max() / np.abs(far).max()
        assert ratio == pytest.approx(4.0, rel=1e-6)

    def test_deterministic_with_noise(self):
        sc = point_scenario(1.0, 6.0, seed=9, noise_power=1e-5)
        a = synth_if_frame(sc, 3)
        b = synth_if_frame(sc, 3)
        assert a.dtype == np.complex64
        assert np.array_equal(a, b)

    def test_noise_differs_across_frames(self):
        sc = point_scenario(1.0, 6.0, seed=9, noise_power=1e-5)
        assert not np.array_equal(synth_if_frame(sc, 0), synth_if_frame(sc, 1))

    def test_beyond_max_range_dropped(self):
        sc = point_scenario(0.0, 20.0)
        assert derive_specs(sc.radar).max_range_m < 20.0
        with pytest.warns(RuntimeWarning, match="unambiguous range"):
            cube = synth_if_frame(sc, 0)
        assert np.abs(cube).max() == 0.0

    def test_carried_object_adds_scatterer(self):
        plain = scatterers_at(point_scenario(0.0, 5.0), 0)
        armed = scatterers_at(point_scenario(0.0, 5.0, carried="laptop"), 0)
        assert armed.shape[0] == plain.shape[0] + 1

    def ghost_fixture(self, episode):
        return Scenario(
            name="ghost",
            seed=4,
            n_frames=60,
            radar=single_channel_radar(),
            subjects=(Subject(sid=1, n_scatterers=1, waypoints=(Waypoint(0.0, 1.0, 6.0),)),),
            ghosts=(episode,),
        )

    def test_ghost_is_mirrored(self):
        ep = GhostEpisode(source_sid=1, wall_x_m=2.5, start_frame=0, n_frames=60, amplitude=0.5)
        rows = scatterers_at(self.ghost_fixture(ep), 10)
        # torso has unit amplitude; its ghost carries the episode scaling
        torso = [r for r in rows if abs(r[3] - 1.0) < 1e-12]
        mirrored = [r for r in rows if abs(r[3] - 0.5) < 1e-12]
        assert any(abs(r[0] - 1.0) < 1e-9 and abs(r[1] - 6.0) < 1e-9 for r in torso)
        assert any(abs(r[0] - (2 * 2.5 - 1.0)) < 1e-9 and abs(r[1] - 6.0) < 1e-9 for r in mirrored)

    def test_ghost_outside_episode_absent(self):
        ep = GhostEpisode(source_sid=1, wall_x_m=2.5, start_frame=50, n_frames=10, amplitude=0.5)
        sc = self.ghost_fixture(ep)
        n_in = scatterers_at(sc, 55).shape[0]
        n_out = scatterers_at(sc, 5).shape[0]
        assert n_in > n_out

    def test_rate_spawned_ghosts(self):
        from carryscan.scene import ghost_episodes

        sc = make_ghost_scenario(seed=4)
        eps = ghost_episodes(sc)
        assert len(eps) > len(sc.ghosts)  # the rate spawner fired at least once
        assert eps == ghost_episodes(make_ghost_scenario(seed=4))
        spawned = [e for e in eps if e not in sc.ghosts]
        for ep in spawned:
            assert 30 <= ep.n_frames <= 90
            assert 0 <= ep.start_frame < sc.n_frames
            assert ep.source_sid in {s.sid for s in sc.subjects}
        # episodes spawn sequentially, never overlapping
        spans = sorted((e.start_frame, e.start_frame + e.n_frames) for e in spawned)
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            assert a1 <= b0


class TestCamera:
    CAM = CameraModel()

    def test_matches_plane_homography(self):
        h = plane_to_image_homography(
            self.CAM.focal_px,
            (self.CAM.cx_px, self.CAM.cy_px),
            self.CAM.height_m,
            self.CAM.tilt_deg,
        )
        for x, y in [(0.0, 4.0), (1.5, 7.0), (-2.0, 5.5)]:
            assert project_point(self.CAM, x, y, 0.0) == pytest.approx(project(h, (x, y)), abs=1e-9)

    def test_noiseless_detection_is_exact(self):
        sc = Scenario(
            name="cam",
            seed=0,
            n_frames=2,
            radar=single_channel_radar(),
            subjects=(Subject(sid=1, waypoints=(Waypoint(0.0, 1.0, 6.0),)),),
            camera=CameraModel(),
        )
        dets = synth_camera_detections(sc, 0)
        assert len(dets) == 1
        assert dets[0].box == pytest.approx(subject_box(CameraModel(), 1.0, 6.0, 1.7))

    def test_box_shrinks_with_range(self):
        near = subject_box(self.CAM, 0.0, 4.0, 1.7)
        far = subject_box(self.CAM, 0.0, 9.0, 1.7)
        assert far[3] < near[3]

    def test_all_missed(self):
        sc = Scenario(
            name="cam",
            seed=3,
            n_frames=2,
            radar=single_channel_radar(),
            subjects=(Subject(sid=1, waypoints=(Waypoint(0.0, 0.0, 6.0),)),),
            camera=CameraModel(miss_prob=1.0),
        )
        assert synth_camera_detections(sc, 0) == []

    def test_no_camera_no_detections(self):
        assert synth_camera_detections(point_scenario(0.0, 5.0), 0) == []

    def test_deterministic(self):
        sc = dataclasses.replace(
            make_demo_scenario(seed=11), radar=single_channel_radar()
        )
        a = synth_camera_detections(sc, 7)
        b = synth_camera_detections(sc, 7)
        assert a == b

    def test_occupancy_round_trip(self):
        # camera box -> fitted floor homography -> occupancy centre
        image, plane = calibration_correspondences(
            self.CAM, xs=np.linspace(-2.5, 2.5, 6), ys=np.linspace(2.5, 8.0, 4)
        )
        h = estimate_homography(image, plane)
        box = subject_box(self.CAM, 1.2, 5.0, 1.7)
        region = occupancy_region(h, box)
        assert region.center_x_m == pytest.approx(1.2, abs=1e-6)
        assert region.center_y_m == pytest.approx(5.0, abs=1e-6)


class TestScenarioIO:
    def test_yaml_round_trip(self, tmp_path):
        sc = make_ghost_scenario(seed=21)
        path = tmp_path / "sc.yaml"
        save_scenario(sc, path)
        assert load_scenario(path) == sc

    def test_demo_round_trip(self, tmp_path):
        sc = make_demo_scenario(seed=5, carried=(("phone",), (), ("knife", "laptop")))
        path = tmp_path / "demo.yaml"
        save_scenario(sc, path)
        assert load_scenario(path) == sc

    def test_round_trip_keeps_multipath_ghost_rate(self, tmp_path):
        sc = make_ghost_scenario(seed=3, multipath_ghost_rate=0.12)
        save_scenario(sc, tmp_path / "g.yaml")
        back = load_scenario(tmp_path / "g.yaml")
        assert back.multipath_ghost_rate == pytest.approx(0.12)
        assert back.ghost_wall_x_m == pytest.approx(sc.ghost_wall_x_m)

    def test_missing_key_diagnostic(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("name: x\nseed: 1\n")
        with pytest.raises(ValueError, match="missing scenario key"):
            load_scenario(path)

    def test_duplicate_sids_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            Scenario(
                name="dup",
                seed=0,
                n_frames=1,
                radar=single_channel_radar(),
                subjects=(
                    Subject(sid=1, waypoints=(Waypoint(0, 0, 5),)),
                    Subject(sid=1, waypoints=(Waypoint(0, 1, 5),)),
                ),
            )

    def test_ghost_unknown_subject_rejected(self):
        with pytest.raises(ValueError, match="unknown subject"):
            Scenario(
                name="g",
                seed=0,
                n_frames=1,
                radar=single_channel_radar(),
                subjects=(Subject(sid=1, waypoints=(Waypoint(0, 0, 5),)),),
                ghosts=(GhostEpisode(2, 2.0, 0, 5, 0.5),),
            )

    def test_unknown_carried_rejected(self):
        with pytest.raises(ValueError, match="carried"):
            Subject(sid=1, carried="anvil", waypoints=(Waypoint(0, 0, 5),))
