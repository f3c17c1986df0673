import numpy as np
import pytest

from carryscan.calib import (
    OccupancyRegion,
    OffsetState,
    estimate_homography,
    leave_one_out_errors,
    load_correspondences,
    occupancy_region,
    plane_to_image_homography,
    project,
    refine_center,
    region_polar,
)
from carryscan.imaging import RadarCube3D


def camera_h():
    """Pixel -> plane map of the synthetic test camera."""
    return np.linalg.inv(plane_to_image_homography(500.0, (320.0, 240.0), 2.0, 10.0))


def grid_points(h_img, nx=6, ny=3, y_range=(2.5, 8.0), x_range=(-2.5, 2.5)):
    plane = [
        (x, y)
        for y in np.linspace(y_range[0], y_range[1], ny)
        for x in np.linspace(x_range[0], x_range[1], nx)
    ]
    image = []
    for x, y in plane:
        vec = h_img @ np.array([x, y, 1.0])
        image.append((vec[0] / vec[2], vec[1] / vec[2]))
    return image, plane


def test_estimate_recovers_forward_projection_exactly():
    h_img = plane_to_image_homography(500.0, (320.0, 240.0), 2.0, 10.0)
    image, plane = grid_points(h_img)
    h = estimate_homography(image, plane)
    for (u, v), (x, y) in zip(image, plane):
        px, py = project(h, (u, v))
        assert np.hypot(px - x, py - y) < 1e-9


def test_estimate_is_canonically_normalized():
    h_img = plane_to_image_homography(500.0, (320.0, 240.0), 2.0, 10.0)
    image, plane = grid_points(h_img)
    h = estimate_homography(image, plane)
    assert np.linalg.norm(h) == pytest.approx(1.0)
    assert h[2, 2] >= 0


def test_estimate_identity_map():
    pts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, 3.0)]
    h = estimate_homography(pts, pts)
    for p in [(0.3, 0.7), (5.0, -2.0)]:
        assert project(h, p) == pytest.approx(p, abs=1e-9)


def test_estimate_requires_four_points():
    pts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
    with pytest.raises(ValueError, match="insufficient correspondences"):
        estimate_homography(pts, pts)


def test_estimate_rejects_collinear_configuration():
    image = [(float(i), float(i)) for i in range(6)]
    plane = [(float(i), 2.0 * i) for i in range(6)]
    with pytest.raises(ValueError, match="degenerate"):
        estimate_homography(image, plane)


def test_scaled_plane_scales_projections():
    h_img = plane_to_image_homography(500.0, (320.0, 240.0), 2.0, 10.0)
    image, plane = grid_points(h_img)
    h1 = estimate_homography(image, plane)
    h3 = estimate_homography(image, [(3 * x, 3 * y) for x, y in plane])
    px, py = project(h1, image[4])
    qx, qy = project(h3, image[4])
    assert (qx, qy) == pytest.approx((3 * px, 3 * py), abs=1e-8)


def test_project_point_at_infinity_rejected():
    h = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(ValueError, match="infinity"):
        project(h, (1.0, 1.0))


def test_noisy_leave_one_out_mean_error_small():
    h_img = plane_to_image_homography(500.0, (320.0, 240.0), 2.0, 10.0)
    image, plane = grid_points(h_img)  # 18 points
    rng = np.random.default_rng(3)
    noisy = [(u + rng.normal(0, 2.0), v + rng.normal(0, 2.0)) for u, v in image]
    errors = leave_one_out_errors(noisy, plane)
    assert np.isnan(errors).sum() == 0
    assert np.nanmean(errors) < 0.15


def test_leave_one_out_improves_with_more_points():
    h_img = plane_to_image_homography(500.0, (320.0, 240.0), 2.0, 10.0)
    image18, plane18 = grid_points(h_img, nx=6, ny=3)
    image8, plane8 = grid_points(h_img, nx=4, ny=2)
    rng = np.random.default_rng(5)

    def mean_loo(image, plane):
        noisy = [(u + rng.normal(0, 2.0), v + rng.normal(0, 2.0)) for u, v in image]
        return np.nanmean(leave_one_out_errors(noisy, plane))

    assert mean_loo(image18, plane18) < mean_loo(image8, plane8)


def test_occupancy_region_under_identity_map():
    pts = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0), (3.0, 7.0)]
    h = estimate_homography(pts, pts)
    region = occupancy_region(h, (10.0, 20.0, 4.0, 6.0))
    assert region.center_x_m == pytest.approx(10.0, abs=1e-9)
    assert region.center_y_m == pytest.approx(23.0, abs=1e-9)  # bottom edge of the box
    assert region.width_m == pytest.approx(4.0, abs=1e-9)
    assert region.length_m == 1.0


def test_occupancy_region_recovers_subject_position():
    h_img = plane_to_image_homography(500.0, (320.0, 240.0), 2.0, 10.0)
    h = np.linalg.inv(h_img)
    x, y = 1.2, 5.0
    vec = h_img @ np.array([x, y, 1.0])
    u, v_bottom = vec[0] / vec[2], vec[1] / vec[2]
    box = (u, v_bottom - 60.0, 40.0, 120.0)  # box whose bottom edge sits at v_bottom
    region = occupancy_region(h, box)
    assert np.hypot(region.center_x_m - x, region.center_y_m - y) < 1e-9


def test_region_polar_hand_values():
    r, az = region_polar(OccupancyRegion(3.0, 4.0, 1.0, 1.0))
    assert r == pytest.approx(5.0)
    assert az == pytest.approx(np.degrees(np.arctan2(3.0, 4.0)))


def synthetic_cube(peaks):
    """Zero cube with unit peaks at given (x, y) plane positions."""
    range_axis = np.arange(0.0, 15.0, 0.03)
    az_axis = np.linspace(-60.0, 60.0, 241)
    data = np.zeros((range_axis.size, az_axis.size, 10))
    for x, y, mag in peaks:
        r = np.hypot(x, y)
        az = np.degrees(np.arctan2(x, y))
        ri = int(np.argmin(np.abs(range_axis - r)))
        ai = int(np.argmin(np.abs(az_axis - az)))
        data[ri, ai, 5] = mag
    return RadarCube3D(
        data=data,
        range_axis_m=range_axis,
        azimuth_axis_deg=az_axis,
        elevation_axis_deg=np.linspace(-30, 24, 10),
    )


def test_refine_center_zero_bias_leaves_center_near_truth():
    cube = synthetic_cube([(0.5, 5.0, 10.0)])
    region = OccupancyRegion(0.5, 5.0, 0.6, 1.0)
    refined, state = refine_center(region, cube)
    assert np.hypot(refined.center_x_m - 0.5, refined.center_y_m - 5.0) < 0.06
    assert len(state.samples) == 1


def test_refine_center_learns_constant_bias():
    # At 8 m a 0.2 m cross-range bias is ~1.4 deg, inside the snap window.
    cube = synthetic_cube([(0.5, 8.0, 10.0)])
    state = OffsetState()
    for _ in range(30):
        # Raw projection is biased 0.2 m in x; the cube peak sits at truth.
        _, state = refine_center(OccupancyRegion(0.3, 8.0, 0.6, 1.0), cube, state)
    dx, dy = state.mean()
    assert dx == pytest.approx(0.2, abs=0.05)
    assert dy == pytest.approx(0.0, abs=0.05)


def test_refine_center_passthrough_when_no_peak():
    cube = synthetic_cube([])
    region = OccupancyRegion(0.5, 5.0, 0.6, 1.0)
    refined, state = refine_center(region, cube)
    assert refined == region
    assert state.samples == ()


def test_refine_center_passthrough_when_window_empty():
    cube = synthetic_cube([(0.5, 5.0, 10.0)])
    region = OccupancyRegion(-14.0, 0.5, 0.6, 1.0)  # azimuth far outside the axis
    refined, state = refine_center(region, cube)
    assert refined == region
    assert state.samples == ()


def test_offset_state_window_is_bounded():
    state = OffsetState(window=3)
    for i in range(5):
        state = state.updated(float(i), 0.0)
    assert len(state.samples) == 3
    assert state.mean()[0] == pytest.approx(3.0)  # mean of 2, 3, 4


def test_load_correspondences(tmp_path):
    path = tmp_path / "calib.txt"
    path.write_text("# u v x y\n320 400 0.0 3.0\n100 380 -1.5 3.5\n")
    image, plane = load_correspondences(str(path))
    assert image == [(320.0, 400.0), (100.0, 380.0)]
    assert plane == [(0.0, 3.0), (-1.5, 3.5)]


def test_load_correspondences_rejects_short_lines(tmp_path):
    path = tmp_path / "calib.txt"
    path.write_text("1 2 3\n")
    with pytest.raises(ValueError, match="expected"):
        load_correspondences(str(path))
