import dataclasses

import numpy as np
import pytest

from carryscan.config import C, RadarConfig, default_config
from carryscan.imaging import (
    CROP_SHAPE,
    crop_and_pad,
    form_virtual_array,
    image_3d,
    range_compensate,
)


def tone_cube(cfg, scatterers, n_chirps=2):
    """Hand-evaluated IF model: one complex tone per scatterer with the
    far-field steering phase applied per virtual element."""
    n_s = cfg.samples_per_chirp
    tx = cfg.tx_array()
    rx = cfg.rx_array()
    n = np.arange(n_s)
    cube = np.zeros((n_s, n_chirps, len(tx), len(rx)), dtype=np.complex128)
    for r, az_deg, el_deg, amp in scatterers:
        f_if = 2.0 * r * cfg.sweep_slope_hz_per_s / C
        u = np.sin(np.radians(az_deg)) * np.cos(np.radians(el_deg))
        w = np.sin(np.radians(el_deg))
        vx = tx[:, None, 0] + rx[None, :, 0]
        vz = tx[:, None, 1] + rx[None, :, 1]
        steer = np.exp(2j * np.pi * (vx * u + vz * w))
        fast = amp * np.exp(2j * np.pi * f_if * n / cfg.sample_rate_sps)
        cube += fast[:, None, None, None] * steer[None, None, :, :]
    return cube


def test_virtual_array_default_has_192_unique_elements():
    va = form_virtual_array(default_config())
    assert va.elements.shape == (192, 2)
    assert va.n_cols == 64
    assert va.n_rows == 3
    assert not va.has_duplicates


def test_virtual_array_matches_brute_force_pairwise_sums():
    cfg = default_config()
    va = form_virtual_array(cfg)
    brute = set()
    for txp in cfg.tx_positions:
        for rxp in cfg.rx_positions:
            brute.add((round(txp[0] + rxp[0], 9), round(txp[1] + rxp[1], 9)))
    got = {(round(x, 9), round(z, 9)) for x, z in va.elements}
    assert got == brute


def test_virtual_array_two_by_two_line():
    # TX at {0, d}, RX at {0, d/2} with d = 2 wavelengths.
    cfg = dataclasses.replace(
        default_config(),
        tx_positions=((0.0, 0.0), (2.0, 0.0)),
        rx_positions=((0.0, 0.0), (1.0, 0.0)),
    )
    va = form_virtual_array(cfg)
    assert sorted(va.elements[:, 0].tolist()) == [0.0, 1.0, 2.0, 3.0]
    assert not va.has_duplicates


def test_virtual_array_single_pair():
    cfg = dataclasses.replace(
        default_config(), tx_positions=((0.0, 0.0),), rx_positions=((0.0, 0.0),)
    )
    va = form_virtual_array(cfg)
    assert va.elements.shape == (1, 2)


def test_virtual_array_flags_duplicates():
    cfg = dataclasses.replace(
        default_config(),
        tx_positions=((0.0, 0.0), (1.0, 0.0)),
        rx_positions=((0.0, 0.0), (1.0, 0.0)),
    )
    va = form_virtual_array(cfg)
    assert va.has_duplicates
    assert va.elements.shape == (3, 2)


def test_image_dimensions_follow_fft_sizes():
    cfg = default_config()
    cube = image_3d(tone_cube(cfg, [(5.0, 0.0, 0.0, 1.0)]), cfg)
    assert cube.data.shape == (256, 128, 10)
    assert np.all(cube.data >= 0)


def test_range_peak_at_hand_computed_bin():
    # r = 5 m: bin = round(2*5*S/c * N_s/f_s) = round(84.27) = 84
    cfg = default_config()
    cube = image_3d(tone_cube(cfg, [(5.0, 0.0, 0.0, 1.0)]), cfg)
    profile = cube.data.sum(axis=(1, 2))
    assert abs(int(np.argmax(profile)) - 84) <= 1


def test_boresight_scatterer_peaks_at_zero_angle_bins():
    cfg = default_config()
    cube = image_3d(tone_cube(cfg, [(5.0, 0.0, 0.0, 1.0)]), cfg)
    rb = int(np.argmax(cube.data.sum(axis=(1, 2))))
    az_profile = cube.data[rb].sum(axis=1)
    el_profile = cube.data[rb].sum(axis=0)
    assert int(np.argmax(az_profile)) == 64  # u = 0 bin after fftshift
    assert int(np.argmax(el_profile)) == 5  # w = 0 bin after fftshift
    assert cube.azimuth_axis_deg[64] == pytest.approx(0.0)
    assert cube.elevation_axis_deg[5] == pytest.approx(0.0)


def test_azimuth_peak_matches_steering_prediction():
    cfg = default_config()
    rng = np.random.default_rng(11)
    for az in rng.uniform(-40, 40, size=8):
        cube = image_3d(tone_cube(cfg, [(6.0, az, 0.0, 1.0)], n_chirps=1), cfg)
        rb = int(np.argmax(cube.data.sum(axis=(1, 2))))
        peak = int(np.argmax(cube.data[rb].sum(axis=1)))
        predicted = 64 + int(np.round(64 * np.sin(np.radians(az))))
        assert abs(peak - predicted) <= 1


def test_elevation_peak_matches_steering_prediction():
    cfg = default_config()
    el = np.degrees(np.arcsin(0.2))  # two elevation bins above boresight
    cube = image_3d(tone_cube(cfg, [(6.0, 0.0, el, 1.0)], n_chirps=1), cfg)
    rb = int(np.argmax(cube.data.sum(axis=(1, 2))))
    assert int(np.argmax(cube.data[rb].sum(axis=0))) == 7


def test_zero_cube_images_to_zero():
    cfg = default_config()
    cube = image_3d(np.zeros((256, 2, 12, 16), dtype=complex), cfg)
    assert np.all(cube.data == 0)


def test_doubling_amplitude_doubles_magnitudes():
    cfg = default_config()
    one = image_3d(tone_cube(cfg, [(4.0, 10.0, 0.0, 1.0)], n_chirps=1), cfg)
    two = image_3d(tone_cube(cfg, [(4.0, 10.0, 0.0, 2.0)], n_chirps=1), cfg)
    np.testing.assert_allclose(two.data, 2 * one.data, rtol=1e-10, atol=1e-9)


def test_identical_chirps_scale_magnitudes_by_chirp_count():
    cfg = default_config()
    single = tone_cube(cfg, [(4.0, -15.0, 0.0, 1.0)], n_chirps=1)
    stacked = np.repeat(single, 5, axis=1)
    one = image_3d(single, cfg)
    five = image_3d(stacked, cfg)
    np.testing.assert_allclose(five.data, 5 * one.data, rtol=1e-10, atol=1e-9)


def test_hann_window_keeps_peak_in_place():
    cfg = default_config()
    cube = image_3d(tone_cube(cfg, [(5.0, 0.0, 0.0, 1.0)], n_chirps=1), cfg, window="hann")
    assert abs(int(np.argmax(cube.data.sum(axis=(1, 2)))) - 84) <= 1


def test_mismatched_channel_count_rejected():
    cfg = default_config()
    with pytest.raises(ValueError, match="channel count"):
        image_3d(np.zeros((256, 2, 3, 16), dtype=complex), cfg)


def test_crop_interior_matches_direct_slice():
    cfg = default_config()
    cube = image_3d(tone_cube(cfg, [(5.0, 0.0, 0.0, 1.0)]), cfg)
    crop = crop_and_pad(cube, 5.0, 0.0)
    assert crop.data.shape == CROP_SHAPE
    rb = int(np.argmin(np.abs(cube.range_axis_m - 5.0)))
    ab = int(np.argmin(np.abs(cube.azimuth_axis_deg - 0.0)))
    direct = cube.data[rb - 12 : rb + 12, ab - 12 : ab + 12, :]
    np.testing.assert_array_equal(crop.data, direct)


def test_crop_near_edge_zero_pads():
    cfg = default_config()
    cube = image_3d(tone_cube(cfg, [(0.3, 0.0, 0.0, 1.0)]), cfg)
    crop = crop_and_pad(cube, 0.05, 0.0)
    assert crop.data.shape == CROP_SHAPE
    assert np.all(crop.data[:11] == 0)  # rows below range bin 0


def test_crop_center_outside_extent_rejected():
    cfg = default_config()
    cube = image_3d(np.zeros((256, 1, 12, 16), dtype=complex), cfg)
    with pytest.raises(ValueError, match="outside cube extent"):
        crop_and_pad(cube, 40.0, 0.0)
    with pytest.raises(ValueError, match="outside cube extent"):
        crop_and_pad(cube, -1.0, 0.0)


def test_range_compensation_multiplies_by_center_range_squared():
    cfg = default_config()
    cube = image_3d(tone_cube(cfg, [(5.0, 0.0, 0.0, 1.0)]), cfg)
    crop = crop_and_pad(cube, 2.0, 0.0)
    comp = range_compensate(crop)
    np.testing.assert_allclose(comp.data, 4.0 * crop.data)
    assert comp.range_compensated


def test_range_compensation_rejects_nonpositive_center():
    cfg = default_config()
    cube = image_3d(np.zeros((256, 1, 12, 16), dtype=complex), cfg)
    crop = crop_and_pad(cube, 0.0, 0.0)
    with pytest.raises(ValueError, match="positive"):
        range_compensate(crop)
