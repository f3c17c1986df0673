"""3D radar imaging: virtual array formation and the range/azimuth/elevation FFTs.

The virtual array is the spatial convolution of the TX and RX layouts
(pairwise coordinate sums, wavelength units). Images are built per chirp with
a fast-time FFT, a horizontal-aperture FFT and a vertical-aperture FFT, then
integrated noncoherently by summing magnitudes across chirps.
"""

from __future__ import annotations

import dataclasses
from typing import Optional, Tuple

import numpy as np

from carryscan.config import RadarConfig, derive_specs

CROP_SHAPE = (24, 24, 10)  # (range, azimuth, elevation) bins fed downstream


@dataclasses.dataclass
class VirtualArray:
    elements: np.ndarray  # (n_unique, 2) wavelength coords, row-major by (z, x)
    row_index: np.ndarray  # (n_tx, n_rx) vertical grid index per channel pair
    col_index: np.ndarray  # (n_tx, n_rx) horizontal grid index per channel pair
    grid_x: np.ndarray  # (n_cols,) unique horizontal coords
    grid_z: np.ndarray  # (n_rows,) unique vertical coords
    has_duplicates: bool

    @property
    def n_rows(self) -> int:
        return self.grid_z.size

    @property
    def n_cols(self) -> int:
        return self.grid_x.size


def form_virtual_array(cfg: RadarConfig) -> VirtualArray:
    """Enumerate virtual elements as pairwise TX+RX coordinate sums."""
    tx = cfg.tx_array()
    rx = cfg.rx_array()
    vx = np.round(tx[:, None, 0] + rx[None, :, 0], 9)
    vz = np.round(tx[:, None, 1] + rx[None, :, 1], 9)
    grid_x, col_index = np.unique(vx, return_inverse=True)
    grid_z, row_index = np.unique(vz, return_inverse=True)
    col_index = col_index.reshape(vx.shape)
    row_index = row_index.reshape(vz.shape)
    flat = row_index * grid_x.size + col_index
    unique_flat = np.unique(flat)
    elements = np.column_stack(
        (grid_x[unique_flat % grid_x.size], grid_z[unique_flat // grid_x.size])
    )
    return VirtualArray(
        elements=elements,
        row_index=row_index,
        col_index=col_index,
        grid_x=grid_x,
        grid_z=grid_z,
        has_duplicates=unique_flat.size < flat.size,
    )


@dataclasses.dataclass
class RadarCube3D:
    data: np.ndarray  # (n_range, n_azimuth, n_elevation) magnitudes, >= 0
    range_axis_m: np.ndarray
    azimuth_axis_deg: np.ndarray
    elevation_axis_deg: np.ndarray


@dataclasses.dataclass
class CroppedCube:
    data: np.ndarray  # CROP_SHAPE magnitudes
    center_range_m: float
    center_azimuth_deg: float
    range_compensated: bool = False


def _fast_time_window(n: int, kind: str) -> np.ndarray:
    if kind == "rect":
        return np.ones(n)
    if kind == "hann":
        return np.hanning(n)
    raise ValueError(f"unknown window {kind!r}")


def image_axes(
    cfg: RadarConfig,
    azimuth_fft: Optional[int] = None,
    elevation_fft: Optional[int] = None,
    n_range: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The (range, azimuth, elevation) axes image_3d attaches to its output.

    Exposed so a magnitude volume loaded from disk can be rebuilt into a
    RadarCube3D with exactly the axes the in-memory path would carry.
    """
    specs = derive_specs(cfg)
    n_az = int(azimuth_fft or specs.azimuth_bins)
    n_el = int(elevation_fft or specs.elevation_bins)
    n_r = int(n_range or cfg.samples_per_chirp)
    u = 2.0 * np.fft.fftshift(np.fft.fftfreq(n_az))
    w = np.fft.fftshift(np.fft.fftfreq(n_el))
    return (
        np.arange(n_r) * specs.range_bin_width_m,
        np.degrees(np.arcsin(u)),
        np.degrees(np.arcsin(w)),
    )


def image_3d(
    if_cube: np.ndarray,
    cfg: RadarConfig,
    varray: Optional[VirtualArray] = None,
    window: str = "rect",
    azimuth_fft: Optional[int] = None,
    elevation_fft: Optional[int] = None,
    chirp_block: int = 16,
) -> RadarCube3D:
    """Range -> azimuth -> elevation FFT stack, magnitude-summed over chirps.

    if_cube is complex with shape (samples_per_chirp, chirps, n_tx, n_rx).
    """
    specs = derive_specs(cfg)
    if varray is None:
        varray = form_virtual_array(cfg)
    n_az = int(azimuth_fft or specs.azimuth_bins)
    n_el = int(elevation_fft or specs.elevation_bins)
    n_s, n_c, n_tx, n_rx = if_cube.shape
    if (n_tx, n_rx) != varray.row_index.shape:
        raise ValueError("IF cube channel count does not match the array geometry")

    win = _fast_time_window(n_s, window).astype(if_cube.real.dtype)
    flat_idx = (varray.row_index * varray.n_cols + varray.col_index).ravel()
    n_cells = varray.n_rows * varray.n_cols
    counts = np.bincount(flat_idx, minlength=n_cells).astype(if_cube.real.dtype)

    out = np.zeros((n_s, n_el, n_az), dtype=np.float64)
    for start in range(0, n_c, chirp_block):
        blk = if_cube[:, start : start + chirp_block]
        r_fft = np.fft.fft(blk * win[:, None, None, None], axis=0)
        r_fft = r_fft.reshape(n_s, blk.shape[1], n_tx * n_rx)
        grid = np.zeros((n_s, blk.shape[1], n_cells), dtype=r_fft.dtype)
        if varray.has_duplicates:
            np.add.at(grid, (Ellipsis, flat_idx), r_fft)
            grid[..., counts > 0] /= counts[counts > 0]
        else:
            grid[..., flat_idx] = r_fft
        grid = grid.reshape(n_s, blk.shape[1], varray.n_rows, varray.n_cols)
        az = np.fft.fftshift(np.fft.fft(grid, n=n_az, axis=3), axes=3)
        el = np.fft.fftshift(np.fft.fft(az, n=n_el, axis=2), axes=2)
        out += np.abs(el).sum(axis=1)

    data = np.ascontiguousarray(out.transpose(0, 2, 1))  # (range, azimuth, elevation)
    r_axis, a_axis, e_axis = image_axes(cfg, n_az, n_el, n_s)
    return RadarCube3D(
        data=data,
        range_axis_m=r_axis,
        azimuth_axis_deg=a_axis,
        elevation_axis_deg=e_axis,
    )


def crop_and_pad(
    cube: RadarCube3D,
    center_range_m: Optional[float] = None,
    center_azimuth_deg: Optional[float] = None,
    shape: Tuple[int, int, int] = CROP_SHAPE,
    region=None,
) -> CroppedCube:
    """Cut a fixed window around a subject, zero-padding past the cube edges.

    The center is given either in polar form or as an occupancy region
    (anything with center_x_m/center_y_m attributes), converted here.
    """
    if region is not None:
        center_range_m = float(np.hypot(region.center_x_m, region.center_y_m))
        center_azimuth_deg = float(np.degrees(np.arctan2(region.center_x_m, region.center_y_m)))
    if center_range_m is None or center_azimuth_deg is None:
        raise ValueError("crop needs a polar center or an occupancy region")
    r_axis = cube.range_axis_m
    a_axis = cube.azimuth_axis_deg
    if not (r_axis[0] <= center_range_m <= r_axis[-1] + (r_axis[1] - r_axis[0])):
        raise ValueError(f"crop center range {center_range_m:.3f} m outside cube extent")
    if not (a_axis[0] <= center_azimuth_deg <= a_axis[-1]):
        raise ValueError(f"crop center azimuth {center_azimuth_deg:.2f} deg outside cube extent")
    n_r, n_a, n_e = shape
    if n_e != cube.data.shape[2]:
        raise ValueError("crop elevation depth must match the cube")
    rb = int(np.argmin(np.abs(r_axis - center_range_m)))
    ab = int(np.argmin(np.abs(a_axis - center_azimuth_deg)))
    out = np.zeros(shape, dtype=cube.data.dtype)
    r_lo, a_lo = rb - n_r // 2, ab - n_a // 2
    src_r = slice(max(r_lo, 0), min(r_lo + n_r, cube.data.shape[0]))
    src_a = slice(max(a_lo, 0), min(a_lo + n_a, cube.data.shape[1]))
    dst_r = slice(src_r.start - r_lo, src_r.stop - r_lo)
    dst_a = slice(src_a.start - a_lo, src_a.stop - a_lo)
    out[dst_r, dst_a, :] = cube.data[src_r, src_a, :]
    return CroppedCube(
        data=out,
        center_range_m=float(center_range_m),
        center_azimuth_deg=float(center_azimuth_deg),
    )


def range_compensate(cropped: CroppedCube) -> CroppedCube:
    """Undo the 1/r^2 spreading loss using the crop's center range."""
    r = cropped.center_range_m
    if r <= 0:
        raise ValueError("center range must be positive for compensation")
    return CroppedCube(
        data=cropped.data * (r * r),
        center_range_m=r,
        center_azimuth_deg=cropped.center_azimuth_deg,
        range_compensated=True,
    )
