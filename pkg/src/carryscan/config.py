"""Radar hardware configuration and derived processing constants.

Defaults mirror a 77 GHz TDM-MIMO cascade board: 12 TX and 16 RX whose
pairwise position sums form a 64 x 3 virtual grid (positions are stored in
carrier wavelengths). All other quantities are plain SI, suffixed in the
field names.
"""

from __future__ import annotations

import dataclasses
import math
from typing import List, Tuple

import numpy as np
import yaml

C = 3e8  # propagation speed [m/s]

# Sampled sweep may overshoot the stated bandwidth slightly on real boards
# (ADC window vs. ramp spec); validate() tolerates this much relative slack.
_SWEEP_SLACK = 1.02

Position = Tuple[float, float]  # (horizontal, vertical) in wavelengths


def _default_tx() -> Tuple[Position, ...]:
    # 4 horizontal positions spaced 8 wavelengths x 3 vertical rows spaced 1.
    return tuple((8.0 * i, 1.0 * k) for k in range(3) for i in range(4))


def _default_rx() -> Tuple[Position, ...]:
    # 16-element half-wavelength ULA, single row.
    return tuple((0.5 * i, 0.0) for i in range(16))


@dataclasses.dataclass(frozen=True)
class RadarConfig:
    carrier_frequency_hz: float = 77e9
    bandwidth_hz: float = 2.5e9
    sweep_slope_hz_per_s: float = 79e12  # 79 MHz/us
    sample_rate_sps: float = 8e6
    chirps_per_frame: int = 50
    samples_per_chirp: int = 256
    chirp_duration_s: float = 540e-6
    frame_duration_s: float = 1.0 / 30.0
    noise_power: float = 0.0  # variance of complex IF noise per sample
    tx_positions: Tuple[Position, ...] = dataclasses.field(default_factory=_default_tx)
    rx_positions: Tuple[Position, ...] = dataclasses.field(default_factory=_default_rx)

    @property
    def wavelength_m(self) -> float:
        return C / self.carrier_frequency_hz

    def tx_array(self) -> np.ndarray:
        return np.asarray(self.tx_positions, dtype=float).reshape(-1, 2)

    def rx_array(self) -> np.ndarray:
        return np.asarray(self.rx_positions, dtype=float).reshape(-1, 2)


@dataclasses.dataclass(frozen=True)
class DerivedSpecs:
    range_resolution_m: float
    max_range_m: float
    n_virtual: int
    range_bin_width_m: float
    azimuth_bins: int
    elevation_bins: int


def derive_specs(cfg: RadarConfig) -> DerivedSpecs:
    """Processing constants implied by a radar configuration."""
    range_resolution = C / (2.0 * cfg.bandwidth_hz)
    max_range = cfg.sample_rate_sps * C / (2.0 * cfg.sweep_slope_hz_per_s)
    n_virtual = len(cfg.tx_positions) * len(cfg.rx_positions)
    # Azimuth FFT is the unique horizontal virtual coordinate count doubled,
    # rounded up to a power of two; elevation FFT is pinned to the crop depth.
    tx = cfg.tx_array()
    rx = cfg.rx_array()
    virtual_x = (tx[:, None, 0] + rx[None, :, 0]).ravel()
    n_cols = np.unique(virtual_x).size
    azimuth_bins = max(8, 1 << int(math.ceil(math.log2(2 * n_cols))))
    return DerivedSpecs(
        range_resolution_m=range_resolution,
        max_range_m=max_range,
        n_virtual=n_virtual,
        range_bin_width_m=max_range / cfg.samples_per_chirp,
        azimuth_bins=azimuth_bins,
        elevation_bins=10,
    )


def validate(cfg: RadarConfig) -> List[str]:
    """Check config invariants; returns a list of violations (empty = ok)."""
    problems: List[str] = []
    if cfg.bandwidth_hz <= 0:
        problems.append("bandwidth_hz must be positive")
    if cfg.sweep_slope_hz_per_s <= 0:
        problems.append("sweep_slope_hz_per_s must be positive")
    if cfg.sample_rate_sps <= 0:
        problems.append("sample_rate_sps must be positive")
    if cfg.carrier_frequency_hz <= 0:
        problems.append("carrier_frequency_hz must be positive")
    if cfg.chirps_per_frame < 1:
        problems.append("chirps_per_frame must be at least 1")
    if cfg.samples_per_chirp < 1:
        problems.append("samples_per_chirp must be at least 1")
    if cfg.chirp_duration_s <= 0:
        problems.append("chirp_duration_s must be positive")
    if cfg.frame_duration_s <= 0:
        problems.append("frame_duration_s must be positive")
    if cfg.noise_power < 0:
        problems.append("noise_power must be non-negative")
    if not cfg.tx_positions:
        problems.append("tx_positions must be non-empty")
    if not cfg.rx_positions:
        problems.append("rx_positions must be non-empty")
    if cfg.bandwidth_hz > 0 and cfg.sample_rate_sps > 0:
        sampled_sweep = cfg.sweep_slope_hz_per_s * cfg.samples_per_chirp / cfg.sample_rate_sps
        if sampled_sweep > _SWEEP_SLACK * cfg.bandwidth_hz:
            problems.append(
                "sampled sweep S*N_s/f_s = %.4g Hz exceeds bandwidth_hz" % sampled_sweep
            )
    return problems


def default_config(noise_power: float = 0.0) -> RadarConfig:
    return RadarConfig(noise_power=noise_power)


def save_config(cfg: RadarConfig, path: str) -> None:
    doc = dataclasses.asdict(cfg)
    doc["tx_positions"] = [list(p) for p in cfg.tx_positions]
    doc["rx_positions"] = [list(p) for p in cfg.rx_positions]
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, default_flow_style=None, sort_keys=False)


def load_config(path: str) -> RadarConfig:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"radar config {path!r} is not a key-value document")
    known = {f.name for f in dataclasses.fields(RadarConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"radar config {path!r} has unknown keys: {sorted(unknown)}")
    for key in ("tx_positions", "rx_positions"):
        if key in doc:
            doc[key] = tuple((float(x), float(z)) for x, z in doc[key])
    for key in ("chirps_per_frame", "samples_per_chirp"):
        if key in doc:
            doc[key] = int(doc[key])
    for f in dataclasses.fields(RadarConfig):
        if f.name in doc and f.type == "float":
            doc[f.name] = float(doc[f.name])
    return RadarConfig(**doc)
