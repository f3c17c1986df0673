"""Trajectory-level fusion of per-frame class probabilities.

The knowledge-transfer rule keeps two accumulators per (tracklet, class):
an instantaneous sum (s, c_s) over the current range-bin dwell and a global
store (g, c_g). When the subject moves to a new range bin, the closed
dwell's average is audited; only if it is decisive (further than epsilon
from 0.5) is the dwell transferred into the global store. The fused output
at frame t blends the global store as it stood before frame t's transfer
with the current frame's probability:

    fused_t = (g_{t-1} + p_t) / (c_{g,t-1} + 1)

A short majority vote over recent per-frame decisions is kept as the
baseline fusion rule.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional, Sequence, Tuple

import numpy as np

# Default fusion range-bin width mirrors the imaging range bin of the
# default radar config (max range / samples per chirp).
DEFAULT_RANGE_BIN_M = 8e6 * 3e8 / (2.0 * 79e12) / 256.0


@dataclasses.dataclass(frozen=True)
class FusionConfig:
    range_bin_width_m: float = DEFAULT_RANGE_BIN_M
    epsilon_high: float = 0.1
    epsilon_low: float = 0.02
    deviation_threshold: float = 0.15
    fixed_epsilon: Optional[float] = None  # overrides the adaptive policy
    transfer_fire: float = 1.0
    transfer_hold: float = 0.0
    vote_window: int = 15
    p_thr: float = 0.5


@dataclasses.dataclass(frozen=True)
class KnwlTrfState:
    s: float = 0.0  # dwell probability sum
    c_s: float = 0.0  # dwell frame count
    g: float = 0.0  # transferred probability sum
    c_g: float = 0.0  # transferred frame count
    last_bin: Optional[int] = None
    dwell_p: Tuple[float, ...] = ()  # current-bin probabilities (epsilon buffer)
    transfer_fired: bool = False  # diagnostics: did frame t fire a transfer


def epsilon_policy(dwell_p: Sequence[float], cfg: FusionConfig) -> float:
    """Pick the transfer-gate epsilon from the dwell's spread.

    A volatile dwell (population std >= deviation threshold) gets the loose
    epsilon so single noisy dwells are still audited strictly; a steady
    dwell gets the tight one.
    """
    if cfg.fixed_epsilon is not None:
        return cfg.fixed_epsilon
    if len(dwell_p) == 0:
        return cfg.epsilon_low
    spread = float(np.std(np.asarray(dwell_p)))
    return cfg.epsilon_high if spread >= cfg.deviation_threshold else cfg.epsilon_low


def knwltrf_step(
    state: KnwlTrfState, p_t: float, r_t: float, cfg: Optional[FusionConfig] = None
) -> Tuple[KnwlTrfState, float]:
    """Advance the knowledge-transfer state by one frame; returns the fused
    probability for this frame.

    The output is computed before any transfer fires, the transfer (on a
    range-bin change) moves the closed dwell into the global store, and the
    dwell accumulator is then updated with this frame.
    """
    cfg = cfg or FusionConfig()
    if not (0.0 <= p_t <= 1.0):
        raise ValueError(f"per-frame probability {p_t!r} outside [0, 1]")
    if not math.isfinite(r_t):
        raise ValueError(f"range {r_t!r} is not finite")
    bin_t = int(math.floor(r_t / cfg.range_bin_width_m))

    if state.last_bin is None:
        fused = p_t  # (g + p) / (c_g + 1) with an empty store
        return (
            KnwlTrfState(s=p_t, c_s=1.0, g=0.0, c_g=0.0, last_bin=bin_t, dwell_p=(p_t,)),
            fused,
        )

    fused = (state.g + p_t) / (state.c_g + 1.0)

    g, c_g = state.g, state.c_g
    fired = False
    same_bin = bin_t == state.last_bin
    if not same_bin:
        p_eval = state.s / state.c_s
        eps = epsilon_policy(state.dwell_p, cfg)
        t_f = cfg.transfer_fire if abs(p_eval - 0.5) >= eps else cfg.transfer_hold
        g = g + t_f * state.s
        c_g = c_g + t_f * state.c_s
        fired = t_f != 0.0

    if same_bin:
        s, c_s = state.s + p_t, state.c_s + 1.0
        dwell = state.dwell_p + (p_t,)
    else:
        s, c_s = p_t, 1.0
        dwell = (p_t,)

    return (
        KnwlTrfState(
            s=s, c_s=c_s, g=g, c_g=c_g, last_bin=bin_t, dwell_p=dwell, transfer_fired=fired
        ),
        fused,
    )


def fuse_stream(
    probabilities: Sequence[float],
    ranges: Sequence[float],
    cfg: Optional[FusionConfig] = None,
) -> np.ndarray:
    """Fused probability at every frame of one (tracklet, class) stream."""
    if len(probabilities) != len(ranges):
        raise ValueError("probability and range streams must align")
    state = KnwlTrfState()
    out = np.zeros(len(probabilities))
    for i, (p, r) in enumerate(zip(probabilities, ranges)):
        state, out[i] = knwltrf_step(state, float(p), float(r), cfg)
    return out


def res_vote(decisions: Sequence[bool], window: int = 15) -> bool:
    """Majority vote over the last `window` per-frame decisions; ties are
    resolved positive (flagging is the conservative screening outcome)."""
    if window < 1:
        raise ValueError("vote window must be at least 1")
    if not decisions:
        raise ValueError("no decisions to vote on")
    recent = list(decisions)[-window:]
    yes = sum(bool(d) for d in recent)
    return yes * 2 >= len(recent)
