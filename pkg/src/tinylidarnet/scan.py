"""LiDAR scan preprocessing and the network-output <-> actuator mapping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

N_BEAMS = 1081
FOV_DEG = 270.0
RESOLUTION_DEG = 0.25
MAX_RANGE = 10.0
MAX_STEER = 0.4189  # rad, full-scale servo angle (24 deg)
MAX_SPEED = 5.0
MIN_SPEED = -0.5
MEDIAN_WINDOW = 5


def beam_angles() -> np.ndarray:
    """Beam angles relative to heading, -135 deg .. +135 deg inclusive."""
    half = math.radians(FOV_DEG / 2)
    return np.linspace(-half, half, N_BEAMS)


def _median_filter(x: np.ndarray, window: int) -> np.ndarray:
    # edges use a truncated window
    half = window // 2
    out = np.empty_like(x)
    if x.size >= window:
        out[half : x.size - half] = np.median(
            np.lib.stride_tricks.sliding_window_view(x, window), axis=1
        )
        edges = list(range(half)) + list(range(x.size - half, x.size))
    else:
        edges = range(x.size)
    for i in edges:
        out[i] = np.median(x[max(0, i - half) : i + half + 1])
    return out


def preprocess(raw: np.ndarray) -> np.ndarray:
    """Raw ranges in meters -> normalized network input in [0, 1].

    Non-finite or non-positive beams count as dropped and are linearly
    interpolated from their valid neighbours before median filtering.
    """
    r = np.asarray(raw, dtype=np.float64)
    if r.ndim != 1:
        raise ValueError(f"scan must be 1-D, got shape {r.shape}")
    valid = np.isfinite(r) & (r > 0)
    if not valid.any():
        raise ValueError("scan has no valid beams")
    if not valid.all():
        idx = np.arange(r.size)
        r = np.interp(idx, idx[valid], r[valid])
    r = _median_filter(r, MEDIAN_WINDOW)
    r = np.clip(r, 0.0, MAX_RANGE)
    return (r / MAX_RANGE).astype(np.float32)


def downsample(scan: np.ndarray, factor: int) -> np.ndarray:
    if factor not in (1, 2, 4):
        raise ValueError(f"downsample factor must be 1, 2 or 4, got {factor}")
    return np.asarray(scan)[..., ::factor]


@dataclass(frozen=True)
class ActionPair:
    steering_norm: float
    speed_norm: float
    steering_rad: float
    speed_mps: float
    error: bool = False


def map_output(net_out) -> ActionPair:
    """Network output -> clamped physical command.

    Non-finite output yields a stop command with ``error`` set.
    """
    s, v = float(net_out[0]), float(net_out[1])
    if not (math.isfinite(s) and math.isfinite(v)):
        return ActionPair(0.0, 0.0, 0.0, 0.0, error=True)
    steer = min(1.0, max(-1.0, s))
    speed = min(MAX_SPEED, max(MIN_SPEED, v * MAX_SPEED))
    return ActionPair(steer, v, steer * MAX_STEER, speed)


def action_from_physical(steer_rad: float, speed_mps: float) -> ActionPair:
    """Wrap a physical command (e.g. from the expert) as an ActionPair."""
    steer = min(MAX_STEER, max(-MAX_STEER, steer_rad))
    speed = min(MAX_SPEED, max(MIN_SPEED, speed_mps))
    return ActionPair(steer / MAX_STEER, speed / MAX_SPEED, steer, speed)


def map_labels(steer_rad: float, speed_mps: float) -> np.ndarray:
    """Physical labels -> normalized [steering_norm, speed_norm]."""
    if not (math.isfinite(steer_rad) and math.isfinite(speed_mps)):
        raise ValueError("non-finite label")
    if abs(steer_rad) > MAX_STEER + 1e-9:
        raise ValueError(f"steering {steer_rad} rad outside +/-{MAX_STEER}")
    if not 0.0 <= speed_mps <= MAX_SPEED + 1e-9:
        raise ValueError(f"speed {speed_mps} m/s outside [0, {MAX_SPEED}]")
    return np.array([steer_rad / MAX_STEER, speed_mps / MAX_SPEED], dtype=np.float32)
