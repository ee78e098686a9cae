"""Kinematic bicycle with first-order speed and steering lags."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..scan import MAX_SPEED, MAX_STEER, MIN_SPEED

WHEELBASE = 0.33
SPEED_TAU = 0.3
STEER_TAU = 0.1
DT = 1.0 / 40.0
FOOTPRINT = (0.5, 0.3)  # length, width in meters, centered on (x, y)


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    theta: float
    v: float = 0.0
    delta: float = 0.0


def _deriv(s, v_cmd, d_cmd):
    x, y, th, v, d = s
    return np.array([
        v * math.cos(th),
        v * math.sin(th),
        v / WHEELBASE * math.tan(d),
        (v_cmd - v) / SPEED_TAU,
        (d_cmd - d) / STEER_TAU,
    ])


def step(state: VehicleState, steer_cmd: float, speed_cmd: float, dt: float = DT) -> VehicleState:
    """Advance one control period with RK4; commands are held constant over ``dt``."""
    d_cmd = min(MAX_STEER, max(-MAX_STEER, steer_cmd))
    v_cmd = min(MAX_SPEED, max(MIN_SPEED, speed_cmd))
    s = np.array([state.x, state.y, state.theta, state.v, state.delta])
    k1 = _deriv(s, v_cmd, d_cmd)
    k2 = _deriv(s + 0.5 * dt * k1, v_cmd, d_cmd)
    k3 = _deriv(s + 0.5 * dt * k2, v_cmd, d_cmd)
    k4 = _deriv(s + dt * k3, v_cmd, d_cmd)
    s = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    theta = math.atan2(math.sin(s[2]), math.cos(s[2]))
    v = min(MAX_SPEED, max(MIN_SPEED, s[3]))
    delta = min(MAX_STEER, max(-MAX_STEER, s[4]))
    return VehicleState(float(s[0]), float(s[1]), theta, float(v), float(delta))


def _footprint_offsets(spacing: float) -> np.ndarray:
    length, width = FOOTPRINT
    nx = int(math.ceil(length / spacing)) + 1
    ny = int(math.ceil(width / spacing)) + 1
    gx, gy = np.meshgrid(np.linspace(-length / 2, length / 2, nx),
                         np.linspace(-width / 2, width / 2, ny))
    return np.column_stack([gx.ravel(), gy.ravel()])


_OFFSETS: dict[float, np.ndarray] = {}


def in_collision(track, state: VehicleState) -> bool:
    """True if any cell under the vehicle footprint is occupied."""
    res = track.resolution
    if res not in _OFFSETS:
        _OFFSETS[res] = _footprint_offsets(res / 2)
    off = _OFFSETS[res]
    c, s = math.cos(state.theta), math.sin(state.theta)
    xs = state.x + c * off[:, 0] - s * off[:, 1]
    ys = state.y + s * off[:, 0] + c * off[:, 1]
    return bool(track.occupied(xs, ys).any())
