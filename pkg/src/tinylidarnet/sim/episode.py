"""Closed-loop episodes at 40 Hz and centerline progress accounting."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..scan import MAX_RANGE, ActionPair, preprocess
from .raycast import raycast
from .vehicle import DT, VehicleState, in_collision, step

NOISE_SIGMA_MAX = 0.5
LAP_MIN_PROGRESS = 0.95

Policy = Callable[[np.ndarray, VehicleState], ActionPair]


class ScanNoise:
    """Additive Gaussian range noise; sigma is drawn once, uniform in [0, 0.5] m."""

    def __init__(self, rng: np.random.Generator, sigma: float | None = None):
        self.rng = rng
        self.sigma = float(rng.uniform(0.0, NOISE_SIGMA_MAX)) if sigma is None else float(sigma)

    def __call__(self, scan: np.ndarray) -> np.ndarray:
        if self.sigma == 0.0:
            return np.clip(scan, 0.0, MAX_RANGE)
        noisy = scan + self.rng.normal(0.0, self.sigma, size=np.shape(scan))
        return np.clip(noisy, 0.0, MAX_RANGE)


class ProgressTracker:
    """Unwrapped arc length along the centerline, followed from a start point.

    The nearest waypoint is searched in a window around the previous one,
    so consecutive points must be closer than ``window`` waypoints apart;
    any 40 Hz trace is.
    """

    def __init__(self, track, x: float, y: float, window: int = 30):
        self.track = track
        self.n = len(track.centerline)
        self.window = window
        _, self.idx = track.tree.query([x, y])
        self.idx = int(self.idx)
        self.start = self.idx
        self.turns = 0
        self.best = 0.0

    @property
    def distance(self) -> float:
        """Signed arc length travelled from the start waypoint."""
        s = self.track.arclength
        return self.turns * self.track.length + s[self.idx] - s[self.start]

    def update(self, x: float, y: float) -> float:
        cand = (self.idx + np.arange(-self.window, self.window + 1)) % self.n
        d2 = ((self.track.centerline[cand] - (x, y)) ** 2).sum(axis=1)
        new = int(cand[np.argmin(d2)])
        if new - self.idx < -self.n // 2:
            self.turns += 1
        elif new - self.idx > self.n // 2:
            self.turns -= 1
        self.idx = new
        self.best = max(self.best, self.distance)
        return self.best

    @property
    def percent(self) -> float:
        return float(np.clip(100.0 * self.best / self.track.length, 0.0, 100.0))

    @property
    def lap_done(self) -> bool:
        return self.best >= self.track.length and self.best / self.track.length > LAP_MIN_PROGRESS


def progress(track, trajectory) -> float:
    """Percent of the centerline covered by a densely sampled (x, y) trajectory."""
    traj = np.asarray(trajectory, dtype=np.float64)
    tracker = ProgressTracker(track, *traj[0])
    for x, y in traj[1:]:
        tracker.update(x, y)
    return tracker.percent


@dataclass
class EpisodeLog:
    t: np.ndarray
    states: np.ndarray  # (n, 5): x, y, theta, v, delta at each tick
    actions: np.ndarray  # (n, 4): steering_norm, speed_norm, steering_rad, speed_mps
    scan_crc: np.ndarray  # crc32 of the float32 network-input scan
    outcome: str  # lap_complete | collision | timeout
    progress: float
    lap_time: float | None
    sigma: float
    final: VehicleState | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_ticks(self) -> int:
        return len(self.t)

    def trajectory(self) -> np.ndarray:
        return self.states[:, :2]


def start_pose(track, index: int) -> VehicleState:
    """At rest on waypoint ``index``, heading along the centerline."""
    x, y = track.centerline[index % len(track.centerline)]
    return VehicleState(float(x), float(y), track.heading_at(index))


def run_episode(track, policy: Policy, start: VehicleState, seed: int = 0,
                timeout_s: float = 60.0, on_tick=None) -> EpisodeLog:
    """raycast -> noise -> preprocess -> policy -> vehicle step, at 40 Hz.

    ``on_tick(scan_norm, action, state)`` is called every tick if given.
    """
    if in_collision(track, start):
        raise ValueError(f"start pose ({start.x:.2f}, {start.y:.2f}) is in collision")
    rng = np.random.default_rng(seed)
    noise = ScanNoise(rng)
    tracker = ProgressTracker(track, start.x, start.y)
    state = start
    n_max = int(round(timeout_s / DT))
    ts, states, actions, crcs = [], [], [], []
    outcome = "timeout"
    lap_time = None
    for k in range(n_max):
        ranges = raycast(track, state.x, state.y, state.theta)
        scan = preprocess(noise(ranges))
        action = policy(scan, state)
        if on_tick is not None:
            on_tick(scan, action, state)
        ts.append(k * DT)
        states.append((state.x, state.y, state.theta, state.v, state.delta))
        actions.append((action.steering_norm, action.speed_norm, action.steering_rad, action.speed_mps))
        crcs.append(zlib.crc32(scan.tobytes()))
        state = step(state, action.steering_rad, action.speed_mps)
        if in_collision(track, state):
            outcome = "collision"
            break
        tracker.update(state.x, state.y)
        if tracker.lap_done:
            outcome = "lap_complete"
            lap_time = (k + 1) * DT
            break
    return EpisodeLog(
        t=np.array(ts),
        states=np.array(states).reshape(-1, 5),
        actions=np.array(actions).reshape(-1, 4),
        scan_crc=np.array(crcs, dtype=np.uint32),
        outcome=outcome,
        progress=100.0 if outcome == "lap_complete" else tracker.percent,
        lap_time=lap_time,
        sigma=noise.sigma,
        final=state,
    )
