"""Pure-pursuit expert driver and behavior-cloning data collection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scan import MAX_SPEED, MAX_STEER, N_BEAMS, action_from_physical, map_labels
from .sim.episode import run_episode, start_pose
from .sim.vehicle import DT, WHEELBASE, VehicleState

log = logging.getLogger(__name__)

A_LAT_MAX = 4.0  # m/s^2


def lookahead_distance(v: float) -> float:
    return min(2.0, max(0.5, 0.5 + 0.3 * v))


def speed_for_curvature(kappa: float, a_lat_max: float = A_LAT_MAX) -> float:
    if kappa == 0:
        return MAX_SPEED
    return min(MAX_SPEED, math.sqrt(a_lat_max / abs(kappa)))


def three_point_curvature(points: np.ndarray, offset: int = 1) -> np.ndarray:
    """Unsigned curvature of the circle through waypoints i-offset, i, i+offset (closed loop)."""
    a = np.roll(points, offset, axis=0)
    b = points
    c = np.roll(points, -offset, axis=0)
    ab = np.linalg.norm(b - a, axis=1)
    bc = np.linalg.norm(c - b, axis=1)
    ca = np.linalg.norm(a - c, axis=1)
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    denom = ab * bc * ca
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(denom > 0, 2.0 * np.abs(cross) / denom, 0.0)
    return k


class PurePursuit:
    """Steers toward a lookahead point on the centerline; speed capped by upcoming curvature.

    The speed cap uses the largest curvature between the nearest waypoint and
    ``preview`` meters beyond the lookahead point.
    """

    def __init__(self, track, a_lat_max: float = A_LAT_MAX, preview: float = 1.0):
        if len(track.centerline) < 3:
            raise ValueError("expert needs a centerline with at least 3 waypoints")
        self.track = track
        self.a_lat_max = a_lat_max
        self.preview = preview
        cl = track.centerline
        spacing = track.length / len(cl)
        self.kappa = three_point_curvature(cl, max(1, int(round(0.3 / spacing))))
        self.spacing = spacing

    def command(self, state: VehicleState) -> tuple[float, float]:
        cl = self.track.centerline
        n = len(cl)
        _, i = self.track.tree.query([state.x, state.y])
        ld = lookahead_distance(state.v)
        ahead = int(math.ceil(ld / self.spacing))
        # walk forward until the waypoint is at least ld away from the car
        j = i
        for _ in range(2 * ahead + 1):
            j = (j + 1) % n
            if math.hypot(cl[j, 0] - state.x, cl[j, 1] - state.y) >= ld:
                break
        tx, ty = cl[j]
        alpha = math.atan2(ty - state.y, tx - state.x) - state.theta
        steer = math.atan2(2.0 * WHEELBASE * math.sin(alpha), ld)
        steer = min(MAX_STEER, max(-MAX_STEER, steer))
        span = ahead + int(math.ceil(self.preview / self.spacing))
        kmax = float(self.kappa[(i + np.arange(span + 1)) % n].max())
        return steer, speed_for_curvature(kmax, self.a_lat_max)

    def __call__(self, scan, state: VehicleState):
        steer, speed = self.command(state)
        return action_from_physical(steer, speed)


def expert_policy(track, **kwargs) -> PurePursuit:
    return PurePursuit(track, **kwargs)


@dataclass
class Dataset:
    scans: np.ndarray  # (n, 1081) float32, normalized
    labels: np.ndarray  # (n, 2) float32: steering_norm, speed_norm
    track: str = ""
    seed: int = 0
    complete: bool = True

    def __post_init__(self):
        self.scans = np.asarray(self.scans, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.float32).reshape(-1, 2)
        if self.scans.ndim != 2 or self.scans.shape[0] != self.labels.shape[0]:
            raise ValueError(f"scans {self.scans.shape} / labels {self.labels.shape} mismatch")

    def __len__(self) -> int:
        return len(self.labels)


class SteeringPerturbation:
    """Piecewise-constant steering offsets added to the executed command.

    Offsets are redrawn on average every ``hold_s`` seconds; half of the
    draws are zero so the data also holds unperturbed driving.
    """

    def __init__(self, rng: np.random.Generator, amplitude: float = 0.25, hold_s: float = 0.5,
                 dt: float = DT):
        self.rng = rng
        self.amplitude = amplitude
        self.p_redraw = dt / hold_s
        self.offset = 0.0

    def __call__(self) -> float:
        if self.amplitude > 0 and self.rng.random() < self.p_redraw:
            active = self.rng.random() < 0.5
            self.offset = float(self.rng.uniform(-self.amplitude, self.amplitude)) if active else 0.0
        return self.offset


def collect(track, n_laps: int = 1, seed: int = 0, perturb: float = 0.12,
            timeout_s: float = 120.0) -> Dataset:
    """Record the expert's noisy-scan / command pairs, one sample per tick.

    Each lap is its own episode from a random centerline start; odd laps
    drive the track in reverse so both turning directions are covered.
    The car executes the expert command plus a random steering offset of
    up to ``perturb`` rad, while the label is always the expert's own
    command, so the data shows how to recover from drifting off line.
    """
    rng = np.random.default_rng(seed)
    scans, labels = [], []
    complete = True
    for lap in range(n_laps):
        t = track if lap % 2 == 0 else track.reversed()
        expert = expert_policy(t)
        offset = SteeringPerturbation(np.random.default_rng(int(rng.integers(2**31))), perturb)

        def policy(scan, state, expert=expert, offset=offset):
            steer, speed = expert.command(state)
            scans.append(scan)
            labels.append(map_labels(steer, speed))
            return action_from_physical(steer + offset(), speed)

        start = start_pose(t, int(rng.integers(len(t.centerline))))
        ep = run_episode(t, policy, start, seed=int(rng.integers(2**31)), timeout_s=timeout_s)
        if ep.outcome != "lap_complete":
            log.warning("expert %s on %s lap %d; keeping %d partial samples",
                        ep.outcome, t.name, lap, len(labels))
            complete = False
            break
    scans_arr = np.array(scans, dtype=np.float32).reshape(-1, N_BEAMS)
    return Dataset(scans_arr, np.array(labels, dtype=np.float32).reshape(-1, 2), track.name,
                   seed, complete)


# Dataset CSV: header r0..r1080,steering_norm,speed_norm; one row per sample.

def dataset_header(n_beams: int = N_BEAMS) -> list[str]:
    return [f"r{i}" for i in range(n_beams)] + ["steering_norm", "speed_norm"]


def save_dataset(ds: Dataset, path) -> None:
    table = np.hstack([ds.scans, ds.labels])
    np.savetxt(path, table, fmt="%.6f", delimiter=",",
               header=",".join(dataset_header(ds.scans.shape[1])), comments="")


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path) as f:
        header = f.readline().strip().split(",")
    if header[-2:] != ["steering_norm", "speed_norm"] or len(header) != N_BEAMS + 2:
        raise ValueError(f"{path}: unexpected dataset header ({len(header)} columns)")
    table = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.float32, ndmin=2)
    return Dataset(table[:, :-2], table[:, -2:], track=path.stem)
