"""Random-start trial protocol, report aggregation, traces and the wobble proxy."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .quant import predict
from .scan import MAX_STEER, action_from_physical, map_output
from .sim.episode import EpisodeLog, run_episode, start_pose
from .train import model_inputs


class NetPolicy:
    """Scan -> network (fp32 or int8) -> clamped actuator command."""

    def __init__(self, model, name: str | None = None):
        self.model = model
        self.name = name or model.spec.name

    def __call__(self, scan, state):
        x = model_inputs(self.model.spec, scan)
        return map_output(predict(self.model, x))


def stop_policy(scan, state):
    return action_from_physical(0.0, 0.0)


class BangBangPolicy:
    """Full-lock steering toward whichever side has more clearance.

    Baseline for the wobble comparison; ``scan`` is the normalized 1081-beam input.
    """

    def __init__(self, speed: float = 2.0):
        self.speed = speed

    def __call__(self, scan, state):
        n = len(scan)
        right = float(np.mean(scan[n // 6 : n // 2 - n // 12]))
        left = float(np.mean(scan[n // 2 + n // 12 : 5 * n // 6]))
        steer = MAX_STEER if left > right else -MAX_STEER
        return action_from_physical(steer, self.speed)


@dataclass
class TrialSummary:
    trial: int
    start_index: int
    seed: int
    outcome: str
    lap_time: float | None
    progress: float
    sigma: float
    n_ticks: int


@dataclass
class EvalEntry:
    model: str
    track: str
    trials: list
    logs: list = field(default_factory=list, repr=False)

    @property
    def successes(self) -> list:
        return [t for t in self.trials if t.outcome == "lap_complete"]

    @property
    def avg_lap_time(self) -> float | None:
        """Mean lap time over successful trials; None (N/A) when there are none."""
        ok = self.successes
        return float(np.mean([t.lap_time for t in ok])) if ok else None

    @property
    def avg_progress(self) -> float:
        return float(np.mean([t.progress for t in self.trials]))

    @property
    def success_rate(self) -> float:
        return len(self.successes) / len(self.trials)


def evaluate(policy, track, n_trials: int = 10, seed: int = 0, timeout_s: float = 60.0,
             workers: int = 1, name: str | None = None, keep_logs: bool = False) -> EvalEntry:
    """Run ``n_trials`` episodes from seeded random centerline starts and aggregate them.

    ``policy`` is a policy callable, or a model (NetParams / QuantizedNet).
    """
    if not callable(policy):
        policy = NetPolicy(policy)
    name = name or getattr(policy, "name", getattr(policy, "__name__", type(policy).__name__))
    rng = np.random.default_rng(seed)
    starts = rng.integers(len(track.centerline), size=n_trials)
    seeds = rng.integers(2**31, size=n_trials)

    def one(k: int) -> tuple[TrialSummary, EpisodeLog]:
        ep = run_episode(track, policy, start_pose(track, int(starts[k])), seed=int(seeds[k]),
                         timeout_s=timeout_s)
        summary = TrialSummary(k, int(starts[k]), int(seeds[k]), ep.outcome, ep.lap_time,
                               ep.progress, ep.sigma, ep.n_ticks)
        return summary, ep

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(n_trials)))
    else:
        results = [one(k) for k in range(n_trials)]
    results.sort(key=lambda r: r[0].trial)
    return EvalEntry(name, track.name, [r[0] for r in results],
                     [r[1] for r in results] if keep_logs else [])


REPORT_COLUMNS = ["model", "track", "trial", "start_index", "seed", "outcome", "lap_time_s",
                  "progress_pct", "success_rate"]


def _fmt(x, digits=3) -> str:
    return "N/A" if x is None else f"{x:.{digits}f}"


def report_rows(entries) -> list[list[str]]:
    """Per-trial rows followed by one ``summary`` row per (model, track)."""
    rows = []
    for e in entries:
        for t in e.trials:
            rows.append([e.model, e.track, str(t.trial), str(t.start_index), str(t.seed),
                         t.outcome, _fmt(t.lap_time), _fmt(t.progress, 2), ""])
        rows.append([e.model, e.track, "summary", "", "", "", _fmt(e.avg_lap_time),
                     _fmt(e.avg_progress, 2), _fmt(e.success_rate, 2)])
    return rows


def write_report_csv(entries, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        w.writerows(report_rows(entries))


def format_report(entries) -> str:
    head = f"{'model':<22} {'track':<10} {'avg lap time (s)':>17} {'avg progress (%)':>17} {'success':>8}"
    lines = [head, "-" * len(head)]
    for e in entries:
        lines.append(f"{e.model:<22} {e.track:<10} {_fmt(e.avg_lap_time, 2):>17} "
                     f"{e.avg_progress:>17.1f} {len(e.successes):>5}/{len(e.trials)}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# traces

TRACE_COLUMNS = ["t", "x", "y", "v", "steer", "speed_cmd"]


@dataclass
class Trace:
    data: np.ndarray  # (n, 6) in TRACE_COLUMNS order
    outcome: str
    progress: float
    lap_time: float | None

    def column(self, name: str) -> np.ndarray:
        return self.data[:, TRACE_COLUMNS.index(name)]


def trace(policy, track, start: int = 0, seed: int = 0, timeout_s: float = 60.0) -> Trace:
    """One full-resolution episode: time, pose, speed, commanded steering and speed."""
    if not callable(policy):
        policy = NetPolicy(policy)
    ep = run_episode(track, policy, start_pose(track, start), seed=seed, timeout_s=timeout_s)
    data = np.column_stack([ep.t, ep.states[:, 0], ep.states[:, 1], ep.states[:, 3],
                            ep.actions[:, 2], ep.actions[:, 3]])
    return Trace(data, ep.outcome, ep.progress, ep.lap_time)


def write_trace_csv(tr: Trace, path) -> None:
    np.savetxt(path, tr.data, fmt="%.6f", delimiter=",", header=",".join(TRACE_COLUMNS),
               comments="")


def wobble_metric(steer) -> float:
    """Mean absolute per-tick change of the commanded steering angle (rad/tick).

    A proxy for how wobbly a trajectory looks; accepts a Trace or a steering array.
    """
    s = steer.column("steer") if isinstance(steer, Trace) else np.asarray(steer, dtype=np.float64)
    if len(s) < 3:
        raise ValueError("wobble_metric needs at least 3 ticks")
    return float(np.mean(np.abs(np.diff(s))))

