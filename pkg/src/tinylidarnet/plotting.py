"""Matplotlib figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _map_extent(track):
    h, w = track.grid.shape
    x0, y0 = track.origin
    return [x0, x0 + w * track.resolution, y0, y0 + h * track.resolution]


def draw_track(ax, track):
    ax.imshow(track.grid, origin="lower", cmap="Greys", extent=_map_extent(track),
              interpolation="nearest", vmin=0, vmax=1.4)
    ax.plot(*np.vstack([track.centerline, track.centerline[:1]]).T, ":", color="0.6", lw=0.8)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")


def plot_trace(tr, track, path, title: str = "") -> None:
    """Trajectory colored by speed, plus speed and steering over time."""
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(10, 4))
        gs = fig.add_gridspec(2, 2, width_ratios=[1.4, 1])
        ax = fig.add_subplot(gs[:, 0])
        draw_track(ax, track)
        sc = ax.scatter(tr.column("x"), tr.column("y"), c=tr.column("v"), s=2, cmap="viridis",
                        vmin=0, vmax=5)
        fig.colorbar(sc, ax=ax, label="speed (m/s)", shrink=0.8)
        ax.set_title(title or f"{tr.outcome}, progress {tr.progress:.1f}%")
        t = tr.column("t")
        a1 = fig.add_subplot(gs[0, 1])
        a1.plot(t, tr.column("v"), lw=1, label="speed")
        a1.plot(t, tr.column("speed_cmd"), lw=0.8, alpha=0.7, label="command")
        a1.set_ylabel("m/s")
        a1.legend(loc="lower right")
        a2 = fig.add_subplot(gs[1, 1], sharex=a1)
        a2.plot(t, tr.column("steer"), lw=1, color="tab:red")
        a2.set_ylabel("steer (rad)")
        a2.set_xlabel("time (s)")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


def plot_report(entries, path) -> None:
    """Per-trial progress bars for each (model, track) entry."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 1.2 + 0.6 * len(entries) * 2), 3))
        width = 0.8 / max(1, len(entries))
        for j, e in enumerate(entries):
            n = len(e.trials)
            xs = np.arange(n) + j * width
            prog = [t.progress for t in e.trials]
            lap = "N/A" if e.avg_lap_time is None else f"{e.avg_lap_time:.2f}s"
            ax.bar(xs, prog, width=width,
                   label=f"{e.model} @ {e.track}: {e.avg_progress:.1f}%, lap {lap}")
        ax.set_xlabel("trial")
        ax.set_ylabel("progress (%)")
        ax.set_ylim(0, 105)
        ax.legend(loc="lower left")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


def plot_losses(result, path, title: str = "") -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        epochs = np.arange(1, len(result.train_loss) + 1)
        ax.semilogy(epochs, result.train_loss, "o-", ms=3, label="train")
        ax.semilogy(epochs, result.val_loss, "s-", ms=3, label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("Huber loss")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
