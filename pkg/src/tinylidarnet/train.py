"""Behavior-cloning training loop (Huber loss + Adam, seeded shuffling)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .nn import AdamState, NetParams, NetSpec, adam_step, backward, forward, forward_train, huber_loss, init_params
from .scan import N_BEAMS, downsample

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 20
    lr: float = 5e-5
    val_fraction: float = 0.15
    huber_delta: float = 1.0
    seed: int = 0


@dataclass
class TrainResult:
    params: NetParams
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    initial_train_loss: float = float("nan")
    initial_val_loss: float = float("nan")
    train_index: np.ndarray | None = None
    val_index: np.ndarray | None = None


def model_inputs(spec: NetSpec, scans: np.ndarray) -> np.ndarray:
    """Full 1081-beam scans -> the model's (possibly downsampled) input."""
    scans = np.asarray(scans, dtype=np.float32)
    width = scans.shape[-1]
    if width == spec.input_length:
        return scans
    if width == N_BEAMS:
        for factor in (2, 4):
            if len(range(0, N_BEAMS, factor)) == spec.input_length:
                return downsample(scans, factor)
    raise ValueError(
        f"{spec.name} takes {spec.input_length} inputs; dataset scans have {width}"
    )


def evaluate_loss(params: NetParams, x: np.ndarray, y: np.ndarray, delta: float = 1.0,
                  batch_size: int = 1024) -> float:
    if len(x) == 0:
        return float("nan")
    total = 0.0
    for i in range(0, len(x), batch_size):
        pred = forward(params, x[i : i + batch_size])
        loss, _ = huber_loss(pred, y[i : i + batch_size], delta)
        total += loss * len(pred)
    return total / len(x)


def split_indices(n: int, val_fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_train = max(1, int(round(n * (1.0 - val_fraction))))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def calibration_indices(n: int, cfg: TrainConfig | None = None, count: int = 256) -> np.ndarray:
    """The first ``count`` training-split rows (recording order) of a ``train`` run with ``cfg``."""
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    rng.integers(2**31)  # init seed, drawn first by train()
    tr, _ = split_indices(n, cfg.val_fraction, rng)
    return tr[:count]


def train(spec: NetSpec, dataset, cfg: TrainConfig | None = None,
          params: NetParams | None = None) -> TrainResult:
    """Fit ``spec`` to ``dataset`` (anything with ``scans`` and ``labels`` arrays)."""
    cfg = cfg or TrainConfig()
    if len(dataset.labels) == 0:
        raise ValueError("cannot train on an empty dataset")
    x = model_inputs(spec, dataset.scans)
    y = np.asarray(dataset.labels, dtype=np.float32)
    rng = np.random.default_rng(cfg.seed)
    init_seed = int(rng.integers(2**31))
    if params is None:
        params = init_params(spec, seed=init_seed)
    tr, va = split_indices(len(y), cfg.val_fraction, rng)
    state = AdamState.for_params(params, lr=cfg.lr)
    result = TrainResult(params, train_index=tr, val_index=va)
    result.initial_train_loss = evaluate_loss(params, x[tr], y[tr], cfg.huber_delta)
    result.initial_val_loss = evaluate_loss(params, x[va], y[va], cfg.huber_delta)
    for epoch in range(cfg.epochs):
        order = tr[rng.permutation(len(tr))]
        running = 0.0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            out, tape = forward_train(params, x[idx])
            loss, grad = huber_loss(out, y[idx], cfg.huber_delta)
            adam_step(state, params, backward(params, tape, grad))
            running += loss * len(idx)
        result.train_loss.append(running / len(order))
        result.val_loss.append(evaluate_loss(params, x[va], y[va], cfg.huber_delta))
        log.info("%s epoch %d/%d train %.5f val %.5f", spec.name, epoch + 1, cfg.epochs,
                 result.train_loss[-1], result.val_loss[-1])
    return result
