"""Single-threaded host inference latency for fp32 and int8 models."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .quant import QuantizedNet, forward_int8, model_to_bytes
from .nn import forward
from .zoo import count_macs, count_params

BENCH_COLUMNS = ["model", "format", "mean_us", "p50_us", "p99_us", "bytes", "params", "macs"]


@dataclass
class BenchResult:
    model: str
    format: str
    mean_us: float
    p50_us: float
    p99_us: float
    bytes: int
    params: int
    macs: int


def bench_latency(model, n_iters: int = 10000, warmup: int = 100, seed: int = 0) -> BenchResult:
    """Time ``n_iters`` single-scan inferences on a fixed random input after ``warmup`` runs."""
    spec = model.spec
    x = np.random.default_rng(seed).random(spec.input_length, dtype=np.float32)
    if isinstance(model, QuantizedNet):
        xq = model.input.quantize(x)
        fmt = "int8"

        def run():
            return forward_int8(model, xq)
    else:
        fmt = "fp32"

        def run():
            return forward(model, x)

    times = np.empty(n_iters, dtype=np.int64)
    with threadpool_limits(limits=1):
        for _ in range(warmup):
            run()
        clock = time.perf_counter_ns
        for i in range(n_iters):
            t0 = clock()
            run()
            times[i] = clock() - t0
    us = times / 1000.0
    return BenchResult(spec.name, fmt, float(us.mean()), float(np.percentile(us, 50)),
                       float(np.percentile(us, 99)), len(model_to_bytes(model)),
                       count_params(spec), count_macs(spec))


def write_bench_csv(results, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=BENCH_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in results:
            row = asdict(r)
            for k in ("mean_us", "p50_us", "p99_us"):
                row[k] = f"{row[k]:.2f}"
            w.writerow(row)
