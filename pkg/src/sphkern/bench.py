"""Wall-time scaling of the kernel uniformity loss and the VICReg regularizer.

The uniformity loss costs ``O(q n^2)`` time and ``O(n^2)`` memory (Gram
matrix); the VICReg variance and covariance terms cost ``O(q^2 n)`` time and
``O(q^2)`` memory (covariance matrix).  Timings are medians over repeated
warm runs; exponents come from a least-squares line in log-log space.
"""
from __future__ import annotations

import csv
import statistics
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .kernels import KernelSpec
from .losses import VICREG_BLOCK, LossWeights, uniformity_loss, vicreg_regularizer
from .sampling import philox_normals

BENCH_LOSSES = ("sfrik", "vicreg")
DEFAULT_Q_SWEEP = (1024, 2048, 4096, 8192, 16384)
DEFAULT_N_SWEEP = (128, 256, 512, 1024, 2048)
FLOAT_BYTES = 8


@dataclass(frozen=True)
class BenchRecord:
    loss: str
    q: int
    n: int
    median_s: float
    min_s: float
    max_s: float
    repeats: int
    aux_bytes: int
    aux_bytes_impl: int


def aux_memory(loss: str, q: int, n: int) -> tuple[int, int]:
    """Auxiliary buffer size of the textbook algorithm and of this implementation."""
    if loss == "sfrik":
        return n * n * FLOAT_BYTES, n * n * FLOAT_BYTES
    return q * q * FLOAT_BYTES, q * min(q, VICREG_BLOCK) * FLOAT_BYTES


def _workload(loss: str, q: int, n: int, seed: int):
    X = philox_normals(seed, 0, n, q)
    if loss == "sfrik":
        spec = KernelSpec.truncated(q, {1: 1.0, 2: 40.0, 3: 40.0}, centered=True)
        Z = X / np.linalg.norm(X, axis=1, keepdims=True)
        return lambda: uniformity_loss(spec, Z, grad=False)
    if loss == "vicreg":
        Y = philox_normals(seed, 1, n, q)
        w = LossWeights()
        return lambda: vicreg_regularizer(w, X, Y, grad=False)
    raise ValueError(f"unknown benchmark loss {loss!r}; choose from {BENCH_LOSSES}")


def time_call(fn, repeats: int, warmup: int = 1) -> list[float]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return times


def bench_point(loss: str, q: int, n: int, repeats: int = 5, seed: int = 0) -> BenchRecord:
    if repeats < 5:
        raise ValueError("at least 5 timed repeats are required")
    times = time_call(_workload(loss, q, n, seed), repeats)
    nominal, impl = aux_memory(loss, q, n)
    return BenchRecord(loss, q, n, statistics.median(times), min(times), max(times), repeats, nominal, impl)


def fit_exponent(sizes, times) -> float:
    """Slope of ``log(time)`` against ``log(size)``; needs at least 4 sizes."""
    if len(sizes) < 4:
        raise ValueError("scaling exponents need at least 4 sizes")
    slope, _ = np.polyfit(np.log(sizes), np.log(times), 1)
    return float(slope)


def run_benchmark(losses=BENCH_LOSSES, q_list=DEFAULT_Q_SWEEP, n_fixed: int = 256,
                  n_list=DEFAULT_N_SWEEP, q_fixed: int = 1024, repeats: int = 5,
                  threads: int | None = 1, seed: int = 0) -> tuple[list[BenchRecord], dict]:
    """Sweep ``q`` at fixed batch size and ``n`` at fixed ``q`` for each loss.

    ``threads=None`` leaves the BLAS thread pool alone.
    """
    records: list[BenchRecord] = []
    fits: dict = {}
    with threadpool_limits(limits=threads):
        for loss in losses:
            q_recs = [bench_point(loss, q, n_fixed, repeats, seed) for q in q_list]
            n_recs = [bench_point(loss, q_fixed, n, repeats, seed) for n in n_list]
            records += q_recs + n_recs
            fits[loss] = {
                "exponent_q": fit_exponent([r.q for r in q_recs], [r.median_s for r in q_recs]),
                "exponent_n": fit_exponent([r.n for r in n_recs], [r.median_s for r in n_recs]),
                "n_fixed": n_fixed,
                "q_fixed": q_fixed,
            }
    fits["threads"] = threads
    return records, fits


def write_bench_csv(records, path) -> Path:
    path = Path(path)
    fields = list(BenchRecord.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            row = asdict(rec)
            for k in ("median_s", "min_s", "max_s"):
                row[k] = format(row[k], ".17g")
            writer.writerow(row)
    return path
