"""Reproducible uniform sampling on S^{q-1} and Monte-Carlo MMD estimates.

Random numbers come from the counter-based Philox4x64 generator keyed by
``(seed, stream)``.  Row ``r`` of a sample always consumes the same block of
counters, so any row range can be regenerated on its own and the result does
not depend on how the work is split.  Gaussians are produced with the
Box-Muller transform from 53-bit uniforms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernels import KernelSpec, gram_matrix, kernel_eval

GENERATOR_LABEL = "philox4x64-boxmuller"
SE_BLOCKS = 100
KERNEL_BLOCK = 1024
_TWO_POW_53 = float(2**53)

# stream ids used across the package
STREAM_UNIFORM = 0


def _bit_generator(seed: int, stream: int) -> np.random.Philox:
    if not (0 <= int(seed) < 2**64 and 0 <= int(stream) < 2**64):
        raise ValueError("seed and stream must be unsigned 64-bit integers")
    return np.random.Philox(key=np.array([int(seed), int(stream)], dtype=np.uint64))


def philox_uniforms(seed: int, stream: int, n_rows: int, width: int, start: int = 0) -> np.ndarray:
    """``(n_rows, width)`` uniforms in (0, 1); row ``r`` depends only on
    ``(seed, stream, start + r, width)``."""
    per_row = 4 * math.ceil(width / 4)
    bg = _bit_generator(seed, stream)
    bg.advance(int(start) * per_row // 4)
    raw = bg.random_raw(int(n_rows) * per_row).reshape(int(n_rows), per_row)[:, :width]
    return ((raw >> np.uint64(11)).astype(float) + 0.5) / _TWO_POW_53


def philox_normals(seed: int, stream: int, n_rows: int, width: int, start: int = 0) -> np.ndarray:
    """``(n_rows, width)`` standard normals via Box-Muller, row-addressable."""
    pairs = math.ceil(width / 2)
    u = philox_uniforms(seed, stream, n_rows, 2 * pairs, start)
    radius = np.sqrt(-2.0 * np.log(u[:, :pairs]))
    angle = 2.0 * np.pi * u[:, pairs:]
    out = np.empty((int(n_rows), 2 * pairs))
    out[:, 0::2] = radius * np.cos(angle)
    out[:, 1::2] = radius * np.sin(angle)
    return out[:, :width]


@dataclass(frozen=True)
class SampleSet:
    """``n`` unit vectors in ``R^q`` together with how they were generated."""

    points: np.ndarray
    seed: int
    generator: str = GENERATOR_LABEL
    stream: int = STREAM_UNIFORM
    start: int = 0

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def q(self) -> int:
        return self.points.shape[1]

    def to_csv(self, path) -> Path:
        """One row per point, 17 significant digits."""
        path = Path(path)
        np.savetxt(path, self.points, fmt="%.17g", delimiter=",")
        return path


def read_points_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def sample_uniform_sphere(q: int, n: int, seed: int, start: int = 0, stream: int = STREAM_UNIFORM) -> SampleSet:
    """``n`` i.i.d. uniform points on S^{q-1} (normalized Gaussians)."""
    if q < 1 or n < 0:
        raise ValueError("need q >= 1 and n >= 0")
    g = philox_normals(seed, stream, n, q, start)
    points = g / np.linalg.norm(g, axis=1, keepdims=True)
    points.setflags(write=False)
    return SampleSet(points, int(seed), GENERATOR_LABEL, int(stream), int(start))


def block_standard_error(values: np.ndarray, blocks: int = SE_BLOCKS) -> float:
    """Standard error of ``values.mean()`` from the spread of ``blocks`` block means."""
    values = np.asarray(values, dtype=float)
    blocks = min(blocks, values.size)
    if blocks < 2:
        return float("nan")
    means = np.array([chunk.mean() for chunk in np.array_split(values, blocks)])
    return float(means.std(ddof=1) / math.sqrt(blocks))


def uniform_mean_embedding_mc(spec: KernelSpec, v, n: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo ``int K(u, v) dU(u)`` and its block standard error.

    The exact value is ``b_0`` for every unit vector ``v``.
    """
    v = np.asarray(v, dtype=float)
    U = sample_uniform_sphere(spec.q, n, seed).points
    vals = kernel_eval(spec, np.clip(U @ v, -1.0, 1.0))
    return float(vals.mean()), block_standard_error(vals)


def _points(X) -> np.ndarray:
    return np.atleast_2d(np.asarray(X.points if isinstance(X, SampleSet) else X, dtype=float))


def _row_means(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``mean_j K(a_i, b_j)`` for every row of ``A``, in fixed row blocks."""
    out = np.empty(A.shape[0])
    for start in range(0, A.shape[0], KERNEL_BLOCK):
        stop = start + KERNEL_BLOCK
        out[start:stop] = gram_matrix(spec, A[start:stop], B).mean(axis=1)
    return out


def mmd_two_sample(spec: KernelSpec, Z, W) -> float:
    """Biased (V-statistic) squared MMD between two samples."""
    Z, W = _points(Z), _points(W)
    kzz = _row_means(spec, Z, Z).mean()
    kww = _row_means(spec, W, W).mean()
    kzw = _row_means(spec, Z, W).mean()
    return float(kzz + kww - 2.0 * kzw)


class UniformReference:
    """A uniform reference sample with its self-similarity terms cached, for
    repeated MMD-to-uniform estimates against different batches."""

    def __init__(self, spec: KernelSpec, sample: SampleSet):
        if sample.q != spec.q:
            raise ValueError("reference dimension does not match the kernel")
        self.spec = spec
        self.sample = sample
        self.W = _points(sample)
        self.w_row_means = _row_means(spec, self.W, self.W)
        self.kww = float(self.w_row_means.mean())

    def estimate(self, Z, blocks: int = SE_BLOCKS) -> tuple[float, float]:
        """Squared MMD between ``Z`` and the reference, with a standard error.

        The error accounts for the reference sample only (``Z`` is fixed); it is
        computed from block means of the first-order influence
        ``2 mean_w' K(w, w') - 2 mean_z K(z, w)`` of each reference point.
        """
        Z = _points(Z)
        kzz = _row_means(self.spec, Z, Z).mean()
        z_to_w = _row_means(self.spec, self.W, Z)
        value = float(kzz + self.kww - 2.0 * z_to_w.mean())
        influence = 2.0 * self.w_row_means - 2.0 * z_to_w
        return value, block_standard_error(influence, blocks)


def mmd_to_uniform_mc(spec: KernelSpec, Z, reference: SampleSet) -> tuple[float, float]:
    return UniformReference(spec, reference).estimate(Z)
