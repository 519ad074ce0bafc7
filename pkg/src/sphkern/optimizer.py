"""Direct optimization of embeddings on the sphere.

Stands in for self-supervised training at desk scale: two views of a set of
latent points are treated as free parameters and moved by projected gradient
descent on ``lam * alignment + mu * regularizer``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .harmonics import embedding_moment_stats
from .kernels import KernelSpec, coefficients
from .losses import REGULARIZERS, LossWeights, regularized_loss
from .sampling import UniformReference, philox_normals, philox_uniforms, sample_uniform_sphere

# Philox stream ids; one per independent random quantity
STREAM_LATENT = 10
STREAM_CENTERS = 11
STREAM_VIEW_DIRECTIONS = (12, 13)
STREAM_VIEW_ANGLES = (14, 15)
STREAM_REFERENCE = 16
STREAM_INIT = 17

DIVERGENCE_FACTOR = 10.0
DEFAULT_REFERENCE_SIZE = 4096
TRAJECTORY_COLUMNS = ("step", "total", "align", "unif", "mean_norm", "autocorr_dev", "mc_mmd", "mc_mmd_se")


class DivergenceError(RuntimeError):
    """The loss grew past the divergence guard."""


def normalize_rows(Z: np.ndarray) -> np.ndarray:
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


@dataclass(frozen=True)
class TwoViewBatch:
    Z1: np.ndarray
    Z2: np.ndarray
    latent: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.Z1.shape != self.Z2.shape:
            raise ValueError("views must have the same shape")


def perturb_in_random_planes(X: np.ndarray, max_angle: float, seed: int, direction_stream: int,
                             angle_stream: int) -> np.ndarray:
    """Rotate each row by an angle uniform in ``[0, max_angle]`` inside a random
    2-plane containing it."""
    n, q = X.shape
    d = philox_normals(seed, direction_stream, n, q)
    d -= np.sum(d * X, axis=1, keepdims=True) * X
    d = normalize_rows(d)
    theta = max_angle * philox_uniforms(seed, angle_stream, n, 1)
    return normalize_rows(np.cos(theta) * X + np.sin(theta) * d)


def generate_two_view_data(q: int, n: int, clusters: int, noise_angle: float, seed: int) -> TwoViewBatch:
    """Latent unit points (uniform if ``clusters == 0``, otherwise point
    ``i`` sits on center ``i mod clusters``) and two perturbed views."""
    if q < 3 or n < 1 or clusters < 0 or noise_angle < 0:
        raise ValueError("need q >= 3, n >= 1, clusters >= 0, noise_angle >= 0")
    if clusters == 0:
        latent = np.array(sample_uniform_sphere(q, n, seed, stream=STREAM_LATENT).points)
    else:
        centers = sample_uniform_sphere(q, clusters, seed, stream=STREAM_CENTERS).points
        latent = np.array(centers[np.arange(n) % clusters])
    views = [
        perturb_in_random_planes(latent, noise_angle, seed, STREAM_VIEW_DIRECTIONS[v], STREAM_VIEW_ANGLES[v])
        for v in (0, 1)
    ]
    provenance = {"q": q, "n": n, "clusters": clusters, "noise_angle": noise_angle, "seed": seed}
    return TwoViewBatch(views[0], views[1], latent, provenance)


def antipodal_frames_init(q: int, seed: int) -> np.ndarray:
    """``2q`` points whose second moment is exactly ``I/q`` but whose mean is not 0.

    Two random orthonormal frames, each vector flipped into the half-space
    ``u_1 >= 0``.  Sign flips leave ``z z^T`` unchanged, so only the order-1
    (mean) part of the uniformity loss is non-zero.
    """
    frames = []
    for k in range(2):
        g = philox_normals(seed, STREAM_INIT + 100 * k, q, q)
        Q, R = np.linalg.qr(g)
        Q = Q * np.sign(np.diag(R))
        frames.append(Q.T)
    Z = np.vstack(frames)
    Z *= np.where(Z[:, :1] < 0, -1.0, 1.0)
    return Z


def tangent_project(z, g):
    """Remove the radial component: ``g - (g . z) z`` (row-wise for batches)."""
    z = np.asarray(z, dtype=float)
    g = np.asarray(g, dtype=float)
    return g - np.sum(g * z, axis=-1, keepdims=True) * z


@dataclass(frozen=True)
class OptimConfig:
    spec: KernelSpec
    weights: LossWeights = LossWeights()
    loss: str = "sfrik"
    steps: int = 1000
    step_size: float | None = None
    eval_every: int = 100
    seed: int = 0
    reference_size: int = DEFAULT_REFERENCE_SIZE

    def __post_init__(self):
        if self.loss not in REGULARIZERS:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.steps < 1 or self.eval_every < 1 or self.reference_size < 2:
            raise ValueError("steps, eval_every >= 1 and reference_size >= 2 required")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step size must be > 0")
        if not self.spec.centered:
            raise ValueError("the measurement kernel must be centered")

    @property
    def effective_step(self) -> float:
        """Configured step, or ``0.5 / (lam + mu * sum_{l >= 1} b_l)``."""
        if self.step_size is not None:
            return self.step_size
        scale = float(np.sum(coefficients(self.spec))) if self.loss == "sfrik" else 1.0
        return 0.5 / (self.weights.lam + self.weights.mu * scale)


@dataclass(frozen=True)
class CheckpointRecord:
    step: int
    total: float
    align: float
    unif: float
    mean_norm: float
    autocorr_dev: float
    mc_mmd: float
    mc_mmd_se: float

    def as_row(self) -> list:
        return [getattr(self, c) for c in TRAJECTORY_COLUMNS]


@dataclass(frozen=True)
class Trajectory:
    records: tuple
    config: OptimConfig | None = None
    final_Z1: np.ndarray | None = field(default=None, repr=False, compare=False)
    final_Z2: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def initial(self) -> CheckpointRecord:
        return self.records[0]

    @property
    def final(self) -> CheckpointRecord:
        return self.records[-1]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRAJECTORY_COLUMNS)
            for rec in self.records:
                writer.writerow([rec.step] + [format(x, ".17g") for x in rec.as_row()[1:]])
        return path

    def summary(self) -> dict:
        return {"initial": self.initial.__dict__, "final": self.final.__dict__, "checkpoints": len(self.records)}


def read_trajectory_csv(path) -> list[CheckpointRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [CheckpointRecord(int(r["step"]), *(float(r[c]) for c in TRAJECTORY_COLUMNS[1:])) for r in reader]


def evaluate_checkpoint(spec: KernelSpec, Z1, Z2, uniform_ref, weights: LossWeights = LossWeights(),
                        loss: str = "sfrik", step: int = 0) -> CheckpointRecord:
    """Loss terms for both views; moment and MMD statistics for view 1.

    ``uniform_ref`` is a :class:`UniformReference` or a ``SampleSet`` of
    uniform points used for the Monte-Carlo MMD to uniform.
    """
    if not isinstance(uniform_ref, UniformReference):
        uniform_ref = UniformReference(spec, uniform_ref)
    report = regularized_loss(loss, weights, spec, Z1, Z2)
    stats = embedding_moment_stats(Z1)
    mmd, se = uniform_ref.estimate(Z1)
    return CheckpointRecord(int(step), report.value, report.terms["align"], report.terms["unif"],
                            stats["mean_norm"], stats["autocorr_deviation"], mmd, se)


def minimize(config: OptimConfig, data: TwoViewBatch) -> Trajectory:
    """Projected gradient descent ``z <- normalize(z - eta * P_z grad)`` on both views.

    Records a checkpoint at step 0, every ``eval_every`` steps and at the end.
    Raises :class:`DivergenceError` if the loss exceeds 10x its initial value.
    """
    if data.Z1.shape[1] != config.spec.q:
        raise ValueError("data dimension does not match the kernel")
    Z1, Z2 = normalize_rows(np.array(data.Z1)), normalize_rows(np.array(data.Z2))
    eta = config.effective_step
    ref = UniformReference(
        config.spec, sample_uniform_sphere(config.spec.q, config.reference_size, config.seed, stream=STREAM_REFERENCE)
    )

    def checkpoint(step):
        return evaluate_checkpoint(config.spec, Z1, Z2, ref, config.weights, config.loss, step)

    records = [checkpoint(0)]
    limit = DIVERGENCE_FACTOR * abs(records[0].total) + 1e-9
    for step in range(1, config.steps + 1):
        report = regularized_loss(config.loss, config.weights, config.spec, Z1, Z2)
        if not math.isfinite(report.value) or report.value > limit:
            raise DivergenceError(f"loss {report.value:.6g} at step {step} exceeds {limit:.6g}")
        g1, g2 = report.grads
        Z1 = normalize_rows(Z1 - eta * tangent_project(Z1, g1))
        Z2 = normalize_rows(Z2 - eta * tangent_project(Z2, g2))
        if step % config.eval_every == 0 or step == config.steps:
            records.append(checkpoint(step))
    if records[-1].total > limit:
        raise DivergenceError("final loss exceeds the divergence guard")
    return Trajectory(tuple(records), config, Z1, Z2)


def uniformity_only(spec: KernelSpec, steps: int, step_size: float | None = None, eval_every: int = 100,
                    seed: int = 0) -> OptimConfig:
    """Config with ``lam = 0`` so only the uniformity term acts."""
    return OptimConfig(spec, LossWeights(lam=0.0, mu=0.5), "sfrik", steps, step_size, eval_every, seed)


# Settings reported for large-scale training; q is the embedding dimension used there.
PRESETS = {
    "sfrik-q8192-L2": {"q": 8192, "lam": 4000.0, "b": (1.0, 20.0, 0.0)},
    "sfrik-q16384-L2": {"q": 16384, "lam": 20000.0, "b": (1.0, 40.0, 0.0)},
    "sfrik-q32768-L2": {"q": 32768, "lam": 40000.0, "b": (1.0, 40.0, 0.0)},
    "sfrik-q32768-L3": {"q": 32768, "lam": 40000.0, "b": (1.0, 40.0, 40.0)},
    "sfrik-in20-q1024-L2": {"q": 1024, "lam": 400.0, "b": (1.0, 40.0, 0.0)},
    "sfrik-in20-q8192-L1": {"q": 8192, "lam": 10000.0, "b": (1.0, 0.0, 0.0)},
    "sfrik-in20-q8192-L3": {"q": 8192, "lam": 4000.0, "b": (1.0, 40.0, 40.0)},
    "auh-in20-q1024": {"q": 1024, "lam": 400.0, "t_scale": 2.5, "mu": 1.0},
    "simclr-in20-q1024": {"q": 1024, "tau": 0.15},
    "vicreg-in20-q1024": {"q": 1024, "lam": 4.0, "mu": 10.0, "nu": 1.0},
}


def preset_config(name: str, q: int | None = None, **overrides) -> OptimConfig:
    """Build an :class:`OptimConfig` from a named preset, optionally at another ``q``."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    p = dict(PRESETS[name])
    dim = int(q if q is not None else p.pop("q"))
    p.pop("q", None)
    loss = name.split("-")[0]
    b = p.pop("b", (1.0, 1.0, 0.0))
    spec = KernelSpec.truncated(dim, {l + 1: w for l, w in enumerate(b) if w}, centered=True)
    weights = LossWeights(**{k: v for k, v in p.items()})
    return replace(OptimConfig(spec, weights, loss), **overrides)
