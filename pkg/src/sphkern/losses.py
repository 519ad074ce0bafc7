"""Self-supervised losses on batches of embeddings, with analytic gradients.

Embeddings are rows of an ``(n, q)`` array.  Losses are differentiated with
respect to the rows as free vectors; keeping them on the sphere is the
caller's job (see :func:`sphkern.optimizer.tangent_project`).

The regularizers follow the generic objective
``lam * alignment + mu * regularizer`` where the regularizer is one of
``sfrik`` (kernel uniformity on both views), ``auh``, ``simclr`` or ``vicreg``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .kernels import KernelSpec, _phi_raw

REGULARIZERS = ("sfrik", "auh", "simclr", "vicreg")
VICREG_BLOCK = 512


@dataclass(frozen=True)
class LossWeights:
    """Weights of the total objective and of the baseline regularizers.

    ``lam = 0`` is accepted so that the regularizer can be studied alone.
    """

    lam: float = 1.0
    mu: float = 0.5
    tau: float = 0.15
    t_scale: float = 2.5
    nu: float = 1.0
    gamma: float = 1.0
    epsilon: float = 1e-4

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lam must be >= 0")
        for name in ("mu", "tau", "t_scale", "nu", "gamma", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class LossReport:
    """Loss value, named terms and one gradient per input batch."""

    value: float
    terms: dict = field(default_factory=dict)
    grads: tuple = ()

    @property
    def grad_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(g * g)) for g in self.grads))

    def to_dict(self) -> dict:
        return {"value": self.value, "terms": dict(self.terms), "grad_norm": self.grad_norm}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _as_batch(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 1:
        raise ValueError("a batch is a non-empty (n, q) array")
    return Z


def _pair(Z1, Z2) -> tuple[np.ndarray, np.ndarray]:
    Z1, Z2 = _as_batch(Z1), _as_batch(Z2)
    if Z1.shape != Z2.shape:
        raise ValueError(f"view shapes differ: {Z1.shape} vs {Z2.shape}")
    return Z1, Z2


def alignment_loss(Z1, Z2) -> LossReport:
    """Mean squared distance between paired embeddings of the two views."""
    Z1, Z2 = _pair(Z1, Z2)
    diff = Z1 - Z2
    n = Z1.shape[0]
    value = float(np.sum(diff * diff) / n)
    g = 2.0 * diff / n
    return LossReport(value, {"align": value}, (g, -g))


# ---------------------------------------------------------------------------
# kernel uniformity


def _fast_path_weights(spec: KernelSpec):
    if spec.family != "truncated":
        return None
    w = spec.weights()
    if any(l > 3 for l in w):
        return None
    return w.get(1, 0.0), w.get(2, 0.0), w.get(3, 0.0)


def _truncated3_phi(q: int, b, t, derivative: bool):
    """``b1 t + b2 (q t^2 - 1)/(q - 1) + b3 ((q + 2) t^3 - 3 t)/(q - 1)`` in Horner form."""
    b1, b2, b3 = b
    c0 = -b2 / (q - 1)
    c1 = b1 - 3 * b3 / (q - 1)
    c2 = b2 * q / (q - 1)
    c3 = b3 * (q + 2) / (q - 1)
    if derivative:
        return (3 * c3 * t + 2 * c2) * t + c1
    return ((c3 * t + c2) * t + c1) * t + c0


def uniformity_loss(spec: KernelSpec, Z, fast: bool | None = None, grad: bool = True) -> LossReport:
    """Biased estimate ``(1/n^2) sum_{i,i'} phi~(z_i . z_i')`` of the squared MMD
    between the batch and the uniform distribution (diagonal included).

    ``fast`` selects the explicit cubic formula for truncated kernels of order
    at most 3 (default: whenever it applies).
    """
    if not spec.centered:
        raise ValueError("uniformity loss needs a centered kernel (b_0 removed)")
    Z = _as_batch(Z)
    n, q = Z.shape
    if q != spec.q:
        raise ValueError(f"batch dimension {q} does not match kernel dimension {spec.q}")
    weights3 = _fast_path_weights(spec)
    if fast and weights3 is None:
        raise ValueError("fast path needs a truncated kernel of order <= 3")
    use_fast = weights3 is not None if fast is None else fast
    G = Z @ Z.T
    if spec.family == "gendist":
        # |z - z|^p has no derivative at 0; self-pairs contribute the constant phi~(1)
        np.fill_diagonal(G, 1.0)
    if use_fast:
        phi = _truncated3_phi(q, weights3, G, False)
    else:
        phi = _phi_raw(spec, G)
    value = float(phi.sum() / n**2)
    grads = ()
    if grad:
        dphi = _truncated3_phi(q, weights3, G, True) if use_fast else _phi_raw(spec, G, derivative=True)
        grads = (2.0 / n**2 * (dphi @ Z),)
    return LossReport(value, {"unif": value}, grads)


def total_loss(weights: LossWeights, spec: KernelSpec, Z1, Z2) -> LossReport:
    """``lam * alignment + mu * (uniformity(Z1) + uniformity(Z2))``."""
    return regularized_loss("sfrik", weights, spec, Z1, Z2)


# ---------------------------------------------------------------------------
# baseline regularizers


def simclr_regularizer(tau: float, Z1, Z2) -> LossReport:
    """Contrastive log-partition term over all ``2n`` embeddings, self-pairs excluded."""
    Z1, Z2 = _pair(Z1, Z2)
    n = Z1.shape[0]
    A = np.vstack([Z1, Z2])
    S = A @ A.T / tau
    np.fill_diagonal(S, -np.inf)
    lse = logsumexp(S, axis=1)
    value = float(lse.sum() / (2 * n))
    P = np.exp(S - lse[:, None])
    g = (P + P.T) @ A / (2 * n * tau)
    return LossReport(value, {"simclr": value}, (g[:n], g[n:]))


def _auh_view(t_scale: float, Z: np.ndarray):
    n = Z.shape[0]
    sq = np.sum(Z * Z, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    E = np.exp(-t_scale * D)
    s = E.sum()
    value = math.log(s) / (2 * n**2)
    g = -4.0 * t_scale / (2 * n**2 * s) * (E.sum(axis=1)[:, None] * Z - E @ Z)
    return value, g, s


def auh_log_energy(t_scale: float, Z) -> float:
    """``log sum_{i,i'} exp(-t |z_i - z_i'|^2)`` for one view."""
    return math.log(_auh_view(t_scale, _as_batch(Z))[2])


def auh_regularizer(t_scale: float, Z1, Z2) -> LossReport:
    """``(1 / (2 n^2)) sum_v log sum_{i,i'} exp(-t |z_i^v - z_i'^v|^2)``."""
    Z1, Z2 = _pair(Z1, Z2)
    v1, g1, _ = _auh_view(t_scale, Z1)
    v2, g2, _ = _auh_view(t_scale, Z2)
    return LossReport(v1 + v2, {"auh_1": v1, "auh_2": v2}, (g1, g2))


def vicreg_terms(weights: LossWeights, Z, grad: bool = True):
    """Variance hinge ``v`` and off-diagonal covariance ``c`` of one batch.

    The covariance matrix is formed in column blocks, so memory stays at
    ``O(q * block)`` while the cost is ``O(n q^2)``.

    Returns ``(v, c, dv, dc)``; the gradients are ``None`` when ``grad`` is false.
    """
    X = _as_batch(Z)
    n, q = X.shape
    if n < 2:
        raise ValueError("VICReg needs at least two embeddings per batch")
    Xc = X - X.mean(axis=0)
    var = np.sum(Xc * Xc, axis=0) / (n - 1)
    std = np.sqrt(var + weights.epsilon)
    active = weights.gamma > std
    v = float(np.sum(np.where(active, weights.gamma - std, 0.0)) / q)
    c_sum = 0.0
    dc = np.empty_like(X) if grad else None
    for start in range(0, q, VICREG_BLOCK):
        stop = min(start + VICREG_BLOCK, q)
        C = Xc.T @ Xc[:, start:stop] / (n - 1)
        C[np.arange(start, stop), np.arange(stop - start)] = 0.0
        c_sum += float(np.sum(C * C))
        if grad:
            dc[:, start:stop] = 4.0 / (q * (n - 1)) * (Xc @ C)
    c = c_sum / q
    dv = -np.where(active, 1.0 / std, 0.0) * Xc / (q * (n - 1)) if grad else None
    return v, c, dv, dc


def vicreg_regularizer(weights: LossWeights, Z1, Z2, grad: bool = True) -> LossReport:
    """``(v(Z1) + v(Z2)) / 2 + nu / (2 mu) * (c(Z1) + c(Z2))`` on raw embeddings."""
    Z1, Z2 = _pair(Z1, Z2)
    ratio = weights.nu / (2.0 * weights.mu)
    v1, c1, dv1, dc1 = vicreg_terms(weights, Z1, grad)
    v2, c2, dv2, dc2 = vicreg_terms(weights, Z2, grad)
    value = 0.5 * (v1 + v2) + ratio * (c1 + c2)
    grads = (0.5 * dv1 + ratio * dc1, 0.5 * dv2 + ratio * dc2) if grad else ()
    terms = {"var_1": v1, "var_2": v2, "cov_1": c1, "cov_2": c2}
    return LossReport(value, terms, grads)


def regularizer(kind: str, weights: LossWeights, spec: KernelSpec | None, Z1, Z2) -> LossReport:
    """Method-specific regularizer; ``sfrik`` is the two-view uniformity sum."""
    if kind == "sfrik":
        if spec is None:
            raise ValueError("sfrik needs a kernel")
        u1, u2 = uniformity_loss(spec, Z1), uniformity_loss(spec, Z2)
        return LossReport(u1.value + u2.value, {"unif_1": u1.value, "unif_2": u2.value},
                          (u1.grads[0], u2.grads[0]))
    if kind == "auh":
        return auh_regularizer(weights.t_scale, Z1, Z2)
    if kind == "simclr":
        return simclr_regularizer(weights.tau, Z1, Z2)
    if kind == "vicreg":
        return vicreg_regularizer(weights, Z1, Z2)
    raise ValueError(f"unknown regularizer {kind!r}; choose from {REGULARIZERS}")


def regularized_loss(kind: str, weights: LossWeights, spec: KernelSpec | None, Z1, Z2) -> LossReport:
    """``lam * alignment + mu * regularizer(kind)``; terms hold ``align`` and ``unif``."""
    Z1, Z2 = _pair(Z1, Z2)
    a = alignment_loss(Z1, Z2)
    r = regularizer(kind, weights, spec, Z1, Z2)
    value = weights.lam * a.value + weights.mu * r.value
    grads = tuple(weights.lam * ga + weights.mu * gr for ga, gr in zip(a.grads, r.grads))
    terms = {"align": a.value, "unif": r.value, **r.terms}
    return LossReport(value, terms, grads)
