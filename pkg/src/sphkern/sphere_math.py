"""Legendre (Gegenbauer) polynomials on the hypersphere, harmonic space
dimensions, sphere areas and Gauss-Jacobi quadrature.

``P_l(q; t)`` denotes the degree-``l`` Legendre polynomial in dimension ``q``,
normalised so that ``P_l(q; 1) = 1``.  It is orthogonal on ``[-1, 1]`` for the
weight ``(1 - t^2)^((q - 3) / 2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

# dot products of unit vectors drift past +-1 by a few ulps
BOUNDARY_SLACK = 1e-12


class DomainError(ValueError):
    """Argument outside the domain of a spherical function."""


def _check_q(q: int, minimum: int = 3) -> int:
    if int(q) != q or q < minimum:
        raise DomainError(f"dimension q must be an integer >= {minimum}, got {q}")
    return int(q)


def _check_order(l: int) -> int:
    if int(l) != l or l < 0:
        raise DomainError(f"order must be a non-negative integer, got {l}")
    return int(l)


def clamp_unit_interval(t):
    """Clamp ``t`` to [-1, 1], rejecting values further than 1e-12 outside."""
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(np.abs(t) > 1.0 + BOUNDARY_SLACK):
        raise DomainError("argument must lie in [-1, 1]")
    return np.clip(t, -1.0, 1.0)


def _as_output(values, t_in):
    return float(values) if np.ndim(t_in) == 0 else values


def legendre_closed_form(q: int, l: int, t):
    """Evaluate ``P_l(q; t)`` from its finite-sum definition.

    Coefficient ratios of Gamma functions are formed in log space, so very
    large ``q`` is fine.  The alternating sum loses accuracy for high ``l``;
    use :class:`LegendreTable` for anything beyond a reference evaluation.
    """
    q = _check_q(q)
    l = _check_order(l)
    t_in = t
    t = clamp_unit_interval(t)
    h = 0.5 * (q - 1)
    k = np.arange(l // 2 + 1)
    log_c = np.array([
        math.lgamma(l + 1) + math.lgamma(h) - math.lgamma(kk + 1)
        - math.lgamma(l - 2 * kk + 1) - math.lgamma(kk + h) - 2 * kk * math.log(2.0)
        for kk in k
    ])
    coef = np.where(k % 2 == 0, 1.0, -1.0) * np.exp(log_c)
    tt = t[..., None]
    terms = coef * (1.0 - tt**2) ** k * tt ** (l - 2 * k)
    return _as_output(terms.sum(axis=-1), t_in)


def _recurrence_rows(q: int, max_order: int, t: np.ndarray) -> np.ndarray:
    """Rows ``P_0 .. P_L`` at ``t`` without domain checks (works off [-1, 1])."""
    t = np.asarray(t, dtype=float)
    out = np.empty((max_order + 1,) + t.shape)
    out[0] = 1.0
    if max_order >= 1:
        out[1] = t
    for n in range(1, max_order):
        # (n + q - 2) P_{n+1} = (2n + q - 2) t P_n - n P_{n-1}
        out[n + 1] = ((2 * n + q - 2) * t * out[n] - n * out[n - 1]) / (n + q - 2)
    return out


def legendre_series(q: int, coeffs, t, derivative: bool = False) -> np.ndarray:
    """``sum_l b_l P_l(q; t)`` (or its ``t``-derivative) without domain checks.

    Runs the recurrence keeping only two rows, so memory is ``O(t.size)``.
    """
    b = np.asarray(coeffs, dtype=float)
    t = np.asarray(t, dtype=float)
    if derivative:
        l = np.arange(1, b.size)
        return legendre_series(q + 2, b[1:] * l * (l + q - 2) / (q - 1), t)
    if b.size == 0:
        return np.zeros_like(t)
    prev, cur = np.ones_like(t), t
    out = np.full_like(t, b[0])
    if b.size > 1:
        out = out + b[1] * t
    for n in range(1, b.size - 1):
        prev, cur = cur, ((2 * n + q - 2) * t * cur - n * prev) / (n + q - 2)
        if b[n + 1] != 0.0:
            out += b[n + 1] * cur
    return out


@dataclass(frozen=True)
class LegendreTable:
    """Three-term recurrence for ``P_0(q; .) .. P_L(q; .)``.

    Uses the Gegenbauer recurrence with parameter ``(q - 2) / 2`` rescaled so
    that every polynomial equals 1 at ``t = 1``.
    """

    q: int
    max_order: int
    alpha: np.ndarray = field(init=False, repr=False, compare=False)
    beta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_q(self.q)
        _check_order(self.max_order)
        n = np.arange(1, max(self.max_order, 1), dtype=float)
        alpha = (2 * n + self.q - 2) / (n + self.q - 2)
        beta = n / (n + self.q - 2)
        alpha.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    def evaluate(self, t_values) -> np.ndarray:
        t = clamp_unit_interval(np.atleast_1d(t_values))
        out = np.empty((self.max_order + 1, t.size))
        out[0] = 1.0
        if self.max_order >= 1:
            out[1] = t
        for i in range(self.max_order - 1):
            out[i + 2] = self.alpha[i] * t * out[i + 1] - self.beta[i] * out[i]
        return out


def legendre_recurrence(table: LegendreTable, t_values) -> np.ndarray:
    """Matrix of ``P_l(q; t)`` with one row per order ``l = 0 .. max_order``."""
    return table.evaluate(t_values)


def legendre_derivative(q: int, l: int, t):
    """``dP_l(q; t)/dt``, via ``l (l + q - 2) / (q - 1) * P_{l-1}(q + 2; t)``."""
    q = _check_q(q)
    l = _check_order(l)
    t_in = t
    t = clamp_unit_interval(t)
    if l == 0:
        return _as_output(np.zeros_like(t), t_in)
    vals = _recurrence_rows(q + 2, l - 1, t)[l - 1]
    return _as_output(l * (l + q - 2) / (q - 1) * vals, t_in)


def harmonic_space_dim(q: int, l: int) -> int:
    """Dimension ``N(q, l)`` of the order-``l`` spherical harmonics in ``R^q``.

    Exact integer arithmetic: ``(2l + q - 2) * C(l + q - 3, l) / (q - 2)``.
    """
    q = _check_q(q)
    l = _check_order(l)
    if l == 0:
        return 1
    if l == 1:
        return q
    num = (2 * l + q - 2) * math.comb(l + q - 3, l)
    return num // (q - 2)


def log_sphere_surface_area(q: int) -> float:
    q = _check_q(q, minimum=2)
    return math.log(2.0) + 0.5 * q * math.log(math.pi) - math.lgamma(0.5 * q)


def sphere_surface_area(q: int) -> float:
    """Surface area ``2 pi^(q/2) / Gamma(q/2)`` of the unit sphere in ``R^q``."""
    return math.exp(log_sphere_surface_area(q))


def sphere_area_ratio(q: int) -> float:
    """``|S^{q-2}| / |S^{q-1}|``, i.e. ``Gamma(q/2) / (sqrt(pi) Gamma((q-1)/2))``."""
    q = _check_q(q)
    return math.exp(math.lgamma(0.5 * q) - 0.5 * math.log(math.pi) - math.lgamma(0.5 * (q - 1)))


def legendre_weight_norm(q: int, l: int) -> float:
    """Squared weighted norm ``int P_l(q; t)^2 (1 - t^2)^((q-3)/2) dt``."""
    return 1.0 / (sphere_area_ratio(q) * harmonic_space_dim(q, l))


@lru_cache(maxsize=64)
def _gauss_jacobi_cached(q: int, n: int):
    a = 0.5 * (q - 3)
    k = np.arange(1, n, dtype=float)
    off = np.sqrt(k * (k + 2 * a) / ((2 * k + 2 * a + 1) * (2 * k + 2 * a - 1)))
    nodes, vecs = eigh_tridiagonal(np.zeros(n), off)
    weights = vecs[0] ** 2
    # enforce the exact symmetry of the rule
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    weights = weights / weights.sum() / sphere_area_ratio(q)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_jacobi(q: int, n: int | None = None, max_order: int = 0):
    """Gauss rule for the weight ``(1 - t^2)^((q - 3) / 2)`` on [-1, 1].

    Nodes come from the Golub-Welsch eigenproblem of the symmetric Jacobi
    matrix, so large ``q`` does not overflow.  ``n`` defaults to
    ``max(200, 4 * max_order + 20)``.

    Returns:
        ``(nodes, weights)``; the weights sum to ``|S^{q-1}| / |S^{q-2}|``.
    """
    q = _check_q(q)
    if n is None:
        n = max(200, 4 * max_order + 20)
    if n < 1:
        raise ValueError("node count must be positive")
    return _gauss_jacobi_cached(q, int(n))
