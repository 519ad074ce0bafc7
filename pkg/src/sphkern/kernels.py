"""Rotation-invariant (dot-product) kernels ``K(u, v) = phi(u . v)`` on S^{q-1}.

Three families are supported:

* ``truncated``: ``phi(t) = sum_l b_l P_l(q; t)`` for a finite list of weights;
* ``rbf``: ``phi(t) = exp(-2 sigma (1 - t))``, i.e. ``exp(-sigma |u - v|^2)``;
* ``gendist``: ``phi(t) = 2 V - |u - v|^(2s - q + 1)`` with
  ``(q - 1)/2 < s < (q + 1)/2`` and ``V`` the mean of ``|u - v|^(2s - q + 1)``
  over independent uniform ``u, v``.

Every kernel is described by its Legendre coefficients ``b_l``; a kernel is
positive definite iff all ``b_l >= 0``.  Centering removes ``b_0``.
"""
from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Mapping

import numpy as np

from .sphere_math import (
    _recurrence_rows,
    clamp_unit_interval,
    gauss_jacobi,
    harmonic_space_dim,
    legendre_series,
    sphere_area_ratio,
)

FAMILIES = ("truncated", "rbf", "gendist")
DEFAULT_ORDER = 40
POSITIVE_TOL = 1e-12


class QuadratureWarning(UserWarning):
    pass


class Universality(str, enum.Enum):
    UNIVERSAL_UP_TO_PROBE = "universal_up_to_probe"
    NOT_UNIVERSAL = "not_universal"


@dataclass(frozen=True)
class KernelSpec:
    """Immutable description of a rotation-invariant kernel.

    ``coefficients`` is only used by the truncated family and holds
    ``(l, b_l)`` pairs.  ``order`` is the working truncation order used when a
    closed-form family has to be expanded (for feature maps, reconstruction).
    """

    q: int
    family: str
    coefficients: tuple[tuple[int, float], ...] = ()
    sigma: float | None = None
    s: float | None = None
    centered: bool = False
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        family = self.family.lower()
        if family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", family)
        if int(self.q) != self.q or self.q < 3:
            raise ValueError("kernel dimension q must be an integer >= 3")
        coeffs = tuple(sorted((int(l), float(b)) for l, b in self.coefficients))
        object.__setattr__(self, "coefficients", coeffs)
        if family == "truncated":
            ls = [l for l, _ in coeffs]
            if len(set(ls)) != len(ls) or any(l < 0 for l in ls):
                raise ValueError("truncated coefficients need distinct orders >= 0")
            if any(not math.isfinite(b) or b < 0 for _, b in coeffs):
                raise ValueError("Legendre coefficients must be finite and >= 0")
            if self.centered and any(l == 0 and b != 0 for l, b in coeffs):
                raise ValueError("centered spec cannot carry b_0")
        elif family == "rbf":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("rbf kernel needs sigma > 0")
        else:
            lo, hi = 0.5 * (self.q - 1), 0.5 * (self.q + 1)
            if self.s is None or not lo < self.s < hi:
                raise ValueError(f"gendist exponent s must lie strictly in ({lo}, {hi})")

    @classmethod
    def truncated(cls, q: int, weights: Mapping[int, float], centered: bool = False) -> "KernelSpec":
        return cls(q, "truncated", tuple(weights.items()), centered=centered)

    @classmethod
    def rbf(cls, q: int, sigma: float, centered: bool = False) -> "KernelSpec":
        return cls(q, "rbf", sigma=sigma, centered=centered)

    @classmethod
    def gendist(cls, q: int, s: float, centered: bool = False) -> "KernelSpec":
        return cls(q, "gendist", s=s, centered=centered)

    @property
    def max_order(self) -> int:
        if self.family == "truncated":
            return max((l for l, _ in self.coefficients), default=0)
        return self.order

    def weights(self) -> dict[int, float]:
        return dict(self.coefficients)

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "family": self.family,
            "coefficients": [[l, b] for l, b in self.coefficients],
            "sigma": self.sigma,
            "s": self.s,
            "centered": self.centered,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> "KernelSpec":
        allowed = {"q", "family", "coefficients", "sigma", "s", "centered", "order"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown kernel keys: {sorted(unknown)}")
        return cls(
            q=data["q"],
            family=data["family"],
            coefficients=tuple((l, b) for l, b in data.get("coefficients") or ()),
            sigma=data.get("sigma"),
            s=data.get("s"),
            centered=bool(data.get("centered", False)),
            order=data.get("order", DEFAULT_ORDER),
        )

    @classmethod
    def from_json(cls, text: str) -> "KernelSpec":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# closed-form coefficients


def gendist_mean_distance(q: int, s: float) -> float:
    """``V``: mean of ``|u - v|^(2s - q + 1)`` for independent uniform u, v."""
    return math.exp(
        (2 * s - 1) * math.log(2.0) + math.lgamma(0.5 * q) + math.lgamma(s)
        - 0.5 * math.log(math.pi) - math.lgamma(0.5 * (q - 1) + s)
    )


def gendist_coefficients(q: int, s: float, max_order: int) -> np.ndarray:
    """Legendre coefficients of the generalized distance kernel.

    ``b_0 = V`` and ``b_l = N(q, l) * alpha_l`` where
    ``alpha_l = -V (a)_l / (c)_l`` with ``a = (q-1)/2 - s`` and
    ``c = (q-1)/2 + s``.  The Pochhammer ratio is built one factor at a time so
    neither overflow nor the sign of ``a`` is an issue.
    """
    KernelSpec.gendist(q, s)  # validates the range of s
    V = gendist_mean_distance(q, s)
    a = 0.5 * (q - 1) - s
    c = 0.5 * (q - 1) + s
    out = np.empty(max_order + 1)
    out[0] = V
    ratio = 1.0
    for l in range(1, max_order + 1):
        ratio *= (a + l - 1) / (c + l - 1)
        out[l] = -V * ratio * harmonic_space_dim(q, l)
    return out


def gendist_alpha_asymptote(q: int, s: float) -> float:
    """Constant ``A`` with ``alpha_l ~ A l^(-2s)`` as ``l -> infinity``.

    Equals ``-V Gamma((q-1)/2 + s) / Gamma((q-1)/2 - s)``; positive because the
    second Gamma argument lies in (-1, 0).
    """
    a = 0.5 * (q - 1) - s
    log_abs = (
        (2 * s - 1) * math.log(2.0) + math.lgamma(0.5 * q) + math.lgamma(s)
        - 0.5 * math.log(math.pi) - math.lgamma(a)
    )
    return math.exp(log_abs)  # -V * Gamma(c) / Gamma(a), Gamma(a) < 0


def _log_bessel_i_scaled(nu: float, sigma: float) -> float:
    """``log(I_nu(2 sigma)) - nu log(sigma)`` by its power series."""
    log_sigma = math.log(sigma)
    n_terms = 60 + int(8 * sigma)
    logs = [2 * k * log_sigma - math.lgamma(k + 1) - math.lgamma(nu + k + 1) for k in range(n_terms)]
    m = max(logs)
    return m + math.log(math.fsum(math.exp(x - m) for x in logs))


def rbf_log_coefficients(q: int, sigma: float, max_order: int) -> np.ndarray:
    """Natural log of the RBF Legendre coefficients.

    ``b_l = N(q, l) Gamma(q/2) sigma^(-(q-2)/2) exp(-2 sigma) I_{l + (q-2)/2}(2 sigma)``,
    obtained by evaluating the Rodrigues-form projection integral with the
    Bessel integral representation.  Every term is positive, so the log is
    finite for all ``l``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    out = np.empty(max_order + 1)
    for l in range(max_order + 1):
        nu = l + 0.5 * (q - 2)
        out[l] = (
            math.log(harmonic_space_dim(q, l)) + math.lgamma(0.5 * q) + l * math.log(sigma)
            - 2 * sigma + _log_bessel_i_scaled(nu, sigma)
        )
    return out


def rbf_coefficients(q: int, sigma: float, max_order: int) -> np.ndarray:
    return np.exp(rbf_log_coefficients(q, sigma, max_order))


def rbf_coefficient_bound(q: int, sigma: float, l: int) -> float:
    """Upper bound on the ``l``-th RBF coefficient from the Rodrigues integral."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    h = 0.5 * (q - 1)
    log_b = (
        math.log(2.0) + math.log(harmonic_space_dim(q, l)) + math.log(sphere_area_ratio(q))
        + math.lgamma(h) - l * math.log(2.0) - math.lgamma(l + h) + l * math.log(2 * sigma)
    )
    return math.exp(log_b)


def coefficients(spec: KernelSpec, max_order: int | None = None) -> np.ndarray:
    """Legendre coefficients ``b_0 .. b_L`` of ``spec`` (``b_0 = 0`` if centered)."""
    L = spec.max_order if max_order is None else int(max_order)
    if spec.family == "truncated":
        out = np.zeros(L + 1)
        for l, b in spec.coefficients:
            if l <= L:
                out[l] = b
    elif spec.family == "rbf":
        out = rbf_coefficients(spec.q, spec.sigma, L)
    else:
        out = gendist_coefficients(spec.q, spec.s, L)
    if spec.centered:
        out[0] = 0.0
    return out


def constant_term(spec: KernelSpec) -> float:
    """``b_0`` of the uncentered kernel."""
    return float(coefficients(replace(spec, centered=False), 0)[0])


# ---------------------------------------------------------------------------
# evaluation


def _phi_raw(spec: KernelSpec, t: np.ndarray, derivative: bool = False) -> np.ndarray:
    """phi (or phi') without domain checks; polynomial families extend off [-1, 1].

    For ``gendist`` the derivative is singular at ``t = 1``; there it is set to 0,
    which only affects the radial direction of coincident points.
    """
    t = np.asarray(t, dtype=float)
    q = spec.q
    if spec.family == "truncated":
        return legendre_series(q, coefficients(spec), t, derivative)
    if spec.family == "rbf":
        val = np.exp(-2.0 * spec.sigma * (1.0 - t))
        if derivative:
            return 2.0 * spec.sigma * val
        return val - (constant_term(spec) if spec.centered else 0.0)
    p = 2 * spec.s - q + 1
    gap = np.maximum(2.0 - 2.0 * t, 0.0)
    if derivative:
        with np.errstate(divide="ignore"):
            d = np.where(gap > 0, p * gap ** (0.5 * p - 1.0), 0.0)
        return d
    V = gendist_mean_distance(q, spec.s)
    return (V if spec.centered else 2 * V) - gap ** (0.5 * p)


def kernel_eval(spec: KernelSpec, t):
    """Evaluate ``phi(t)`` (``phi~(t)`` when ``spec.centered``) for ``t`` in [-1, 1]."""
    t_in = t
    val = _phi_raw(spec, clamp_unit_interval(t))
    return float(val) if np.ndim(t_in) == 0 else val


def kernel_derivative(spec: KernelSpec, t):
    t_in = t
    val = _phi_raw(spec, clamp_unit_interval(t), derivative=True)
    return float(val) if np.ndim(t_in) == 0 else val


def gram_matrix(spec: KernelSpec, U: np.ndarray, V: np.ndarray | None = None) -> np.ndarray:
    """``[phi(u_i . v_j)]`` for rows of ``U`` and ``V`` (unit vectors)."""
    U = np.asarray(U, dtype=float)
    V = U if V is None else np.asarray(V, dtype=float)
    return kernel_eval(spec, np.clip(U @ V.T, -1.0, 1.0))


def center_kernel(spec: KernelSpec) -> KernelSpec:
    """Drop ``b_0``; idempotent."""
    if spec.family == "truncated":
        kept = tuple((l, b) for l, b in spec.coefficients if l != 0)
        return replace(spec, coefficients=kept, centered=True)
    return replace(spec, centered=True)


def tanh_sinh_rule(q: int, step: float = 1 / 64, span: float = 3.5):
    """Double-exponential nodes/weights on (-1, 1) for ``(1 - t^2)^((q-3)/2) dt``.

    Clusters nodes doubly-exponentially at the endpoints, so integrands with
    algebraic endpoint singularities (e.g. ``(1 - t)^0.2``) still converge.
    """
    x = np.arange(-span, span + step / 2, step)
    u = 0.5 * math.pi * np.sinh(x)
    nodes = np.tanh(u)
    # 1 - t^2 = sech^2(u), computed without cancellation
    sech2 = 1.0 / np.cosh(u) ** 2
    weights = step * 0.5 * math.pi * np.cosh(x) * sech2 * sech2 ** (0.5 * (q - 3))
    keep = np.abs(nodes) < 1.0
    return nodes[keep], weights[keep]


def _project(phi, q: int, L: int, nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    rows = _recurrence_rows(q, L, nodes)
    vals = np.asarray(phi(nodes), dtype=float)
    dims = np.array([harmonic_space_dim(q, l) for l in range(L + 1)], dtype=float)
    return dims * sphere_area_ratio(q) * (rows @ (weights * vals))


def expand_coefficients(
    phi: Callable[[np.ndarray], np.ndarray],
    q: int,
    max_order: int,
    n_nodes: int | None = None,
    tol: float = 1e-8,
) -> np.ndarray:
    """Project ``phi`` onto ``P_0 .. P_L`` by quadrature.

    ``b_l = N(q, l) |S^{q-2}| / |S^{q-1}| * int phi P_l (1 - t^2)^((q-3)/2) dt``.

    The Gauss-Jacobi rule is tried first and checked against a rule with twice
    the nodes.  If some coefficient moves by more than ``tol`` (typically a
    non-smooth ``phi`` at ``t = 1``), the projection is redone with tanh-sinh
    rules, and a :class:`QuadratureWarning` is issued if those do not agree
    to ``tol`` either.
    """
    L = int(max_order)
    if n_nodes is None:
        n_nodes = max(200, 4 * L + 20)
    b = _project(phi, q, L, *gauss_jacobi(q, n_nodes))
    drift = np.max(np.abs(_project(phi, q, L, *gauss_jacobi(q, 2 * n_nodes)) - b))
    if drift <= tol:
        return b
    step = 1 / 64 if L <= 20 else 1 / 128
    b = _project(phi, q, L, *tanh_sinh_rule(q, step / 2))
    drift = np.max(np.abs(_project(phi, q, L, *tanh_sinh_rule(q, step)) - b))
    if drift > tol:
        warnings.warn(
            f"quadrature not converged for order {L} (drift {drift:.2e})",
            QuadratureWarning,
            stacklevel=2,
        )
    return b


def is_universal(spec: KernelSpec, probe_order: int) -> Universality:
    """Classify a kernel by the positivity of its coefficients up to ``probe_order``.

    Truncated kernels are never universal.  For the closed-form families the
    coefficients are evaluated in log space; they count as positive when the
    log is finite, since their true values (e.g. ~1e-19 for RBF at order 20)
    sit far below any absolute floating-point tolerance.  Order 0 is ignored
    for centered kernels.
    """
    if spec.family == "truncated":
        return Universality.NOT_UNIVERSAL
    start = 1 if spec.centered else 0
    if spec.family == "rbf":
        logs = rbf_log_coefficients(spec.q, spec.sigma, probe_order)[start:]
        ok = np.all(np.isfinite(logs))
    else:
        # polynomial decay keeps these well above the absolute tolerance
        ok = np.all(gendist_coefficients(spec.q, spec.s, probe_order)[start:] > POSITIVE_TOL)
    return Universality.UNIVERSAL_UP_TO_PROBE if ok else Universality.NOT_UNIVERSAL
