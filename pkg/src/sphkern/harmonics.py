"""Explicit spherical harmonics of orders 1 and 2 and the moment form of the
squared MMD for a centered kernel truncated at order 2.

Raw bases (fixed order, triangularity of ``M_l`` depends on it):

* order 1: ``u_1, ..., u_q``;
* order 2: ``u_j u_j'`` for ``j < j'`` in lexicographic order, then
  ``u_j^2 - 1/q`` for ``j = 2 .. q``.

Basis functions are sparse polynomials ``{exponent tuple: coefficient}`` so
that inner products on the sphere are exact sums of monomial integrals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .sphere_math import harmonic_space_dim, sphere_surface_area

UNIT_NORM_TOL = 1e-9

Polynomial = dict  # {tuple[int, ...]: float}


@lru_cache(maxsize=None)
def _even_monomial_integral(q: int, nonzero: tuple[int, ...]) -> float:
    zeros = q - len(nonzero)
    log_val = math.log(2.0) + zeros * math.lgamma(0.5)
    log_val += sum(math.lgamma(0.5 * (e + 1)) for e in nonzero)
    log_val -= math.lgamma(0.5 * (sum(nonzero) + q))
    return math.exp(log_val)


def monomial_sphere_integral(exponents) -> float:
    """``int u_1^e_1 ... u_q^e_q dsigma`` over the unit sphere in ``R^q``.

    Zero when an exponent is odd, otherwise
    ``2 prod Gamma((e_j + 1)/2) / Gamma(sum (e_j + 1)/2)``.
    """
    exps = [int(e) for e in exponents]
    if any(e < 0 for e in exps):
        raise ValueError("exponents must be non-negative")
    if any(e % 2 for e in exps):
        return 0.0
    return _even_monomial_integral(len(exps), tuple(sorted(e for e in exps if e)))


def _unit(q: int, *idx: int) -> tuple[int, ...]:
    e = [0] * q
    for j in idx:
        e[j] += 1
    return tuple(e)


def raw_basis(q: int, order: int) -> tuple[Polynomial, ...]:
    """Raw (non-orthonormal) harmonic basis of the given order (1 or 2)."""
    if order == 1:
        return tuple({_unit(q, j): 1.0} for j in range(q))
    if order == 2:
        cross = [{_unit(q, j, k): 1.0} for j in range(q) for k in range(j + 1, q)]
        squares = [{_unit(q, j, j): 1.0, (0,) * q: -1.0 / q} for j in range(1, q)]
        return tuple(cross + squares)
    raise ValueError("explicit harmonic bases exist for orders 1 and 2 only")


def sphere_inner_product(p1: Polynomial, p2: Polynomial) -> float:
    total = 0.0
    for e1, c1 in p1.items():
        for e2, c2 in p2.items():
            total += c1 * c2 * monomial_sphere_integral([a + b for a, b in zip(e1, e2)])
    return total


def basis_gram(basis) -> np.ndarray:
    n = len(basis)
    gram = np.empty((n, n))
    for i in range(n):
        for j in range(i + 1):
            gram[i, j] = gram[j, i] = sphere_inner_product(basis[i], basis[j])
    return gram


def orthonormalizer(gram: np.ndarray) -> np.ndarray:
    """Lower-triangular ``M`` with ``M G M^T = I`` (Gram-Schmidt in matrix form)."""
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("raw harmonic basis has a singular Gram matrix") from exc
    m = solve_triangular(chol, np.eye(gram.shape[0]), lower=True)
    return np.tril(m)


@dataclass(frozen=True)
class HarmonicBasis:
    q: int
    b1: float
    b2: float
    raw1: tuple
    raw2: tuple
    M1: np.ndarray
    M2: np.ndarray
    a1: float
    a2: float

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.raw1), len(self.raw2)


def _scaled_weight(q: int, l: int, b: float) -> float:
    return b * sphere_surface_area(q) / harmonic_space_dim(q, l)


def build_basis(q: int, b1: float, b2: float) -> HarmonicBasis:
    """Orthonormal order-1 and order-2 harmonics and the weights ``a_l``."""
    if int(q) != q or q < 3:
        raise ValueError("q must be an integer >= 3")
    if b1 < 0 or b2 < 0:
        raise ValueError("weights must be non-negative")
    q = int(q)
    raw1, raw2 = raw_basis(q, 1), raw_basis(q, 2)
    # <u_j, u_j'> = delta |S^{q-1}| / q, so M1 is a multiple of the identity
    m1 = math.sqrt(q / sphere_surface_area(q)) * np.eye(q)
    m2 = orthonormalizer(basis_gram(raw2))
    for m in (m1, m2):
        m.setflags(write=False)
    return HarmonicBasis(q, float(b1), float(b2), raw1, raw2, m1, m2,
                         _scaled_weight(q, 1, b1), _scaled_weight(q, 2, b2))


def _check_unit_rows(Z: np.ndarray) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if np.any(np.abs(np.linalg.norm(Z, axis=1) - 1.0) > UNIT_NORM_TOL):
        raise ValueError("feature maps need unit vectors")
    return Z


def raw_features(Z: np.ndarray, order: int) -> np.ndarray:
    """Raw basis evaluated at each row of ``Z``; shape ``(n, size)``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if order == 1:
        return Z
    if order == 2:
        q = Z.shape[1]
        j, k = np.triu_indices(q, 1)
        return np.hstack([Z[:, j] * Z[:, k], Z[:, 1:] ** 2 - 1.0 / q])
    raise ValueError("explicit harmonic bases exist for orders 1 and 2 only")


def harmonic_values(basis: HarmonicBasis, order: int, Z: np.ndarray) -> np.ndarray:
    """Orthonormal harmonics ``Y_{l,k}(z)`` for each row of ``Z``."""
    Z = _check_unit_rows(Z)
    m = basis.M1 if order == 1 else basis.M2
    return raw_features(Z, order) @ m.T


def feature_map(basis: HarmonicBasis, Z: np.ndarray) -> np.ndarray:
    """``Phi(z)`` such that ``Phi(u) . Phi(v) = b1 P_1(q; u.v) + b2 P_2(q; u.v)``.

    Accepts a single vector or a batch (one row per vector).
    """
    single = np.ndim(Z) == 1
    out = np.hstack([
        math.sqrt(basis.a1) * harmonic_values(basis, 1, Z),
        math.sqrt(basis.a2) * harmonic_values(basis, 2, Z),
    ])
    return out[0] if single else out


def zonal_sum(basis: HarmonicBasis, order: int, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Row-wise ``sum_k Y_{l,k}(u_i) Y_{l,k}(v_i)`` (the addition-theorem left side)."""
    return np.sum(harmonic_values(basis, order, U) * harmonic_values(basis, order, V), axis=1)


def mmd_via_moments(basis: HarmonicBasis, Z: np.ndarray) -> float:
    """Squared MMD to uniform from the mean raw features.

    ``a1 |M1 mean Phi'_1|^2 + a2 |M2 mean Phi'_2|^2``; costs ``O(q^2 n + q^4)``
    instead of the ``O(q n^2)`` double sum.
    """
    Z = _check_unit_rows(Z)
    mean1 = basis.M1 @ raw_features(Z, 1).mean(axis=0)
    mean2 = basis.M2 @ raw_features(Z, 2).mean(axis=0)
    return float(basis.a1 * mean1 @ mean1 + basis.a2 * mean2 @ mean2)


def embedding_moment_stats(Z: np.ndarray) -> dict[str, float]:
    """``|mean z|`` and ``|mean z z^T - I/q|_F`` of a batch of embeddings."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n, q = Z.shape
    mean_norm = float(np.linalg.norm(Z.mean(axis=0)))
    if q <= n:
        dev = Z.T @ Z / n - np.eye(q) / q
        autocorr = float(np.linalg.norm(dev))
    else:
        # same quantity through the n x n Gram matrix, avoiding a q x q buffer
        gram = Z @ Z.T
        sq = np.sum(gram * gram) / n**2 - 2.0 * np.trace(gram) / (q * n) + 1.0 / q
        autocorr = math.sqrt(max(sq, 0.0))
    return {"mean_norm": mean_norm, "autocorr_deviation": autocorr}


def export_matrices_csv(basis: HarmonicBasis, directory) -> tuple[Path, Path]:
    """Write ``M1.csv`` and ``M2.csv`` (row-major, 17 significant digits)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = (directory / "M1.csv", directory / "M2.csv")
    for path, m in zip(paths, (basis.M1, basis.M2)):
        np.savetxt(path, m, fmt="%.17g", delimiter=",")
    return paths


__all__ = [
    "HarmonicBasis",
    "basis_gram",
    "build_basis",
    "embedding_moment_stats",
    "export_matrices_csv",
    "feature_map",
    "harmonic_values",
    "mmd_via_moments",
    "monomial_sphere_integral",
    "orthonormalizer",
    "raw_basis",
    "raw_features",
    "sphere_inner_product",
    "zonal_sum",
]
