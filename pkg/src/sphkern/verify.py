"""Verification suites: numerical oracles and invariants, reported as checks.

Each suite is a function ``suite(seed) -> list[Check]``.  A check passes when
``measured <= tolerance`` (for lower bounds the suite stores the margin as a
non-positive number and a zero tolerance).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from functools import partial

import numpy as np

from .harmonics import basis_gram, build_basis, embedding_moment_stats, mmd_via_moments, zonal_sum
from .kernels import (
    KernelSpec,
    Universality,
    center_kernel,
    coefficients,
    constant_term,
    expand_coefficients,
    gendist_coefficients,
    gram_matrix,
    is_universal,
    kernel_eval,
    rbf_coefficient_bound,
    rbf_coefficients,
)
from .losses import (
    LossWeights,
    alignment_loss,
    auh_regularizer,
    simclr_regularizer,
    total_loss,
    uniformity_loss,
    vicreg_regularizer,
)
from .optimizer import (
    TwoViewBatch,
    antipodal_frames_init,
    generate_two_view_data,
    minimize,
    tangent_project,
    uniformity_only,
)
from .sampling import mmd_two_sample, philox_normals, sample_uniform_sphere, uniform_mean_embedding_mc
from .sphere_math import (
    LegendreTable,
    gauss_jacobi,
    harmonic_space_dim,
    legendre_closed_form,
    legendre_weight_norm,
    sphere_surface_area,
)


@dataclass(frozen=True)
class Check:
    name: str
    status: str
    measured: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def check(name: str, measured: float, tolerance: float) -> Check:
    measured = float(measured)
    ok = math.isfinite(measured) and measured <= tolerance
    return Check(name, "pass" if ok else "fail", measured, float(tolerance))


def _unit_rows(X: np.ndarray) -> np.ndarray:
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def _random_unit(rng, n, q):
    return _unit_rows(rng.standard_normal((n, q)))


# ---------------------------------------------------------------------------
# sphere_math


def legendre_suite(seed: int = 0, q_values=range(3, 65), max_order: int = 30) -> list[Check]:
    """Recurrence vs closed form, error relative to ``max(1, |P|)``."""
    t = np.linspace(-1.0, 1.0, 1001)
    worst = 0.0
    for q in q_values:
        rows = LegendreTable(q, max_order).evaluate(t)
        for l in range(max_order + 1):
            ref = legendre_closed_form(q, l, t)
            worst = max(worst, float(np.max(np.abs(rows[l] - ref) / np.maximum(1.0, np.abs(ref)))))
    return [check("legendre recurrence vs closed form", worst, 1e-10)]


def orthogonality_suite(seed: int = 0, q_values=range(3, 17), max_order: int = 10) -> list[Check]:
    off_worst = diag_worst = 0.0
    for q in q_values:
        nodes, weights = gauss_jacobi(q, 200)
        rows = LegendreTable(q, max_order).evaluate(nodes)
        gram = (rows * weights) @ rows.T
        norms = np.array([legendre_weight_norm(q, n) for n in range(max_order + 1)])
        off_worst = max(off_worst, float(np.max(np.abs(gram - np.diag(np.diag(gram))))))
        diag_worst = max(diag_worst, float(np.max(np.abs(np.diag(gram) / norms - 1.0))))
    return [
        check("quadrature off-diagonal inner products", off_worst, 1e-9),
        check("quadrature norms (relative)", diag_worst, 1e-9),
    ]


# ---------------------------------------------------------------------------
# kernels


def mean_embedding_kernels(q: int) -> list[KernelSpec]:
    return [
        KernelSpec.truncated(q, {0: 2.0, 1: 5.0, 2: 3.0}),
        KernelSpec.rbf(q, 1.0),
        KernelSpec.gendist(q, 0.5 * q),
    ]


def mean_embedding_suite(seed: int = 0, q_values=(3, 8, 32), probes: int = 5, n: int = 100_000) -> list[Check]:
    """Monte-Carlo mean embedding of the uniform law equals ``b_0``.

    Measured value: ``|estimate - b_0| / SE`` (tolerance 3).
    """
    out = []
    for q in q_values:
        V = _unit_rows(philox_normals(seed, 1000 + q, probes, q))
        for spec in mean_embedding_kernels(q):
            b0 = constant_term(spec)
            worst = 0.0
            for k, v in enumerate(V):
                est, se = uniform_mean_embedding_mc(spec, v, n, seed + 1 + k)
                worst = max(worst, abs(est - b0) / se)
            out.append(check(f"mean embedding = b0 [{spec.family}, q={q}] (in SE units)", worst, 3.0))
    return out


def coefficient_suite(seed: int = 0) -> list[Check]:
    out = []
    for s in (1.2, 1.5, 1.8):
        spec = KernelSpec.gendist(3, s)
        quad = expand_coefficients(partial(kernel_eval, spec), 3, 10)
        err = float(np.max(np.abs(gendist_coefficients(3, s, 10) - quad)))
        out.append(check(f"gendist closed form vs quadrature (q=3, s={s})", err, 1e-8))
    for q in (3, 8, 32):
        for sigma in (0.5, 1.0, 4.0):
            b = rbf_coefficients(q, sigma, 20)
            bounds = np.array([rbf_coefficient_bound(q, sigma, l) for l in range(21)])
            out.append(check(f"rbf b_l > 0 (q={q}, sigma={sigma}, l<=20)", -float(b.min()), -1e-300))
            out.append(check(f"rbf b_l / bound - 1 (q={q}, sigma={sigma})", float(np.max(b / bounds - 1.0)), 1e-12))
    return out


def kernel_invariant_suite(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    worst_eig = 0.0
    for q in (3, 6, 16):
        Z = _random_unit(rng, 64, q)
        for spec in (KernelSpec.truncated(q, {1: 1, 2: 40, 3: 40}, centered=True), KernelSpec.rbf(q, 1.0),
                     KernelSpec.gendist(q, 0.5 * q, centered=True)):
            worst_eig = max(worst_eig, -float(np.linalg.eigvalsh(gram_matrix(spec, Z)).min()))
    out.append(check("Gram matrices PSD (-min eigenvalue)", worst_eig, 1e-8))
    spec = KernelSpec.rbf(5, 1.0)
    once, twice = center_kernel(spec), center_kernel(center_kernel(spec))
    out.append(check("centering idempotent", 0.0 if once == twice else 1.0, 0.0))
    verdicts = [
        is_universal(KernelSpec.truncated(8192, {1: 1, 2: 40, 3: 40}), 20) is Universality.NOT_UNIVERSAL,
        is_universal(KernelSpec.rbf(3, 1.0), 20) is Universality.UNIVERSAL_UP_TO_PROBE,
        is_universal(KernelSpec.gendist(5, 2.2), 20) is Universality.UNIVERSAL_UP_TO_PROBE,
    ]
    out.append(check("universality verdicts", float(len(verdicts) - sum(verdicts)), 0.0))
    t = np.linspace(-1, 1, 1001)
    for q in (3, 8):
        spec = KernelSpec.rbf(q, 1.0)
        recon = coefficients(spec, 40) @ LegendreTable(q, 40).evaluate(t)
        out.append(check(f"rbf 40-term reconstruction sup error (q={q})",
                         float(np.max(np.abs(recon - kernel_eval(spec, t)))), 1e-4))
    spec = KernelSpec.truncated(7, {0: 1.0, 2: 3.0, 5: 2.0})
    err = np.max(np.abs(expand_coefficients(partial(kernel_eval, spec), 7, 8) - coefficients(spec, 8)))
    out.append(check("expansion of a truncated kernel returns its weights", float(err), 1e-9))
    return out


# ---------------------------------------------------------------------------
# harmonics


def feature_map_suite(seed: int = 0, batches: int = 50, q_values=(3, 8, 16)) -> list[Check]:
    """Double-sum estimator vs explicit moment form; measured relative to ``max(1, value)``."""
    rng = np.random.default_rng(seed)
    out = []
    for q in q_values:
        worst = 0.0
        for _ in range(batches):
            b1, b2 = 50.0 * (1.0 - rng.random(2))
            n = int(rng.integers(1, 257))
            Z = _random_unit(rng, n, q)
            spec = KernelSpec.truncated(q, {1: b1, 2: b2}, centered=True)
            direct = float(gram_matrix(spec, Z).mean())
            moments = mmd_via_moments(build_basis(q, b1, b2), Z)
            worst = max(worst, abs(direct - moments) / max(1.0, abs(direct)))
        out.append(check(f"kernel trick vs feature map (q={q}, {batches} batches)", worst, 1e-8))
    Z = np.vstack([np.eye(6), -np.eye(6)])
    stats = embedding_moment_stats(Z)
    out.append(check("zero MMD gives uniform moments", max(stats.values()), 1e-6))
    return out


def addition_theorem_suite(seed: int = 0, q_values=range(3, 13), pairs: int = 1000) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for q in q_values:
        basis = build_basis(q, 1.0, 1.0)
        U, V = _random_unit(rng, pairs, q), _random_unit(rng, pairs, q)
        t = np.sum(U * V, axis=1)
        for l in (1, 2):
            rhs = harmonic_space_dim(q, l) / sphere_surface_area(q) * legendre_closed_form(q, l, t)
            worst = max(worst, float(np.max(np.abs(zonal_sum(basis, l, U, V) - rhs))))
        gram = basis.M2 @ basis_gram(basis.raw2) @ basis.M2.T
        worst = max(worst, float(np.max(np.abs(gram - np.eye(gram.shape[0])))))
    return [check("addition theorem residual and orthonormality", worst, 1e-8)]


# ---------------------------------------------------------------------------
# losses


def central_difference(f, arrays, h: float = 1e-5) -> list[np.ndarray]:
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            plus = [x.copy() for x in arrays]
            minus = [x.copy() for x in arrays]
            plus[k][idx] += h
            minus[k][idx] -= h
            g[idx] = (f(*plus) - f(*minus)) / (2 * h)
        grads.append(g)
    return grads


def gradient_error(report_fn, arrays) -> float:
    """``|fd - analytic| / |analytic|`` over all inputs (Frobenius norms)."""
    fd = central_difference(lambda *a: report_fn(*a).value, arrays)
    an = report_fn(*arrays).grads
    num = math.sqrt(sum(float(np.sum((x - y) ** 2)) for x, y in zip(fd, an)))
    den = math.sqrt(sum(float(np.sum(y * y)) for y in an))
    return num / den


def gradient_cases(q: int = 6) -> dict:
    w = LossWeights(lam=3.0, mu=0.5)
    l2 = KernelSpec.truncated(q, {1: 1.0, 2: 1.0}, centered=True)
    l3 = KernelSpec.truncated(q, {1: 1.0, 2: 20.0, 3: 5.0}, centered=True)
    rbf = KernelSpec.rbf(q, 2.0, centered=True)
    return {
        "alignment": (2, alignment_loss),
        "uniformity (L=2)": (1, partial(uniformity_loss, l2)),
        "uniformity (L=3)": (1, partial(uniformity_loss, l3)),
        "uniformity (centered rbf)": (1, partial(uniformity_loss, rbf)),
        "total objective": (2, partial(total_loss, w, l3)),
        "simclr": (2, partial(simclr_regularizer, w.tau)),
        "auh": (2, partial(auh_regularizer, w.t_scale)),
        "vicreg": (2, partial(vicreg_regularizer, w)),
    }


def gradient_suite(seed: int = 0, batches: int = 20, n: int = 8, q: int = 6) -> list[Check]:
    """Central differences (step 1e-5) vs analytic gradients on random batches.

    VICReg batches with a per-coordinate std within 1e-3 of the hinge are skipped.
    """
    rng = np.random.default_rng(seed)
    w = LossWeights()
    out = []
    for name, (n_args, fn) in gradient_cases(q).items():
        worst, done = 0.0, 0
        while done < batches:
            if name == "vicreg":
                arrays = [0.8 * rng.standard_normal((n, q)) for _ in range(n_args)]
                stds = [np.sqrt(a.var(axis=0, ddof=1) + w.epsilon) for a in arrays]
                if min(float(np.min(np.abs(s - w.gamma))) for s in stds) < 1e-3:
                    continue
            else:
                arrays = [_random_unit(rng, n, q) for _ in range(n_args)]
            worst = max(worst, gradient_error(fn, arrays))
            done += 1
        out.append(check(f"gradient {name} ({batches} batches)", worst, 1e-5))
    return out


def loss_invariant_suite(seed: int = 0) -> list[Check]:
    from scipy.stats import special_ortho_group

    rng = np.random.default_rng(seed)
    q = 6
    Z1, Z2 = _random_unit(rng, 10, q), _random_unit(rng, 10, q)
    R = special_ortho_group.rvs(q, random_state=seed)
    l3 = KernelSpec.truncated(q, {1: 1.0, 2: 40.0, 3: 40.0}, centered=True)

    def values(A, B):
        return np.array([
            alignment_loss(A, B).value,
            uniformity_loss(l3, A).value,
            uniformity_loss(KernelSpec.gendist(q, 3.1, centered=True), A).value,
            simclr_regularizer(0.15, A, B).value,
            auh_regularizer(2.5, A, B).value,
        ])

    out = [check("rotation invariance of losses", float(np.max(np.abs(values(Z1, Z2) - values(Z1 @ R.T, Z2 @ R.T)))),
                 1e-10)]
    worst = 0.0
    for _ in range(10):
        Z = _random_unit(rng, 32, q)
        fast, slow = uniformity_loss(l3, Z, fast=True).value, uniformity_loss(l3, Z, fast=False).value
        worst = max(worst, abs(fast - slow) / max(1.0, abs(slow)))
    out.append(check("cubic fast path vs generic path", worst, 1e-12))
    lowest = min(uniformity_loss(spec, _random_unit(rng, n, q)).value
                 for spec in (l3, KernelSpec.rbf(q, 1.0, centered=True)) for n in (1, 5, 40))
    out.append(check("uniformity loss non-negative (-min)", -lowest, 1e-12))
    return out


# ---------------------------------------------------------------------------
# sampling


def sampling_suite(seed: int = 0) -> list[Check]:
    a = sample_uniform_sphere(3, 100_000, seed).points
    b = sample_uniform_sphere(3, 100_000, seed).points
    out = [
        check("sampler determinism", 0.0 if np.array_equal(a, b) else 1.0, 0.0),
        check("sample coordinate means", float(np.max(np.abs(a.mean(axis=0)))), 0.01),
        check("sample mean of z_1^2 vs 1/3", abs(float(np.mean(a[:, 0] ** 2)) - 1 / 3), 0.005),
        check("sample row norms", float(np.max(np.abs(np.linalg.norm(a, axis=1) - 1.0))), 1e-12),
    ]
    spec = KernelSpec.rbf(4, 1.0, centered=True)
    Z = sample_uniform_sphere(4, 300, seed + 1).points
    out.append(check("MMD(Z, Z) == 0", abs(mmd_two_sample(spec, Z, Z)), 0.0))
    return out


# ---------------------------------------------------------------------------
# optimizer


def moment_run(q: int, steps: int = 2000, seed: int = 1):
    spec = KernelSpec.truncated(q, {1: 1.0, 2: 1.0}, centered=True)
    data = generate_two_view_data(q, 2 * q, 0, 0.0, seed)
    return minimize(uniformity_only(spec, steps, eval_every=steps // 4, seed=seed), data)


def ablation_run(q: int, weights: dict, steps: int = 2000, seed: int = 1):
    Z0 = antipodal_frames_init(q, seed)
    spec = KernelSpec.truncated(q, weights, centered=True)
    return minimize(uniformity_only(spec, steps, eval_every=steps // 4, seed=seed), TwoViewBatch(Z0, Z0.copy(), Z0))


def moments_suite(seed: int = 1, q_values=(4, 8, 16), steps: int = 2000) -> list[Check]:
    """Uniformity-only runs of ``2q`` points, the order-1 ablation, and the MMD drop."""
    out = []
    for q in q_values:
        traj = moment_run(q, steps, seed)
        f, i = traj.final, traj.initial
        out.append(check(f"mean_norm after {steps} steps (q={q})", f.mean_norm, 0.05))
        out.append(check(f"autocorr deviation after {steps} steps (q={q})", f.autocorr_dev, 0.05))
        out.append(check(f"MC-MMD final/initial (q={q}; {f.mc_mmd:.3g}+-{f.mc_mmd_se:.2g} "
                         f"vs {i.mc_mmd:.3g}+-{i.mc_mmd_se:.2g})", f.mc_mmd / i.mc_mmd, 0.1))
        abl = ablation_run(q, {2: 1.0}, steps, seed)
        out.append(check(f"order-2-only ablation keeps the mean (q={q}; -final/initial)",
                         -abl.final.mean_norm / abl.initial.mean_norm, -0.5))
    return out


def optimizer_invariant_suite(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    Z = _random_unit(rng, 50, 6)
    G = rng.standard_normal((50, 6))
    out = [check("tangent projection orthogonal", float(np.max(np.abs(np.sum(tangent_project(Z, G) * Z, axis=1)))),
                 1e-12)]
    spec = KernelSpec.rbf(5, 1.0, centered=True)
    traj = minimize(uniformity_only(spec, 300, eval_every=50), generate_two_view_data(5, 24, 0, 0.0, seed))
    unif = [r.unif for r in traj.records]
    out.append(check("uniformity non-increasing over 50-step windows",
                     max(b - a for a, b in zip(unif, unif[1:])), 1e-9))
    out.append(check("iterates stay unit-norm", float(np.max(np.abs(np.linalg.norm(traj.final_Z1, axis=1) - 1))),
                     1e-9))
    again = minimize(traj.config, generate_two_view_data(5, 24, 0, 0.0, seed))
    out.append(check("trajectory determinism", 0.0 if again.records == traj.records else 1.0, 0.0))
    return out


SUITES = {
    "legendre": legendre_suite,
    "orthogonality": orthogonality_suite,
    "mean-embedding": mean_embedding_suite,
    "feature-map": feature_map_suite,
    "addition-theorem": addition_theorem_suite,
    "coefficients": coefficient_suite,
    "kernels": kernel_invariant_suite,
    "gradients": gradient_suite,
    "losses": loss_invariant_suite,
    "sampling": sampling_suite,
    "moments": moments_suite,
    "optimizer": optimizer_invariant_suite,
}


SUITE_ALIASES = {"lemma2": "mean-embedding"}


def run_suite(name: str, seed: int = 0) -> list[Check]:
    name = SUITE_ALIASES.get(name, name)
    if name == "all":
        return [c for suite in SUITES.values() for c in suite(seed)]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {['all', *SUITES]}")
    return SUITES[name](seed)


def report_json(checks: list[Check]) -> str:
    return json.dumps([asdict(c) for c in checks], indent=2)
