import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from sphkern.kernels import KernelSpec, gram_matrix
from sphkern.losses import (
    LossWeights,
    alignment_loss,
    auh_log_energy,
    auh_regularizer,
    regularized_loss,
    simclr_regularizer,
    total_loss,
    uniformity_loss,
    vicreg_regularizer,
    vicreg_terms,
)

SFRIK_L2 = KernelSpec.truncated(6, {1: 1.0, 2: 1.0}, centered=True)
SFRIK_L3 = KernelSpec.truncated(6, {1: 1.0, 2: 20.0, 3: 5.0}, centered=True)


def uniform_points(rng, n, q):
    x = rng.standard_normal((n, q))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def central_difference(f, arrays, h=1e-5):
    out = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            plus = [x.copy() for x in arrays]
            minus = [x.copy() for x in arrays]
            plus[k][idx] += h
            minus[k][idx] -= h
            g[idx] = (f(*plus) - f(*minus)) / (2 * h)
        out.append(g)
    return out


def relative_gradient_error(f, report_fn, arrays):
    fd = central_difference(f, arrays)
    an = report_fn(*arrays).grads
    num = math.sqrt(sum(np.sum((x - y) ** 2) for x, y in zip(fd, an)))
    den = math.sqrt(sum(np.sum(y**2) for y in an))
    return num / max(den, 1e-300)


def e(q, j):
    v = np.zeros(q)
    v[j] = 1.0
    return v


def test_alignment_examples():
    z = uniform_points(np.random.default_rng(0), 5, 4)
    assert alignment_loss(z, z).value == 0.0
    assert alignment_loss([e(3, 0)], [-e(3, 0)]).value == 4.0
    assert alignment_loss([e(3, 0)], [e(3, 1)]).value == pytest.approx(2.0)
    with pytest.raises(ValueError):
        alignment_loss(np.ones((2, 3)), np.ones((3, 3)))


def test_uniformity_examples():
    spec = KernelSpec.truncated(5, {1: 2.0, 2: 3.0, 3: 4.0}, centered=True)
    assert uniformity_loss(spec, [e(5, 2)]).value == pytest.approx(9.0)
    for q in (3, 7, 40):
        z = uniform_points(np.random.default_rng(q), 1, q)[0]
        spec = KernelSpec.truncated(q, {1: 3.3, 2: 1.7}, centered=True)
        assert uniformity_loss(spec, [z, -z]).value == pytest.approx(1.7, rel=1e-12)
    spec = KernelSpec.truncated(3, {1: 1.0, 2: 1.0}, centered=True)
    assert uniformity_loss(spec, [e(3, 0), e(3, 1)]).value == pytest.approx(0.75)


def test_uniformity_rejects_uncentered():
    with pytest.raises(ValueError):
        uniformity_loss(KernelSpec.truncated(3, {0: 1.0, 1: 1.0}), [e(3, 0)])
    with pytest.raises(ValueError):
        uniformity_loss(KernelSpec.rbf(3, 1.0), [e(3, 0)])


def test_total_loss_examples():
    spec = KernelSpec.truncated(4, {1: 1.0, 2: 1.0}, centered=True)
    z = [e(4, 1)]
    assert total_loss(LossWeights(lam=1.0, mu=0.5), spec, z, z).value == pytest.approx(2.0)
    rng = np.random.default_rng(2)
    Z1, Z2 = uniform_points(rng, 6, 4), uniform_points(rng, 6, 4)
    report = total_loss(LossWeights(lam=0.0, mu=0.7), spec, Z1, Z2)
    expected = 0.7 * (uniformity_loss(spec, Z1).value + uniformity_loss(spec, Z2).value)
    assert report.value == pytest.approx(expected, rel=1e-14)


def test_simclr_examples():
    z = e(4, 0)
    assert simclr_regularizer(0.15, [z], [z]).value == pytest.approx(1 / 0.15)
    eye = np.eye(4)
    assert simclr_regularizer(0.5, eye[:2], eye[2:]).value == pytest.approx(math.log(3))


def test_auh_examples():
    z = e(3, 0)
    assert auh_regularizer(2.5, [z, z], [z, z]).value == pytest.approx(math.log(4) / 4)
    rng = np.random.default_rng(9)
    Z1, Z2 = uniform_points(rng, 1, 3), uniform_points(rng, 1, 3)
    assert auh_regularizer(2.5, Z1, Z2).value == pytest.approx(0.0, abs=1e-15)


def test_auh_energy_matches_uncentered_rbf_estimator():
    rng = np.random.default_rng(10)
    Z = uniform_points(rng, 30, 7)
    t = 2.5
    direct = gram_matrix(KernelSpec.rbf(7, t), Z).mean()
    assert math.exp(auh_log_energy(t, Z)) / 30**2 == pytest.approx(direct, rel=1e-12)


def test_vicreg_examples():
    w = LossWeights(gamma=1.0, epsilon=1e-4)
    Z = np.tile([0.3, -0.2, 0.9], (5, 1))
    v, c, _, _ = vicreg_terms(w, Z)
    assert v == pytest.approx(0.99) and c == 0.0
    # per-coordinate variance 2 >= gamma^2 and uncorrelated coordinates
    Z = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float) * math.sqrt(1.5)
    v, c, _, _ = vicreg_terms(w, Z)
    assert v == 0.0 and c == pytest.approx(0.0, abs=1e-30)
    with pytest.raises(ValueError):
        vicreg_terms(w, np.ones((1, 3)))


def test_vicreg_blocked_covariance_matches_dense(monkeypatch):
    import sphkern.losses as losses

    rng = np.random.default_rng(3)
    X = rng.standard_normal((9, 23))
    w = LossWeights()
    ref = vicreg_terms(w, X)
    monkeypatch.setattr(losses, "VICREG_BLOCK", 5)
    blocked = vicreg_terms(w, X)
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / 8
    dense_c = (np.sum(C * C) - np.sum(np.diag(C) ** 2)) / 23
    assert ref[1] == pytest.approx(dense_c, rel=1e-12)
    assert blocked[1] == pytest.approx(dense_c, rel=1e-12)
    np.testing.assert_allclose(blocked[3], ref[3], rtol=1e-12, atol=1e-15)


def test_vicreg_combination():
    rng = np.random.default_rng(4)
    Z1, Z2 = rng.standard_normal((6, 5)) * 0.3, rng.standard_normal((6, 5)) * 0.3
    w = LossWeights(mu=2.0, nu=3.0)
    v1, c1, _, _ = vicreg_terms(w, Z1)
    v2, c2, _, _ = vicreg_terms(w, Z2)
    expected = 0.5 * (v1 + v2) + 3.0 / 4.0 * (c1 + c2)
    assert vicreg_regularizer(w, Z1, Z2).value == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("q", [3, 6, 11])
def test_fast_path_matches_generic(q):
    rng = np.random.default_rng(q)
    spec = KernelSpec.truncated(q, {1: 1.0, 2: 40.0, 3: 40.0}, centered=True)
    for _ in range(10):
        Z = uniform_points(rng, 32, q)
        fast = uniformity_loss(spec, Z, fast=True)
        slow = uniformity_loss(spec, Z, fast=False)
        assert abs(fast.value - slow.value) <= 1e-12 * max(1.0, abs(slow.value))
        np.testing.assert_allclose(fast.grads[0], slow.grads[0], rtol=1e-12, atol=1e-12)


def test_fast_path_refused_for_other_kernels():
    with pytest.raises(ValueError):
        uniformity_loss(KernelSpec.rbf(3, 1.0, centered=True), [e(3, 0)], fast=True)


@pytest.mark.parametrize(
    "spec",
    [
        KernelSpec.truncated(5, {1: 1, 2: 1}, centered=True),
        KernelSpec.truncated(5, {1: 0.1, 2: 40, 3: 40, 6: 2}, centered=True),
        KernelSpec.rbf(5, 1.5, centered=True),
        KernelSpec.gendist(5, 2.3, centered=True),
    ],
)
def test_uniformity_nonnegative(spec):
    rng = np.random.default_rng(0)
    for n in (1, 2, 7, 50):
        assert uniformity_loss(spec, uniform_points(rng, n, 5)).value >= -1e-12


def rotation_invariant_losses(Z1, Z2):
    w = LossWeights()
    return [
        alignment_loss(Z1, Z2).value,
        uniformity_loss(SFRIK_L3, Z1).value,
        uniformity_loss(KernelSpec.rbf(6, 1.0, centered=True), Z1).value,
        uniformity_loss(KernelSpec.gendist(6, 3.1, centered=True), Z1).value,
        simclr_regularizer(w.tau, Z1, Z2).value,
        auh_regularizer(w.t_scale, Z1, Z2).value,
    ]


def test_rotation_invariance():
    rng = np.random.default_rng(12)
    Z1, Z2 = uniform_points(rng, 10, 6), uniform_points(rng, 10, 6)
    R = special_ortho_group.rvs(6, random_state=5)
    before = rotation_invariant_losses(Z1, Z2)
    after = rotation_invariant_losses(Z1 @ R.T, Z2 @ R.T)
    np.testing.assert_allclose(after, before, rtol=0, atol=1e-10)


GRADIENT_CASES = {
    "alignment": (lambda a, b: alignment_loss(a, b).value, alignment_loss),
    "sfrik_l2": (lambda a: uniformity_loss(SFRIK_L2, a).value, lambda a: uniformity_loss(SFRIK_L2, a)),
    "sfrik_l3": (lambda a: uniformity_loss(SFRIK_L3, a, fast=False).value,
                 lambda a: uniformity_loss(SFRIK_L3, a, fast=False)),
    "rbf": (lambda a: uniformity_loss(KernelSpec.rbf(6, 2.0, centered=True), a).value,
            lambda a: uniformity_loss(KernelSpec.rbf(6, 2.0, centered=True), a)),
    "total": (lambda a, b: total_loss(LossWeights(lam=3.0), SFRIK_L3, a, b).value,
              lambda a, b: total_loss(LossWeights(lam=3.0), SFRIK_L3, a, b)),
    "simclr": (lambda a, b: simclr_regularizer(0.15, a, b).value, lambda a, b: simclr_regularizer(0.15, a, b)),
    "auh": (lambda a, b: auh_regularizer(2.5, a, b).value, lambda a, b: auh_regularizer(2.5, a, b)),
}


@pytest.mark.parametrize("name", sorted(GRADIENT_CASES))
def test_gradients_match_central_differences(name):
    f, report = GRADIENT_CASES[name]
    n_args = f.__code__.co_argcount
    rng = np.random.default_rng(sum(map(ord, name)))
    worst = 0.0
    for _ in range(20):
        arrays = [uniform_points(rng, 8, 6) for _ in range(n_args)]
        worst = max(worst, relative_gradient_error(f, report, arrays))
    assert worst <= 1e-5


def test_vicreg_gradient_away_from_kinks():
    rng = np.random.default_rng(77)
    w = LossWeights(mu=0.5, nu=1.0, gamma=1.0)
    checked = 0
    while checked < 20:
        Z1, Z2 = rng.standard_normal((8, 6)) * 0.8, rng.standard_normal((8, 6)) * 0.8
        stds = [np.sqrt(Z.var(axis=0, ddof=1) + w.epsilon) for Z in (Z1, Z2)]
        if min(np.abs(s - w.gamma).min() for s in stds) < 1e-3:
            continue
        err = relative_gradient_error(
            lambda a, b: vicreg_regularizer(w, a, b).value,
            lambda a, b: vicreg_regularizer(w, a, b),
            [Z1, Z2],
        )
        assert err <= 1e-5
        checked += 1


def test_gendist_uniformity_gradient_on_the_sphere():
    # the free-vector function is not smooth at the diagonal; compare along the sphere
    spec = KernelSpec.gendist(6, 3.1, centered=True)
    rng = np.random.default_rng(8)
    for _ in range(5):
        Z = uniform_points(rng, 8, 6)
        g = uniformity_loss(spec, Z).grads[0]
        for _ in range(3):
            V = rng.standard_normal(Z.shape)
            V -= np.sum(V * Z, axis=1, keepdims=True) * Z
            h = 1e-5

            def along(s):
                Y = Z + s * V
                return uniformity_loss(spec, Y / np.linalg.norm(Y, axis=1, keepdims=True)).value

            fd = (along(h) - along(-h)) / (2 * h)
            assert fd == pytest.approx(np.sum(g * V), rel=1e-5, abs=1e-9)


def test_regularized_loss_dispatch():
    rng = np.random.default_rng(1)
    Z1, Z2 = uniform_points(rng, 6, 6), uniform_points(rng, 6, 6)
    w = LossWeights(lam=2.0, mu=0.5)
    for kind in ("sfrik", "auh", "simclr", "vicreg"):
        rep = regularized_loss(kind, w, SFRIK_L2, Z1, Z2)
        assert rep.value == pytest.approx(2.0 * rep.terms["align"] + 0.5 * rep.terms["unif"])
        assert [g.shape for g in rep.grads] == [Z1.shape, Z2.shape]
    with pytest.raises(ValueError):
        regularized_loss("barlow", w, SFRIK_L2, Z1, Z2)


def test_report_json():
    import json

    rep = total_loss(LossWeights(), SFRIK_L2, np.eye(6)[:3], np.eye(6)[3:])
    data = json.loads(rep.to_json())
    assert set(data) == {"value", "terms", "grad_norm"}
    assert data["grad_norm"] == pytest.approx(rep.grad_norm)


def test_loss_weights_validation():
    LossWeights(lam=0.0)
    for bad in ({"lam": -1.0}, {"mu": 0.0}, {"tau": 0.0}, {"epsilon": 0.0}):
        with pytest.raises(ValueError):
            LossWeights(**bad)


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 40))
@settings(max_examples=30, deadline=None)
def test_alignment_range(seed, n):
    rng = np.random.default_rng(seed)
    value = alignment_loss(uniform_points(rng, n, 5), uniform_points(rng, n, 5)).value
    assert 0.0 <= value <= 4.0 + 1e-12
