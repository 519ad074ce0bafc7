import math

import numpy as np
import pytest

from sphkern.harmonics import embedding_moment_stats
from sphkern.kernels import KernelSpec
from sphkern.losses import LossWeights, alignment_loss, uniformity_loss
from sphkern.optimizer import (
    PRESETS,
    DivergenceError,
    OptimConfig,
    TwoViewBatch,
    antipodal_frames_init,
    evaluate_checkpoint,
    generate_two_view_data,
    minimize,
    preset_config,
    read_trajectory_csv,
    tangent_project,
    uniformity_only,
)
from sphkern.sampling import sample_uniform_sphere

L2 = {1: 1.0, 2: 1.0}


def angles(A, B):
    return np.arccos(np.clip(np.sum(A * B, axis=1), -1.0, 1.0))


def test_zero_noise_views_identical():
    data = generate_two_view_data(6, 40, 0, 0.0, seed=1)
    assert np.array_equal(data.Z1, data.Z2)
    np.testing.assert_allclose(np.linalg.norm(data.Z1, axis=1), 1.0, atol=1e-15)


def test_single_cluster_is_total_collapse():
    q = 5
    data = generate_two_view_data(q, 30, 1, 0.0, seed=2)
    spec = KernelSpec.truncated(q, {1: 2.0, 2: 3.0}, centered=True)
    assert alignment_loss(data.Z1, data.Z2).value == 0.0
    assert uniformity_loss(spec, data.Z1).value == pytest.approx(5.0, rel=1e-12)


def test_clusters_assign_points_round_robin():
    data = generate_two_view_data(4, 9, 3, 0.0, seed=0)
    assert np.array_equal(data.latent[0], data.latent[3])
    assert not np.array_equal(data.latent[0], data.latent[1])


def test_view_angle_distribution():
    noise = 0.6
    data = generate_two_view_data(7, 20_000, 0, noise, seed=5)
    dev = angles(data.Z1, data.latent)
    # angle to the latent point is uniform on [0, noise]
    assert abs(dev.mean() - noise / 2) <= 3 * dev.std() / math.sqrt(dev.size)
    assert dev.max() <= noise + 1e-12
    # view-to-view angle against an independent simulation of the generator
    rng = np.random.default_rng(0)
    m = 200_000
    t1, t2 = rng.uniform(0, noise, m), rng.uniform(0, noise, m)
    d = rng.standard_normal((m, 6))
    c = d[:, 0] / np.linalg.norm(d, axis=1)  # cosine between two random tangent directions
    oracle = np.arccos(np.clip(np.cos(t1) * np.cos(t2) + np.sin(t1) * np.sin(t2) * c, -1, 1))
    vv = angles(data.Z1, data.Z2)
    se = math.hypot(vv.std() / math.sqrt(vv.size), oracle.std() / math.sqrt(m))
    assert abs(vv.mean() - oracle.mean()) <= 3 * se


def test_generator_is_deterministic():
    a = generate_two_view_data(5, 50, 2, 0.3, seed=9)
    b = generate_two_view_data(5, 50, 2, 0.3, seed=9)
    assert np.array_equal(a.Z1, b.Z1) and np.array_equal(a.Z2, b.Z2)


def test_tangent_project():
    rng = np.random.default_rng(1)
    z = rng.standard_normal(6)
    z /= np.linalg.norm(z)
    assert np.allclose(tangent_project(z, 3.0 * z), 0.0, atol=1e-15)
    g = rng.standard_normal(6)
    g -= (g @ z) * z
    np.testing.assert_allclose(tangent_project(z, g), g, atol=1e-15)
    Z = sample_uniform_sphere(6, 100, seed=3).points
    G = rng.standard_normal((100, 6))
    assert np.abs(np.sum(tangent_project(Z, G) * Z, axis=1)).max() <= 1e-12


def test_antipodal_frames_init():
    for q in (4, 8):
        Z = antipodal_frames_init(q, seed=1)
        stats = embedding_moment_stats(Z)
        assert Z.shape == (2 * q, q)
        assert stats["autocorr_deviation"] <= 1e-12
        assert stats["mean_norm"] > 0.1


@pytest.mark.parametrize("q", [4, 8])
def test_uniformity_only_reaches_uniform_moments(q):
    spec = KernelSpec.truncated(q, L2, centered=True)
    data = generate_two_view_data(q, 2 * q, 0, 0.0, seed=1)
    traj = minimize(uniformity_only(spec, 2000, eval_every=500), data)
    assert traj.final.mean_norm <= 0.05 and traj.final.autocorr_dev <= 0.05
    assert traj.final.total <= traj.initial.total
    assert traj.final.mc_mmd <= 0.1 * traj.initial.mc_mmd
    np.testing.assert_allclose(np.linalg.norm(traj.final_Z1, axis=1), 1.0, atol=1e-9)


def test_order_one_ablation():
    q = 4
    Z0 = antipodal_frames_init(q, seed=1)
    data = TwoViewBatch(Z0, Z0.copy(), Z0)
    start = embedding_moment_stats(Z0)["mean_norm"]
    only_order2 = minimize(uniformity_only(KernelSpec.truncated(q, {2: 1.0}, centered=True), 500), data)
    assert only_order2.final.mean_norm >= 0.5 * start
    both = minimize(uniformity_only(KernelSpec.truncated(q, L2, centered=True), 2000), data)
    assert both.final.mean_norm <= 0.05


@pytest.mark.parametrize(
    "spec",
    [
        KernelSpec.truncated(5, {1: 1.0, 2: 4.0, 3: 2.0}, centered=True),
        KernelSpec.rbf(5, 1.0, centered=True),
        KernelSpec.gendist(5, 2.2, centered=True),
    ],
)
def test_descent_over_windows(spec):
    data = generate_two_view_data(5, 24, 0, 0.0, seed=4)
    traj = minimize(uniformity_only(spec, 400, eval_every=50), data)
    unif = [r.unif for r in traj.records]
    assert all(b <= a + 1e-9 for a, b in zip(unif, unif[1:]))


def test_collapse_is_broken():
    q = 8
    data = generate_two_view_data(q, 64, 1, 0.3, seed=3)
    cfg = preset_config("sfrik-q8192-L2", q=q, steps=2000, eval_every=500, step_size=0.01)
    traj = minimize(cfg, data)
    assert traj.final.autocorr_dev <= 0.2 * traj.initial.autocorr_dev


def test_large_lambda_aligns():
    data = generate_two_view_data(8, 32, 0, 0.0, seed=6)
    cfg = preset_config("sfrik-q8192-L2", q=8, steps=300, eval_every=100)
    assert minimize(cfg, data).final.align <= 1e-3
    noisy = generate_two_view_data(8, 32, 0, 0.3, seed=6)
    traj = minimize(preset_config("sfrik-q8192-L2", q=8, steps=300, eval_every=100, step_size=0.004), noisy)
    # with noisy views the uniformity force keeps a small residual misalignment
    assert traj.final.align <= 0.1 * traj.initial.align


def test_divergence_guard():
    data = generate_two_view_data(8, 32, 0, 0.3, seed=6)
    cfg = preset_config("sfrik-q8192-L2", q=8, steps=50, step_size=0.05)
    with pytest.raises(DivergenceError):
        minimize(cfg, data)


@pytest.mark.parametrize("loss", ["auh", "simclr", "vicreg"])
def test_baseline_trajectories_are_finite(loss):
    q = 6
    data = generate_two_view_data(q, 24, 3, 0.2, seed=8)
    cfg = OptimConfig(KernelSpec.truncated(q, L2, centered=True), LossWeights(lam=1.0), loss, 200, 0.05, 50, 1)
    traj = minimize(cfg, data)
    assert all(np.isfinite(r.as_row()).all() for r in traj.records)
    assert traj.final.total <= traj.initial.total


def test_evaluate_checkpoint_limits():
    q = 6
    spec = KernelSpec.truncated(q, L2, centered=True)
    ref = sample_uniform_sphere(q, 4096, seed=1)
    Z = np.tile(np.eye(q)[0], (20, 1))
    rec = evaluate_checkpoint(spec, Z, Z, ref)
    assert rec.mean_norm == pytest.approx(1.0)
    assert abs(rec.mc_mmd - 2.0) <= 3 * rec.mc_mmd_se + 2.0 / 4096
    U = sample_uniform_sphere(q, 4096, seed=2).points
    rec = evaluate_checkpoint(spec, U, U, ref)
    assert abs(rec.mc_mmd) <= 3 * rec.mc_mmd_se + 2 * 2.0 / 4096
    assert all(math.isfinite(x) for x in rec.as_row())


def test_trajectory_determinism_and_csv(tmp_path):
    q = 5
    data = generate_two_view_data(q, 20, 2, 0.2, seed=1)
    cfg = OptimConfig(KernelSpec.truncated(q, L2, centered=True), LossWeights(lam=2.0), "sfrik", 120, None, 40, 7)
    a, b = minimize(cfg, data), minimize(cfg, data)
    assert a.records == b.records
    pa, pb = a.to_csv(tmp_path / "a.csv"), b.to_csv(tmp_path / "b.csv")
    assert pa.read_bytes() == pb.read_bytes()
    assert pa.read_text().splitlines()[0] == "step,total,align,unif,mean_norm,autocorr_dev,mc_mmd,mc_mmd_se"
    assert tuple(read_trajectory_csv(pa)) == a.records
    assert [r.step for r in a.records] == [0, 40, 80, 120]


def test_config_validation_and_presets():
    spec = KernelSpec.truncated(4, L2, centered=True)
    with pytest.raises(ValueError):
        OptimConfig(spec, steps=0)
    with pytest.raises(ValueError):
        OptimConfig(spec, step_size=-1.0)
    with pytest.raises(ValueError):
        OptimConfig(KernelSpec.truncated(4, L2), steps=5)
    assert OptimConfig(spec, LossWeights(lam=0.0)).effective_step == pytest.approx(0.5)
    cfg = preset_config("sfrik-q8192-L2")
    assert cfg.spec.q == 8192 and cfg.weights.lam == 4000.0 and cfg.spec.weights() == {1: 1.0, 2: 20.0}
    assert cfg.effective_step == pytest.approx(0.5 / (4000 + 0.5 * 21))
    assert preset_config("sfrik-q32768-L3").spec.weights() == {1: 1.0, 2: 40.0, 3: 40.0}
    for name in PRESETS:
        preset_config(name, q=8)
    with pytest.raises(KeyError):
        preset_config("nope")
