from __future__ import annotations

import numpy as np
import pytest

from slidetouch.errors import (
    DegenerateGeometryError,
    EmptySurfaceError,
    InvalidArgumentError,
)
from slidetouch.geometry import Sphere, chamfer_distance, inflate_bounds, sample_surface, sdf_eval
from slidetouch.gpis import (
    GpisModel,
    KernelSpec,
    augment_off_surface,
    extract_surface,
    fit,
    kernel_eval,
    kernel_matrix,
    load_model,
    max_variance_gap,
    predict,
    save_model,
)
from slidetouch.transforms import Pose, quat_from_axis_angle, quat_rotate


def dense_oracle(x, y, spec, queries):
    """Direct inverse of the regularized Gram matrix; the reference posterior."""
    k = kernel_matrix(spec, x, x) + spec.noise**2 * np.eye(len(x))
    inv = np.linalg.inv(k)
    ks = kernel_matrix(spec, x, queries)
    mean = ks.T @ inv @ y
    var = spec.diag_value() - np.einsum("ij,ik,kj->j", ks, inv, ks)
    return mean, var


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def test_rbf_at_zero_distance():
    spec = KernelSpec(kind="rbf", length_scale=0.1)
    assert kernel_eval(spec, [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)


def test_rbf_at_one_length_scale():
    spec = KernelSpec(kind="rbf", length_scale=0.1)
    value = kernel_eval(spec, [0.0, 0.0, 0.0], [0.1, 0.0, 0.0])
    assert value == pytest.approx(np.exp(-0.5), abs=1e-12)


def test_thin_plate_vanishes_at_support_radius():
    spec = KernelSpec(kind="thin_plate", radius=1.0)
    assert kernel_eval(spec, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]) == pytest.approx(0.0)
    assert kernel_eval(spec, [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]) == pytest.approx(1.0)
    assert kernel_eval(spec, [0.0, 0.0, 0.0], [2.0, 0.0, 0.0]) == 0.0


def test_kernel_matrix_matches_pointwise():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(7, 3))
    b = rng.normal(size=(5, 3))
    for spec in (KernelSpec("rbf", length_scale=0.3), KernelSpec("thin_plate", radius=1.5)):
        m = kernel_matrix(spec, a, b)
        for i in range(7):
            for j in range(5):
                assert m[i, j] == pytest.approx(kernel_eval(spec, a[i], b[j]), abs=1e-12)


def test_kernel_validation():
    with pytest.raises(InvalidArgumentError):
        KernelSpec(kind="matern")
    with pytest.raises(InvalidArgumentError):
        KernelSpec(length_scale=0.0)


# ---------------------------------------------------------------------------
# Training-set augmentation
# ---------------------------------------------------------------------------

def test_augment_counts_and_values():
    cloud = sample_surface(Sphere(radius=0.05), 100, seed=1)
    x, y = augment_off_surface(cloud)
    assert len(x) == len(cloud) + 7
    assert (y[: len(cloud)] == 0.0).all()
    assert y[len(cloud)] == -1.0
    assert (y[len(cloud) + 1 :] == 1.0).all()


def test_augment_centroid_is_interior():
    shape = Sphere(Pose.from_parts([0.2, 0.1, -0.3]), radius=0.04)
    cloud = sample_surface(shape, 200, seed=2)
    x, _ = augment_off_surface(cloud)
    assert sdf_eval(shape, x[len(cloud)]) < 0.0


def test_augment_rejects_coplanar_points():
    rng = np.random.default_rng(3)
    flat = rng.normal(size=(50, 3))
    flat[:, 2] = 0.25
    from slidetouch.geometry import PointCloud

    with pytest.raises(DegenerateGeometryError):
        augment_off_surface(PointCloud.from_points(flat))
    with pytest.raises(DegenerateGeometryError):
        augment_off_surface(PointCloud.from_points(rng.normal(size=(3, 3))))


# ---------------------------------------------------------------------------
# Fit and predict
# ---------------------------------------------------------------------------

def test_single_point_interpolates():
    model = fit(np.zeros((1, 3)), np.zeros(1), KernelSpec("rbf", length_scale=0.1, noise=0.01))
    mean, _ = predict(model, np.zeros(3))
    assert mean == pytest.approx(0.0, abs=1e-6)


def test_duplicate_points_average_under_noise():
    """Two coincident observations regress toward their average.

    Closed-form 2x2 oracle: with coincident inputs the posterior mean at the
    point is (y1 + y2) / (sigma^2 + 2), i.e. the average in the small-noise
    limit and shrinking toward the prior as noise grows.
    """
    y = np.array([1.0, 3.0])
    for noise in (0.1, 0.5):
        spec = KernelSpec("rbf", length_scale=0.1, noise=noise)
        model = fit(np.zeros((2, 3)), y, spec)
        mean, _ = predict(model, np.zeros(3))
        assert mean == pytest.approx(float(y.sum() / (noise**2 + 2.0)), abs=1e-10)
    assert mean != pytest.approx(np.mean(y), abs=1e-3)  # larger noise shrinks
    spec = KernelSpec("rbf", length_scale=0.1, noise=0.01)
    model = fit(np.zeros((2, 3)), y, spec)
    assert predict(model, np.zeros(3))[0] == pytest.approx(np.mean(y), abs=1e-3)


def test_predict_matches_dense_oracle():
    rng = np.random.default_rng(4)
    spec = KernelSpec("rbf", length_scale=0.07, noise=1e-2)
    x = rng.normal(size=(100, 3)) * 0.05
    y = rng.normal(size=100)
    q = rng.normal(size=(40, 3)) * 0.05
    model = fit(x, y, spec)
    mean, var = predict(model, q)
    mean_o, var_o = dense_oracle(x, y, spec, q)
    np.testing.assert_allclose(mean, mean_o, atol=1e-8)
    np.testing.assert_allclose(var, var_o, atol=1e-8)


def test_three_point_model_against_explicit_oracle():
    spec = KernelSpec("rbf", length_scale=0.2, noise=1e-3)
    x = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.0, 0.15, 0.0]])
    y = np.array([0.5, -0.2, 0.8])
    model = fit(x, y, spec)
    q = np.array([[0.05, 0.05, 0.02]])
    mean, var = predict(model, q)
    mean_o, var_o = dense_oracle(x, y, spec, q)
    assert mean[0] == pytest.approx(mean_o[0], abs=1e-10)
    assert var[0] == pytest.approx(var_o[0], abs=1e-10)


def test_variance_near_zero_at_training_points():
    rng = np.random.default_rng(5)
    spec = KernelSpec("rbf", length_scale=0.1, noise=1e-3)
    x = rng.normal(size=(50, 3)) * 0.05
    model = fit(x, rng.normal(size=50), spec)
    _, var = predict(model, x)
    assert var.max() < 1e-4
    assert var.max() <= spec.noise**2 + model.jitter + 1e-9


def test_far_query_reverts_to_prior():
    spec = KernelSpec("rbf", length_scale=0.05, noise=1e-3)
    x = np.random.default_rng(6).normal(size=(30, 3)) * 0.02
    model = fit(x, np.random.default_rng(7).normal(size=30), spec)
    mean, var = predict(model, np.array([0.5, 0.0, 0.0]))  # 10 length scales away
    assert abs(mean) < 1e-6
    assert var == pytest.approx(1.0, abs=1e-6)


def test_zero_noise_uses_jitter_and_interpolates():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(20, 3))
    y = rng.normal(size=20)
    model = fit(x, y, KernelSpec("rbf", length_scale=0.5, noise=0.0))
    assert model.jitter > 0.0
    mean, _ = predict(model, x)
    np.testing.assert_allclose(mean, y, atol=1e-6)


def test_monotone_information_gain():
    rng = np.random.default_rng(9)
    spec = KernelSpec("rbf", length_scale=0.1, noise=1e-2)
    x = rng.normal(size=(60, 3)) * 0.05
    y = rng.normal(size=60)
    queries = rng.normal(size=(100, 3)) * 0.08
    before = predict(fit(x[:40], y[:40], spec), queries)[1]
    after = predict(fit(x, y, spec), queries)[1]
    assert (after <= before + 1e-9).all()


def test_rigid_invariance_of_posterior_mean():
    rng = np.random.default_rng(10)
    spec = KernelSpec("rbf", length_scale=0.1, noise=1e-3)
    x = rng.normal(size=(40, 3)) * 0.05
    y = rng.normal(size=40)
    q = rng.normal(size=(10, 3)) * 0.05
    quat = quat_from_axis_angle([0.3, 1.0, -0.2], 1.1)
    shift = np.array([0.4, -0.2, 0.9])
    mean_a, var_a = predict(fit(x, y, spec), q)
    mean_b, var_b = predict(fit(quat_rotate(quat, x) + shift, y, spec), quat_rotate(quat, q) + shift)
    np.testing.assert_allclose(mean_a, mean_b, atol=1e-9)
    np.testing.assert_allclose(var_a, var_b, atol=1e-9)


def test_fit_validation():
    spec = KernelSpec()
    with pytest.raises(InvalidArgumentError):
        fit(np.zeros((2, 3)), np.zeros(3), spec)
    with pytest.raises(InvalidArgumentError):
        fit(np.zeros((0, 3)), np.zeros(0), spec)
    with pytest.raises(InvalidArgumentError):
        fit(np.zeros((4501, 3)), np.zeros(4501), spec)
    with pytest.raises(InvalidArgumentError):
        predict(fit(np.zeros((1, 3)), np.zeros(1), spec), [np.nan, 0.0, 0.0])


# ---------------------------------------------------------------------------
# Surface extraction and the variance gap
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sphere_model():
    shape = Sphere(Pose.from_parts([0.0, 0.0, 0.1]), radius=0.05)
    cloud = sample_surface(shape, 500, seed=11)
    x, y = augment_off_surface(cloud)
    diag = float(np.linalg.norm(cloud.points.max(0) - cloud.points.min(0)))
    model = fit(x, y, KernelSpec("rbf", length_scale=0.4 * diag, noise=1e-3))
    lo, hi = inflate_bounds(cloud.points.min(0), cloud.points.max(0))
    return shape, model, (lo, hi)


def test_extracted_sphere_close_to_truth(sphere_model):
    shape, model, bounds = sphere_model
    mesh = extract_surface(model, bounds, cells_per_axis=20)
    cell = float((bounds[1] - bounds[0]).max()) / 20
    cd = chamfer_distance(sample_surface(mesh, 5000, seed=1), sample_surface(shape, 5000, seed=2))
    assert cd < 2.0 * cell * 1000.0
    assert mesh.vertex_scalar is not None
    assert (mesh.vertex_scalar >= 0.0).all()


def test_finer_grid_does_not_hurt(sphere_model):
    shape, model, bounds = sphere_model
    truth = sample_surface(shape, 5000, seed=3)
    cd_coarse = chamfer_distance(sample_surface(extract_surface(model, bounds, 10), 5000, seed=4), truth)
    cd_fine = chamfer_distance(sample_surface(extract_surface(model, bounds, 40), 5000, seed=4), truth)
    assert cd_fine <= cd_coarse


def test_all_positive_mean_raises_empty_surface():
    spec = KernelSpec("rbf", length_scale=0.2, noise=1e-3)
    model = fit(np.zeros((1, 3)), np.ones(1), spec)
    with pytest.raises(EmptySurfaceError):
        extract_surface(model, (np.full(3, -0.1), np.full(3, 0.1)), 8)


def test_variance_gap_identities(sphere_model):
    _, model, _ = sphere_model
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(200, 3)) * 0.05 + np.array([0.0, 0.0, 0.1])
    gap = max_variance_gap(model, pts)
    _, var = predict(model, pts)
    pairwise = max(var[i] - var[j] for i in range(len(var)) for j in range(len(var)))
    assert gap == pytest.approx(pairwise, abs=1e-12)
    assert gap == pytest.approx(var.max() - var.min(), abs=1e-15)


def test_variance_gap_degenerate_cases(sphere_model):
    _, model, _ = sphere_model
    same = np.tile(np.array([0.01, 0.02, 0.1]), (5, 1))
    assert max_variance_gap(model, same) == 0.0
    with pytest.raises(InvalidArgumentError):
        max_variance_gap(model, np.zeros((1, 3)))


def test_model_dump_roundtrip(tmp_path, sphere_model):
    _, model, _ = sphere_model
    path = tmp_path / "model.bin"
    save_model(path, model)
    clone = load_model(path)
    rng = np.random.default_rng(13)
    q = rng.normal(size=(20, 3)) * 0.05 + np.array([0.0, 0.0, 0.1])
    np.testing.assert_allclose(predict(clone, q)[0], predict(model, q)[0], atol=1e-12)
    np.testing.assert_allclose(predict(clone, q)[1], predict(model, q)[1], atol=1e-12)
