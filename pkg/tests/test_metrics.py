from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slidetouch.errors import InvalidArgumentError
from slidetouch.fileio import write_cloud_ply
from slidetouch.geometry import (
    PointCloud,
    Sphere,
    TriMesh,
    chamfer_distance,
    sample_surface,
    sdf_eval,
)


def brute_force_chamfer(a: np.ndarray, b: np.ndarray) -> float:
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
    return 1000.0 * 0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean())


def test_identical_clouds_zero():
    pts = np.random.default_rng(0).normal(size=(50, 3))
    assert chamfer_distance(pts, pts) == 0.0


def test_single_pair_millimeter():
    a = np.array([[0.0, 0.0, 0.0]])
    b = np.array([[0.0, 0.0, 0.001]])
    assert chamfer_distance(a, b) == pytest.approx(1.0, abs=1e-12)


def test_empty_cloud_rejected():
    with pytest.raises(InvalidArgumentError):
        chamfer_distance(np.zeros((0, 3)), np.ones((3, 3)))


def test_matches_brute_force_on_random_clouds():
    rng = np.random.default_rng(42)
    for _ in range(5):
        a = rng.normal(size=(rng.integers(5, 120), 3)) * 0.1
        b = rng.normal(size=(rng.integers(5, 120), 3)) * 0.1
        assert chamfer_distance(a, b) == pytest.approx(brute_force_chamfer(a, b), abs=1e-12)


def test_two_sphere_samplings():
    """CD between 1000-point shells of radius 50 vs 52 mm, against the brute-force oracle.

    At this sampling density the tangential nearest-neighbor gap dominates
    the 2 mm radial separation, so the oracle value sits well above 2 mm.
    """
    a = sample_surface(Sphere(radius=0.05), 1000, seed=1)
    b = sample_surface(Sphere(radius=0.052), 1000, seed=2)
    fast = chamfer_distance(a, b)
    oracle = brute_force_chamfer(a.points, b.points)
    assert fast == pytest.approx(oracle, abs=1e-12)
    assert fast == pytest.approx(3.5974543594364032, abs=1e-9)  # frozen oracle output


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_symmetry_and_translation_invariance(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(20, 3))
    b = rng.normal(size=(30, 3))
    assert chamfer_distance(a, b) == pytest.approx(chamfer_distance(b, a), abs=1e-12)
    shift = rng.normal(size=3)
    assert chamfer_distance(a + shift, b + shift) == pytest.approx(
        chamfer_distance(a, b), abs=1e-9
    )


def test_shape_sampling_on_surface():
    cloud = sample_surface(Sphere(radius=1.0), 10000, seed=3)
    assert np.abs(sdf_eval(Sphere(radius=1.0), cloud.points)).max() < 1e-6


def test_sampling_deterministic():
    a = sample_surface(Sphere(radius=1.0), 500, seed=7)
    b = sample_surface(Sphere(radius=1.0), 500, seed=7)
    np.testing.assert_array_equal(a.points, b.points)


def test_single_triangle_sampling_barycentric():
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    mesh = TriMesh(verts, np.array([[0, 1, 2]]))
    cloud = sample_surface(mesh, 100, seed=5)
    pts = cloud.points
    assert np.abs(pts[:, 2]).max() < 1e-9  # in the triangle plane
    assert (pts[:, 0] >= -1e-12).all() and (pts[:, 1] >= -1e-12).all()
    assert (pts[:, 0] + pts[:, 1] <= 1.0 + 1e-12).all()


def test_mesh_sampling_is_area_weighted():
    verts = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
         [10.0, 0.0, 1.0], [13.0, 0.0, 1.0], [10.0, 3.0, 1.0]]
    )
    mesh = TriMesh(verts, np.array([[0, 1, 2], [3, 4, 5]]))  # areas 0.5 vs 4.5
    cloud = sample_surface(mesh, 4000, seed=11)
    big = (cloud.points[:, 2] > 0.5).mean()
    assert big == pytest.approx(0.9, abs=0.03)


def test_sample_count_validation():
    with pytest.raises(InvalidArgumentError):
        sample_surface(Sphere(radius=1.0), 0, seed=1)
    with pytest.raises(InvalidArgumentError):
        sample_surface(TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)), 5, seed=1)


def test_cloud_ply_has_touch_ids(tmp_path):
    cloud = PointCloud(np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]), np.array([0, 4]))
    path = tmp_path / "c.ply"
    write_cloud_ply(path, cloud)
    text = path.read_text()
    assert "property int touch_id" in text
    assert text.strip().splitlines()[-1].endswith(" 4")


def test_point_cloud_validation():
    with pytest.raises(InvalidArgumentError):
        PointCloud(np.array([[np.inf, 0.0, 0.0]]), np.array([0]))
    with pytest.raises(InvalidArgumentError):
        PointCloud(np.zeros((2, 3)), np.array([0]))
