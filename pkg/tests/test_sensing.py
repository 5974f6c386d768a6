from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slidetouch.errors import EmptyViewError, InvalidArgumentError
from slidetouch.fileio import read_heightmap_pgm, write_heightmap_pgm
from slidetouch.geometry import Box, Sphere, sdf_eval, sdf_normal_batch
from slidetouch.sensing import (
    CONTACT_THRESHOLD,
    CameraModel,
    GelPad,
    HeightMap,
    extract_tactile_feature,
    fingertip_pose_for_contact,
    height_map_to_cloud,
    render_height_map,
    render_partial_view,
)
from slidetouch.transforms import Pose


@pytest.fixture
def gel() -> GelPad:
    return GelPad()


@pytest.fixture
def scene_sphere() -> Sphere:
    return Sphere(Pose.from_parts([0.5, 0.0, 0.0]), radius=0.05)


@pytest.fixture
def front_camera() -> CameraModel:
    return CameraModel.looking_at([0.0, 0.0, 0.0], [0.5, 0.0, 0.0], width=64, height=64,
                                  vfov=math.radians(20), depth_noise=0.0)


# ---------------------------------------------------------------------------
# Partial views
# ---------------------------------------------------------------------------

def test_noiseless_view_lies_on_front_surface(scene_sphere, front_camera):
    cloud = render_partial_view(scene_sphere, front_camera, seed=0)
    assert len(cloud) > 100
    assert np.abs(sdf_eval(scene_sphere, cloud.points)).max() < 1e-5
    view = front_camera.view_direction()
    assert (((cloud.points - front_camera.pose.position) @ view) > 0).all()
    assert (cloud.tags == 0).all()


def test_view_away_raises_empty(scene_sphere):
    away = CameraModel.looking_at([0.0, 0.0, 0.0], [-0.5, 0.0, 0.0], depth_noise=0.0)
    with pytest.raises(EmptyViewError):
        render_partial_view(scene_sphere, away, seed=0)


def test_camera_must_be_outside():
    shape = Sphere(radius=1.0)
    cam = CameraModel.looking_at([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        render_partial_view(shape, cam, seed=0)


def test_no_back_faces_in_box_view():
    box = Box(Pose.from_parts([0.5, 0.0, 0.0]), half_extents=np.array([0.04, 0.05, 0.06]))
    cam = CameraModel.looking_at([0.0, 0.02, 0.05], [0.5, 0.0, 0.0], width=48, height=48,
                                 vfov=math.radians(22), depth_noise=0.0)
    cloud = render_partial_view(box, cam, seed=0)
    normals = sdf_normal_batch(box, cloud.points)
    rays = cloud.points - cam.pose.position
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    assert (np.einsum("ij,ij->i", normals, rays) <= 1e-6).all()


def test_view_noise_is_seeded(scene_sphere):
    cam = CameraModel.looking_at([0.0, 0.0, 0.0], [0.5, 0.0, 0.0], depth_noise=5e-4)
    a = render_partial_view(scene_sphere, cam, seed=9)
    b = render_partial_view(scene_sphere, cam, seed=9)
    c = render_partial_view(scene_sphere, cam, seed=10)
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_camera_validation():
    with pytest.raises(InvalidArgumentError):
        CameraModel(width=4)
    with pytest.raises(InvalidArgumentError):
        CameraModel(vfov=0.0)
    with pytest.raises(InvalidArgumentError):
        CameraModel(depth_noise=-1.0)


# ---------------------------------------------------------------------------
# Height maps
# ---------------------------------------------------------------------------

def test_out_of_reach_gives_zero_map(scene_sphere, gel):
    pose = fingertip_pose_for_contact([0.45, 0.0, 0.0], [-1.0, 0.0, 0.0], -5e-3)
    hm = render_height_map(scene_sphere, pose, gel)
    assert (hm.values == 0.0).all()


def test_flat_press_uniform_half_millimeter(plane_wall, gel):
    pose = fingertip_pose_for_contact([0.2, 0.0, 0.0], [-1.0, 0.0, 0.0], 0.5e-3)
    hm = render_height_map(plane_wall, pose, gel)
    np.testing.assert_allclose(hm.values, 0.5e-3, atol=1e-6)
    feature = extract_tactile_feature(hm)
    assert feature.area == gel.pixel_count


def test_sphere_pole_press_profile(gel):
    """Pixel-wise match against the analytic sphere-plane penetration depth."""
    radius = 0.05
    press = 1.0e-3
    shape = Sphere(Pose.from_parts([0.5, 0.0, 0.0]), radius=radius)
    pose = fingertip_pose_for_contact([0.45, 0.0, 0.0], [-1.0, 0.0, 0.0], press)
    hm = render_height_map(shape, pose, gel)
    # The pole projects to the pad center, which falls between the four
    # central pixels on an even-sized grid.
    row, col = np.unravel_index(np.argmax(hm.values), hm.values.shape)
    assert row in (gel.rows // 2 - 1, gel.rows // 2)
    assert col in (gel.cols // 2 - 1, gel.cols // 2)
    ys, zs = gel.pixel_offsets()
    rr = np.sqrt(ys[None, :] ** 2 + zs[:, None] ** 2)
    inside = rr < np.sqrt(max(2 * radius * press - press**2, 0.0))
    expected = np.where(
        rr < radius, press - (radius - np.sqrt(np.maximum(radius**2 - rr**2, 0.0))), 0.0
    )
    expected = np.clip(expected, 0.0, gel.max_deformation)
    np.testing.assert_allclose(hm.values[inside], expected[inside], atol=2e-6)
    # Radial monotonicity along the central row.
    mid = np.argmax(hm.values.max(axis=1))
    central = hm.values[mid]
    peak = int(np.argmax(central))
    assert (np.diff(central[peak:]) <= 1e-12).all()
    assert (np.diff(central[: peak + 1]) >= -1e-12).all()


def test_full_compression_clamps(plane_wall, gel):
    pose = fingertip_pose_for_contact([0.2, 0.0, 0.0], [-1.0, 0.0, 0.0], 5e-3)
    hm = render_height_map(plane_wall, pose, gel)
    np.testing.assert_allclose(hm.values, gel.max_deformation, atol=1e-9)


# ---------------------------------------------------------------------------
# Tactile features
# ---------------------------------------------------------------------------

def make_map(values) -> HeightMap:
    return HeightMap(np.asarray(values, dtype=float), Pose.identity())


def test_single_pixel_centroid():
    grid = np.zeros((8, 10))
    grid[3, 7] = 5e-4
    feature = extract_tactile_feature(make_map(grid))
    assert (feature.x, feature.y, feature.area) == (7.0, 3.0, 1)


def test_weighted_two_pixel_centroid():
    grid = np.zeros((4, 8))
    grid[0, 0] = 1e-3
    grid[0, 2] = 3e-3
    feature = extract_tactile_feature(make_map(grid))
    assert feature.x == pytest.approx(1.5)
    assert feature.y == pytest.approx(0.0)
    assert feature.area == 2


def test_uniform_full_contact_centroid(gel):
    grid = np.full((gel.rows, gel.cols), 6e-4)
    feature = extract_tactile_feature(make_map(grid))
    assert feature.x == pytest.approx((gel.cols - 1) / 2)
    assert feature.y == pytest.approx((gel.rows - 1) / 2)
    assert feature.area == 768


def test_zero_map_is_flagged():
    feature = extract_tactile_feature(make_map(np.zeros((6, 6))))
    assert feature.area == 0
    assert not feature.in_contact
    assert not feature.has_centroid


def test_threshold_is_strictly_greater():
    grid = np.zeros((8, 8))
    grid[2, 2] = CONTACT_THRESHOLD
    assert extract_tactile_feature(make_map(grid)).area == 0
    grid[2, 2] = CONTACT_THRESHOLD + 1e-12
    assert extract_tactile_feature(make_map(grid)).area == 1


@given(st.integers(0, 5), st.integers(0, 3))
@settings(max_examples=30, deadline=None)
def test_centroid_shift_equivariance(dc, dr):
    base = np.zeros((12, 16))
    base[2:5, 3:6] = 7e-4
    shifted = np.zeros_like(base)
    shifted[2 + dr : 5 + dr, 3 + dc : 6 + dc] = 7e-4
    f0 = extract_tactile_feature(make_map(base))
    f1 = extract_tactile_feature(make_map(shifted))
    assert f1.x - f0.x == pytest.approx(dc, abs=1e-9)
    assert f1.y - f0.y == pytest.approx(dr, abs=1e-9)


def test_area_invariant_under_scaling():
    grid = np.zeros((10, 10))
    grid[4:7, 4:7] = 4e-4
    base = extract_tactile_feature(make_map(grid)).area
    assert extract_tactile_feature(make_map(grid * 2.5)).area == base


# ---------------------------------------------------------------------------
# Tactile point clouds
# ---------------------------------------------------------------------------

def test_zero_map_empty_cloud(gel):
    cloud = height_map_to_cloud(make_map(np.zeros((gel.rows, gel.cols))), gel, 1.0, seed=0)
    assert len(cloud) == 0


def test_full_contact_cloud_on_surface(plane_wall, gel):
    pose = fingertip_pose_for_contact([0.2, 0.0, 0.0], [-1.0, 0.0, 0.0], 0.5e-3)
    hm = render_height_map(plane_wall, pose, gel)
    cloud = height_map_to_cloud(hm, gel, 1.0, seed=0, touch_id=2)
    assert len(cloud) == gel.pixel_count
    assert np.abs(sdf_eval(plane_wall, cloud.points)).max() < 0.2e-3
    assert (cloud.tags == 2).all()


def test_downsample_count_matches_round(scene_sphere, gel):
    pose = fingertip_pose_for_contact([0.45, 0.0, 0.0], [-1.0, 0.0, 0.0], 0.6e-3)
    hm = render_height_map(scene_sphere, pose, gel)
    contact = int(np.count_nonzero(hm.values > CONTACT_THRESHOLD))
    cloud = height_map_to_cloud(hm, gel, 0.02, seed=1)
    assert len(cloud) == round(0.02 * contact)


def test_downsample_deterministic(scene_sphere, gel):
    pose = fingertip_pose_for_contact([0.45, 0.0, 0.0], [-1.0, 0.0, 0.0], 0.6e-3)
    hm = render_height_map(scene_sphere, pose, gel)
    a = height_map_to_cloud(hm, gel, 0.1, seed=5)
    b = height_map_to_cloud(hm, gel, 0.1, seed=5)
    np.testing.assert_array_equal(a.points, b.points)


def test_cloud_world_consistency_within_pixel_pitch(scene_sphere, gel):
    """Nearest-surface projection moves lifted points by less than the pixel pitch."""
    pose = fingertip_pose_for_contact([0.45, 0.0, 0.0], [-1.0, 0.0, 0.0], 0.8e-3)
    hm = render_height_map(scene_sphere, pose, gel)
    cloud = height_map_to_cloud(hm, gel, 1.0, seed=0)
    pitch = gel.width / gel.cols
    assert np.abs(sdf_eval(scene_sphere, cloud.points)).max() < pitch


def test_ratio_validation(gel):
    with pytest.raises(InvalidArgumentError):
        height_map_to_cloud(make_map(np.zeros((8, 8))), gel, 0.0, seed=0)


def test_pgm_roundtrip(tmp_path):
    values = np.zeros((6, 9))
    values[2, 3] = 0.8e-3
    values[5, 8] = 1.2e-3
    path = tmp_path / "m.pgm"
    write_heightmap_pgm(path, values)
    back = read_heightmap_pgm(path)
    np.testing.assert_allclose(back, values, atol=1e-6)
    assert path.read_bytes().startswith(b"P5\n9 6\n65535\n")
