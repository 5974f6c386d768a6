from __future__ import annotations

import numpy as np
import pytest

from slidetouch.errors import InvalidArgumentError, NumericError
from slidetouch.fileio import read_mesh_obj, write_mesh_obj, write_mesh_ply
from slidetouch.geometry import Sphere, TriMesh, marching_cubes, sdf_eval

BOUNDS = (np.full(3, -1.0), np.full(3, 1.0))


@pytest.fixture
def half_sphere_field():
    shape = Sphere(radius=0.5)
    return shape, lambda p: sdf_eval(shape, p)


def test_vertices_lie_on_level_set(half_sphere_field):
    shape, field = half_sphere_field
    mesh = marching_cubes(field, BOUNDS, 64)
    cell_diagonal = np.sqrt(3) * 2.0 / 64
    assert np.abs(field(mesh.vertices)).max() < cell_diagonal


def test_sphere_area_within_three_percent(half_sphere_field):
    _, field = half_sphere_field
    mesh = marching_cubes(field, BOUNDS, 64)
    exact = 4.0 * np.pi * 0.25
    assert abs(mesh.area() - exact) / exact < 0.03


def test_constant_field_gives_empty_mesh():
    mesh = marching_cubes(lambda p: np.ones(len(p)), BOUNDS, 8)
    assert mesh.is_empty


def test_vertex_field_bounded_by_cell_variation(half_sphere_field):
    # An SDF varies by at most the cell diagonal across one cell.
    _, field = half_sphere_field
    for cells in (16, 32):
        mesh = marching_cubes(field, BOUNDS, cells)
        assert np.abs(field(mesh.vertices)).max() < np.sqrt(3) * 2.0 / cells


def test_non_finite_field_reports_node():
    def bad(p):
        out = np.ones(len(p))
        out[3] = np.nan
        return out

    with pytest.raises(NumericError) as err:
        marching_cubes(bad, BOUNDS, 4)
    assert err.value.detail == (0, 0, 3)


def test_degenerate_bounds_rejected(half_sphere_field):
    _, field = half_sphere_field
    with pytest.raises(InvalidArgumentError):
        marching_cubes(field, (np.zeros(3), np.zeros(3)), 8)
    with pytest.raises(InvalidArgumentError):
        marching_cubes(field, BOUNDS, 1)


def test_scalar_channel_sampled_at_vertices(half_sphere_field):
    _, field = half_sphere_field
    mesh = marching_cubes(field, BOUNDS, 16, scalar_field=lambda p: p[:, 0])
    np.testing.assert_allclose(mesh.vertex_scalar, mesh.vertices[:, 0], atol=1e-12)


def test_trimesh_validates_indices():
    with pytest.raises(InvalidArgumentError):
        TriMesh(np.zeros((2, 3)), np.array([[0, 1, 2]]))


def test_no_degenerate_triangles(half_sphere_field):
    _, field = half_sphere_field
    mesh = marching_cubes(field, BOUNDS, 24)
    assert mesh.triangle_areas().min() > 1e-12


def test_marching_cubes_deterministic(half_sphere_field):
    _, field = half_sphere_field
    a = marching_cubes(field, BOUNDS, 20)
    b = marching_cubes(field, BOUNDS, 20)
    np.testing.assert_array_equal(a.vertices, b.vertices)
    np.testing.assert_array_equal(a.triangles, b.triangles)


def test_obj_roundtrip(tmp_path, half_sphere_field):
    _, field = half_sphere_field
    mesh = marching_cubes(field, BOUNDS, 12)
    path = tmp_path / "m.obj"
    write_mesh_obj(path, mesh)
    back = read_mesh_obj(path)
    np.testing.assert_allclose(back.vertices, mesh.vertices, atol=0.0)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)


def test_ply_mesh_quality_channel(tmp_path, half_sphere_field):
    _, field = half_sphere_field
    mesh = marching_cubes(field, BOUNDS, 12, scalar_field=lambda p: np.full(len(p), 0.25))
    path = tmp_path / "m.ply"
    write_mesh_ply(path, mesh)
    text = path.read_text()
    assert "property float quality" in text
    assert f"element vertex {len(mesh.vertices)}" in text
    assert f"element face {len(mesh.triangles)}" in text


def test_ply_bytes_deterministic(tmp_path, half_sphere_field):
    _, field = half_sphere_field
    mesh = marching_cubes(field, BOUNDS, 12)
    a = tmp_path / "a.ply"
    b = tmp_path / "b.ply"
    write_mesh_ply(a, mesh)
    write_mesh_ply(b, mesh)
    assert a.read_bytes() == b.read_bytes()
