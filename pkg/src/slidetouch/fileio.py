"""Exporters: ASCII PLY / OBJ meshes, PLY point clouds, 16-bit PGM height maps.

All writers format floats with ``repr`` (shortest round-trip), so identical
inputs produce byte-identical files — required for seeded reproducibility.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .geometry import PointCloud, TriMesh


def _fmt(v: float) -> str:
    return repr(float(v))


def write_cloud_ply(path, cloud: PointCloud) -> None:
    """ASCII PLY with an integer ``touch_id`` property (0 = visual)."""
    path = Path(path)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property int touch_id",
        "end_header",
    ]
    for p, tag in zip(cloud.points, cloud.tags):
        lines.append(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])} {int(tag)}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def write_mesh_ply(path, mesh: TriMesh) -> None:
    """ASCII PLY; the vertex scalar channel, when present, becomes ``quality``."""
    path = Path(path)
    has_scalar = mesh.vertex_scalar is not None
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if has_scalar:
        header.append("property float quality")
    header += [
        f"element face {len(mesh.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    lines = header
    for i, v in enumerate(mesh.vertices):
        row = f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}"
        if has_scalar:
            row += f" {_fmt(mesh.vertex_scalar[i])}"
        lines.append(row)
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def write_mesh_obj(path, mesh: TriMesh) -> None:
    path = Path(path)
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def read_mesh_obj(path) -> TriMesh:
    """Minimal OBJ reader (v/f records only), for round-trip checks."""
    verts = []
    faces = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return TriMesh(np.asarray(verts, dtype=float).reshape(-1, 3), np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def write_heightmap_pgm(path, values: np.ndarray) -> None:
    """Binary 16-bit PGM, one count per micrometer of penetration."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise InvalidArgumentError("height map must be a 2-D array")
    um = np.clip(np.round(values * 1e6), 0, 65535).astype(">u2")
    h, w = um.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + um.tobytes())


def read_heightmap_pgm(path) -> np.ndarray:
    """Inverse of :func:`write_heightmap_pgm`; returns meters."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise InvalidArgumentError("not a binary PGM file")
    parts = raw.split(b"\n", 3)
    w, h = (int(x) for x in parts[1].split())
    data = np.frombuffer(parts[3], dtype=">u2", count=w * h).reshape(h, w)
    return data.astype(float) * 1e-6


def write_csv(path, header: list[str], rows: list[list]) -> None:
    """Comma-separated, '.' decimal, repr-formatted floats (stable bytes)."""
    path = Path(path)
    with path.open("w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
