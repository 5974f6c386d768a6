"""Analytic shapes, level-set extraction, and point-cloud metrics.

Shapes are signed-distance oracles: negative strictly inside, positive
outside, zero on the surface. All SDFs broadcast over leading batch
dimensions; a point array has shape ``(..., 3)`` and distances come back
as ``(...,)``. Units are meters throughout; Chamfer distance alone is
reported in millimeters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure

from .errors import (
    DegenerateNormalError,
    InvalidArgumentError,
    NumericError,
)
from .transforms import Pose, as_readonly

VISUAL_TAG = 0

_NORMAL_STEP = 1e-5  # finite-difference step for surface normals (m)
_RAY_EPS = 1e-6  # sphere-tracing convergence threshold (m)
_RAY_MAX_STEPS = 256
_DEGENERATE_AREA = 1e-12  # triangles below this area (m^2) are dropped


# ---------------------------------------------------------------------------
# Shape models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeModel:
    """Base class: a posed solid with an exact-or-conservative local SDF."""

    pose: Pose = field(default_factory=Pose.identity)

    kind = "abstract"

    def sdf_local(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def local_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """World-frame axis-aligned bounding box (conservative under rotation)."""
        lo, hi = self.local_bounds()
        corners = np.array(
            [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]
        )
        world = self.pose.transform(corners)
        return world.min(axis=0), world.max(axis=0)

    def params_dict(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "pose": self.pose.to_dict()}
        d.update(self.params_dict())
        return d


def _check_positive(name: str, *values: float) -> None:
    for v in values:
        if not np.isfinite(v) or v <= 0.0:
            raise InvalidArgumentError(f"{name} dimensions must be strictly positive, got {v}")


@dataclass(frozen=True)
class Sphere(ShapeModel):
    radius: float = 0.05

    kind = "sphere"

    def __post_init__(self):
        _check_positive("sphere", self.radius)

    def sdf_local(self, p):
        return np.linalg.norm(p, axis=-1) - self.radius

    def local_bounds(self):
        r = np.full(3, self.radius)
        return -r, r

    def params_dict(self):
        return {"radius": self.radius}


@dataclass(frozen=True)
class Box(ShapeModel):
    half_extents: np.ndarray = field(default_factory=lambda: np.full(3, 0.05))

    kind = "box"

    def __post_init__(self):
        he = as_readonly(self.half_extents)
        _check_positive("box", *he)
        object.__setattr__(self, "half_extents", he)

    def sdf_local(self, p):
        q = np.abs(p) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def local_bounds(self):
        return -self.half_extents.copy(), self.half_extents.copy()

    def params_dict(self):
        return {"half_extents": [float(v) for v in self.half_extents]}


@dataclass(frozen=True)
class Cylinder(ShapeModel):
    """Capped cylinder along the local z axis."""

    radius: float = 0.03
    half_height: float = 0.05

    kind = "cylinder"

    def __post_init__(self):
        _check_positive("cylinder", self.radius, self.half_height)

    def sdf_local(self, p):
        radial = np.linalg.norm(p[..., :2], axis=-1) - self.radius
        axial = np.abs(p[..., 2]) - self.half_height
        d = np.stack([radial, axial], axis=-1)
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
        inside = np.minimum(np.max(d, axis=-1), 0.0)
        return outside + inside

    def local_bounds(self):
        return (
            np.array([-self.radius, -self.radius, -self.half_height]),
            np.array([self.radius, self.radius, self.half_height]),
        )

    def params_dict(self):
        return {"radius": self.radius, "half_height": self.half_height}


@dataclass(frozen=True)
class Capsule(ShapeModel):
    """Capsule along the local z axis; ``half_height`` is the segment half-length."""

    radius: float = 0.02
    half_height: float = 0.04

    kind = "capsule"

    def __post_init__(self):
        _check_positive("capsule", self.radius, self.half_height)

    def sdf_local(self, p):
        q = np.array(p, dtype=float, copy=True)
        q[..., 2] = q[..., 2] - np.clip(q[..., 2], -self.half_height, self.half_height)
        return np.linalg.norm(q, axis=-1) - self.radius

    def local_bounds(self):
        r, h = self.radius, self.half_height
        return np.array([-r, -r, -h - r]), np.array([r, r, h + r])

    def params_dict(self):
        return {"radius": self.radius, "half_height": self.half_height}


@dataclass(frozen=True)
class Superellipsoid(ShapeModel):
    """Superellipsoid with the standard radial scaling distance estimate.

    The estimate is exact for spheres, degrades gracefully for mild
    exponents, and always carries the exact inside/outside sign, so ray
    marching (which bisects on sign change) stays correct even where the
    magnitude is approximate.
    """

    half_extents: np.ndarray = field(default_factory=lambda: np.full(3, 0.05))
    e1: float = 1.0  # north-south squareness
    e2: float = 1.0  # east-west squareness

    kind = "superellipsoid"

    def __post_init__(self):
        he = as_readonly(self.half_extents)
        _check_positive("superellipsoid", *he, self.e1, self.e2)
        object.__setattr__(self, "half_extents", he)

    def sdf_local(self, p):
        p = np.asarray(p, dtype=float)
        eps = 1e-12
        s = np.abs(p) / self.half_extents
        xy = (s[..., 0] + eps) ** (2.0 / self.e2) + (s[..., 1] + eps) ** (2.0 / self.e2)
        f = (xy ** (self.e2 / self.e1) + (s[..., 2] + eps) ** (2.0 / self.e1)) ** (self.e1 / 2.0)
        r = np.linalg.norm(p, axis=-1)
        # Radial scaling: the surface point along the ray through p is p / f.
        return np.where(r < eps, -np.min(self.half_extents), r * (1.0 - 1.0 / np.maximum(f, eps)))

    def local_bounds(self):
        return -self.half_extents.copy(), self.half_extents.copy()

    def params_dict(self):
        return {
            "half_extents": [float(v) for v in self.half_extents],
            "e1": self.e1,
            "e2": self.e2,
        }


@dataclass(frozen=True)
class ShapeUnion(ShapeModel):
    """Union of member shapes: pointwise minimum of their signed distances."""

    members: tuple[ShapeModel, ...] = ()

    kind = "union"

    def __post_init__(self):
        if len(self.members) == 0:
            raise InvalidArgumentError("union requires at least one member shape")
        object.__setattr__(self, "members", tuple(self.members))

    def sdf_local(self, p):
        return np.minimum.reduce([sdf_eval(m, p, _checked=True) for m in self.members])

    def local_bounds(self):
        los, his = zip(*(m.bounds() for m in self.members))
        return np.min(los, axis=0), np.max(his, axis=0)

    def params_dict(self):
        return {"members": [m.to_dict() for m in self.members]}


_SHAPE_KINDS = {}
for _cls in (Sphere, Box, Cylinder, Capsule, Superellipsoid, ShapeUnion):
    _SHAPE_KINDS[_cls.kind] = _cls


def shape_from_dict(data: dict) -> ShapeModel:
    kind = data.get("kind")
    if kind not in _SHAPE_KINDS:
        raise InvalidArgumentError(f"unknown shape kind {kind!r}")
    pose = Pose.from_dict(data.get("pose", {}))
    if kind == "sphere":
        return Sphere(pose, radius=float(data["radius"]))
    if kind == "box":
        return Box(pose, half_extents=np.asarray(data["half_extents"], dtype=float))
    if kind == "cylinder":
        return Cylinder(pose, radius=float(data["radius"]), half_height=float(data["half_height"]))
    if kind == "capsule":
        return Capsule(pose, radius=float(data["radius"]), half_height=float(data["half_height"]))
    if kind == "superellipsoid":
        return Superellipsoid(
            pose,
            half_extents=np.asarray(data["half_extents"], dtype=float),
            e1=float(data.get("e1", 1.0)),
            e2=float(data.get("e2", 1.0)),
        )
    return ShapeUnion(pose, members=tuple(shape_from_dict(m) for m in data["members"]))


# ---------------------------------------------------------------------------
# SDF queries
# ---------------------------------------------------------------------------

def sdf_eval(shape: ShapeModel, p, _checked: bool = False) -> np.ndarray | float:
    """Signed distance from world point(s) ``p`` to the shape surface."""
    arr = np.asarray(p, dtype=float)
    scalar = arr.ndim == 1
    if not _checked and not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("query point must be finite")
    local = shape.pose.inverse_transform(arr)
    d = shape.sdf_local(local)
    return float(d) if scalar else d


def sdf_normal(shape: ShapeModel, p) -> np.ndarray:
    """Outward unit normal from central differences of the SDF (step 1e-5 m)."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise InvalidArgumentError("query point must be finite")
    grad = _sdf_gradient(shape, p)
    n = np.linalg.norm(grad)
    if n < 1e-9:
        raise DegenerateNormalError(f"SDF gradient vanishes at {p.tolist()}")
    return grad / n


def _sdf_gradient(shape: ShapeModel, p: np.ndarray) -> np.ndarray:
    offsets = np.zeros((6, 3))
    for i in range(3):
        offsets[2 * i, i] = _NORMAL_STEP
        offsets[2 * i + 1, i] = -_NORMAL_STEP
    vals = sdf_eval(shape, p + offsets)
    return (vals[0::2] - vals[1::2]) / (2.0 * _NORMAL_STEP)


def sdf_normal_batch(shape: ShapeModel, points: np.ndarray) -> np.ndarray:
    """Vectorized ``sdf_normal`` without the degeneracy check (caller filters)."""
    points = np.asarray(points, dtype=float)
    grads = np.empty_like(points)
    for i in range(3):
        step = np.zeros(3)
        step[i] = _NORMAL_STEP
        grads[:, i] = sdf_eval(shape, points + step) - sdf_eval(shape, points - step)
    norms = np.linalg.norm(grads, axis=1, keepdims=True)
    return grads / np.maximum(norms, 1e-30)


def ray_march_batch(
    shape: ShapeModel,
    origins: np.ndarray,
    directions: np.ndarray,
    max_dist: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sphere-trace many rays at once.

    Returns ``(hit_mask, points, distances)``. A hit is the first point where
    the signed distance converges below threshold or crosses zero; overshoots
    from approximate SDFs are recovered by bisecting the bracketing interval,
    so only the sign of the field must be exact.
    """
    if max_dist <= 0.0:
        raise InvalidArgumentError("max_dist must be positive")
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    n = origins.shape[0]

    t = np.zeros(n)
    d = np.atleast_1d(sdf_eval(shape, origins))
    sign0 = np.where(d >= 0.0, 1.0, -1.0)
    hit = np.abs(d) < _RAY_EPS
    t_lo = np.zeros(n)
    t_hi = np.zeros(n)
    bracket = np.zeros(n, dtype=bool)
    active = ~hit

    for _ in range(_RAY_MAX_STEPS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        t_new = t[idx] + np.abs(d[idx])
        p_new = origins[idx] + t_new[:, None] * directions[idx]
        d_new = np.atleast_1d(sdf_eval(shape, p_new))

        converged = np.abs(d_new) < _RAY_EPS
        crossed = (np.where(d_new >= 0.0, 1.0, -1.0) != sign0[idx]) & ~converged
        out = (t_new > max_dist) & ~converged & ~crossed

        conv_idx = idx[converged]
        hit[conv_idx] = t_new[converged] <= max_dist
        t[conv_idx] = t_new[converged]

        cross_idx = idx[crossed]
        t_lo[cross_idx] = t[cross_idx]  # last sample on the starting side
        t_hi[cross_idx] = t_new[crossed]
        bracket[cross_idx] = True

        cont = ~converged & ~crossed & ~out
        cont_idx = idx[cont]
        t[cont_idx] = t_new[cont]
        d[cont_idx] = d_new[cont]
        active[idx] = cont

    # Bisect recorded brackets down to the convergence threshold.
    bi = np.flatnonzero(bracket)
    if bi.size:
        lo = t_lo[bi]
        hi = t_hi[bi]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            pm = origins[bi] + mid[:, None] * directions[bi]
            dm = np.atleast_1d(sdf_eval(shape, pm))
            same = np.where(dm >= 0.0, 1.0, -1.0) == sign0[bi]
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
            if np.all(hi - lo < _RAY_EPS * 0.5):
                break
        t[bi] = 0.5 * (lo + hi)
        hit[bi] = t[bi] <= max_dist

    points = origins + t[:, None] * directions
    return hit, points, t


def ray_march(shape: ShapeModel, origin, direction, max_dist: float) -> Optional[np.ndarray]:
    """First surface crossing along a ray, or ``None`` if nothing is hit."""
    hit, points, _ = ray_march_batch(
        shape, np.asarray(origin, dtype=float)[None, :], np.asarray(direction, dtype=float)[None, :], max_dist
    )
    return points[0] if bool(hit[0]) else None


def project_to_surface(shape: ShapeModel, p, iterations: int = 12) -> np.ndarray:
    """Newton-project a near-surface point onto the zero level set."""
    q = np.asarray(p, dtype=float).copy()
    for _ in range(iterations):
        d = sdf_eval(shape, q)
        if abs(d) < 1e-9:
            break
        q = q - d * sdf_normal(shape, q)
    return q


# ---------------------------------------------------------------------------
# Meshes and point clouds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TriMesh:
    """Triangle mesh with an optional per-vertex scalar channel (e.g. variance)."""

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_scalar: Optional[np.ndarray] = None

    def __post_init__(self):
        verts = as_readonly(self.vertices).reshape(-1, 3)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise InvalidArgumentError("triangle index out of range")
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        if self.vertex_scalar is not None:
            scalar = as_readonly(self.vertex_scalar).reshape(-1)
            if len(scalar) != len(verts):
                raise InvalidArgumentError("vertex scalar channel length mismatch")
            object.__setattr__(self, "vertex_scalar", scalar)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def triangle_areas(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def area(self) -> float:
        return float(self.triangle_areas().sum()) if len(self.triangles) else 0.0


def empty_mesh() -> TriMesh:
    return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


@dataclass(frozen=True)
class PointCloud:
    """World-frame points with a provenance tag per point (0 = visual, k = touch k)."""

    points: np.ndarray
    tags: np.ndarray

    def __post_init__(self):
        pts = as_readonly(self.points).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("point cloud contains non-finite coordinates")
        tags = np.array(self.tags, dtype=np.int64).reshape(-1)
        if len(tags) != len(pts):
            raise InvalidArgumentError("tags length must match point count")
        tags.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "tags", tags)

    @staticmethod
    def from_points(points, tag: int = VISUAL_TAG) -> "PointCloud":
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return PointCloud(points, np.full(len(points), tag, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.points)

    def concat(self, other: "PointCloud") -> "PointCloud":
        return PointCloud(
            np.vstack([self.points, other.points]),
            np.concatenate([self.tags, other.tags]),
        )


def merge_clouds(clouds: Sequence[PointCloud]) -> PointCloud:
    clouds = [c for c in clouds if len(c)]
    if not clouds:
        return PointCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
    return PointCloud(
        np.vstack([c.points for c in clouds]),
        np.concatenate([c.tags for c in clouds]),
    )


# ---------------------------------------------------------------------------
# Level-set extraction
# ---------------------------------------------------------------------------

FieldSampler = Callable[[np.ndarray], np.ndarray]


def marching_cubes(
    field: FieldSampler,
    bounds: tuple[np.ndarray, np.ndarray],
    cells_per_axis: int,
    scalar_field: Optional[FieldSampler] = None,
) -> TriMesh:
    """Extract the zero level set of ``field`` on a regular grid.

    ``field`` maps ``(N, 3)`` world points to ``(N,)`` values. The grid has
    ``cells_per_axis`` cells (so ``cells_per_axis + 1`` nodes) per axis.
    When ``scalar_field`` is given, each output vertex is annotated with its
    value. A field with no zero crossing yields an empty mesh.
    """
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    if not np.all(hi > lo):
        raise InvalidArgumentError("bounds must be a non-degenerate box")
    if cells_per_axis < 2:
        raise InvalidArgumentError("cells_per_axis must be at least 2")

    n = cells_per_axis + 1
    axes = [np.linspace(lo[i], hi[i], n) for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    values = np.asarray(field(grid), dtype=float)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        node = np.unravel_index(bad, (n, n, n))
        raise NumericError(f"field non-finite at grid node {node}", detail=node)
    volume = values.reshape(n, n, n)

    if volume.min() > 0.0 or volume.max() < 0.0:
        return empty_mesh()

    spacing = (hi - lo) / cells_per_axis
    verts, faces, _, _ = measure.marching_cubes(volume, level=0.0, spacing=tuple(spacing))
    verts = verts + lo

    mesh = TriMesh(verts, faces)
    areas = mesh.triangle_areas()
    keep = areas > _DEGENERATE_AREA
    if not keep.all():
        mesh = TriMesh(verts, faces[keep])

    scalar = None
    if scalar_field is not None and len(mesh.vertices):
        scalar = np.asarray(scalar_field(mesh.vertices), dtype=float)
    return TriMesh(mesh.vertices, mesh.triangles, scalar)


# ---------------------------------------------------------------------------
# Metrics and sampling
# ---------------------------------------------------------------------------

def _cloud_points(cloud) -> np.ndarray:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    return pts.reshape(-1, 3)


def chamfer_distance(a, b) -> float:
    """Symmetric mean nearest-neighbor distance between two clouds, in mm.

    Exact nearest neighbors via a KD-tree; identical to the brute-force
    double loop up to floating-point associativity of the mean.
    """
    pa = _cloud_points(a)
    pb = _cloud_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise InvalidArgumentError("chamfer distance requires two non-empty clouds")
    da, _ = cKDTree(pb).query(pa, k=1)
    db, _ = cKDTree(pa).query(pb, k=1)
    return 1000.0 * 0.5 * (float(da.mean()) + float(db.mean()))


def sample_surface(source, n: int, seed: int) -> PointCloud:
    """Uniform surface sampling of a mesh (area-weighted) or shape (band-rejected).

    Deterministic for a fixed seed. Shape sampling draws points in the
    inflated bounding box, keeps those within a thin band of the surface,
    and Newton-projects them onto the zero level set.
    """
    if n < 1:
        raise InvalidArgumentError("sample count must be at least 1")
    rng = np.random.default_rng(seed)
    if isinstance(source, TriMesh):
        return _sample_mesh(source, n, rng)
    return _sample_shape(source, n, rng)


def _sample_mesh(mesh: TriMesh, n: int, rng: np.random.Generator) -> PointCloud:
    if mesh.is_empty:
        raise InvalidArgumentError("cannot sample an empty mesh")
    areas = mesh.triangle_areas()
    probs = areas / areas.sum()
    choice = rng.choice(len(areas), size=n, p=probs)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    tri = mesh.triangles[choice]
    a = mesh.vertices[tri[:, 0]]
    b = mesh.vertices[tri[:, 1]]
    c = mesh.vertices[tri[:, 2]]
    pts = a + u[:, None] * (b - a) + v[:, None] * (c - a)
    return PointCloud.from_points(pts)


def _sample_shape(shape: ShapeModel, n: int, rng: np.random.Generator) -> PointCloud:
    lo, hi = shape.bounds()
    margin = 0.05 * (hi - lo)
    lo = lo - margin
    hi = hi + margin
    band = 0.02 * float(np.linalg.norm(hi - lo))
    collected = []
    count = 0
    for _ in range(200):
        draw = rng.random((max(4 * n, 1024), 3)) * (hi - lo) + lo
        d = sdf_eval(shape, draw)
        near = np.abs(d) < band
        if near.any():
            collected.append(draw[near])
            count += int(near.sum())
        if count >= n:
            break
    if count < n:
        raise NumericError("surface band sampling failed to accumulate points")
    pts = np.vstack(collected)[:n]
    # Newton projection onto the zero level set.
    for _ in range(20):
        d = sdf_eval(shape, pts)
        if np.abs(d).max() < 1e-9:
            break
        normals = sdf_normal_batch(shape, pts)
        pts = pts - d[:, None] * normals
    return PointCloud.from_points(pts)


def inflate_bounds(lo, hi, fraction: float = 0.15) -> tuple[np.ndarray, np.ndarray]:
    """Grow an axis-aligned box by a fraction of its extent per side."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    pad = fraction * (hi - lo)
    return lo - pad, hi + pad


def estimate_normals_toward(points: np.ndarray, toward, k: int = 12) -> np.ndarray:
    """Local-PCA unit normals oriented toward a reference point (e.g. the camera).

    The normal of each point is the smallest principal axis of its k nearest
    neighbors; orientation is flipped so it faces the reference, which is the
    correct choice for points seen from that side.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    toward = np.asarray(toward, dtype=float)
    k = min(k, len(points))
    if k < 3:
        raise InvalidArgumentError("normal estimation needs at least 3 points")
    _, idx = cKDTree(points).query(points, k=k)
    neigh = points[idx]  # (n, k, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    # eigh returns ascending eigenvalues; the smallest axis is the normal.
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    flip = np.einsum("ni,ni->n", normals, toward - points) < 0.0
    normals[flip] *= -1.0
    return normals
