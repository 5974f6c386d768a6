"""Simulated sensing: partial-view depth rendering and gel-pad height maps.

The gel pad is modeled kinematically: each pixel of the pad plane reports how
deep the object surface intrudes into the gel, clamped to the pad's maximum
deformation. Contact pixels are those strictly above ``CONTACT_THRESHOLD``
(0.1 mm of penetration).

Fingertip frame convention (right-handed):
  +x  pressing direction, into the object ("inward normal" of the pad)
  +y  pixel columns (feature x)
  +z  pixel rows (feature y)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyViewError, InvalidArgumentError
from .geometry import PointCloud, ShapeModel, ray_march_batch, sdf_eval
from .transforms import Pose, as_readonly, orthonormal_frame, pose_from_frame

CONTACT_THRESHOLD = 1e-4  # meters of penetration that count as contact

_CAMERA_FAR = 10.0  # max ray length for the scene camera (m)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole depth camera. Camera frame: +z optic axis, +x columns, +y rows."""

    pose: Pose = field(default_factory=Pose.identity)
    width: int = 64
    height: int = 64
    vfov: float = math.radians(45.0)
    depth_noise: float = 5e-4

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise InvalidArgumentError("camera resolution must be at least 8x8")
        if not 0.0 < self.vfov < math.pi:
            raise InvalidArgumentError("vertical field of view must lie in (0, pi)")
        if self.depth_noise < 0.0:
            raise InvalidArgumentError("depth noise must be non-negative")

    @staticmethod
    def looking_at(position, target, width=64, height=64, vfov=math.radians(45.0), depth_noise=5e-4) -> "CameraModel":
        position = np.asarray(position, dtype=float)
        forward = np.asarray(target, dtype=float) - position
        norm = np.linalg.norm(forward)
        if norm < 1e-12:
            raise InvalidArgumentError("camera position and target coincide")
        forward = forward / norm
        up_ref = np.array([0.0, 0.0, 1.0])
        if abs(float(np.dot(forward, up_ref))) > 0.99:
            up_ref = np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, up_ref)
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        frame = np.column_stack([right, down, forward])
        return CameraModel(pose_from_frame(position, frame), width, height, vfov, depth_noise)

    def view_direction(self) -> np.ndarray:
        return self.pose.axis(2)

    def pixel_rays(self) -> np.ndarray:
        """World-frame unit ray directions, shape (H*W, 3), row-major."""
        focal = (self.height / 2.0) / math.tan(self.vfov / 2.0)
        cols = np.arange(self.width) - (self.width - 1) / 2.0
        rows = np.arange(self.height) - (self.height - 1) / 2.0
        u, v = np.meshgrid(cols, rows)
        dirs = np.stack([u.ravel(), v.ravel(), np.full(u.size, focal)], axis=1)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return self.pose.rotate(dirs)


def render_partial_view(shape: ShapeModel, camera: CameraModel, seed: int) -> PointCloud:
    """One ray per pixel; hits become a visual point cloud with range noise.

    Only the camera-facing, unoccluded surface can be hit (sphere tracing
    stops at the first crossing). Gaussian noise of the camera's sigma is
    applied along each ray. Raises :class:`EmptyViewError` when no pixel
    hits the shape.
    """
    if sdf_eval(shape, camera.pose.position) <= 0.0:
        raise InvalidArgumentError("camera must be outside the shape")
    dirs = camera.pixel_rays()
    origins = np.broadcast_to(camera.pose.position, dirs.shape)
    hit, points, dist = ray_march_batch(shape, origins, dirs, _CAMERA_FAR)
    if not hit.any():
        raise EmptyViewError("no pixel ray intersects the shape")
    points = points[hit]
    if camera.depth_noise > 0.0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, camera.depth_noise, size=len(points))
        points = points + noise[:, None] * dirs[hit]
    return PointCloud.from_points(points)


@dataclass(frozen=True)
class GelPad:
    """Rectangular sensing pad: ``width`` maps to columns, ``height`` to rows."""

    width: float = 16e-3
    height: float = 12e-3
    cols: int = 32
    rows: int = 24
    max_deformation: float = 1.2e-3

    def __post_init__(self):
        if self.cols < 8 or self.rows < 8:
            raise InvalidArgumentError("gel resolution must be at least 8x8")
        if min(self.width, self.height, self.max_deformation) <= 0.0:
            raise InvalidArgumentError("gel dimensions must be positive")

    @property
    def pixel_count(self) -> int:
        return self.rows * self.cols

    def pixel_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel (column, row) metric offsets from the pad center."""
        pitch_c = self.width / self.cols
        pitch_r = self.height / self.rows
        ys = (np.arange(self.cols) - (self.cols - 1) / 2.0) * pitch_c
        zs = (np.arange(self.rows) - (self.rows - 1) / 2.0) * pitch_r
        return ys, zs

    def pixel_grid_world(self, fingertip: Pose) -> np.ndarray:
        """World positions of the undeformed pad plane pixels, shape (rows*cols, 3)."""
        ys, zs = self.pixel_offsets()
        yy, zz = np.meshgrid(ys, zs)  # (rows, cols)
        y_axis = fingertip.axis(1)
        z_axis = fingertip.axis(2)
        return (
            fingertip.position
            + yy.ravel()[:, None] * y_axis
            + zz.ravel()[:, None] * z_axis
        )


@dataclass(frozen=True)
class HeightMap:
    """Per-pixel gel penetration in meters, with the pose that generated it."""

    values: np.ndarray
    fingertip: Pose

    def __post_init__(self):
        vals = as_readonly(self.values)
        if vals.ndim != 2:
            raise InvalidArgumentError("height map must be 2-D (rows, cols)")
        if not np.all(np.isfinite(vals)) or vals.min() < 0.0:
            raise InvalidArgumentError("height map values must be finite and non-negative")
        object.__setattr__(self, "values", vals)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def render_height_map(shape: ShapeModel, fingertip: Pose, gel: GelPad) -> HeightMap:
    """Penetration depth of the shape into the gel at each pad pixel.

    Rays start one full deformation behind the pad plane and march along the
    pressing direction; a hit at distance ``t`` means the surface sits
    ``max_deformation - t`` inside the gel. Pixels whose start point is
    already inside the object read fully compressed.
    """
    x_axis = fingertip.axis(0)
    plane = gel.pixel_grid_world(fingertip)
    origins = plane - gel.max_deformation * x_axis
    dirs = np.broadcast_to(x_axis, origins.shape)
    hit, _, dist = ray_march_batch(shape, origins, dirs, gel.max_deformation)
    depth = np.where(hit, gel.max_deformation - dist, 0.0)
    inside = np.atleast_1d(sdf_eval(shape, origins)) <= 0.0
    depth = np.where(inside, gel.max_deformation, depth)
    depth = np.clip(depth, 0.0, gel.max_deformation)
    return HeightMap(depth.reshape(gel.rows, gel.cols), fingertip)


@dataclass(frozen=True)
class TactileFeature:
    """Contact summary: intensity centroid (x = column, y = row) and area in pixels."""

    x: float
    y: float
    area: int

    @property
    def in_contact(self) -> bool:
        return self.area > 0

    @property
    def has_centroid(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, float(self.area)])


def extract_tactile_feature(height_map: HeightMap) -> TactileFeature:
    """Intensity-weighted centroid over all pixels plus thresholded contact area.

    A map with zero total intensity has no defined centroid; it is flagged
    with NaN coordinates (``has_centroid`` False) rather than defaulted, so
    the servo layer can tell "lost contact" from "centered contact".
    """
    m = height_map.values
    total = float(m.sum())
    area = int(np.count_nonzero(m > CONTACT_THRESHOLD))
    if total <= 0.0:
        return TactileFeature(math.nan, math.nan, area)
    rows, cols = np.indices(m.shape)
    x = float((cols * m).sum() / total)
    y = float((rows * m).sum() / total)
    return TactileFeature(x, y, area)


def contact_point_world(height_map: HeightMap, gel: GelPad, feature: TactileFeature) -> np.ndarray:
    """World position of the contact centroid (bilinear height at the centroid pixel)."""
    if not feature.has_centroid:
        raise InvalidArgumentError("height map has no contact centroid")
    fingertip = height_map.fingertip
    ys, zs = gel.pixel_offsets()
    col = float(np.clip(feature.x, 0, gel.cols - 1))
    row = float(np.clip(feature.y, 0, gel.rows - 1))
    c0 = int(math.floor(col))
    r0 = int(math.floor(row))
    c1 = min(c0 + 1, gel.cols - 1)
    r1 = min(r0 + 1, gel.rows - 1)
    fc = col - c0
    fr = row - r0
    m = height_map.values
    h = (
        m[r0, c0] * (1 - fr) * (1 - fc)
        + m[r0, c1] * (1 - fr) * fc
        + m[r1, c0] * fr * (1 - fc)
        + m[r1, c1] * fr * fc
    )
    y_off = ys[c0] * (1 - fc) + ys[c1] * fc
    z_off = zs[r0] * (1 - fr) + zs[r1] * fr
    return (
        fingertip.position
        + y_off * fingertip.axis(1)
        + z_off * fingertip.axis(2)
        - h * fingertip.axis(0)
    )


def height_map_to_cloud(
    height_map: HeightMap,
    gel: GelPad,
    downsample_ratio: float,
    seed: int,
    touch_id: int = 1,
) -> PointCloud:
    """Lift contact pixels to world-frame surface points and downsample.

    The surface point for a pixel sits on the pad plane displaced by its
    penetration depth against the pressing direction. Downsampling keeps
    ``round(ratio * contact_count)`` uniformly chosen pixels (seeded).
    """
    if not 0.0 < downsample_ratio <= 1.0:
        raise InvalidArgumentError("downsample ratio must lie in (0, 1]")
    m = height_map.values.ravel()
    mask = m > CONTACT_THRESHOLD
    if not mask.any():
        return PointCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
    plane = gel.pixel_grid_world(height_map.fingertip)[mask]
    heights = m[mask]
    points = plane - heights[:, None] * height_map.fingertip.axis(0)
    keep = int(round(downsample_ratio * len(points)))
    if keep < len(points):
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(points), size=keep, replace=False))
        points = points[idx]
    return PointCloud(points, np.full(len(points), touch_id, dtype=np.int64))


def fingertip_pose_for_contact(surface_point, outward_normal, penetration: float) -> Pose:
    """Pad pose that presses the pad center to the given penetration depth.

    The pressing axis opposes the outward surface normal; the pad-plane
    origin sits ``penetration`` inside the surface along that axis.
    """
    n = np.asarray(outward_normal, dtype=float)
    n = n / np.linalg.norm(n)
    press = -n
    position = np.asarray(surface_point, dtype=float) + penetration * press
    return pose_from_frame(position, orthonormal_frame(press))
