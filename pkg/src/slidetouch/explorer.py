"""Touch planning and the exploration loop.

Each iteration: extract the estimated surface, build the constrained
candidate set (on the estimated surface, away from observations, inside the
workspace, on the camera-hidden side), pick a query by expected improvement
(or uniformly at random for the baseline policy), slide the hand toward it
recording tactile frames, fuse the new points, refit the surface model, and
evaluate the uncertainty-reduction stopping ratio.

Surface observations all carry value zero, so the incumbent for expected
improvement is zero as well; on zero-mean candidates the acquisition then
ranks by posterior standard deviation, which is exactly the uncertainty-
seeking behavior the planner needs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import norm

from .control import (
    HandState,
    HandTemplate,
    ServoGains,
    TactileJacobian,
    establish_contact,
    follower_adapt,
    servo_regulate,
)
from .errors import (
    ContactLostError,
    DegenerateDirectionError,
    EmptySurfaceError,
    InvalidArgumentError,
    TouchFailedError,
)
from .fileio import write_cloud_ply, write_mesh_ply
from .geometry import (
    PointCloud,
    ShapeModel,
    TriMesh,
    chamfer_distance,
    estimate_normals_toward,
    inflate_bounds,
    marching_cubes,
    merge_clouds,
    sample_surface,
)
from .gpis import (
    MAX_TRAINING_POINTS,
    GpisModel,
    KernelSpec,
    augment_off_surface,
    extract_surface,
    fit,
    max_variance_gap,
    mean_gradient,
    predict,
    predict_mean,
    predict_variance,
)
from .sensing import (
    CameraModel,
    GelPad,
    contact_point_world,
    extract_tactile_feature,
    height_map_to_cloud,
    render_height_map,
    render_partial_view,
)

GROUND_TRUTH_SAMPLES = 10000
_GT_SEED = 90210  # fixed so the metric is comparable across runs and policies


@dataclass(frozen=True)
class ExplorationConfig:
    """Planner constants; defaults follow the simulated-experiment setup."""

    step: float = 5e-3  # sliding step between frames (m)
    d_min: float = 10e-3  # query-reached distance (m)
    n_max: int = 15  # frame cap per sliding touch
    exclusion_radius: float = 5e-3  # candidate distance to observed points (m)
    udrr_threshold: float = 0.30
    downsample_ratio: float = 0.02
    point_cap: int = 4500
    z_bounds: tuple[float, float] = (0.05, 0.15)
    max_touches: int = 12
    grid_cells: int = 10
    servo_max_iters: int = 20
    seed: int = 0

    def __post_init__(self):
        for name in ("step", "d_min", "exclusion_radius", "downsample_ratio"):
            if getattr(self, name) <= 0.0:
                raise InvalidArgumentError(f"{name} must be positive")
        if not 0.0 < self.udrr_threshold <= 1.1:
            raise InvalidArgumentError("udrr threshold must lie in (0, 1.1]")
        if self.n_max < 1 or self.max_touches < 1 or self.point_cap < 1:
            raise InvalidArgumentError("counts must be positive")
        if self.z_bounds[0] >= self.z_bounds[1]:
            raise InvalidArgumentError("z bounds must be increasing")

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "d_min": self.d_min,
            "n_max": self.n_max,
            "exclusion_radius": self.exclusion_radius,
            "udrr_threshold": self.udrr_threshold,
            "downsample_ratio": self.downsample_ratio,
            "point_cap": self.point_cap,
            "z_bounds": list(self.z_bounds),
            "max_touches": self.max_touches,
            "grid_cells": self.grid_cells,
            "servo_max_iters": self.servo_max_iters,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(data: dict) -> "ExplorationConfig":
        kwargs = dict(data)
        if "z_bounds" in kwargs:
            kwargs["z_bounds"] = tuple(float(v) for v in kwargs["z_bounds"])
        return ExplorationConfig(**kwargs)


@dataclass(frozen=True)
class TouchFrame:
    """One recorded sliding frame: leader feature, world contact, tactile fragment."""

    feature_x: float
    feature_y: float
    feature_area: int
    contact: np.ndarray  # leader contact centroid, world (3,)
    normal: np.ndarray  # estimated outward normal (3,)
    fragment: PointCloud


@dataclass(frozen=True)
class SlidingTouch:
    """One planner iteration's motion: recorded frames plus the target query."""

    frames: tuple[TouchFrame, ...]
    query: np.ndarray
    reason: str  # reached-query | max-frames | contact-lost

    def __post_init__(self):
        if not 1 <= len(self.frames):
            raise InvalidArgumentError("a sliding touch records at least one frame")

    def cloud(self) -> PointCloud:
        return merge_clouds([f.fragment for f in self.frames])

    def cloud_normals(self) -> np.ndarray:
        """Per-point estimated normals: each fragment shares its frame's pad normal."""
        parts = [np.tile(f.normal, (len(f.fragment), 1)) for f in self.frames if len(f.fragment)]
        return np.vstack(parts) if parts else np.zeros((0, 3))


@dataclass(frozen=True)
class IterationRecord:
    """Metrics after one touch (touch 0 is the visual-only initialization)."""

    touch: int
    query: Optional[tuple[float, float, float]]
    frames: int
    udrr: float
    cd_mm: float
    points_visual: int
    points_tactile: int
    points_total: int
    wall_time_s: float  # informational; excluded from the deterministic CSV


@dataclass(frozen=True)
class ExplorationReport:
    records: tuple[IterationRecord, ...]
    policy: str
    termination: str  # udrr-stop | touch-cap | candidates-exhausted
    final_mesh: TriMesh
    kernel: KernelSpec

    @property
    def touch_count(self) -> int:
        return self.records[-1].touch

    @property
    def final_cd_mm(self) -> float:
        return self.records[-1].cd_mm

    @property
    def initial_cd_mm(self) -> float:
        return self.records[0].cd_mm


REPORT_HEADER = [
    "touch",
    "query_x",
    "query_y",
    "query_z",
    "frames",
    "udrr",
    "cd_mm",
    "points_visual",
    "points_tactile",
    "points_total",
]


def report_rows(report: ExplorationReport) -> list[list]:
    rows = []
    for r in report.records:
        q = ("", "", "") if r.query is None else tuple(float(v) for v in r.query)
        rows.append(
            [r.touch, q[0], q[1], q[2], r.frames, r.udrr, r.cd_mm,
             r.points_visual, r.points_tactile, r.points_total]
        )
    return rows


# ---------------------------------------------------------------------------
# Candidate construction and acquisition
# ---------------------------------------------------------------------------

def _project_to_zero_set(model: GpisModel, points: np.ndarray, iterations: int = 6) -> np.ndarray:
    """Newton-project points onto the posterior-mean zero level set.

    Marching-cubes vertices only carry the cell-interpolated crossing; at the
    coarse planning grid their field value can be far from zero, which would
    leak grid artifacts into the acquisition ranking. Points that do not
    converge onto the level set are dropped.
    """
    q = np.array(points, dtype=float)
    for _ in range(iterations):
        mu = predict_mean(model, q)
        grad = mean_gradient(model, q)
        norm2 = (grad * grad).sum(axis=1)
        step = mu / np.maximum(norm2, 1e-12)
        q = q - step[:, None] * grad
    mu = predict_mean(model, q)
    return q[np.abs(mu) < 1e-3]


def candidate_set(
    model: GpisModel,
    mesh: TriMesh,
    observed: PointCloud,
    cfg: ExplorationConfig,
    view_direction,
) -> np.ndarray:
    """Query candidates: estimated-surface points that are worth touching.

    Mesh vertices are first projected onto the posterior zero set (the
    constraint is membership in the estimated surface, not in its voxel
    discretization), then kept only if (a) farther than the exclusion radius
    from every observed point, (b) inside the workspace z band, and (c) on
    the camera-hidden side (outward field gradient not facing the camera).
    Empty output signals that exploration is complete.
    """
    if mesh.is_empty:
        raise InvalidArgumentError("candidate set needs a non-empty estimated mesh")
    verts = _project_to_zero_set(model, mesh.vertices)
    keep = np.ones(len(verts), dtype=bool)

    if len(observed):
        nearest, _ = cKDTree(observed.points).query(verts, k=1)
        keep &= nearest > cfg.exclusion_radius

    keep &= (verts[:, 2] >= cfg.z_bounds[0]) & (verts[:, 2] <= cfg.z_bounds[1])

    view = np.asarray(view_direction, dtype=float)
    view = view / np.linalg.norm(view)
    normals = mean_gradient(model, verts)
    norms = np.linalg.norm(normals, axis=1)
    valid = norms > 1e-12
    facing_away = np.zeros(len(verts), dtype=bool)
    facing_away[valid] = (normals[valid] @ view) > 0.0
    keep &= facing_away

    return verts[keep]


def expected_improvement(model: GpisModel, points, best_value: float) -> np.ndarray | float:
    """Closed-form improvement expectation over the GP posterior.

    With standard deviation s and gap g = mean - best: EI = s * (g/s * Phi(g/s)
    + phi(g/s)); at s = 0 it degenerates to max(g, 0).
    """
    pts = np.asarray(points, dtype=float)
    scalar = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    mean, variance = predict(model, pts)
    mean = np.atleast_1d(mean)
    sigma = np.sqrt(np.atleast_1d(variance))
    gap = mean - best_value
    ei = np.where(gap > 0.0, gap, 0.0)
    positive = sigma > 0.0
    if positive.any():
        gamma = gap[positive] / sigma[positive]
        ei[positive] = sigma[positive] * (gamma * norm.cdf(gamma) + norm.pdf(gamma))
    return float(ei[0]) if scalar else ei


def select_query(model: GpisModel, candidates: np.ndarray, best_value: float) -> np.ndarray:
    """Argmax of expected improvement; ties go to the lowest candidate index."""
    cands = np.asarray(candidates, dtype=float).reshape(-1, 3)
    if len(cands) == 0:
        raise InvalidArgumentError("cannot select a query from an empty candidate set")
    scores = expected_improvement(model, cands, best_value)
    return cands[int(np.argmax(scores))].copy()


def sliding_direction(query, contact, normal) -> np.ndarray:
    """Unit tangent toward the query: the offset with its normal component removed."""
    v = np.asarray(query, dtype=float) - np.asarray(contact, dtype=float)
    if np.linalg.norm(v) == 0.0:
        raise InvalidArgumentError("query coincides with the contact point")
    n = np.asarray(normal, dtype=float)
    t = v - np.dot(v, n) * n
    norm_t = np.linalg.norm(t)
    if norm_t < 1e-9:
        raise DegenerateDirectionError("target offset is parallel to the surface normal")
    return t / norm_t


def _random_tangent(normal, rng: np.random.Generator) -> np.ndarray:
    n = np.asarray(normal, dtype=float)
    while True:
        v = rng.normal(size=3)
        t = v - np.dot(v, n) * n
        norm_t = np.linalg.norm(t)
        if norm_t > 1e-9:
            return t / norm_t


# ---------------------------------------------------------------------------
# Sliding-touch execution
# ---------------------------------------------------------------------------

def execute_sliding_touch(
    shape: ShapeModel,
    hand: HandState,
    query,
    cfg: ExplorationConfig,
    gel: GelPad,
    gains: ServoGains,
    jac: Optional[TactileJacobian] = None,
    touch_id: int = 1,
    rng: Optional[np.random.Generator] = None,
) -> tuple[SlidingTouch, HandState]:
    """Slide the leader toward the query, recording one frame per step.

    Per frame: regulate the leader feature, adapt followers, record every
    in-contact fingertip's downsampled cloud, then advance the palm one step
    along the tangential direction toward the query. Stops on query reached
    (within d_min), frame cap, or lost contact (kept frames survive; losing
    contact before the first frame is a touch failure).
    """
    query = np.asarray(query, dtype=float)
    rng = rng or np.random.default_rng(cfg.seed)
    frames: list[TouchFrame] = []
    reason = "max-frames"

    for _ in range(cfg.n_max):
        try:
            hand, _ = servo_regulate(shape, hand, gains, gel, cfg.servo_max_iters)
        except ContactLostError:
            if not frames:
                raise TouchFailedError("contact lost before the first frame") from None
            reason = "contact-lost"
            break
        hand = follower_adapt(shape, hand, gel, gains)

        leader_map = render_height_map(shape, hand.leader_pose(), gel)
        feature = extract_tactile_feature(leader_map)
        if not feature.in_contact:
            if not frames:
                raise TouchFailedError("no leader contact at the first frame")
            reason = "contact-lost"
            break
        contact = contact_point_world(leader_map, gel, feature)
        normal = -hand.leader_pose().axis(0)

        parts = [height_map_to_cloud(leader_map, gel, cfg.downsample_ratio,
                                     seed=int(rng.integers(2**32)), touch_id=touch_id)]
        for idx in range(hand.follower_count):
            fmap = render_height_map(shape, hand.follower_pose(idx), gel)
            parts.append(height_map_to_cloud(fmap, gel, cfg.downsample_ratio,
                                             seed=int(rng.integers(2**32)), touch_id=touch_id))
        frames.append(
            TouchFrame(feature.x, feature.y, feature.area, contact, normal, merge_clouds(parts))
        )

        if np.linalg.norm(contact - query) < cfg.d_min:
            reason = "reached-query"
            break
        if len(frames) == cfg.n_max:
            reason = "max-frames"
            break

        try:
            direction = sliding_direction(query, contact, normal)
        except DegenerateDirectionError:
            direction = _random_tangent(normal, rng)
        hand = replace(hand, palm=replace(hand.palm, position=hand.palm.position + cfg.step * direction))

    return SlidingTouch(tuple(frames), query, reason), hand


# ---------------------------------------------------------------------------
# Stopping metric
# ---------------------------------------------------------------------------

def udrr(model: GpisModel, points, dist_max: float) -> float:
    """Uncertainty distance reduction ratio: current variance gap over the initial one."""
    if dist_max <= 0.0:
        raise InvalidArgumentError("dist_max must be positive")
    return max_variance_gap(model, points) / dist_max


_PROBE_SURFACE_MARGIN = 0.7  # |mean| beyond the shell targets reads "confidently not surface"


def _planning_mesh(model: GpisModel, bounds, cells: int) -> TriMesh:
    """Zero level set of the posterior mean without the per-vertex variance pass.

    The loop needs vertex variances only when a snapshot is exported; skipping
    the annotation saves the dominant dense solve per refit.
    """
    mesh = marching_cubes(lambda p: predict_mean(model, p), bounds, cells)
    if mesh.is_empty:
        raise EmptySurfaceError("posterior mean has no zero crossing inside the bounds")
    return _prune_domain_boundary(mesh, bounds)


def _with_variance(model: GpisModel, mesh: TriMesh) -> TriMesh:
    if len(mesh.vertices) == 0:
        return mesh
    return TriMesh(mesh.vertices, mesh.triangles, predict_variance(model, mesh.vertices))


def _coverage_gap(model: GpisModel, observed: PointCloud, probes: np.ndarray) -> float:
    """Variance gap over the observed cloud joined with fixed surface probes.

    Observed (training) points alone cannot register coverage progress: their
    posterior variances sit at the noise scale no matter how much of the
    object remains unseen. Probes on the initial surface estimate make the
    gap track the most uncertain still-plausible surface region: a probe
    whose posterior mean has moved decisively away from zero has been
    re-classified as void (or interior) by newer data, and its leftover
    variance no longer describes surface uncertainty, so it drops out.
    """
    mean_p = predict_mean(model, probes)
    active = np.abs(mean_p) <= _PROBE_SURFACE_MARGIN
    obs = observed.points[:: max(1, len(observed) // 400)]
    pts = np.vstack([obs, probes[active]]) if active.any() else obs
    return max_variance_gap(model, pts)


# ---------------------------------------------------------------------------
# Full exploration loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GpisSettings:
    """How the kernel and training shell are resolved for a run."""

    kind: str = "rbf"
    length_scale: Optional[float] = None  # explicit scale wins over the factor
    length_scale_factor: float = 0.25  # fraction of the visual-cloud diagonal
    thin_plate_radius_factor: float = 1.5
    noise: float = 1e-3
    shell_offset: Optional[float] = None  # off-surface offset along normals (m)
    shell_stride: int = 3  # every k-th point gets offset companions

    def resolve(self, cloud: PointCloud) -> KernelSpec:
        diag = float(np.linalg.norm(cloud.points.max(axis=0) - cloud.points.min(axis=0)))
        scale = self.length_scale if self.length_scale else self.length_scale_factor * diag
        return KernelSpec(
            kind=self.kind,
            length_scale=scale,
            radius=self.thin_plate_radius_factor * diag,
            noise=self.noise,
        )

    def resolve_offset(self, cloud: PointCloud) -> float:
        if self.shell_offset is not None:
            return self.shell_offset
        extent = float((cloud.points.max(axis=0) - cloud.points.min(axis=0)).max())
        return min(8e-3, 0.15 * extent)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "length_scale": self.length_scale,
            "length_scale_factor": self.length_scale_factor,
            "thin_plate_radius_factor": self.thin_plate_radius_factor,
            "noise": self.noise,
            "shell_offset": self.shell_offset,
            "shell_stride": self.shell_stride,
        }

    @staticmethod
    def from_dict(data: dict) -> "GpisSettings":
        return GpisSettings(**data)


def _fit_surface(fused: PointCloud, spec: KernelSpec) -> GpisModel:
    x, y = augment_off_surface(fused)
    return fit(x, y, spec)


def _fit_shell(
    fused: PointCloud,
    normals: np.ndarray,
    spec: KernelSpec,
    offset: float,
    stride: int,
    domain_bounds: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> GpisModel:
    """Fit with surface zeros, normal-offset companions, and void anchors.

    The seven global anchors alone leave the field near zero over large
    unobserved regions, which spawns ghost zero-sheets far from the data.
    Two additions pin the field down: off-surface companions (-1 inside,
    +1 outside, offset along estimated normals for every ``stride``-th
    point) fix the zero crossing to the observed shell, and +1 anchors at
    the extraction-domain corners give the empty corners a definite sign.
    """
    base, values = augment_off_surface(fused)
    picks = np.arange(0, len(fused), stride)
    inner = fused.points[picks] - offset * normals[picks]
    outer = fused.points[picks] + offset * normals[picks]
    parts_x = [base, inner, outer]
    parts_y = [values, -np.ones(len(inner)), np.ones(len(outer))]
    if domain_bounds is not None:
        lo, hi = domain_bounds
        corners = np.array(
            [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]
        )
        parts_x.append(corners)
        parts_y.append(np.ones(len(corners)))
    x = np.vstack(parts_x)
    y = np.concatenate(parts_y)
    return fit(x, y, spec)


def _prune_domain_boundary(
    mesh: TriMesh,
    bounds: tuple[np.ndarray, np.ndarray],
    margin_fraction: float = 0.04,
) -> TriMesh:
    """Drop mesh geometry hugging the extraction-domain boundary.

    The extraction cube leaves at least its inflation margin of empty space
    around the object, so any zero-set sheet within a small margin of the
    domain faces is a prior artifact, not estimated surface. Keeping such
    sheets would poison the uncertainty probes, the candidate set, and the
    reported reconstruction alike.
    """
    lo, hi = bounds
    margin = margin_fraction * (np.asarray(hi) - np.asarray(lo))
    interior = np.all(
        (mesh.vertices >= lo + margin) & (mesh.vertices <= hi - margin), axis=1
    )
    if interior.all():
        return mesh
    keep_tri = interior[mesh.triangles].all(axis=1)
    used = np.unique(mesh.triangles[keep_tri])
    remap = np.full(len(mesh.vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    scalar = mesh.vertex_scalar[used] if mesh.vertex_scalar is not None else None
    return TriMesh(mesh.vertices[used], remap[mesh.triangles[keep_tri]], scalar)


def extraction_bounds(cloud: PointCloud, view_direction=None) -> tuple[np.ndarray, np.ndarray]:
    """Grid bounds for surface extraction over a possibly one-sided cloud.

    A partial view spans the object laterally but is wafer-thin along the
    view direction, and the unseen body extends away from the camera behind
    the visible skin. Each axis is widened to the largest axis extent, with
    the growth applied on the side the camera looks toward (split evenly for
    axes the view barely projects onto), then inflated by 15% per side.
    """
    lo = cloud.points.min(axis=0).copy()
    hi = cloud.points.max(axis=0).copy()
    extent = hi - lo
    target = float(extent.max())
    view = np.zeros(3) if view_direction is None else np.asarray(view_direction, dtype=float)
    for axis in range(3):
        need = target - extent[axis]
        if need <= 0.0:
            continue
        if view[axis] > 0.1:
            hi[axis] += need
        elif view[axis] < -0.1:
            lo[axis] -= need
        else:
            lo[axis] -= 0.5 * need
            hi[axis] += 0.5 * need
    return inflate_bounds(lo, hi)


def _cap_fragment(
    fragment: PointCloud,
    normals: np.ndarray,
    room: int,
    rng: np.random.Generator,
) -> tuple[PointCloud, np.ndarray]:
    """Subsample a new fragment to the remaining point budget (old points stay)."""
    if len(fragment) <= room:
        return fragment, normals
    if room <= 0:
        return PointCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.int64)), np.zeros((0, 3))
    idx = np.sort(rng.choice(len(fragment), size=room, replace=False))
    return PointCloud(fragment.points[idx], fragment.tags[idx]), normals[idx]


def explore(
    shape: ShapeModel,
    camera: CameraModel,
    template: HandTemplate,
    cfg: ExplorationConfig,
    policy: str = "bopt",
    gel: Optional[GelPad] = None,
    gains: Optional[ServoGains] = None,
    gpis_settings: Optional[GpisSettings] = None,
    out_dir: Optional[Path] = None,
) -> ExplorationReport:
    """Run one full exploration and return its per-touch report.

    Deterministic for a fixed config: all randomness flows from the config
    seed through named child streams. Snapshots (``mesh_<k>.ply``,
    ``touch_<k>.ply``) are written when ``out_dir`` is given.
    """
    if policy not in ("bopt", "random"):
        raise InvalidArgumentError(f"unknown policy {policy!r}")
    gel = gel or GelPad()
    gains = gains or ServoGains()
    gpis_settings = gpis_settings or GpisSettings()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    root = np.random.default_rng(cfg.seed)
    visual_rng, touch_rng, policy_rng, cap_rng = root.spawn(4)

    started = time.perf_counter()
    visual = render_partial_view(shape, camera, seed=int(visual_rng.integers(2**32)))
    if len(visual) > cfg.point_cap:
        idx = np.sort(visual_rng.choice(len(visual), size=cfg.point_cap, replace=False))
        visual = PointCloud(visual.points[idx], visual.tags[idx])

    truth = sample_surface(shape, GROUND_TRUTH_SAMPLES, seed=_GT_SEED)
    kernel = gpis_settings.resolve(visual)
    offset = gpis_settings.resolve_offset(visual)
    view_direction = camera.view_direction()

    fused = visual
    normals = estimate_normals_toward(visual.points, camera.pose.position)
    bounds = extraction_bounds(visual, view_direction)  # fixed for the run
    model = _fit_shell(fused, normals, kernel, offset, gpis_settings.shell_stride, bounds)
    mesh = _planning_mesh(model, bounds, cfg.grid_cells)
    # Uncertainty is scored on a fixed probe set: the initial surface estimate,
    # restricted to the reachable workspace band (surface outside the band is
    # unreachable by construction and would lock the ratio above threshold).
    # At fixed probes the GP variance can only fall as observations accumulate,
    # so the stopping ratio is a stable measure of remaining coverage gaps.
    in_band = (mesh.vertices[:, 2] >= cfg.z_bounds[0]) & (mesh.vertices[:, 2] <= cfg.z_bounds[1])
    probes = mesh.vertices[in_band].copy() if in_band.any() else mesh.vertices.copy()
    dist_max = _coverage_gap(model, fused, probes)

    def mesh_cd(current: TriMesh) -> float:
        estimated = sample_surface(current, GROUND_TRUTH_SAMPLES, seed=_GT_SEED)
        return chamfer_distance(estimated, truth)

    records = [
        IterationRecord(
            touch=0,
            query=None,
            frames=0,
            udrr=1.0,
            cd_mm=mesh_cd(mesh),
            points_visual=len(visual),
            points_tactile=0,
            points_total=len(fused),
            wall_time_s=time.perf_counter() - started,
        )
    ]
    if out_dir is not None:
        write_mesh_ply(out_dir / "mesh_0.ply", _with_variance(model, mesh))

    ratio = 1.0
    termination = "touch-cap"
    hand: Optional[HandState] = None
    attempted: list[np.ndarray] = []

    for touch_index in range(1, cfg.max_touches + 1):
        if ratio < cfg.udrr_threshold:
            termination = "udrr-stop"
            break

        candidates = candidate_set(model, mesh, fused, cfg, view_direction)
        if attempted:
            # A query already slid toward is spent even when its surface patch
            # never materialized; re-selecting it would loop on untouchable air.
            dists, _ = cKDTree(np.asarray(attempted)).query(candidates, k=1)
            candidates = candidates[dists > cfg.exclusion_radius]
        if len(candidates) == 0:
            termination = "candidates-exhausted"
            break

        if policy == "bopt":
            query = select_query(model, candidates, best_value=0.0)
        else:
            query = candidates[int(policy_rng.integers(len(candidates)))].copy()
        attempted.append(np.asarray(query, dtype=float))

        approach = _approach_point(shape, fused, query)
        hand = establish_contact(shape, approach, template)
        touch, hand = execute_sliding_touch(
            shape, hand, query, cfg, gel, gains, touch_id=touch_index, rng=touch_rng
        )

        tick = time.perf_counter()
        # The GP cap applies to the full training set (surface + shell + anchors),
        # so the fused budget accounts for the companions added per stride.
        stride = gpis_settings.shell_stride
        fit_budget = (MAX_TRAINING_POINTS - 23) * stride // (stride + 2)
        room = min(cfg.point_cap, fit_budget) - len(fused)
        fragment, frag_normals = _cap_fragment(
            touch.cloud(), touch.cloud_normals(), room, cap_rng
        )
        fused = fused.concat(fragment)
        normals = np.vstack([normals, frag_normals])
        model = _fit_shell(fused, normals, kernel, offset, gpis_settings.shell_stride, bounds)
        mesh = _planning_mesh(model, bounds, cfg.grid_cells)
        ratio = _coverage_gap(model, fused, probes) / dist_max

        records.append(
            IterationRecord(
                touch=touch_index,
                query=tuple(float(v) for v in query),
                frames=len(touch.frames),
                udrr=ratio,
                cd_mm=mesh_cd(mesh),
                points_visual=len(visual),
                points_tactile=len(fused) - len(visual),
                points_total=len(fused),
                wall_time_s=time.perf_counter() - tick,
            )
        )
        if out_dir is not None:
            write_cloud_ply(out_dir / f"touch_{touch_index}.ply", touch.cloud())
            write_mesh_ply(out_dir / f"mesh_{touch_index}.ply", _with_variance(model, mesh))
    else:
        termination = "touch-cap"

    if termination == "touch-cap" and ratio < cfg.udrr_threshold:
        termination = "udrr-stop"

    return ExplorationReport(
        records=tuple(records),
        policy=policy,
        termination=termination,
        final_mesh=_with_variance(model, mesh),
        kernel=kernel,
    )


def _approach_point(shape: ShapeModel, observed: PointCloud, query: np.ndarray) -> np.ndarray:
    """Touch-down location: the observed point nearest the query.

    Sliding starts at the edge of known territory and crosses the unexplored
    gap toward the query, which preserves the continuous-sliding semantics
    (starting at the query itself would end every touch immediately).
    """
    _, idx = cKDTree(observed.points).query(query, k=1)
    return observed.points[int(idx)]
