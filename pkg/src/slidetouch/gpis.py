"""Gaussian-process implicit surface: fit, posterior queries, level-set extraction.

The surface is the zero level set of a GP posterior mean over a scalar field
that is negative inside the object and positive outside. Surface observations
carry value 0; because zeros alone admit the zero function, the training set
is completed with one interior anchor (-1) at the cloud centroid and six
exterior anchors (+1) on the inflated bounding box.

Exact GP only: inputs are capped at 4500 points upstream, so a dense
Cholesky solve is both simplest and fastest here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import (
    DegenerateGeometryError,
    EmptySurfaceError,
    InvalidArgumentError,
    NumericError,
)
from .geometry import PointCloud, TriMesh, inflate_bounds, marching_cubes
from .transforms import as_readonly

MAX_TRAINING_POINTS = 4500
_JITTER_START = 1e-10
_JITTER_MAX = 1e-6
_PREDICT_CHUNK = 4096


@dataclass(frozen=True)
class KernelSpec:
    """Covariance configuration: isotropic RBF or compact thin-plate."""

    kind: str = "rbf"
    length_scale: float = 0.05  # RBF scale (m)
    radius: float = 0.5  # thin-plate support radius (m)
    noise: float = 1e-3  # observation noise sigma (field units)

    def __post_init__(self):
        if self.kind not in ("rbf", "thin_plate"):
            raise InvalidArgumentError(f"unknown kernel kind {self.kind!r}")
        if self.length_scale <= 0.0 or self.radius <= 0.0:
            raise InvalidArgumentError("kernel scales must be positive")
        if self.noise < 0.0:
            raise InvalidArgumentError("observation noise must be non-negative")

    def diag_value(self) -> float:
        """k(x, x): the prior variance at any point."""
        return 1.0 if self.kind == "rbf" else self.radius**3

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "length_scale": self.length_scale,
            "radius": self.radius,
            "noise": self.noise,
        }

    @staticmethod
    def from_dict(data: dict) -> "KernelSpec":
        return KernelSpec(
            kind=data.get("kind", "rbf"),
            length_scale=float(data.get("length_scale", 0.05)),
            radius=float(data.get("radius", 0.5)),
            noise=float(data.get("noise", 1e-3)),
        )


def kernel_eval(spec: KernelSpec, a, b) -> float:
    """Covariance between two single points."""
    d = float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    if spec.kind == "rbf":
        return float(np.exp(-0.5 * (d / spec.length_scale) ** 2))
    r = spec.radius
    return float(2.0 * d**3 - 3.0 * r * d**2 + r**3) if d <= r else 0.0


def kernel_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-covariance matrix between point sets a (N,3) and b (M,3)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    if spec.kind == "rbf":
        return np.exp(-0.5 * d2 / spec.length_scale**2)
    d = np.sqrt(d2)
    r = spec.radius
    k = 2.0 * d**3 - 3.0 * r * d**2 + r**3
    return np.where(d <= r, k, 0.0)


def augment_off_surface(cloud: PointCloud, inflate: float = 0.15) -> tuple[np.ndarray, np.ndarray]:
    """Surface points (value 0) plus interior/exterior anchors (-1 / +1).

    The interior anchor is the cloud centroid; the exterior anchors are the
    six face centers of the bounding box inflated by ``inflate`` per side.
    Needs at least 4 non-coplanar points so the centroid is meaningfully
    interior and the box has volume.
    """
    pts = cloud.points
    if len(pts) == 0:
        raise InvalidArgumentError("cannot augment an empty cloud")
    if len(pts) < 4:
        raise DegenerateGeometryError("need at least 4 points to anchor an implicit surface")
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[2] <= 1e-9 * max(1.0, sv[0]):
        raise DegenerateGeometryError("points are coplanar; interior anchor undefined")

    centroid = pts.mean(axis=0)
    lo, hi = inflate_bounds(pts.min(axis=0), pts.max(axis=0), inflate)
    center = 0.5 * (lo + hi)
    anchors = []
    for axis in range(3):
        for bound in (lo, hi):
            p = center.copy()
            p[axis] = bound[axis]
            anchors.append(p)
    x = np.vstack([pts, centroid[None, :], np.asarray(anchors)])
    y = np.concatenate([np.zeros(len(pts)), [-1.0], np.ones(6)])
    return x, y


@dataclass(frozen=True)
class GpisModel:
    """Immutable fitted GP: training set, Cholesky factor, and precomputed weights."""

    x: np.ndarray
    y: np.ndarray
    spec: KernelSpec
    chol_lower: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    jitter: float = 0.0

    def __len__(self) -> int:
        return len(self.x)


def fit(points: np.ndarray, values: np.ndarray, spec: KernelSpec) -> GpisModel:
    """Factor K + sigma^2 I (with escalating jitter) and cache the data weights."""
    x = np.asarray(points, dtype=float).reshape(-1, 3)
    y = np.asarray(values, dtype=float).reshape(-1)
    if len(x) != len(y):
        raise InvalidArgumentError("points and values must have equal length")
    if len(x) < 1:
        raise InvalidArgumentError("need at least one training point")
    if len(x) > MAX_TRAINING_POINTS:
        raise InvalidArgumentError(
            f"training set exceeds the {MAX_TRAINING_POINTS}-point cap ({len(x)})"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("training data must be finite")

    gram = kernel_matrix(spec, x, x)
    gram[np.diag_indices_from(gram)] += spec.noise**2

    jitter = 0.0 if spec.noise > 0.0 else _JITTER_START
    while True:
        try:
            k = gram if jitter == 0.0 else gram + jitter * np.eye(len(x))
            factor, lower = cho_factor(k, lower=True)
            break
        except np.linalg.LinAlgError:
            jitter = _JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_MAX:
                row_sum = float(np.abs(gram).sum(axis=1).max())
                raise NumericError(
                    "Gram factorization failed after maximum jitter",
                    detail={"condition_estimate": row_sum / _JITTER_MAX, "n": len(x)},
                )
    chol = np.tril(factor)
    weights = cho_solve((factor, lower), y)
    return GpisModel(
        x=as_readonly(x),
        y=as_readonly(y),
        spec=spec,
        chol_lower=as_readonly(chol),
        weights=as_readonly(weights),
        jitter=jitter,
    )


def predict(model: GpisModel, query) -> tuple[np.ndarray | float, np.ndarray | float]:
    """Posterior mean and (clamped non-negative) variance at query point(s)."""
    q = np.asarray(query, dtype=float)
    scalar = q.ndim == 1
    q = q.reshape(-1, 3)
    if not np.all(np.isfinite(q)):
        raise InvalidArgumentError("query points must be finite")

    means = np.empty(len(q))
    variances = np.empty(len(q))
    prior = model.spec.diag_value()
    for start in range(0, len(q), _PREDICT_CHUNK):
        chunk = q[start : start + _PREDICT_CHUNK]
        ks = kernel_matrix(model.spec, model.x, chunk)
        means[start : start + _PREDICT_CHUNK] = ks.T @ model.weights
        v = solve_triangular(model.chol_lower, ks, lower=True)
        variances[start : start + _PREDICT_CHUNK] = prior - (v * v).sum(axis=0)
    variances = np.maximum(variances, 0.0)
    if scalar:
        return float(means[0]), float(variances[0])
    return means, variances


def predict_mean(model: GpisModel, query: np.ndarray) -> np.ndarray:
    """Posterior mean only (skips the variance solve; used for grid sampling)."""
    q = np.asarray(query, dtype=float).reshape(-1, 3)
    out = np.empty(len(q))
    for start in range(0, len(q), _PREDICT_CHUNK):
        chunk = q[start : start + _PREDICT_CHUNK]
        ks = kernel_matrix(model.spec, model.x, chunk)
        out[start : start + _PREDICT_CHUNK] = ks.T @ model.weights
    return out


def predict_variance(model: GpisModel, query: np.ndarray) -> np.ndarray:
    return predict(model, np.asarray(query, dtype=float).reshape(-1, 3))[1]


def mean_gradient(model: GpisModel, query: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the posterior mean (for surface normals)."""
    q = np.asarray(query, dtype=float).reshape(-1, 3)
    grads = np.empty_like(q)
    for i in range(3):
        offset = np.zeros(3)
        offset[i] = step
        grads[:, i] = predict_mean(model, q + offset) - predict_mean(model, q - offset)
    return grads / (2.0 * step)


def extract_surface(
    model: GpisModel,
    bounds: tuple[np.ndarray, np.ndarray],
    cells_per_axis: int = 10,
) -> TriMesh:
    """Zero level set of the posterior mean, with posterior variance per vertex."""
    mesh = marching_cubes(
        lambda p: predict_mean(model, p),
        bounds,
        cells_per_axis,
        scalar_field=lambda p: predict_variance(model, p),
    )
    if mesh.is_empty:
        raise EmptySurfaceError("posterior mean has no zero crossing inside the bounds")
    return mesh


def max_variance_gap(model: GpisModel, points) -> float:
    """Largest pairwise posterior-variance difference over a point set.

    Equals max(V) - min(V); the pairwise maximum reduces to that identity.
    """
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=float)
    pts = pts.reshape(-1, 3)
    if len(pts) < 2:
        raise InvalidArgumentError("variance gap needs at least two points")
    v = predict_variance(model, pts)
    return float(v.max() - v.min())


# ---------------------------------------------------------------------------
# Debug dump (versioned binary blob)
# ---------------------------------------------------------------------------

_DUMP_MAGIC = b"STGP"
_DUMP_VERSION = 1
_KERNEL_CODES = {"rbf": 0, "thin_plate": 1}
_KERNEL_NAMES = {v: k for k, v in _KERNEL_CODES.items()}


def save_model(path, model: GpisModel) -> None:
    """Training data + kernel spec; enough to refit an identical model."""
    header = struct.pack(
        "<4sIIIddd",
        _DUMP_MAGIC,
        _DUMP_VERSION,
        _KERNEL_CODES[model.spec.kind],
        len(model.x),
        model.spec.length_scale,
        model.spec.radius,
        model.spec.noise,
    )
    body = model.x.astype("<f8").tobytes() + model.y.astype("<f8").tobytes()
    Path(path).write_bytes(header + body)


def load_model(path) -> GpisModel:
    raw = Path(path).read_bytes()
    head_size = struct.calcsize("<4sIIIddd")
    magic, version, code, n, scale, radius, noise = struct.unpack("<4sIIIddd", raw[:head_size])
    if magic != _DUMP_MAGIC:
        raise InvalidArgumentError("not a GP model dump")
    if version != _DUMP_VERSION:
        raise InvalidArgumentError(f"unsupported model dump version {version}")
    spec = KernelSpec(kind=_KERNEL_NAMES[code], length_scale=scale, radius=radius, noise=noise)
    floats = np.frombuffer(raw[head_size:], dtype="<f8")
    x = floats[: 3 * n].reshape(n, 3)
    y = floats[3 * n : 4 * n]
    return fit(x, y, spec)
