"""Scene configuration, experiment execution, and policy comparison.

A scene file is JSON with every default echoed on save, so a published run
directory is self-describing and re-runnable: parse -> serialize round-trips
byte-identically. The bundled catalog mirrors the six-object simulated
evaluation with parameterized proxy geometries.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .control import HandTemplate
from .errors import ConfigError, SlidetouchError
from .explorer import (
    REPORT_HEADER,
    ExplorationConfig,
    ExplorationReport,
    GpisSettings,
    explore,
    report_rows,
)
from .fileio import write_csv, write_mesh_ply
from .geometry import ShapeModel, shape_from_dict
from .sensing import CameraModel, GelPad
from .transforms import Pose

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_EMPTY_VIEW = 3
EXIT_TOUCH_CAP = 4
EXIT_EXHAUSTED = 5
EXIT_IO = 6

_TERMINATION_EXIT = {
    "udrr-stop": EXIT_OK,
    "touch-cap": EXIT_TOUCH_CAP,
    "candidates-exhausted": EXIT_EXHAUSTED,
}


@dataclass(frozen=True)
class SceneSpec:
    """Complete description of one experiment: geometry, sensors, hand, planner."""

    name: str
    shape: ShapeModel
    camera: dict
    hand: dict
    gpis: GpisSettings
    exploration: ExplorationConfig
    policy: str = "bopt"

    def camera_model(self) -> CameraModel:
        c = self.camera
        return CameraModel.looking_at(
            position=c["position"],
            target=c["target"],
            width=int(c["width"]),
            height=int(c["height"]),
            vfov=math.radians(float(c["vfov_deg"])),
            depth_noise=float(c["depth_noise"]),
        )

    def gel_pad(self) -> GelPad:
        h = self.hand
        return GelPad(
            width=float(h["gel_width"]),
            height=float(h["gel_height"]),
            cols=int(h["gel_cols"]),
            rows=int(h["gel_rows"]),
            max_deformation=float(h["gel_max_deformation"]),
        )

    def hand_template(self) -> HandTemplate:
        spacing = float(self.hand["follower_spacing"])
        return HandTemplate.with_spacing(spacing)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "shape": self.shape.to_dict(),
            "camera": dict(self.camera),
            "hand": dict(self.hand),
            "gpis": self.gpis.to_dict(),
            "exploration": self.exploration.to_dict(),
            "policy": self.policy,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_CAMERA_DEFAULTS = {
    "position": [0.0, 0.0, 0.12],
    "target": [0.45, 0.0, 0.1],
    "width": 40,
    "height": 40,
    "vfov_deg": 16.0,
    "depth_noise": 5e-4,
}

_HAND_DEFAULTS = {
    "follower_spacing": 0.022,
    "gel_width": 16e-3,
    "gel_height": 12e-3,
    "gel_cols": 32,
    "gel_rows": 24,
    "gel_max_deformation": 1.2e-3,
}


def _merged(defaults: dict, data: dict, where: str) -> dict:
    unknown = set(data) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown field(s) {sorted(unknown)}", field=where)
    out = dict(defaults)
    out.update(data)
    return out


def scene_from_dict(data: dict) -> SceneSpec:
    try:
        shape = shape_from_dict(data["shape"])
    except KeyError as exc:
        raise ConfigError("missing required section", field=str(exc.args[0])) from exc
    except SlidetouchError as exc:
        raise ConfigError(str(exc), field="shape") from exc
    try:
        camera = _merged(_CAMERA_DEFAULTS, data.get("camera", {}), "camera")
        hand = _merged(_HAND_DEFAULTS, data.get("hand", {}), "hand")
        gpis = GpisSettings.from_dict(data.get("gpis", {}))
        exploration = ExplorationConfig.from_dict(data.get("exploration", {}))
    except TypeError as exc:
        raise ConfigError(str(exc), field="gpis/exploration") from exc
    except SlidetouchError as exc:
        raise ConfigError(str(exc), field="exploration") from exc
    policy = data.get("policy", "bopt")
    if policy not in ("bopt", "random"):
        raise ConfigError(f"policy must be 'bopt' or 'random', got {policy!r}", field="policy")
    return SceneSpec(
        name=str(data.get("name", "scene")),
        shape=shape,
        camera=camera,
        hand=hand,
        gpis=gpis,
        exploration=exploration,
        policy=policy,
    )


def load_scene(path_or_name) -> SceneSpec:
    """Load a scene file; bare catalog names resolve to the bundled scenes."""
    path = Path(path_or_name)
    if not path.exists():
        stem = path.stem if path.suffix == ".json" else str(path_or_name)
        bundled = resources.files("slidetouch").joinpath(f"scenes/{stem}.json")
        if bundled.is_file():
            try:
                return scene_from_dict(json.loads(bundled.read_text(encoding="utf-8")))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON: {exc}", field=str(path_or_name)) from exc
        raise ConfigError("scene file not found", field=str(path_or_name))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", field=str(path)) from exc
    if not isinstance(data, dict):
        raise ConfigError("scene file must contain a JSON object", field=str(path))
    return scene_from_dict(data)


def run(
    scene: SceneSpec,
    out_dir,
    seed: Optional[int] = None,
    policy: Optional[str] = None,
    udrr_threshold: Optional[float] = None,
    grid_cells: Optional[int] = None,
) -> tuple[ExplorationReport, int]:
    """Execute one exploration; write report.csv, config echo, and meshes.

    Returns the report plus the exit code implied by the termination reason.
    """
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if udrr_threshold is not None:
        overrides["udrr_threshold"] = udrr_threshold
    if grid_cells is not None:
        overrides["grid_cells"] = grid_cells
    cfg = replace(scene.exploration, **overrides) if overrides else scene.exploration
    scene = replace(scene, exploration=cfg, policy=policy or scene.policy)

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(scene.to_json(), encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write to output directory: {exc}", field=str(out_dir)) from exc

    report = explore(
        scene.shape,
        scene.camera_model(),
        scene.hand_template(),
        cfg,
        policy=scene.policy,
        gel=scene.gel_pad(),
        gpis_settings=scene.gpis,
        out_dir=out_dir,
    )
    write_csv(out_dir / "report.csv", REPORT_HEADER, report_rows(report))
    write_mesh_ply(out_dir / "final_mesh.ply", report.final_mesh)
    return report, _TERMINATION_EXIT.get(report.termination, EXIT_ERROR)


@dataclass(frozen=True)
class PolicyStats:
    policy: str
    seeds_used: int
    aborted: int
    touch_mean: float
    touch_std: float
    cd_mean_mm: float
    cd_std_mm: float


@dataclass(frozen=True)
class ComparisonSummary:
    scene: str
    seeds: int
    rows: tuple[PolicyStats, ...]

    def stats(self, policy: str) -> PolicyStats:
        for row in self.rows:
            if row.policy == policy:
                return row
        raise KeyError(policy)


SUMMARY_HEADER = [
    "policy",
    "seeds_used",
    "aborted",
    "touch_mean",
    "touch_std",
    "cd_mean_mm",
    "cd_std_mm",
]


def _one_comparison_run(args) -> tuple[str, int, Optional[int], Optional[float]]:
    scene_dict, policy, seed, out_dir = args
    scene = scene_from_dict(scene_dict)
    try:
        report, _ = run(scene, out_dir, seed=seed, policy=policy)
    except SlidetouchError:
        return policy, seed, None, None
    return policy, seed, report.touch_count, report.final_cd_mm


def compare(scene: SceneSpec, seeds: int, out_dir, workers: int = 1) -> ComparisonSummary:
    """Run both policies over the same seed list and summarize like-for-like.

    Both policies share the scene, the candidate machinery, and the seed
    list. Single-run aborts are recorded, excluded from the statistics, and
    flagged in the summary row.
    """
    if seeds < 1:
        raise ConfigError("seeds must be at least 1", field="seeds")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed_list = [scene.exploration.seed + i for i in range(seeds)]

    jobs = []
    for policy in ("bopt", "random"):
        for seed in seed_list:
            jobs.append((scene.to_dict(), policy, seed, out_dir / f"{policy}_seed{seed}"))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_comparison_run, jobs))
    else:
        results = [_one_comparison_run(j) for j in jobs]

    rows = []
    for policy in ("bopt", "random"):
        outcomes = [r for r in results if r[0] == policy]
        good = [(t, c) for _, _, t, c in outcomes if t is not None]
        aborted = len(outcomes) - len(good)
        touches = np.array([t for t, _ in good], dtype=float)
        cds = np.array([c for _, c in good], dtype=float)
        if len(good):
            rows.append(
                PolicyStats(policy, len(good), aborted,
                            float(touches.mean()), float(touches.std()),
                            float(cds.mean()), float(cds.std()))
            )
        else:
            rows.append(PolicyStats(policy, 0, aborted, math.nan, math.nan, math.nan, math.nan))

    summary = ComparisonSummary(scene.name, seeds, tuple(rows))
    write_csv(
        out_dir / "summary.csv",
        SUMMARY_HEADER,
        [
            [r.policy, r.seeds_used, r.aborted, r.touch_mean, r.touch_std, r.cd_mean_mm, r.cd_std_mm]
            for r in summary.rows
        ],
    )
    return summary


# ---------------------------------------------------------------------------
# Scene catalog (proxy geometries for the six-object simulated evaluation)
# ---------------------------------------------------------------------------

def _scene(name: str, shape: dict, **overrides) -> dict:
    data = {
        "name": name,
        "shape": shape,
        "camera": dict(_CAMERA_DEFAULTS),
        "hand": dict(_HAND_DEFAULTS),
        "gpis": GpisSettings().to_dict(),
        "exploration": ExplorationConfig().to_dict(),
        "policy": "bopt",
    }
    for key, value in overrides.items():
        data[key] = {**data[key], **value} if isinstance(value, dict) else value
    return data


def _posed(position, quat=(1.0, 0.0, 0.0, 0.0)) -> dict:
    return {"position": list(position), "quaternion_wxyz": list(quat)}


CATALOG: dict[str, dict] = {
    "sphere50": _scene(
        "sphere50",
        {"kind": "sphere", "radius": 0.05, "pose": _posed([0.45, 0.0, 0.1])},
    ),
    "box": _scene(
        "box",
        # Rounded box: household boxes have finite edge radii, and rounded
        # edges keep the sliding pad attachable across faces.
        {
            "kind": "superellipsoid",
            "half_extents": [0.03, 0.04, 0.05],
            "e1": 0.4,
            "e2": 0.4,
            "pose": _posed([0.45, 0.0, 0.1]),
        },
        camera={"position": [0.02, -0.16, 0.17], "vfov_deg": 19.0},
    ),
    "chips_can": _scene(
        "chips_can",
        {"kind": "cylinder", "radius": 0.038, "half_height": 0.05, "pose": _posed([0.45, 0.0, 0.1])},
        camera={"vfov_deg": 20.0},
    ),
    "conditioner": _scene(
        "conditioner",
        {"kind": "capsule", "radius": 0.028, "half_height": 0.021, "pose": _posed([0.45, 0.0, 0.1])},
        camera={"vfov_deg": 18.0},
    ),
    "shampoo": _scene(
        "shampoo",
        {
            "kind": "superellipsoid",
            "half_extents": [0.028, 0.045, 0.05],
            "e1": 0.8,
            "e2": 0.9,
            "pose": _posed([0.45, 0.0, 0.1]),
        },
        camera={"vfov_deg": 18.0},
    ),
    "mustard_bottle": _scene(
        "mustard_bottle",
        {
            "kind": "union",
            "pose": _posed([0.45, 0.0, 0.1]),
            "members": [
                {"kind": "cylinder", "radius": 0.033, "half_height": 0.037, "pose": _posed([0.0, 0.0, -0.01])},
                {"kind": "capsule", "radius": 0.012, "half_height": 0.008, "pose": _posed([0.0, 0.0, 0.026])},
            ],
        },
        camera={"vfov_deg": 20.0},
    ),
}

STANDARD_SUITE = ["sphere50", "box", "chips_can", "conditioner", "shampoo", "mustard_bottle"]


def catalog_scene(name: str) -> SceneSpec:
    if name not in CATALOG:
        raise ConfigError(
            f"unknown scene {name!r}; valid names: {', '.join(sorted(CATALOG))}", field="name"
        )
    return scene_from_dict(CATALOG[name])


def describe_scene(name: str) -> str:
    scene = catalog_scene(name)
    lines = [f"{scene.name}:"]
    shape = scene.shape.to_dict()
    pose = shape.pop("pose")
    for key, value in sorted(shape.items()):
        lines.append(f"  {key}: {value}")
    lines.append(f"  position: {pose['position']}")
    lines.append(f"  camera: {scene.camera['width']}x{scene.camera['height']} at {scene.camera['position']}")
    lines.append(f"  seed: {scene.exploration.seed}  policy: {scene.policy}")
    return "\n".join(lines)


def list_scenes() -> str:
    lines = []
    for name in STANDARD_SUITE:
        kind = CATALOG[name]["shape"]["kind"]
        lines.append(f"{name:<16} {kind}")
    return "\n".join(lines)


def write_bundled_scenes(directory) -> None:
    """Materialize the catalog as JSON files (used to build package data)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in STANDARD_SUITE:
        scene = catalog_scene(name)
        (directory / f"{name}.json").write_text(scene.to_json(), encoding="utf-8")
