"""Visuo-tactile shape exploration simulator.

A hardware-free reimplementation of multi-finger sliding-touch shape
reconstruction: partial-view depth sensing, gel-pad tactile simulation,
Gaussian-process implicit surfaces, tactile servoing, and constrained
Bayesian-optimization touch planning, evaluated by Chamfer distance and an
uncertainty-reduction stopping ratio on synthetic ground-truth objects.
"""

from .errors import (
    ApproachFailedError,
    ConfigError,
    ContactLostError,
    DegenerateDirectionError,
    DegenerateGeometryError,
    DegenerateNormalError,
    EmptySurfaceError,
    EmptyViewError,
    InvalidArgumentError,
    InvalidConfigurationError,
    NumericError,
    SlidetouchError,
    TouchFailedError,
)
from .geometry import (
    Box,
    Capsule,
    Cylinder,
    PointCloud,
    ShapeModel,
    ShapeUnion,
    Sphere,
    Superellipsoid,
    TriMesh,
    chamfer_distance,
    marching_cubes,
    ray_march,
    sample_surface,
    sdf_eval,
    sdf_normal,
)
from .gpis import GpisModel, KernelSpec, augment_off_surface, extract_surface, fit, kernel_eval, max_variance_gap, predict
from .sensing import (
    CameraModel,
    GelPad,
    HeightMap,
    TactileFeature,
    extract_tactile_feature,
    height_map_to_cloud,
    render_height_map,
    render_partial_view,
)
from .control import (
    HandState,
    HandTemplate,
    ServoGains,
    TactileJacobian,
    establish_contact,
    follower_adapt,
    palm_twist,
    servo_regulate,
)
from .explorer import (
    ExplorationConfig,
    ExplorationReport,
    GpisSettings,
    SlidingTouch,
    TouchFrame,
    candidate_set,
    execute_sliding_touch,
    expected_improvement,
    explore,
    select_query,
    sliding_direction,
    udrr,
)
from .harness import ComparisonSummary, SceneSpec, catalog_scene, compare, load_scene, run
from .transforms import Pose

__version__ = "0.1.0"
