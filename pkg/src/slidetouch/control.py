"""Single-leader multi-follower hand model and tactile servoing.

The hand is rigid: a palm pose carries one leader fingertip and two follower
fingertips at fixed offsets. Servoing twists the whole palm about the leader
fingertip frame to regulate the leader's tactile feature; followers adapt
their own bounded fingertip displacement open-loop to grow contact area.

Feature channels map to motion channels through a diagonal Jacobian:
column centroid -> rotation about fingertip z, row centroid -> rotation
about fingertip y, contact area -> translation along the pressing axis.
With the right-handed fingertip frame used here (+x presses, +y columns,
+z rows) the column sensitivity is negative: rotating positively about z
tips high-column pixels away from the object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    ApproachFailedError,
    ContactLostError,
    InvalidArgumentError,
    InvalidConfigurationError,
)
from .fileio import write_csv
from .geometry import ShapeModel, ray_march, sdf_eval, sdf_normal
from .sensing import (
    CONTACT_THRESHOLD,
    GelPad,
    HeightMap,
    TactileFeature,
    extract_tactile_feature,
    fingertip_pose_for_contact,
    render_height_map,
)
from .transforms import (
    Pose,
    quat_from_axis_angle,
    quat_mul,
    quat_normalize,
    quat_rotate,
)



@dataclass(frozen=True)
class FingerLimits:
    """Bounds of the follower adaptation displacement, in the finger frame."""

    max_shift: float = 8e-3  # along finger x (m)
    max_tilt: float = math.radians(20.0)  # about finger y and z (rad)


@dataclass(frozen=True)
class FingerAdjust:
    """Accumulated follower displacement: press shift plus two tilts."""

    shift: float = 0.0
    tilt_y: float = 0.0
    tilt_z: float = 0.0

    def as_pose(self) -> Pose:
        q = quat_normalize(
            quat_mul(
                quat_from_axis_angle([0.0, 1.0, 0.0], self.tilt_y),
                quat_from_axis_angle([0.0, 0.0, 1.0], self.tilt_z),
            )
        )
        return Pose(np.array([self.shift, 0.0, 0.0]), q)

    def clamped(self, limits: FingerLimits) -> "FingerAdjust":
        return FingerAdjust(
            shift=float(np.clip(self.shift, -limits.max_shift, limits.max_shift)),
            tilt_y=float(np.clip(self.tilt_y, -limits.max_tilt, limits.max_tilt)),
            tilt_z=float(np.clip(self.tilt_z, -limits.max_tilt, limits.max_tilt)),
        )


@dataclass(frozen=True)
class HandTemplate:
    """Rigid fingertip layout relative to the palm, plus follower limits."""

    leader_offset: Pose = field(
        default_factory=lambda: Pose(np.array([0.04, 0.0, 0.0]))
    )
    follower_offsets: tuple[Pose, ...] = field(
        default_factory=lambda: (
            Pose(np.array([0.04, 0.0, 0.022])),
            Pose(np.array([0.04, 0.0, -0.022])),
        )
    )
    limits: FingerLimits = field(default_factory=FingerLimits)
    press_depth: float = 0.6e-3  # initial contact penetration target (m)

    @staticmethod
    def with_spacing(spacing: float = 0.022) -> "HandTemplate":
        return HandTemplate(
            follower_offsets=(
                Pose(np.array([0.04, 0.0, spacing])),
                Pose(np.array([0.04, 0.0, -spacing])),
            )
        )


@dataclass(frozen=True)
class HandState:
    """Palm pose + fingertip layout + follower adaptation. A value type."""

    palm: Pose
    template: HandTemplate
    adjusts: tuple[FingerAdjust, ...]

    def __post_init__(self):
        if len(self.adjusts) != len(self.template.follower_offsets):
            raise InvalidArgumentError("one adjustment per follower required")

    def leader_pose(self) -> Pose:
        return self.palm.compose(self.template.leader_offset)

    def follower_pose(self, index: int) -> Pose:
        offset = self.template.follower_offsets[index]
        return self.palm.compose(offset).compose(self.adjusts[index].as_pose())

    @property
    def follower_count(self) -> int:
        return len(self.template.follower_offsets)


def hand_at_palm(palm: Pose, template: HandTemplate) -> HandState:
    return HandState(palm, template, tuple(FingerAdjust() for _ in template.follower_offsets))


@dataclass(frozen=True)
class TactileJacobian:
    """Diagonal feature-to-motion sensitivities (see module docstring for signs).

    The area sensitivity is calibrated to the kinematic contact model at the
    50 mm object scale (about 1250 px/mm on the default pad); smaller values
    push the proportional loop gain above 1 and the press channel oscillates.
    """

    dx_dtheta_z: float = -400.0  # px per rad
    dy_dtheta_y: float = 400.0  # px per rad
    dc_dd_x: float = 1.25e6  # px per meter of press


@dataclass(frozen=True)
class ServoGains:
    """PD gains per feature channel, reference feature, and per-step clamps."""

    kp: tuple[float, float, float] = (0.5, 0.5, 0.5)
    kd: tuple[float, float, float] = (0.1, 0.1, 0.1)
    reference_area_fraction: float = 0.25
    max_rotation_step: float = math.radians(3.0)
    max_translation_step: float = 1e-3

    def reference(self, gel: GelPad) -> np.ndarray:
        """Target feature: pad center centroid and the configured contact area."""
        c_ref = self.reference_area_fraction * gel.pixel_count
        if not 0.0 < c_ref < gel.pixel_count:
            raise InvalidArgumentError("reference contact area must lie in (0, pixels)")
        return np.array([(gel.cols - 1) / 2.0, (gel.rows - 1) / 2.0, c_ref])


def selected_twist(delta: np.ndarray, jac: TactileJacobian, i: int, j: int) -> np.ndarray:
    """One selection pass of the diagonal mapping: diag(i, i, j) applied to J^+ delta.

    Returns ``[theta_dot_y, theta_dot_z, d_dot_x]``. ``(i, j) = (1, 0)``
    selects the rotation channels, ``(0, 1)`` the translation channel.
    """
    if jac.dx_dtheta_z == 0.0 or jac.dy_dtheta_y == 0.0 or jac.dc_dd_x == 0.0:
        raise InvalidConfigurationError("tactile Jacobian diagonal must be nonzero")
    theta_z = delta[0] / jac.dx_dtheta_z
    theta_y = delta[1] / jac.dy_dtheta_y
    d_x = delta[2] / jac.dc_dd_x
    return np.array([i * theta_y, i * theta_z, j * d_x])


def palm_twist(
    delta: np.ndarray,
    jac: TactileJacobian,
    gains: ServoGains,
    prev_delta: Optional[np.ndarray] = None,
) -> np.ndarray:
    """PD palm twist ``[theta_dot_y, theta_dot_z, d_dot_x]`` in the leader frame.

    Rotation channels come from the (1, 0) selection, the translation channel
    from (0, 1); both passes share the same diagonal pseudo-inverse. Output
    magnitudes are clamped to the per-step limits.
    """
    delta = np.asarray(delta, dtype=float)
    raw = selected_twist(delta, jac, 1, 0) + selected_twist(delta, jac, 0, 1)
    kp = np.asarray(gains.kp)
    kd = np.asarray(gains.kd)
    twist = kp * raw
    if prev_delta is not None:
        prev = selected_twist(np.asarray(prev_delta, dtype=float), jac, 1, 0) + selected_twist(
            np.asarray(prev_delta, dtype=float), jac, 0, 1
        )
        twist = twist + kd * (raw - prev)
    rot_max = gains.max_rotation_step
    twist[0] = np.clip(twist[0], -rot_max, rot_max)
    twist[1] = np.clip(twist[1], -rot_max, rot_max)
    twist[2] = np.clip(twist[2], -gains.max_translation_step, gains.max_translation_step)
    return twist


def apply_palm_twist(hand: HandState, twist: np.ndarray) -> HandState:
    """Rotate the palm about the leader fingertip axes and press along its x."""
    leader = hand.leader_pose()
    rot = quat_normalize(
        quat_mul(
            quat_from_axis_angle(leader.axis(2), twist[1]),
            quat_from_axis_angle(leader.axis(1), twist[0]),
        )
    )
    pivot = leader.position
    shift = twist[2] * leader.axis(0)
    new_position = pivot + quat_rotate(rot, hand.palm.position - pivot) + shift
    new_orientation = quat_normalize(quat_mul(rot, hand.palm.orientation))
    return replace(hand, palm=Pose(new_position, new_orientation))


@dataclass(frozen=True)
class ServoStep:
    """One corrective servo iteration, exportable as a CSV row."""

    iteration: int
    delta_x: float
    delta_y: float
    delta_area: float
    twist_ry: float
    twist_rz: float
    twist_shift: float


SERVO_TRACE_HEADER = [
    "iteration",
    "delta_x",
    "delta_y",
    "delta_area",
    "twist_ry",
    "twist_rz",
    "twist_shift",
]


def write_servo_trace(path, trace: list[ServoStep]) -> None:
    write_csv(
        path,
        SERVO_TRACE_HEADER,
        [
            [s.iteration, s.delta_x, s.delta_y, s.delta_area, s.twist_ry, s.twist_rz, s.twist_shift]
            for s in trace
        ],
    )


def _guard_retract(shift: float, height_map: HeightMap) -> float:
    """Never retract past the point where peak penetration would drop to threshold.

    Keeps the area channel from blinking contact on and off when the
    reference area is unattainable (flat pad on a flat face is all-or-nothing).
    """
    if shift >= 0.0:
        return shift
    slack = float(height_map.values.max()) - 2.0 * CONTACT_THRESHOLD
    return max(shift, -max(slack, 0.0))


def servo_regulate(
    shape: ShapeModel,
    hand: HandState,
    gains: ServoGains,
    gel: GelPad,
    max_iters: int = 50,
    jac: Optional[TactileJacobian] = None,
) -> tuple[HandState, list[ServoStep]]:
    """Closed-loop palm twisting until the leader feature reaches its reference.

    Convergence: centroid error below one pixel and area error below 5% of
    the reference. Losing contact five iterations in a row raises
    :class:`ContactLostError`; while contact is lost the translation channel
    presses toward the surface to recover. Finger joints never move.
    """
    jac = jac or TactileJacobian()
    reference = gains.reference(gel)
    trace: list[ServoStep] = []
    prev_delta: Optional[np.ndarray] = None
    lost_streak = 0

    for iteration in range(max_iters):
        height_map = render_height_map(shape, hand.leader_pose(), gel)
        feature = extract_tactile_feature(height_map)
        if not feature.in_contact:
            lost_streak += 1
            if lost_streak >= 5:
                raise ContactLostError("leader lost contact for 5 consecutive iterations")
            # Press forward at the full step limit; the proportional term is far
            # too timid to wrap around a face edge before the streak runs out.
            hand = apply_palm_twist(hand, np.array([0.0, 0.0, gains.max_translation_step]))
            trace.append(ServoStep(iteration, 0.0, 0.0, float(reference[2]),
                                   0.0, 0.0, gains.max_translation_step))
            prev_delta = None
            continue
        lost_streak = 0
        delta = reference - feature.as_array()
        if math.hypot(delta[0], delta[1]) < 1.0 and abs(delta[2]) < 0.05 * reference[2]:
            return hand, trace
        twist = palm_twist(delta, jac, gains, prev_delta)
        twist[2] = _guard_retract(twist[2], height_map)
        hand = apply_palm_twist(hand, twist)
        trace.append(
            ServoStep(iteration, float(delta[0]), float(delta[1]), float(delta[2]),
                      float(twist[0]), float(twist[1]), float(twist[2]))
        )
        prev_delta = delta
    return hand, trace


def follower_adapt(
    shape: ShapeModel,
    hand: HandState,
    gel: GelPad,
    gains: Optional[ServoGains] = None,
    jac: Optional[TactileJacobian] = None,
) -> HandState:
    """One open-loop pose correction per follower that is currently in contact.

    Followers out of contact are left untouched and the palm never moves;
    accumulated displacements saturate exactly at the finger limits.
    """
    gains = gains or ServoGains()
    jac = jac or TactileJacobian()
    reference = gains.reference(gel)
    limits = hand.template.limits
    new_adjusts = list(hand.adjusts)
    for index in range(hand.follower_count):
        height_map = render_height_map(shape, hand.follower_pose(index), gel)
        feature = extract_tactile_feature(height_map)
        if not feature.in_contact:
            continue
        delta = reference - feature.as_array()
        step = palm_twist(delta, jac, gains)
        step[2] = _guard_retract(float(step[2]), height_map)
        adj = hand.adjusts[index]
        new_adjusts[index] = FingerAdjust(
            shift=adj.shift + float(step[2]),
            tilt_y=adj.tilt_y + float(step[0]),
            tilt_z=adj.tilt_z + float(step[1]),
        ).clamped(limits)
    return replace(hand, adjusts=tuple(new_adjusts))


def establish_contact(
    shape: ShapeModel,
    approach_point,
    template: HandTemplate,
) -> HandState:
    """Place the hand so the leader presses the surface near the approach point.

    The leader's pressing axis opposes the local outward normal and the pad
    center is pushed to the template's press depth. Followers are placed by
    their offsets with zero adaptation. Fails if no surface lies within 5 cm
    of the approach point along the local normal direction.
    """
    approach = np.asarray(approach_point, dtype=float)
    if not np.all(np.isfinite(approach)):
        raise InvalidArgumentError("approach point must be finite")
    d0 = sdf_eval(shape, approach)
    try:
        direction = sdf_normal(shape, approach)
    except Exception as exc:
        raise ApproachFailedError(f"no usable surface direction at {approach.tolist()}") from exc
    march_dir = -direction if d0 >= 0.0 else direction
    hit = ray_march(shape, approach, march_dir, 0.05)
    if hit is None:
        raise ApproachFailedError("no surface within 5 cm of the approach point")
    normal = sdf_normal(shape, hit)
    leader = fingertip_pose_for_contact(hit, normal, template.press_depth)
    palm = leader.compose(template.leader_offset.inverse())
    return hand_at_palm(palm, template)
