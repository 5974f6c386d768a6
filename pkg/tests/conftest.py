from __future__ import annotations

import numpy as np
import pytest

from slidetouch.geometry import Box, Capsule, Cylinder, ShapeUnion, Sphere, Superellipsoid
from slidetouch.transforms import Pose


@pytest.fixture
def unit_sphere() -> Sphere:
    return Sphere(radius=1.0)


@pytest.fixture
def unit_box() -> Box:
    return Box(half_extents=np.array([1.0, 1.0, 1.0]))


@pytest.fixture
def plane_wall() -> Box:
    """Huge box whose x = 0.2 face acts as an infinite plane for contact tests."""
    return Box(Pose.from_parts([1.2, 0.0, 0.0]), half_extents=np.array([1.0, 2.0, 2.0]))


@pytest.fixture
def table_sphere() -> Sphere:
    """The standard-suite sphere: radius 50 mm centered at z = 0.1."""
    return Sphere(Pose.from_parts([0.45, 0.0, 0.1]), radius=0.05)


def primitive_zoo() -> list:
    """One posed instance of every shape kind, for property sweeps."""
    return [
        Sphere(Pose.from_parts([0.1, -0.2, 0.3]), radius=0.07),
        Box(Pose.from_parts([0.0, 0.1, 0.0], [0.9238795325112867, 0.0, 0.0, 0.3826834323650898]),
            half_extents=np.array([0.04, 0.06, 0.09])),
        Cylinder(Pose.from_parts([-0.1, 0.0, 0.05]), radius=0.04, half_height=0.07),
        Capsule(Pose.from_parts([0.2, 0.2, -0.1]), radius=0.03, half_height=0.05),
        Superellipsoid(Pose.from_parts([0.0, 0.0, 0.2]), half_extents=np.array([0.04, 0.05, 0.06]),
                       e1=0.7, e2=0.9),
        ShapeUnion(
            Pose.from_parts([0.05, 0.0, 0.0]),
            members=(
                Cylinder(Pose.from_parts([0.0, 0.0, -0.01]), radius=0.033, half_height=0.037),
                Capsule(Pose.from_parts([0.0, 0.0, 0.026]), radius=0.012, half_height=0.008),
            ),
        ),
    ]
