"""Shared fixtures: the default rig and canned noiseless scenes."""

from dataclasses import replace

import numpy as np
import pytest

from kaleidocal.geometry import MirrorPlane
from kaleidocal.synth import PointSpec, SceneConfig, default_rig, generate


@pytest.fixture(scope="session")
def rig() -> SceneConfig:
    return default_rig()


@pytest.fixture(scope="session")
def intrinsics(rig):
    return rig.intrinsics


@pytest.fixture(scope="session")
def one_point_scene(rig):
    """Noiseless single-point scene on the default rig."""
    return generate(rig)


@pytest.fixture(scope="session")
def five_point_scene(rig):
    """Noiseless five-point planar scene on the default rig."""
    config = replace(rig, points=replace(rig.points, count=5, layout="planar"), seed=2)
    return generate(config)


def fan_rig(intrinsics) -> SceneConfig:
    """Rig whose mirror normals are coplanar (all in the xz-plane).

    Every mirror-intersection direction is then parallel to the y axis:
    the orthogonality-constraint method degenerates while the
    kaleidoscopic estimators remain well-posed (points sit off y = 0).
    """
    betas = np.deg2rad([-28.0, 2.0, 32.0])
    normals = [np.array([np.sin(b), 0.0, -np.cos(b)]) for b in betas]
    mirrors = tuple(
        MirrorPlane(n, d) for n, d in zip(normals, (0.55, 0.6, 0.65))
    )
    return SceneConfig(
        intrinsics=intrinsics,
        mirrors=mirrors,
        points=PointSpec(count=1, layout="random", center=(0.02, 0.08, 0.5), extent=0.04),
    )


@pytest.fixture(scope="session")
def degenerate_intersection_rig(intrinsics) -> SceneConfig:
    return fan_rig(intrinsics)
