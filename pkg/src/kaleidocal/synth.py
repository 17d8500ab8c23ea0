"""Synthetic kaleidoscopic scenes: ground truth, projections, pixel noise."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GenerationError
from .geometry import (
    DEFAULT_SEQUENCES,
    CameraIntrinsics,
    MirrorPlane,
    ReflectionSequence,
    chamber_key,
    compose,
    project,
    validate_sequence,
)

Observation = dict[ReflectionSequence, np.ndarray]


@dataclass(frozen=True)
class PointSpec:
    """How scene points are laid out.

    ``random`` draws points uniformly in a cube of side ``extent`` around
    ``center``; ``planar`` poses the fixed landmark pattern of
    :func:`planar_landmarks` with a random tilt, in-plane spin, and small
    offset, emulating a handheld planar target.
    """

    count: int = 1
    layout: str = "random"
    center: tuple[float, float, float] = (0.0, 0.0, 1.1)
    extent: float = 0.12

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("point count must be >= 1")
        if self.layout not in ("random", "planar"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if not self.extent > 0:
            raise ValueError("extent must be positive")


@dataclass(frozen=True)
class SceneConfig:
    """Full description of a synthetic capture."""

    intrinsics: CameraIntrinsics
    mirrors: tuple[MirrorPlane, MirrorPlane, MirrorPlane]
    points: PointSpec = PointSpec()
    sequences: tuple[ReflectionSequence, ...] = DEFAULT_SEQUENCES
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mirrors", tuple(self.mirrors))
        seqs = tuple(validate_sequence(s, len(self.mirrors)) for s in self.sequences)
        object.__setattr__(self, "sequences", seqs)
        normals = np.array([m.normal for m in self.mirrors])
        for i in range(len(normals)):
            for j in range(i + 1, len(normals)):
                if abs(normals[i] @ normals[j]) >= 1.0 - 1e-6:
                    raise ValueError(f"mirrors {i + 1} and {j + 1} are (near-)parallel")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    """True mirror planes and scene points behind a set of observations."""

    mirrors: tuple[MirrorPlane, ...]
    points: np.ndarray  # (L, 3) camera frame

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)


def planar_landmarks(count: int, extent: float = 0.06) -> np.ndarray:
    """Fixed planar landmark pattern (count, 3) in the object frame (z = 0).

    A single point sits at the origin; even counts form a ring of radius
    ``extent / 2``; odd counts >= 5 add the center to a ring of count - 1.
    The pattern plays the role of a calibration target of known geometry.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if count == 1:
        return np.zeros((1, 3))
    if count % 2 == 0 or count == 3:
        on_ring = count
        pts = []
    else:
        on_ring = count - 1
        pts = [(0.0, 0.0)]
    ang = 2.0 * np.pi * np.arange(on_ring) / on_ring + 0.4
    r = extent / 2.0
    pts.extend(zip(r * np.cos(ang), r * np.sin(ang)))
    out = np.zeros((count, 3))
    out[:, :2] = np.asarray(pts)
    return out


def _random_plane_pose(rng: np.random.Generator, spec: PointSpec):
    """Random pose for the planar pattern: spin, bounded tilt, small offset."""
    spin = rng.uniform(0.0, 2.0 * np.pi)
    tilt = rng.uniform(0.0, np.deg2rad(15.0))
    tilt_dir = rng.uniform(0.0, 2.0 * np.pi)
    cs, ss = np.cos(spin), np.sin(spin)
    r_spin = np.array([[cs, -ss, 0.0], [ss, cs, 0.0], [0.0, 0.0, 1.0]])
    axis = np.array([np.cos(tilt_dir), np.sin(tilt_dir), 0.0])
    k = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    r_tilt = np.eye(3) + np.sin(tilt) * k + (1.0 - np.cos(tilt)) * (k @ k)
    offset = np.asarray(spec.center) + rng.uniform(-0.1, 0.1, size=3) * spec.extent
    return r_tilt @ r_spin, offset


def scene_points(spec: PointSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw the (count, 3) camera-frame points for a point spec."""
    if spec.layout == "random":
        box = rng.uniform(-0.5, 0.5, size=(spec.count, 3)) * spec.extent
        return np.asarray(spec.center) + box
    rot, offset = _random_plane_pose(rng, spec)
    return planar_landmarks(spec.count, spec.extent) @ rot.T + offset


def generate(config: SceneConfig) -> tuple[GroundTruth, list[Observation]]:
    """Generate ground truth plus per-point chamber observations.

    Each scene point is projected through every configured reflection
    sequence; i.i.d. zero-mean Gaussian noise of std ``noise_sigma`` is
    then added to every pixel coordinate. Deterministic given the seed.
    """
    rng = np.random.default_rng(config.seed)
    pts = scene_points(config.points, rng)
    transforms = [compose(s, config.mirrors) for s in config.sequences]

    pixels = np.empty((len(pts), len(config.sequences), 2))
    for j, (seq, tf) in enumerate(zip(config.sequences, transforms)):
        reflected = tf.apply(pts)
        bad = np.nonzero(reflected[:, 2] <= 0)[0]
        if bad.size:
            raise GenerationError(
                f"point {bad[0]} maps behind the camera in chamber {chamber_key(seq)!r}"
            )
        pixels[:, j] = project(config.intrinsics, reflected)

    if config.noise_sigma > 0:
        pixels = pixels + rng.normal(0.0, config.noise_sigma, size=pixels.shape)

    observations = [
        {seq: pixels[l, j].copy() for j, seq in enumerate(config.sequences)}
        for l in range(len(pts))
    ]
    return GroundTruth(config.mirrors, pts), observations


def default_rig() -> SceneConfig:
    """Reference three-mirror rig used by the evaluation harness.

    Camera: f = 1000 px, 1000x1000 image, principal point at the center.
    Mirrors sit at azimuths 92deg/214deg/319deg around the optical axis
    (roughly 120 deg apart, perturbed off exact symmetry for conditioning),
    normals tilted 6deg/3deg/4deg off the image plane toward the axis, at
    0.20/0.26/0.21 m from the camera. Points default to a single random
    draw near (0, 0, 1.1) m. All ten default chambers of a point at the
    center project inside the 1000x1000 image with margin.
    """
    a = CameraIntrinsics(np.array([
        [1000.0, 0.0, 500.0],
        [0.0, 1000.0, 500.0],
        [0.0, 0.0, 1.0],
    ]))
    mirrors = []
    for tau_deg, psi_deg, d in ((6.0, 92.0, 0.20), (3.0, 214.0, 0.26), (4.0, 319.0, 0.21)):
        tau, psi = np.deg2rad(tau_deg), np.deg2rad(psi_deg)
        n = -np.array([np.cos(tau) * np.cos(psi), np.cos(tau) * np.sin(psi), np.sin(tau)])
        mirrors.append(MirrorPlane(n, d))
    return SceneConfig(intrinsics=a, mirrors=tuple(mirrors))


def trial_config(base: SceneConfig, trial: int, **overrides) -> SceneConfig:
    """Per-trial variant of a config: seed advances by the trial index."""
    return replace(base, seed=base.seed + trial, **overrides)
