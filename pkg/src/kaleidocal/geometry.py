"""Measurement model for a camera facing planar mirrors.

Conventions used throughout the package:

* The camera sits at the origin and looks along +z.
* A mirror plane is ``n . x + d = 0`` with unit normal ``n``, ``d > 0``
  (the camera center is on the positive side) and ``n.z < 0`` (the normal
  points back toward the camera).
* A reflection sequence is a tuple of 1-based mirror indices listed
  outermost-first: ``(i, j)`` denotes the transform of mirror i applied
  to the transform of mirror j, i.e. the chamber seen via mirror j first
  and mirror i second.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateSequenceError,
    InvalidPlaneError,
)

ReflectionSequence = tuple[int, ...]

#: Chamber order of the canonical three-mirror system: the direct view,
#: the three first reflections, and the six second reflections.
DEFAULT_SEQUENCES: tuple[ReflectionSequence, ...] = (
    (),
    (1,),
    (2,),
    (3,),
    (1, 2),
    (2, 1),
    (2, 3),
    (3, 2),
    (3, 1),
    (1, 3),
)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsic matrix (3x3, upper triangular, positive diagonal)."""

    matrix: np.ndarray
    inverse: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float)
        if a.shape != (3, 3):
            raise ValueError(f"intrinsic matrix must be 3x3, got {a.shape}")
        if not np.allclose(a[2], [0.0, 0.0, 1.0]):
            raise ValueError("last intrinsic row must be [0, 0, 1]")
        if a[1, 0] != 0.0 or a[0, 0] <= 0 or a[1, 1] <= 0:
            raise ValueError("intrinsic matrix must be upper triangular with positive focal lengths")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        inv = np.linalg.inv(a)
        inv.setflags(write=False)
        object.__setattr__(self, "inverse", inv)


@dataclass(frozen=True)
class MirrorPlane:
    """Planar mirror ``n . x + d = 0`` with unit, camera-facing normal."""

    normal: np.ndarray
    distance: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-9:
            raise InvalidPlaneError(f"mirror normal must be unit length, |n| = {norm!r}")
        n = n / norm
        if n[2] >= 0:
            raise InvalidPlaneError("mirror normal must face the camera (n.z < 0)")
        if not self.distance > 0:
            raise InvalidPlaneError(f"mirror distance must be positive, got {self.distance!r}")
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "distance", float(self.distance))


@dataclass(frozen=True)
class ReflectionTransform:
    """Affine map ``p -> linear @ p + translation`` of one or more reflections."""

    linear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.linear, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        h.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "linear", h)
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a stack of points (..., 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.linear.T + self.translation

    def __matmul__(self, other: "ReflectionTransform") -> "ReflectionTransform":
        return ReflectionTransform(
            self.linear @ other.linear,
            self.linear @ other.translation + self.translation,
        )


IDENTITY_TRANSFORM = ReflectionTransform(np.eye(3), np.zeros(3))


def householder(normal: np.ndarray) -> np.ndarray:
    """Reflection matrix ``I - 2 n n^T`` for a unit normal."""
    n = np.asarray(normal, dtype=float).reshape(3)
    return np.eye(3) - 2.0 * np.outer(n, n)


def reflection_transform(mirror: MirrorPlane) -> ReflectionTransform:
    """Affine reflection across a mirror plane."""
    return ReflectionTransform(
        householder(mirror.normal),
        -2.0 * mirror.distance * mirror.normal,
    )


def reflect(mirror: MirrorPlane, points: np.ndarray) -> np.ndarray:
    """Mirror one point (3,) or a stack (..., 3) across the plane."""
    return reflection_transform(mirror).apply(points)


def validate_sequence(seq: ReflectionSequence, n_mirrors: int = 3) -> ReflectionSequence:
    """Check mirror indices and the no-consecutive-repeat rule."""
    seq = tuple(int(i) for i in seq)
    for i in seq:
        if not 1 <= i <= n_mirrors:
            raise DegenerateSequenceError(f"mirror index {i} out of range 1..{n_mirrors}")
    for a, b in zip(seq, seq[1:]):
        if a == b:
            raise DegenerateSequenceError(f"degenerate sequence: consecutive reflections by mirror {a}")
    return seq


def compose(seq: ReflectionSequence, mirrors) -> ReflectionTransform:
    """Product of reflection transforms in sequence order.

    ``compose((i, j), mirrors)`` applies mirror j first and mirror i last,
    so ``compose((i, j)).apply(p) == reflect(m_i, reflect(m_j, p))``.
    """
    seq = validate_sequence(seq, n_mirrors=len(mirrors))
    out = IDENTITY_TRANSFORM
    for i in seq:
        out = out @ reflection_transform(mirrors[i - 1])
    return out


def project(intrinsics: CameraIntrinsics, points: np.ndarray) -> np.ndarray:
    """Project camera-frame points (..., 3) to pixels (..., 2)."""
    p = np.asarray(points, dtype=float)
    z = p[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError("point behind camera: non-positive depth")
    q = p @ intrinsics.matrix.T
    return q[..., :2] / q[..., 2:]


def normalize(intrinsics: CameraIntrinsics, pixels: np.ndarray) -> np.ndarray:
    """Map pixels (..., 2) to normalized image coordinates (..., 2)."""
    q = np.asarray(pixels, dtype=float)
    uv1 = np.concatenate([q, np.ones(q.shape[:-1] + (1,))], axis=-1)
    x = uv1 @ intrinsics.inverse.T
    return x[..., :2] / x[..., 2:]


def skew(v: np.ndarray) -> np.ndarray:
    """3x3 cross-product matrix ``[v]_x`` such that ``[v]_x w = v x w``."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def chamber_key(seq: ReflectionSequence) -> str:
    """Digit-string key of a sequence: ``()`` -> ``"0"``, ``(1, 2)`` -> ``"12"``."""
    return "".join(str(i) for i in seq) if seq else "0"


def parse_chamber_key(key: str, n_mirrors: int = 3) -> ReflectionSequence:
    """Inverse of :func:`chamber_key`; validates the sequence."""
    if key == "0":
        return ()
    if not key or not key.isdigit() or "0" in key:
        raise ValueError(f"invalid chamber key {key!r}")
    return validate_sequence(tuple(int(c) for c in key), n_mirrors=n_mirrors)


def canonical_order(sequences) -> list[ReflectionSequence]:
    """Sort sequences into the canonical chamber order.

    The ten default chambers come first in their fixed order; any further
    sequences follow, ordered by reflection count then lexicographically.
    """
    rank = {s: i for i, s in enumerate(DEFAULT_SEQUENCES)}
    extra = len(DEFAULT_SEQUENCES)
    return sorted(sequences, key=lambda s: (rank.get(s, extra), len(s), s))
