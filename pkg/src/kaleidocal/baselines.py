"""Reference-object calibration methods used for comparison.

Both methods consume per-chamber poses of an object of known geometry:
the averaging method builds each normal from sums of point-to-mirror-image
difference vectors and each distance from midpoint projections, while the
orthogonality method first estimates the mirror intersection directions
from difference-vector null spaces and crosses them into normals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateConfigurationError, InconsistentGeometryError, PoseEstimationError
from .geometry import CameraIntrinsics, MirrorPlane, project
from .optim import levenberg_marquardt

#: Chamber pairs whose difference vectors are orthogonal to each mirror
#: intersection direction m_ij: both chamber points are reflections of one
#: common point by mirror i and mirror j respectively.
INTERSECTION_PAIRS = {
    (1, 2): (((1,), (2,)), ((), (2, 1)), ((1, 2), ()), ((1, 3), (2, 3))),
    (2, 3): (((2,), (3,)), ((2, 1), (3, 1)), ((), (3, 2)), ((2, 3), ())),
    (3, 1): (((3,), (1,)), ((3, 1), ()), ((3, 2), (1, 2)), ((), (1, 3))),
}

_MIRROR_FLIP = np.diag([-1.0, 1.0, 1.0])


@dataclass(frozen=True)
class ReferenceObject:
    """Calibration target of known geometry in its own frame."""

    landmarks: np.ndarray  # (L, 3)
    planar: bool = True

    def __post_init__(self):
        pts = np.asarray(self.landmarks, dtype=float).reshape(-1, 3)
        centered = pts - pts.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-10) < 2:
            raise DegenerateConfigurationError("reference landmarks are collinear")
        if self.planar and np.abs(pts[:, 2]).max() > 1e-12:
            raise ValueError("planar reference object must have landmarks at z = 0")
        pts.setflags(write=False)
        object.__setattr__(self, "landmarks", pts)


@dataclass(frozen=True)
class Pose:
    """Object-to-camera map ``p -> linear @ p + translation``.

    ``linear`` is a rotation for direct chambers and a rotation composed
    with a model mirror flip (det = -1) for odd-bounce chambers.
    """

    linear: np.ndarray
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.linear.T + self.translation


def _rodrigues(rotvec: np.ndarray) -> np.ndarray:
    """Rotation matrix of an axis-angle vector (cheap hot-path version)."""
    angle = np.linalg.norm(rotvec)
    if angle < 1e-12:
        wx, wy, wz = rotvec
        return np.eye(3) + np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])
    x, y, z = rotvec / angle
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _conditioning_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity moving points to centroid 0, RMS radius sqrt(2)."""
    centroid = pts.mean(axis=0)
    rms = np.sqrt(((pts - centroid) ** 2).sum(axis=1).mean())
    if rms < 1e-12:
        raise PoseEstimationError("coincident landmarks")
    s = np.sqrt(2.0) / rms
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def _homography(src_xy: np.ndarray, dst_xy: np.ndarray) -> np.ndarray:
    """DLT homography mapping plane coordinates to normalized image points.

    Both point sets are conditioned (centroid 0, RMS sqrt(2)) before the
    solve; raw coordinates mix meter- and unit-scale columns badly enough
    to wreck the solution under pixel noise.
    """
    t_src = _conditioning_transform(src_xy)
    t_dst = _conditioning_transform(dst_xy)
    src = src_xy * t_src[0, 0] + t_src[:2, 2]
    dst = dst_xy * t_dst[0, 0] + t_dst[:2, 2]
    rows = []
    for (xs, ys), (xd, yd) in zip(src, dst):
        rows.append([xs, ys, 1, 0, 0, 0, -xd * xs, -xd * ys, -xd])
        rows.append([0, 0, 0, xs, ys, 1, -yd * xs, -yd * ys, -yd])
    rows = np.asarray(rows)
    _, sv, vt = np.linalg.svd(rows)
    if sv[-2] <= 1e-10 * sv[0]:
        raise PoseEstimationError("degenerate landmark configuration for homography")
    h = vt[-1].reshape(3, 3)
    return np.linalg.inv(t_dst) @ h @ t_src


def _planar_candidates(h: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Zhang-style pose candidates from a plane-to-image homography."""
    scale = 2.0 / (np.linalg.norm(h[:, 0]) + np.linalg.norm(h[:, 1]))
    r1, r2, t = scale * h[:, 0], scale * h[:, 1], scale * h[:, 2]
    if t[2] < 0:
        r1, r2, t = -r1, -r2, -t
    r = np.stack([r1, r2, np.cross(r1, r2)], axis=1)
    u, _, vt = np.linalg.svd(r)
    r = u @ np.diag([1.0, 1.0, np.linalg.det(u @ vt)]) @ vt
    # second candidate: the 180-degree in-plane rotation of the first
    return [(r, t), (r @ np.diag([-1.0, -1.0, 1.0]), t)]


def _dlt_candidates(model: np.ndarray, xy: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """General (non-planar) DLT pose: fit a 3x4 projection, snap to rigid."""
    rows = []
    for (px, py, pz), (xd, yd) in zip(model, xy):
        rows.append([px, py, pz, 1, 0, 0, 0, 0, -xd * px, -xd * py, -xd * pz, -xd])
        rows.append([0, 0, 0, 0, px, py, pz, 1, -yd * px, -yd * py, -yd * pz, -yd])
    rows = np.asarray(rows)
    _, sv, vt = np.linalg.svd(rows)
    if sv[-2] <= 1e-10 * sv[0]:
        raise PoseEstimationError("degenerate landmark configuration for DLT pose")
    p = vt[-1].reshape(3, 4)
    if np.linalg.det(p[:, :3]) < 0:
        p = -p
    m = p[:, :3]
    u, s, vt = np.linalg.svd(m)
    r = u @ vt
    t = p[:, 3] / s.mean()
    if t[2] < 0:
        t = -t
    return [(r, t)]


def estimate_pose(
    landmarks2d: np.ndarray,
    obj: ReferenceObject,
    intrinsics: CameraIntrinsics,
    mirrored: bool = False,
) -> Pose:
    """Object pose from one chamber's landmark pixels.

    Linear initialization (homography decomposition for planar objects,
    DLT otherwise) followed by damped least-squares reprojection
    refinement; when several linear candidates exist the refined pose with
    the lower reprojection error wins. ``mirrored`` marks odd-bounce
    chambers: the object model is pre-mirrored so a proper rotation fits,
    and the returned pose folds that flip in (det = -1).
    """
    uv = np.asarray(landmarks2d, dtype=float).reshape(-1, 2)
    n_min = 4 if obj.planar else 6
    if len(uv) != len(obj.landmarks):
        raise ValueError("one pixel per landmark required")
    if len(uv) < n_min:
        raise PoseEstimationError(
            f"need at least {n_min} landmarks for a {'planar' if obj.planar else 'general'} object"
        )
    model = obj.landmarks @ _MIRROR_FLIP if mirrored else obj.landmarks
    ones = np.ones((len(uv), 1))
    xy = (np.concatenate([uv, ones], axis=1) @ intrinsics.inverse.T)[:, :2]
    if obj.planar:
        candidates = _planar_candidates(_homography(model[:, :2], xy))
    else:
        candidates = _dlt_candidates(model, xy)

    a_mat = intrinsics.matrix

    def residual(x):
        pts = model @ _rodrigues(x[:3]).T + x[3:]
        z = pts[:, 2]
        if np.any(z <= 0):
            return np.full(uv.size, np.inf)
        q = pts @ a_mat.T
        return (q[:, :2] / q[:, 2:] - uv).reshape(-1)

    starts = []
    for r0, t0 in candidates:
        x0 = np.concatenate([Rotation.from_matrix(r0).as_rotvec(), t0])
        r = residual(x0)
        if np.all(np.isfinite(r)):
            starts.append((float(r @ r), x0))
    if not starts:
        raise PoseEstimationError("no feasible linear pose candidate")
    # refine the most promising candidate first; further candidates only
    # matter when a genuine two-fold ambiguity leaves them competitive
    # with the best refined cost. Pose refinement needs far less precision
    # than the mirror adjustment, so the tolerances are looser.
    starts.sort(key=lambda item: item[0])
    best = None
    for cost0, x0 in starts:
        if best is not None and cost0 > 1e2 * max(best.final_cost, 1e-12):
            continue
        fit = levenberg_marquardt(residual, x0, max_iter=50, ftol=1e-8, gtol=1e-8)
        if best is None or fit.final_cost < best.final_cost:
            best = fit
    if best is None or not np.all(np.isfinite(best.x)):
        raise PoseEstimationError("pose refinement failed from every linear candidate")
    rot = _rodrigues(best.x[:3])
    linear = rot @ _MIRROR_FLIP if mirrored else rot
    return Pose(linear, best.x[3:])


def pose_chambers(
    chamber_pixels: dict,
    obj: ReferenceObject,
    intrinsics: CameraIntrinsics,
) -> dict:
    """Per-chamber camera-frame landmark positions via pose estimation.

    ``chamber_pixels`` maps each reflection sequence to an (L, 2) pixel
    array in landmark order. Chambers with an odd bounce count are fitted
    with the pre-mirrored model.
    """
    posed = {}
    for seq, uv in chamber_pixels.items():
        pose = estimate_pose(uv, obj, intrinsics, mirrored=len(seq) % 2 == 1)
        posed[seq] = pose.apply(obj.landmarks)
    return posed


def _require(posed: dict, seqs) -> None:
    missing = [s for s in seqs if s not in posed]
    if missing:
        raise ValueError(f"posed landmarks missing chambers {missing}")


def _checked_plane(normal: np.ndarray, distance: float) -> MirrorPlane:
    if distance <= 0:
        raise InconsistentGeometryError("non-positive mirror distance from posed landmarks")
    return MirrorPlane(normal, distance)


def baseline_calibrate(posed: dict) -> tuple[MirrorPlane, MirrorPlane, MirrorPlane]:
    """Mirror planes by averaging over posed landmarks.

    Each difference of a chamber point and its one-extra-bounce image is
    parallel to that mirror's normal; summing three such differences per
    landmark and normalizing gives the normal. Each distance averages the
    normal-projected midpoints of the six chambers paired by that mirror.
    """
    mirrors = []
    for i, j, k in ((1, 2, 3), (2, 3, 1), (3, 1, 2)):
        _require(posed, [(), (i,), (j,), (k,), (i, j), (i, k)])
        diffs = (
            posed[(i,)] - posed[()]
            + posed[(i, j)] - posed[(j,)]
            + posed[(i, k)] - posed[(k,)]
        )
        direction = diffs.sum(axis=0)
        norm = np.linalg.norm(direction)
        if norm <= 1e-12:
            raise DegenerateConfigurationError("zero-norm difference-vector sum")
        # the summed differences point away from the camera; our normals
        # face it, and flipping the normal keeps the distance value
        n_away = direction / norm
        six = (
            posed[()] + posed[(1,)] + posed[(2,)] + posed[(3,)]
            + posed[(i, j)] + posed[(i, k)]
        )
        d = float(n_away @ six.sum(axis=0)) / (6 * len(posed[()]))
        mirrors.append(_checked_plane(-n_away, d))
    return tuple(mirrors)


def takahashi_calibrate(posed: dict) -> tuple[MirrorPlane, MirrorPlane, MirrorPlane]:
    """Mirror planes via the orthogonality constraint on intersections.

    Differences of two chamber points that mirror one common point across
    mirrors i and j are orthogonal to the intersection direction m_ij;
    each m_ij is the null vector of four such difference rows per
    landmark, and normals come back as cross products of the m vectors.
    Degenerates when the intersection directions are (near-)parallel.
    """
    ms = {}
    for key, pairs in INTERSECTION_PAIRS.items():
        _require(posed, [s for pair in pairs for s in pair])
        rows = np.vstack([posed[a] - posed[b] for a, b in pairs])
        _, sv, vt = np.linalg.svd(rows)
        if sv[1] <= 1e-10 * sv[0]:
            raise DegenerateConfigurationError(
                f"intersection direction m{key[0]}{key[1]}: difference rows rank-deficient"
            )
        ms[key] = vt[-1]
    crosses = (
        np.cross(ms[(1, 2)], ms[(3, 1)]),
        np.cross(ms[(2, 3)], ms[(1, 2)]),
        np.cross(ms[(3, 1)], ms[(2, 3)]),
    )
    mirrors = []
    for i, cross in enumerate(crosses, start=1):
        norm = np.linalg.norm(cross)
        if norm < 1e-6:
            raise DegenerateConfigurationError(
                f"mirror {i}: intersection directions are (near-)parallel"
            )
        n = cross / norm
        if n[2] > 0:
            n = -n
        d = float(np.mean(-(posed[(i,)] + posed[()]) @ n / 2.0))
        mirrors.append(_checked_plane(n, d))
    return tuple(mirrors)
