"""Linear mirror calibration from kaleidoscopic projections.

Estimates the three mirror normals from pairwise chamber correspondences
(all chambers share one underlying 3D point, so every pair related by one
extra reflection yields a coplanarity constraint on that mirror's normal),
then the three distances and the point itself from a joint homogeneous
system built from per-chamber collinearity constraints. The global scale
is fixed by normalizing the first mirror distance to 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    IllPosedTriangulationError,
    InconsistentGeometryError,
    MissingChambersError,
)
from .geometry import (
    DEFAULT_SEQUENCES,
    CameraIntrinsics,
    MirrorPlane,
    canonical_order,
    chamber_key,
    householder,
    normalize,
)

#: A solve is flagged as near-degenerate when the second-smallest singular
#: value is less than this factor above the smallest.
DEGENERACY_RATIO = 10.0


@dataclass(frozen=True)
class SolveDiagnostics:
    """Conditioning of one null-space solve."""

    sigma_smallest: float
    sigma_second: float

    @property
    def ratio(self) -> float:
        if self.sigma_smallest == 0.0:
            return np.inf
        return self.sigma_second / self.sigma_smallest

    @property
    def flagged(self) -> bool:
        return self.ratio < DEGENERACY_RATIO


@dataclass(frozen=True)
class DistanceSystem:
    """Joint homogeneous system on (p0 per point, d1, d2, d3).

    ``matrix`` has one 3-row block per observed chamber per point; columns
    are the per-point coordinates followed by the three shared distances,
    i.e. shape (3 * R, 3 * n_points + 3). With the ten default chambers and
    one point this is the 30x6 collinearity system.
    """

    matrix: np.ndarray
    n_points: int


@dataclass(frozen=True)
class LinearCalibration:
    """Output of the linear pipeline, in the d1 = 1 gauge."""

    mirrors: tuple[MirrorPlane, MirrorPlane, MirrorPlane]
    points: np.ndarray  # (L, 3), triangulated, d1 = 1 scale
    diagnostics: dict[str, SolveDiagnostics]

    @property
    def degenerate(self) -> bool:
        return any(d.flagged for d in self.diagnostics.values())


def coplanarity_row(x: np.ndarray, x_prime: np.ndarray) -> np.ndarray:
    """Constraint row on a mirror normal from one correspondence.

    For normalized image points x of p and x' of its single-bounce mirror
    image, the normal satisfies ``row . n = 0`` with
    ``row = (y - y', x' - x, x y' - x' y)`` (the cross product of the two
    normalized rays).
    """
    x0, y0 = np.asarray(x, dtype=float).reshape(2)
    x1, y1 = np.asarray(x_prime, dtype=float).reshape(2)
    return np.array([y0 - y1, x1 - x0, x0 * y1 - x1 * y0])


def _null_vector(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smallest right-singular vector and the singular values."""
    _, sv, vt = np.linalg.svd(rows)
    return vt[-1], sv


def estimate_normal_single_mirror(pairs) -> np.ndarray:
    """Mirror normal (up to sign) from >= 2 correspondence pairs.

    Each pair is (x, x_prime) in normalized image coordinates. The
    distance to the mirror is unobservable here (it is the scale factor).
    """
    rows = np.array([coplanarity_row(x, xp) for x, xp in pairs])
    if len(rows) < 2:
        raise DegenerateConfigurationError("need at least two correspondence pairs")
    n, sv = _null_vector(rows)
    if sv[1] <= 1e-10 * sv[0]:
        raise DegenerateConfigurationError(
            "degenerate point configuration: correspondence rows are rank-deficient"
        )
    return -n if n[2] > 0 else n


def _normalized_maps(observations, intrinsics: CameraIntrinsics) -> list[dict]:
    """Per observation, chamber -> normalized image point, batched."""
    maps = []
    for obs in observations:
        order = canonical_order(obs)
        xy = normalize(intrinsics, np.array([obs[s] for s in order]))
        maps.append({s: xy[j] for j, s in enumerate(order)})
    return maps


def _mirror_rows(normalized_maps, mirror: int) -> np.ndarray:
    """Stack coplanarity rows for one mirror over all observations.

    Uses every observed chamber pair (s, mirror + s) where s does not
    already start with this mirror, including third and deeper bounces.
    """
    rows = []
    for norm in normalized_maps:
        for s in canonical_order(norm):
            if s and s[0] == mirror:
                continue
            t = (mirror,) + s
            if t in norm:
                rows.append(coplanarity_row(norm[s], norm[t]))
    return np.array(rows)


def estimate_normals(
    observations,
    intrinsics: CameraIntrinsics,
    return_diagnostics: bool = False,
):
    """All three mirror normals from kaleidoscopic observations.

    Returns a (3, 3) array of unit normals (rows), sign-fixed to face the
    camera. With ``return_diagnostics=True`` also returns a dict of
    per-mirror :class:`SolveDiagnostics`.
    """
    maps = _normalized_maps(observations, intrinsics)
    normals = np.empty((3, 3))
    diagnostics = {}
    for i in (1, 2, 3):
        rows = _mirror_rows(maps, i)
        if len(rows) < 2:
            raise DegenerateConfigurationError(
                f"mirror {i}: fewer than two correspondence rows available"
            )
        n, sv = _null_vector(rows)
        if sv[1] <= 1e-10 * sv[0]:
            raise DegenerateConfigurationError(
                f"mirror {i}: correspondence rows are rank-deficient"
            )
        normals[i - 1] = -n if n[2] > 0 else n
        diagnostics[f"normal_{i}"] = SolveDiagnostics(sv[-1], sv[-2])
    if return_diagnostics:
        return normals, diagnostics
    return normals


def _chamber_coefficients(
    seq, normals: np.ndarray, hmats: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Linear and distance coefficients of a chamber's point position.

    The chamber point is ``H_seq @ p0 + C @ d`` where ``H_seq`` is the
    product of the Householder matrices along the sequence and column i of
    C collects ``-2 H_prefix n_i`` over the bounces at mirror i.
    ``hmats`` takes precomputed per-mirror Householder matrices.
    """
    if hmats is None:
        hmats = np.stack([householder(n) for n in normals])
    h = np.eye(3)
    c = np.zeros((3, 3))
    for i in seq:
        c[:, i - 1] += -2.0 * (h @ normals[i - 1])
        h = h @ hmats[i - 1]
    return h, c


def _skews(xy: np.ndarray) -> np.ndarray:
    """Cross-product matrices (..., 3, 3) of rays (x, y, 1) from (..., 2)."""
    xy = np.asarray(xy, dtype=float)
    x, y = xy[..., 0], xy[..., 1]
    zero = np.zeros_like(x)
    one = np.ones_like(x)
    return np.stack(
        [
            np.stack([zero, -one, y], axis=-1),
            np.stack([one, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )


def build_distance_system(
    observations,
    intrinsics: CameraIntrinsics,
    normals: np.ndarray,
) -> DistanceSystem:
    """Assemble the homogeneous system on (p0 per point, d1, d2, d3).

    Every observed chamber of every point contributes the 3-row block
    ``[x]_x (H_seq p0 + C d) = 0`` (collinearity of the chamber point with
    its viewing ray); blocks share the three distance columns.
    """
    n_pts = len(observations)
    blocks = []
    for l, norm in enumerate(_normalized_maps(observations, intrinsics)):
        for s in canonical_order(norm):
            xs = _skews(norm[s])
            h, c = _chamber_coefficients(s, normals)
            block = np.zeros((3, 3 * n_pts + 3))
            block[:, 3 * l : 3 * l + 3] = xs @ h
            block[:, 3 * n_pts :] = xs @ c
            blocks.append(block)
    return DistanceSystem(np.vstack(blocks), n_pts)


def estimate_distances(
    system: DistanceSystem,
    return_diagnostics: bool = False,
):
    """Solve the distance system; scale fixed by d1 = 1.

    Returns ``(d, p0)`` with d the three mirror distances (d[0] == 1) and
    p0 the (n_points, 3) scene points in the same gauge.
    """
    v, sv = _null_vector(system.matrix)
    if v[-3] < 0:
        v = -v
    if v[-3] <= 0:
        raise InconsistentGeometryError("inconsistent geometry: first mirror distance is zero")
    v = v / v[-3]
    d = v[-3:]
    p0 = v[: 3 * system.n_points].reshape(system.n_points, 3)
    if np.any(d <= 0) or np.any(p0[:, 2] <= 0):
        raise InconsistentGeometryError(
            "inconsistent geometry: negative distance or depth in the null-space solution"
        )
    diag = SolveDiagnostics(sv[-1], sv[-2])
    if return_diagnostics:
        return (d, p0), diag
    return d, p0


def _triangulation_systems(observations, intrinsics, normals, distances):
    """Per-point stacked collinearity systems (A, b) with A p0 = b."""
    seqs = [canonical_order(obs) for obs in observations]
    a_mats, b_vecs = [], []
    for obs, order in zip(observations, seqs):
        xy = normalize(intrinsics, np.array([obs[s] for s in order]))
        xs = _skews(xy)  # (S, 3, 3)
        hs = np.empty((len(order), 3, 3))
        cs = np.empty((len(order), 3, 3))
        for j, s in enumerate(order):
            hs[j], cs[j] = _chamber_coefficients(s, normals)
        a = (xs @ hs).reshape(-1, 3)
        b = -(xs @ (cs @ distances)[..., None])[..., 0].reshape(-1)
        a_mats.append(a)
        b_vecs.append(b)
    return a_mats, b_vecs


def triangulate(observations, intrinsics: CameraIntrinsics, mirrors) -> np.ndarray:
    """Least-squares scene point per observation, mirrors fully known.

    Solves the stacked collinearity system of all observed chambers via
    the normal equations; raises if those are near-singular (fewer than
    two independent rays).
    """
    normals = np.array([m.normal for m in mirrors])
    distances = np.array([m.distance for m in mirrors])
    a_mats, b_vecs = _triangulation_systems(observations, intrinsics, normals, distances)
    out = np.empty((len(a_mats), 3))
    for l, (a, b) in enumerate(zip(a_mats, b_vecs)):
        sv = np.linalg.svd(a, compute_uv=False)
        if sv[0] ** 2 > 1e12 * sv[2] ** 2:
            raise IllPosedTriangulationError(
                f"ill-posed triangulation for point {l}: single effective viewing ray"
            )
        out[l] = np.linalg.lstsq(a, b, rcond=None)[0]
    return out


def require_chambers(observations, required=DEFAULT_SEQUENCES) -> None:
    """Raise MissingChambersError unless every point observes every chamber."""
    missing = sorted(
        {s for obs in observations for s in required if s not in obs},
        key=lambda s: (len(s), s),
    )
    if missing:
        raise MissingChambersError([chamber_key(s) for s in missing])


def calibrate_linear(observations, intrinsics: CameraIntrinsics) -> LinearCalibration:
    """Full linear pipeline: normals, then distances, then triangulation.

    Requires every observation to cover at least the ten default chambers.
    The returned mirrors carry the d1 = 1 gauge; ``diagnostics`` records
    the singular-value separation of each null-space solve.
    """
    if not observations:
        raise ValueError("no observations")
    require_chambers(observations)
    normals, diagnostics = estimate_normals(observations, intrinsics, return_diagnostics=True)
    for i in range(3):
        for j in range(i + 1, 3):
            if abs(normals[i] @ normals[j]) >= 1.0 - 1e-6:
                # algebraically the solve can still succeed, but parallel
                # mirrors cannot produce the second reflections physically
                raise DegenerateConfigurationError(
                    f"estimated normals of mirrors {i + 1} and {j + 1} are (near-)parallel"
                )
    system = build_distance_system(observations, intrinsics, normals)
    (d, _), diagnostics["distances"] = estimate_distances(system, return_diagnostics=True)
    mirrors = tuple(MirrorPlane(normals[i], d[i]) for i in range(3))
    points = triangulate(observations, intrinsics, mirrors)
    return LinearCalibration(mirrors, points, diagnostics)
