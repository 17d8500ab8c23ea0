"""Bundle adjustment of the mirror parameters against reprojection error.

The scene points are not free variables: every residual evaluation
re-triangulates them from the current mirrors, then reprojects into every
observed chamber. The global scale is gauge-fixed by freezing the first
mirror distance at 1, leaving eight parameters: two spherical angles per
normal plus the second and third distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IllPosedTriangulationError, InvalidPlaneError
from .geometry import CameraIntrinsics, MirrorPlane, canonical_order, householder
from .linear import LinearCalibration, _chamber_coefficients, _skews
from .optim import FD_STEP, forward_jacobian, levenberg_marquardt


@dataclass(frozen=True)
class MirrorParams:
    """Eight-parameter encoding: normals as (theta, phi), d1 frozen at 1."""

    angles: np.ndarray  # (3, 2) rows (theta_i, phi_i)
    d2: float
    d3: float

    @classmethod
    def from_mirrors(cls, mirrors) -> "MirrorParams":
        """Encode mirrors, rescaling distances into the d1 = 1 gauge."""
        normals = np.array([m.normal for m in mirrors])
        d = np.array([m.distance for m in mirrors]) / mirrors[0].distance
        angles = np.column_stack([
            np.arccos(np.clip(normals[:, 2], -1.0, 1.0)),
            np.arctan2(normals[:, 1], normals[:, 0]),
        ])
        return cls(angles, float(d[1]), float(d[2]))

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "MirrorParams":
        vec = np.asarray(vec, dtype=float).reshape(8)
        return cls(vec[:6].reshape(3, 2), float(vec[6]), float(vec[7]))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.angles).reshape(6), [self.d2, self.d3]])

    def to_mirrors(self) -> tuple[MirrorPlane, MirrorPlane, MirrorPlane]:
        normals, distances = _decode(self.to_vector())
        return tuple(MirrorPlane(normals[i], distances[i]) for i in range(3))


@dataclass(frozen=True)
class RefinementReport:
    initial_cost: float  # px^2
    final_cost: float  # px^2
    iterations: int
    converged: bool


def _decode(vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Parameter vector -> (normals (3, 3), distances (3,)); d1 = 1."""
    theta, phi = vec[0:6:2], vec[1:6:2]
    st = np.sin(theta)
    normals = np.column_stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])
    distances = np.array([1.0, vec[6], vec[7]])
    if np.any(normals[:, 2] >= 0):
        raise InvalidPlaneError("decoded normal does not face the camera")
    if np.any(distances <= 0):
        raise InvalidPlaneError("decoded mirror distance is not positive")
    return normals, distances


class _Problem:
    """Precomputed observation tensors for fast residual evaluation."""

    def __init__(self, observations, intrinsics: CameraIntrinsics):
        self.intrinsics = intrinsics
        self.orders = [tuple(canonical_order(obs)) for obs in observations]
        if len(set(self.orders)) != 1:
            raise ValueError("all observations must cover the same chamber set")
        self.sequences = self.orders[0]
        self.pixels = np.array(
            [[obs[s] for s in self.sequences] for obs in observations]
        )  # (L, S, 2)
        ones = np.ones(self.pixels.shape[:-1] + (1,))
        uv1 = np.concatenate([self.pixels, ones], axis=-1)
        xy = (uv1 @ intrinsics.inverse.T)[..., :2]
        self.skews = _skews(xy)  # (L, S, 3, 3)
        self.size = self.pixels.size

    def residual(self, vec: np.ndarray) -> np.ndarray:
        normals, distances = _decode(vec)
        hmats = np.stack([householder(n) for n in normals])
        n_seq = len(self.sequences)
        hs = np.empty((n_seq, 3, 3))
        ts = np.empty((n_seq, 3))
        for j, s in enumerate(self.sequences):
            h, c = _chamber_coefficients(s, normals, hmats)
            hs[j] = h
            ts[j] = c @ distances

        # triangulate every point from the current mirrors
        a = (self.skews @ hs).reshape(len(self.pixels), -1, 3)  # (L, 3S, 3)
        b = -(self.skews @ ts[..., None])[..., 0].reshape(len(self.pixels), -1)
        ata = np.einsum("lri,lrj->lij", a, a)
        atb = np.einsum("lri,lr->li", a, b)
        if np.any(np.linalg.cond(ata) > 1e12):
            raise IllPosedTriangulationError("triangulation normal equations near-singular")
        p0 = np.linalg.solve(ata, atb[..., None])[..., 0]  # (L, 3)

        # reproject through every chamber
        chamber_pts = np.einsum("sij,lj->lsi", hs, p0) + ts  # (L, S, 3)
        z = chamber_pts[..., 2]
        if np.any(z <= 0):
            raise IllPosedTriangulationError("reprojected point behind the camera")
        q = chamber_pts @ self.intrinsics.matrix.T
        reproj = q[..., :2] / q[..., 2:]
        return (self.pixels - reproj).reshape(-1)

    def guarded(self, vec: np.ndarray) -> np.ndarray:
        """Residual that vetoes invalid parameter points for the optimizer."""
        try:
            return self.residual(vec)
        except (InvalidPlaneError, IllPosedTriangulationError, np.linalg.LinAlgError):
            return np.full(self.size, np.inf)


def residual(params: MirrorParams, observations, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Reprojection residual (px) over all chambers and points.

    Entries are (du, dv) per chamber in canonical chamber order, grouped
    per point: 20 entries per point for the ten default chambers.
    """
    return _Problem(observations, intrinsics).residual(params.to_vector())


def residual_jacobian(params: MirrorParams, observations, intrinsics: CameraIntrinsics) -> np.ndarray:
    """The forward-difference Jacobian the optimizer uses (step 1e-6)."""
    problem = _Problem(observations, intrinsics)
    vec = params.to_vector()
    return forward_jacobian(problem.residual, vec, problem.residual(vec), step=FD_STEP)


def bundle_adjust(
    init,
    observations,
    intrinsics: CameraIntrinsics,
    max_iter: int = 100,
) -> tuple[tuple[MirrorPlane, MirrorPlane, MirrorPlane], RefinementReport]:
    """Refine mirror parameters by minimizing the reprojection residual.

    ``init`` is a LinearCalibration or a sequence of three MirrorPlane;
    its distances are rescaled into the d1 = 1 gauge before optimization.
    The final cost never exceeds the initial cost; if no step is ever
    accepted the initial mirrors come back with ``converged=False``.
    """
    mirrors = init.mirrors if isinstance(init, LinearCalibration) else tuple(init)
    problem = _Problem(observations, intrinsics)
    x0 = MirrorParams.from_mirrors(mirrors).to_vector()
    fit = levenberg_marquardt(problem.guarded, x0, max_iter=max_iter)
    refined = MirrorParams.from_vector(fit.x).to_mirrors()
    report = RefinementReport(fit.initial_cost, fit.final_cost, fit.iterations, fit.converged)
    return refined, report
