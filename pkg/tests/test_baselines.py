"""Reference-object methods: PnP poses, averaging- and orthogonality-based planes."""

from dataclasses import replace

import numpy as np
import pytest

from kaleidocal.baselines import (
    INTERSECTION_PAIRS,
    ReferenceObject,
    baseline_calibrate,
    estimate_pose,
    pose_chambers,
    takahashi_calibrate,
)
from kaleidocal.errors import DegenerateConfigurationError, PoseEstimationError
from kaleidocal.geometry import DEFAULT_SEQUENCES, compose, project
from kaleidocal.harness import error_distance, error_normal
from kaleidocal.linear import calibrate_linear
from kaleidocal.synth import generate, planar_landmarks
from scipy.spatial.transform import Rotation


@pytest.fixture(scope="module")
def board():
    return ReferenceObject(planar_landmarks(5, 0.12), planar=True)


def pose_scene(rig, board, rotation, translation):
    """Exact per-chamber pixels and camera-frame landmarks for a posed board."""
    base = board.landmarks @ rotation.T + translation
    pixels, posed = {}, {}
    for seq in DEFAULT_SEQUENCES:
        pts = compose(seq, rig.mirrors).apply(base)
        posed[seq] = pts
        pixels[seq] = project(rig.intrinsics, pts)
    return pixels, posed


@pytest.fixture(scope="module")
def exact_scene(rig, board):
    rot = Rotation.from_euler("xyz", [8.0, -6.0, 25.0], degrees=True).as_matrix()
    return pose_scene(rig, board, rot, np.array([0.01, -0.02, 1.1]))


class TestEstimatePose:
    def test_direct_view_exact(self, rig, board, exact_scene):
        pixels, posed = exact_scene
        pose = estimate_pose(pixels[()], board, rig.intrinsics, mirrored=False)
        assert np.abs(pose.apply(board.landmarks) - posed[()]).max() < 1e-7
        assert np.isclose(np.linalg.det(pose.linear), 1.0)

    def test_mirrored_view_exact(self, rig, board, exact_scene):
        pixels, posed = exact_scene
        for seq in ((1,), (2,), (3,)):
            pose = estimate_pose(pixels[seq], board, rig.intrinsics, mirrored=True)
            assert np.abs(pose.apply(board.landmarks) - posed[seq]).max() < 1e-7
            assert np.isclose(np.linalg.det(pose.linear), -1.0)

    def test_double_reflection_is_rigid(self, rig, board, exact_scene):
        pixels, posed = exact_scene
        pose = estimate_pose(pixels[(1, 2)], board, rig.intrinsics, mirrored=False)
        assert np.abs(pose.apply(board.landmarks) - posed[(1, 2)]).max() < 1e-7

    def test_half_turn_in_plane_pose_recovered(self, rig, board):
        """The 180-degree in-plane candidate pair is disambiguated by cost."""
        rot = Rotation.from_euler("xyz", [5.0, 4.0, 180.0], degrees=True).as_matrix()
        pixels, posed = pose_scene(rig, board, rot, np.array([0.0, 0.01, 1.05]))
        pose = estimate_pose(pixels[()], board, rig.intrinsics, mirrored=False)
        assert np.abs(pose.apply(board.landmarks) - posed[()]).max() < 1e-7

    def test_too_few_landmarks(self, rig, board):
        with pytest.raises(PoseEstimationError):
            estimate_pose(np.zeros((3, 2)), ReferenceObject(planar_landmarks(3)), rig.intrinsics)

    def test_collinear_landmarks_rejected(self):
        line = np.column_stack([np.linspace(0, 1, 5), np.zeros(5), np.zeros(5)])
        with pytest.raises(DegenerateConfigurationError):
            ReferenceObject(line)

    def test_nonplanar_dlt_path(self, rig):
        rng = np.random.default_rng(2)
        landmarks = rng.uniform(-0.06, 0.06, size=(8, 3))
        obj = ReferenceObject(landmarks, planar=False)
        rot = Rotation.from_euler("xyz", [10.0, -4.0, 30.0], degrees=True).as_matrix()
        pts = landmarks @ rot.T + np.array([0.0, 0.0, 1.1])
        pixels = project(rig.intrinsics, pts)
        pose = estimate_pose(pixels, obj, rig.intrinsics, mirrored=False)
        assert np.abs(pose.apply(landmarks) - pts).max() < 1e-7

    def test_noisy_pose_reasonable(self, rig, board, exact_scene):
        pixels, posed = exact_scene
        rng = np.random.default_rng(3)
        noisy = pixels[(2,)] + rng.normal(0, 1.0, pixels[(2,)].shape)
        pose = estimate_pose(noisy, board, rig.intrinsics, mirrored=True)
        assert np.abs(pose.apply(board.landmarks) - posed[(2,)]).max() < 0.05


class TestPoseChambers:
    def test_all_chambers_recovered(self, rig, board, exact_scene):
        pixels, posed = exact_scene
        result = pose_chambers(pixels, board, rig.intrinsics)
        for seq in DEFAULT_SEQUENCES:
            assert np.abs(result[seq] - posed[seq]).max() < 1e-7


class TestBaselineCalibrate:
    def test_exact_posed_landmarks(self, rig, exact_scene):
        _, posed = exact_scene
        mirrors = baseline_calibrate(posed)
        for est, true in zip(mirrors, rig.mirrors):
            assert np.abs(est.normal - true.normal).max() < 1e-9
            assert abs(est.distance - true.distance) < 1e-9

    def test_printed_distance_formula_single_landmark(self, rig, exact_scene):
        """d_1 equals the away-facing normal dotted with the six-chamber mean."""
        _, posed = exact_scene
        single = {seq: pts[:1] for seq, pts in posed.items()}
        mirrors = baseline_calibrate(single)
        n_away = -mirrors[0].normal
        six = (single[()] + single[(1,)] + single[(2,)] + single[(3,)]
               + single[(1, 2)] + single[(1, 3)])
        assert np.isclose(mirrors[0].distance, float(n_away @ six[0]) / 6.0, atol=1e-12)

    def test_landmark_permutation_invariant(self, rig, exact_scene):
        _, posed = exact_scene
        perm = np.array([3, 1, 4, 0, 2])
        shuffled = {seq: pts[perm] for seq, pts in posed.items()}
        m1 = baseline_calibrate(posed)
        m2 = baseline_calibrate(shuffled)
        for a, b in zip(m1, m2):
            assert np.allclose(a.normal, b.normal, atol=1e-12)
            assert np.isclose(a.distance, b.distance, atol=1e-12)

    def test_translation_along_plane_preserves_that_mirror(self, rig, board):
        """Sliding the scene parallel to mirror 1 leaves its plane estimate."""
        rot = Rotation.from_euler("xyz", [3.0, 2.0, 10.0], degrees=True).as_matrix()
        n1 = rig.mirrors[0].normal
        slide = np.cross(n1, [0.0, 0.0, 1.0])
        slide = 0.02 * slide / np.linalg.norm(slide)
        _, posed_a = pose_scene(rig, board, rot, np.array([0.0, 0.0, 1.1]))
        _, posed_b = pose_scene(rig, board, rot, np.array([0.0, 0.0, 1.1]) + slide)
        ma = baseline_calibrate(posed_a)[0]
        mb = baseline_calibrate(posed_b)[0]
        assert np.allclose(ma.normal, mb.normal, atol=1e-9)
        assert np.isclose(ma.distance, mb.distance, atol=1e-9)


class TestTakahashiCalibrate:
    def test_exact_posed_landmarks(self, rig, exact_scene):
        _, posed = exact_scene
        mirrors = takahashi_calibrate(posed)
        for est, true in zip(mirrors, rig.mirrors):
            assert np.abs(est.normal - true.normal).max() < 1e-9
            assert abs(est.distance - true.distance) < 1e-9

    def test_orthogonality_rows_vanish_on_exact_data(self, rig, exact_scene):
        _, posed = exact_scene
        normals = [m.normal for m in rig.mirrors]
        for (i, j), pairs in INTERSECTION_PAIRS.items():
            m = np.cross(normals[i - 1], normals[j - 1])
            m /= np.linalg.norm(m)
            for a, b in pairs:
                assert np.abs((posed[a] - posed[b]) @ m).max() < 1e-12

    def test_intersection_matches_normal_cross(self, rig, exact_scene):
        _, posed = exact_scene
        rows = np.vstack([posed[a] - posed[b] for a, b in INTERSECTION_PAIRS[(1, 2)]])
        _, _, vt = np.linalg.svd(rows)
        m12 = vt[-1]
        expected = np.cross(rig.mirrors[0].normal, rig.mirrors[1].normal)
        expected /= np.linalg.norm(expected)
        assert min(np.linalg.norm(m12 - expected), np.linalg.norm(m12 + expected)) < 1e-9

    def test_parallel_intersections_degenerate(self, degenerate_intersection_rig):
        rig = degenerate_intersection_rig
        board = ReferenceObject(planar_landmarks(4, 0.03), planar=True)
        rot = Rotation.from_euler("xyz", [4.0, -3.0, 15.0], degrees=True).as_matrix()
        base = board.landmarks @ rot.T + np.array([0.02, 0.08, 0.5])
        posed = {s: compose(s, rig.mirrors).apply(base) for s in DEFAULT_SEQUENCES}
        with pytest.raises(DegenerateConfigurationError, match="parallel"):
            takahashi_calibrate(posed)


class TestAgreementWithLinear:
    def test_baselines_match_linear_on_exact_input(self, rig, board, exact_scene):
        pixels, posed = exact_scene
        observations = [
            {seq: pixels[seq][l] for seq in DEFAULT_SEQUENCES}
            for l in range(len(board.landmarks))
        ]
        cal = calibrate_linear(observations, rig.intrinsics)
        for mirrors in (baseline_calibrate(posed), takahashi_calibrate(posed)):
            assert error_normal(mirrors, cal.mirrors) < 1e-8
            metric = np.array([m.distance for m in mirrors])
            gauge = np.array([m.distance for m in cal.mirrors]) * mirrors[0].distance
            assert np.abs(metric - gauge).max() < 1e-8
