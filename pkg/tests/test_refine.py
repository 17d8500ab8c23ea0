"""Bundle adjustment: residual structure, Jacobian, convergence contracts."""

from dataclasses import replace

import numpy as np
import pytest

from kaleidocal.geometry import canonical_order
from kaleidocal.harness import error_normal
from kaleidocal.linear import calibrate_linear
from kaleidocal.optim import forward_jacobian
from kaleidocal.refine import (
    MirrorParams,
    _Problem,
    bundle_adjust,
    residual,
    residual_jacobian,
)
from kaleidocal.synth import generate


@pytest.fixture(scope="module")
def noisy_scene(rig):
    config = replace(rig, points=replace(rig.points, count=5, layout="planar"),
                     noise_sigma=1.0, seed=21)
    return generate(config)


class TestMirrorParams:
    def test_round_trip(self, rig):
        params = MirrorParams.from_mirrors(rig.mirrors)
        mirrors = params.to_mirrors()
        for orig, back in zip(rig.mirrors, mirrors):
            assert np.allclose(back.normal, orig.normal, atol=1e-12)
            assert np.isclose(back.distance, orig.distance / rig.mirrors[0].distance)

    def test_vector_round_trip(self, rig):
        params = MirrorParams.from_mirrors(rig.mirrors)
        assert np.allclose(MirrorParams.from_vector(params.to_vector()).to_vector(),
                           params.to_vector())

    def test_d1_fixed_at_one(self, rig):
        assert MirrorParams.from_mirrors(rig.mirrors).to_mirrors()[0].distance == 1.0


class TestResidual:
    def test_ground_truth_residual_tiny(self, rig, one_point_scene):
        truth, obs = one_point_scene
        r = residual(MirrorParams.from_mirrors(truth.mirrors), obs, rig.intrinsics)
        assert r.shape == (20,)
        assert np.abs(r).max() < 1e-7

    def test_entry_order_follows_chamber_order(self, rig, one_point_scene):
        """Displacing one chamber's pixel moves that chamber's residual slot."""
        truth, obs = one_point_scene
        params = MirrorParams.from_mirrors(truth.mirrors)
        order = canonical_order(obs[0])
        for j, seq in enumerate(order):
            bumped = [dict(obs[0])]
            bumped[0][seq] = bumped[0][seq] + np.array([3.0, 0.0])
            r = residual(params, bumped, rig.intrinsics)
            assert np.argmax(np.abs(r)) == 2 * j

    def test_perturbed_params_cost_decreases_after_step(self, rig, one_point_scene):
        truth, obs = one_point_scene
        params = MirrorParams.from_mirrors(truth.mirrors)
        vec = params.to_vector()
        vec[0] += 0.01
        r0 = residual(MirrorParams.from_vector(vec), obs, rig.intrinsics)
        assert r0 @ r0 > 0
        _, report = bundle_adjust(MirrorParams.from_vector(vec).to_mirrors(), obs, rig.intrinsics)
        assert report.final_cost < report.initial_cost

    def test_twenty_entries_per_point(self, rig, five_point_scene):
        truth, obs = five_point_scene
        r = residual(MirrorParams.from_mirrors(truth.mirrors), obs, rig.intrinsics)
        assert r.shape == (100,)


class TestJacobian:
    def test_matches_central_differences(self, rig, noisy_scene):
        truth, obs = noisy_scene
        rng = np.random.default_rng(3)
        problem = _Problem(obs, rig.intrinsics)
        base = MirrorParams.from_mirrors(truth.mirrors).to_vector()
        for _ in range(20):
            vec = base + rng.uniform(-0.02, 0.02, 8)
            jac = forward_jacobian(problem.residual, vec, problem.residual(vec))
            central = np.empty_like(jac)
            for k in range(8):
                up, dn = vec.copy(), vec.copy()
                up[k] += 1e-6
                dn[k] -= 1e-6
                central[:, k] = (problem.residual(up) - problem.residual(dn)) / 2e-6
            err = np.linalg.norm(jac - central) / np.linalg.norm(central)
            assert err < 1e-4

    def test_public_wrapper(self, rig, one_point_scene):
        truth, obs = one_point_scene
        params = MirrorParams.from_mirrors(truth.mirrors)
        jac = residual_jacobian(params, obs, rig.intrinsics)
        assert jac.shape == (20, 8)

    def test_stationary_at_ground_truth(self, rig, one_point_scene):
        truth, obs = one_point_scene
        problem = _Problem(obs, rig.intrinsics)
        vec = MirrorParams.from_mirrors(truth.mirrors).to_vector()
        r = problem.residual(vec)
        grad = forward_jacobian(problem.residual, vec, r).T @ r
        assert np.abs(grad).max() < 1e-8


class TestBundleAdjust:
    def test_ground_truth_init_stays_put(self, rig, one_point_scene):
        truth, obs = one_point_scene
        mirrors, report = bundle_adjust(truth.mirrors, obs, rig.intrinsics)
        assert report.converged
        assert report.iterations <= 2
        x0 = MirrorParams.from_mirrors(truth.mirrors).to_vector()
        x1 = MirrorParams.from_mirrors(mirrors).to_vector()
        assert np.abs(x1 - x0).max() <= 1e-9

    def test_noisy_cost_never_increases(self, rig, noisy_scene):
        _, obs = noisy_scene
        cal = calibrate_linear(obs, rig.intrinsics)
        _, report = bundle_adjust(cal, obs, rig.intrinsics)
        assert report.final_cost <= report.initial_cost

    def test_basin_of_attraction(self, rig, one_point_scene):
        truth, obs = one_point_scene
        vec = MirrorParams.from_mirrors(truth.mirrors).to_vector()
        vec[0] += 0.05
        vec[2] -= 0.05
        vec[5] += 0.05
        mirrors, report = bundle_adjust(
            MirrorParams.from_vector(vec).to_mirrors(), obs, rig.intrinsics
        )
        assert report.converged
        assert error_normal(mirrors, truth.mirrors) < 1e-6

    def test_d1_stays_one(self, rig, noisy_scene):
        _, obs = noisy_scene
        cal = calibrate_linear(obs, rig.intrinsics)
        mirrors, _ = bundle_adjust(cal, obs, rig.intrinsics)
        assert mirrors[0].distance == 1.0

    def test_metric_init_rescaled_to_gauge(self, rig, one_point_scene):
        truth, obs = one_point_scene
        mirrors, _ = bundle_adjust(truth.mirrors, obs, rig.intrinsics)
        scale = truth.mirrors[0].distance
        for est, true in zip(mirrors, truth.mirrors):
            assert np.isclose(est.distance * scale, true.distance, rtol=1e-9)

    def test_accepts_linear_calibration(self, rig, one_point_scene):
        _, obs = one_point_scene
        cal = calibrate_linear(obs, rig.intrinsics)
        mirrors, report = bundle_adjust(cal, obs, rig.intrinsics)
        assert report.final_cost <= report.initial_cost + 1e-18
