"""Evaluation metrics and the Monte-Carlo sweep engine.

Sweeps re-run every configured method on freshly generated noisy scenes
over a grid of noise levels or point counts, mirroring the synthetic
protocol the methods were designed under. Reference figures from one
physical three-mirror rig: average reprojection errors of 3.37 px for the
kaleidoscopic method, 4.75 px for the PnP-averaging baseline, and 13.6 px
for the orthogonality method. Those depend on that rig's mirrors, optics,
and corner localization and cannot be reproduced in simulation; nothing
here asserts them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .baselines import ReferenceObject, baseline_calibrate, pose_chambers, takahashi_calibrate
from .errors import KaleidoscopeError
from .geometry import CameraIntrinsics, MirrorPlane, canonical_order, compose, project
from .linear import calibrate_linear, triangulate
from .refine import bundle_adjust
from .synth import SceneConfig, default_rig, generate, planar_landmarks

METHODS = ("proposed-linear", "proposed-ba", "baseline", "takahashi")
SWEEP_COLUMNS = (
    "axis_value",
    "method",
    "mean_e_n",
    "std_e_n",
    "mean_e_d",
    "std_e_d",
    "mean_e_rep",
    "std_e_rep",
    "mean_n_iter",
    "degenerate_count",
    "trials",
)


def _normals_of(est) -> np.ndarray:
    if not isinstance(est, np.ndarray) and isinstance(next(iter(est)), MirrorPlane):
        return np.array([m.normal for m in est])
    return np.asarray(est, dtype=float).reshape(3, 3)


def _distances_of(est) -> np.ndarray:
    if not isinstance(est, np.ndarray) and isinstance(next(iter(est)), MirrorPlane):
        return np.array([m.distance for m in est])
    return np.asarray(est, dtype=float).reshape(3)


def error_normal(est, truth) -> float:
    """Mean absolute angle (rad) between estimated and true normals.

    Accepts (3, 3) arrays of unit rows or sequences of MirrorPlane. The
    angle is evaluated as atan2(|n x n_true|, n . n_true), which equals
    |acos(n . n_true)| but stays accurate (and NaN-free, whatever the
    rounding of the dot product) for near-identical vectors.
    """
    a, b = _normals_of(est), _normals_of(truth)
    dots = np.einsum("ij,ij->i", a, b)
    crosses = np.linalg.norm(np.cross(a, b), axis=1)
    return float(np.mean(np.abs(np.arctan2(crosses, dots))))


def error_distance(est, truth, scale_free: bool = True) -> float:
    """Mean absolute distance error, in the units of the ground truth.

    ``scale_free=True`` treats the estimate as carrying the d1 = 1 gauge
    and multiplies it by the true first distance before comparing; metric
    estimates (the reference-object methods) pass ``scale_free=False``.
    """
    d_est, d_true = _distances_of(est), _distances_of(truth)
    if scale_free:
        d_est = d_est * d_true[0]
    return float(np.mean(np.abs(d_est - d_true)))


def error_reprojection(mirrors, observations, intrinsics: CameraIntrinsics) -> float:
    """Mean per-chamber reprojection magnitude (px) of a calibration.

    Triangulates every observed point from the given mirrors, reprojects
    it through every observed chamber, and averages the 2D residual norms
    over all chambers and points.
    """
    points = triangulate(observations, intrinsics, mirrors)
    orders = [canonical_order(obs) for obs in observations]
    reproj = {
        s: project(intrinsics, compose(s, mirrors).apply(points))
        for s in {s for order in orders for s in order}
    }
    total = 0.0
    count = 0
    for l, (obs, order) in enumerate(zip(observations, orders)):
        measured = np.array([obs[s] for s in order])
        predicted = np.array([reproj[s][l] for s in order])
        total += float(np.linalg.norm(measured - predicted, axis=1).sum())
        count += len(order)
    return total / count


@dataclass(frozen=True)
class MethodConfig:
    """One curve of a sweep: a method plus its point configuration."""

    method: str
    count: int = 5
    layout: str = "planar"
    label: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method in ("baseline", "takahashi") and self.layout != "planar":
            raise ValueError(f"{self.method} requires a planar reference object")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.label is None:
            object.__setattr__(self, "label", f"{self.method}-{self.layout}{self.count}")

    def with_count(self, count: int) -> "MethodConfig":
        return MethodConfig(self.method, count, self.layout, self.label)


@dataclass(frozen=True)
class TrialResult:
    e_n: float  # rad
    e_d: float  # ground-truth metric units
    e_rep: float  # px
    n_iter: int
    degenerate: bool


@dataclass(frozen=True)
class SweepSpec:
    """Grid definition for a Monte-Carlo sweep."""

    axis: str  # "sigma_q" | "n_points"
    levels: tuple[float, ...]
    methods: tuple[MethodConfig, ...]
    trials: int = 100
    seed: int = 0
    sigma_q: float = 1.0  # noise level used when sweeping n_points
    rig: SceneConfig | None = None

    def __post_init__(self):
        if self.axis not in ("sigma_q", "n_points"):
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        levels = tuple(float(v) for v in self.levels)
        if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be non-empty and strictly increasing")
        if self.axis == "n_points" and any(not v.is_integer() or v < 1 for v in levels):
            raise ValueError("n_points levels must be positive integers")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        methods = tuple(self.methods)
        labels = [m.label for m in methods]
        if len(set(labels)) != len(labels):
            raise ValueError("method labels must be unique")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "methods", methods)


@dataclass(frozen=True)
class SweepRow:
    """Aggregate of one (cell, method): means/stds over non-degenerate trials."""

    axis_value: float
    method: str
    mean_e_n: float
    std_e_n: float
    mean_e_d: float
    std_e_d: float
    mean_e_rep: float
    std_e_rep: float
    mean_n_iter: float
    degenerate_count: int
    trials: int


def default_methods() -> tuple[MethodConfig, ...]:
    """The standard eight sweep configurations."""
    return (
        MethodConfig("proposed-linear", 5, "random"),
        MethodConfig("proposed-ba", 5, "random"),
        MethodConfig("proposed-linear", 5, "planar"),
        MethodConfig("proposed-ba", 5, "planar"),
        MethodConfig("proposed-linear", 1, "random"),
        MethodConfig("proposed-ba", 1, "random"),
        MethodConfig("baseline", 5, "planar"),
        MethodConfig("takahashi", 5, "planar"),
    )


def default_noise_sweep(trials: int = 100, seed: int = 0) -> SweepSpec:
    """Noise-level sweep at five points per method."""
    return SweepSpec("sigma_q", (0.0, 0.5, 1.0, 1.5, 2.0), default_methods(), trials, seed)


def default_count_sweep(trials: int = 100, seed: int = 0) -> SweepSpec:
    """Point-count sweep at 1 px noise."""
    return SweepSpec("n_points", (1.0, 2.0, 3.0, 5.0, 8.0), default_methods(), trials, seed)


def _run_method(cfg: MethodConfig, observations, truth, intrinsics, shared: dict) -> TrialResult:
    degenerate = False
    n_iter = 0
    if cfg.method in ("proposed-linear", "proposed-ba"):
        if "linear" not in shared:
            shared["linear"] = calibrate_linear(observations, intrinsics)
        cal = shared["linear"]
        degenerate = cal.degenerate
        mirrors = cal.mirrors
        if cfg.method == "proposed-ba":
            mirrors, report = bundle_adjust(cal, observations, intrinsics)
            n_iter = report.iterations
        scale_free = True
    else:
        if "posed" not in shared:
            obj = ReferenceObject(planar_landmarks(cfg.count), planar=True)
            chamber_pixels = {
                s: np.array([obs[s] for obs in observations])
                for s in canonical_order(observations[0])
            }
            shared["posed"] = pose_chambers(chamber_pixels, obj, intrinsics)
        calibrator = baseline_calibrate if cfg.method == "baseline" else takahashi_calibrate
        mirrors = calibrator(shared["posed"])
        scale_free = False
    return TrialResult(
        e_n=error_normal(mirrors, truth.mirrors),
        e_d=error_distance(mirrors, truth.mirrors, scale_free=scale_free),
        e_rep=error_reprojection(mirrors, observations, intrinsics),
        n_iter=n_iter,
        degenerate=degenerate,
    )


def run_trial(methods, sigma: float, seed: int, rig: SceneConfig | None = None) -> dict:
    """One trial: every method on observations shared within a point spec.

    Methods with identical (count, layout) consume identical noisy
    observations (and share the expensive intermediates: the linear
    calibration, the per-chamber poses). A method failing with a
    calibration or geometry error yields a degenerate TrialResult with
    NaN metrics.
    """
    rig = rig if rig is not None else default_rig()
    cache: dict = {}
    results = {}
    for cfg in methods:
        key = (cfg.count, cfg.layout)
        if key not in cache:
            config = replace(
                rig,
                points=replace(rig.points, count=cfg.count, layout=cfg.layout),
                noise_sigma=sigma,
                seed=seed,
            )
            cache[key] = (*generate(config), {})
        truth, observations, shared = cache[key]
        try:
            results[cfg.label] = _run_method(cfg, observations, truth, rig.intrinsics, shared)
        except KaleidoscopeError:
            results[cfg.label] = TrialResult(math.nan, math.nan, math.nan, 0, True)
    return results


def run_sweep(spec: SweepSpec) -> list[SweepRow]:
    """Run the full grid; deterministic given the spec's seed.

    Per-trial seeds are ``seed + trial_index``, shared across cells so
    noise levels are compared on paired scenes. Degenerate trials are
    excluded from the means but counted.
    """
    rows = []
    for level in spec.levels:
        if spec.axis == "sigma_q":
            sigma = level
            methods = spec.methods
        else:
            sigma = spec.sigma_q
            methods = tuple(m.with_count(int(level)) for m in spec.methods)
        per_method: dict = {m.label: [] for m in methods}
        for trial in range(spec.trials):
            outcome = run_trial(methods, sigma, spec.seed + trial, spec.rig)
            for label, result in outcome.items():
                per_method[label].append(result)
        for cfg in methods:
            rows.append(_aggregate(level, cfg.label, per_method[cfg.label]))
    return rows


def _aggregate(axis_value: float, label: str, results: list[TrialResult]) -> SweepRow:
    good = [r for r in results if not r.degenerate]

    def stats(values):
        if not good:
            return math.nan, math.nan
        arr = np.array(values)
        return float(arr.mean()), float(arr.std())

    mean_en, std_en = stats([r.e_n for r in good])
    mean_ed, std_ed = stats([r.e_d for r in good])
    mean_rep, std_rep = stats([r.e_rep for r in good])
    mean_iter, _ = stats([r.n_iter for r in good])
    return SweepRow(
        axis_value=axis_value,
        method=label,
        mean_e_n=mean_en,
        std_e_n=std_en,
        mean_e_d=mean_ed,
        std_e_d=std_ed,
        mean_e_rep=mean_rep,
        std_e_rep=std_rep,
        mean_n_iter=mean_iter,
        degenerate_count=len(results) - len(good),
        trials=len(results),
    )


def format_value(value: float) -> str:
    """Fixed decimal notation with nine significant digits."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if value == 0.0:
        return "0.000000000"
    rounded = float(f"{value:.9g}")
    exponent = math.floor(math.log10(abs(rounded)))
    return f"{rounded:.{max(0, 8 - exponent)}f}"


def sweep_csv(rows) -> str:
    """Render sweep rows as the CSV contract (header + one row per cell/method)."""
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(
            ",".join(
                [
                    format_value(row.axis_value),
                    row.method,
                    format_value(row.mean_e_n),
                    format_value(row.std_e_n),
                    format_value(row.mean_e_d),
                    format_value(row.std_e_d),
                    format_value(row.mean_e_rep),
                    format_value(row.std_e_rep),
                    format_value(row.mean_n_iter),
                    str(row.degenerate_count),
                    str(row.trials),
                ]
            )
        )
    return "\n".join(lines) + "\n"
