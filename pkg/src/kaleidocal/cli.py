"""Command-line interface: simulate, calibrate, triangulate, sweep.

All structured files are JSON written in a canonical form (sorted keys,
two-space indent) so identical inputs produce byte-identical outputs.
Chamber keys are digit strings over the mirror indices with "0" for the
base chamber, e.g. "0", "2", "13", "123". Exit codes: 0 success, 2 input
parse/validation failure, 3 scene generation failure, 4 missing chambers
or missing reference object, 5 degenerate estimation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .baselines import ReferenceObject, baseline_calibrate, pose_chambers, takahashi_calibrate
from .errors import (
    CalibrationError,
    GenerationError,
    InvalidPlaneError,
    KaleidoscopeError,
    MissingChambersError,
)
from .geometry import (
    CameraIntrinsics,
    MirrorPlane,
    canonical_order,
    chamber_key,
    parse_chamber_key,
)
from .linear import calibrate_linear, require_chambers, triangulate
from .refine import bundle_adjust
from .synth import PointSpec, SceneConfig, default_rig, generate

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_GENERATION = 3
EXIT_MISSING = 4
EXIT_DEGENERATE = 5


class InputError(Exception):
    """Input file fails to parse or validate."""


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc


def _dump_json(obj, path: str) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _print_summary(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _as_matrix(value, what: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{what}: not a numeric matrix") from exc
    if arr.shape != (3, 3):
        raise InputError(f"{what}: expected a 3x3 matrix, got shape {arr.shape}")
    return arr


def _parse_intrinsics(value) -> CameraIntrinsics:
    try:
        return CameraIntrinsics(_as_matrix(value, "intrinsics"))
    except ValueError as exc:
        raise InputError(f"intrinsics: {exc}") from exc


def _parse_mirror(value) -> MirrorPlane:
    if not isinstance(value, dict) or "normal" not in value or "distance" not in value:
        raise InputError("mirror entries need 'normal' and 'distance'")
    try:
        return MirrorPlane(np.array(value["normal"], dtype=float), float(value["distance"]))
    except (TypeError, ValueError, InvalidPlaneError) as exc:
        raise InputError(f"mirror: {exc}") from exc


def _parse_scene_config(doc) -> SceneConfig:
    if not isinstance(doc, dict):
        raise InputError("scene config must be a JSON object")
    base = default_rig()
    intrinsics = _parse_intrinsics(doc["intrinsics"]) if "intrinsics" in doc else base.intrinsics
    if "mirrors" in doc:
        entries = doc["mirrors"]
        if not isinstance(entries, list) or len(entries) != 3:
            raise InputError("'mirrors' must list exactly three planes")
        mirrors = tuple(_parse_mirror(m) for m in entries)
    else:
        mirrors = base.mirrors
    points = base.points
    if "points" in doc:
        spec = doc["points"]
        if not isinstance(spec, dict):
            raise InputError("'points' must be an object")
        try:
            points = PointSpec(
                count=int(spec.get("count", points.count)),
                layout=spec.get("layout", points.layout),
                center=tuple(spec.get("center", points.center)),
                extent=float(spec.get("extent", points.extent)),
            )
        except (TypeError, ValueError) as exc:
            raise InputError(f"points: {exc}") from exc
    sequences = base.sequences
    if "sequences" in doc:
        try:
            sequences = tuple(parse_chamber_key(str(k)) for k in doc["sequences"])
        except (ValueError, KaleidoscopeError) as exc:
            raise InputError(f"sequences: {exc}") from exc
    try:
        return SceneConfig(
            intrinsics=intrinsics,
            mirrors=mirrors,
            points=points,
            sequences=sequences,
            noise_sigma=float(doc.get("noise_sigma", 0.0)),
            seed=int(doc.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"scene config: {exc}") from exc


def _parse_correspondences(doc) -> tuple[CameraIntrinsics, list[dict]]:
    if not isinstance(doc, dict) or "intrinsics" not in doc or "points" not in doc:
        raise InputError("correspondence file needs 'intrinsics' and 'points'")
    intrinsics = _parse_intrinsics(doc["intrinsics"])
    if not isinstance(doc["points"], list) or not doc["points"]:
        raise InputError("'points' must be a non-empty list")
    observations = []
    for idx, entry in enumerate(doc["points"]):
        if not isinstance(entry, dict):
            raise InputError(f"points[{idx}]: must map chamber keys to pixels")
        obs = {}
        for key, uv in entry.items():
            try:
                seq = parse_chamber_key(str(key))
            except (ValueError, KaleidoscopeError) as exc:
                raise InputError(f"points[{idx}]: {exc}") from exc
            pix = np.array(uv, dtype=float).reshape(-1)
            if pix.shape != (2,) or not np.all(np.isfinite(pix)):
                raise InputError(f"points[{idx}][{key!r}]: expected finite [u, v]")
            obs[seq] = pix
        if () not in obs:
            raise InputError(f"points[{idx}]: base chamber '0' is required")
        observations.append(obs)
    return intrinsics, observations


def _parse_reference(doc) -> ReferenceObject:
    if not isinstance(doc, dict) or "landmarks" not in doc:
        raise InputError("reference file needs 'landmarks'")
    try:
        landmarks = np.array(doc["landmarks"], dtype=float)
        return ReferenceObject(landmarks.reshape(-1, 3), planar=bool(doc.get("planar", True)))
    except (TypeError, ValueError) as exc:
        raise InputError(f"reference object: {exc}") from exc


def _parse_sweep_spec(doc) -> harness.SweepSpec:
    if not isinstance(doc, dict) or "axis" not in doc or "levels" not in doc:
        raise InputError("sweep spec needs 'axis' and 'levels'")
    methods = harness.default_methods()
    if "methods" in doc:
        if not isinstance(doc["methods"], list) or not doc["methods"]:
            raise InputError("'methods' must be a non-empty list")
        parsed = []
        for entry in doc["methods"]:
            if not isinstance(entry, dict) or "method" not in entry:
                raise InputError("each method entry needs a 'method' name")
            try:
                parsed.append(
                    harness.MethodConfig(
                        method=str(entry["method"]),
                        count=int(entry.get("count", 5)),
                        layout=str(entry.get("layout", "planar")),
                        label=entry.get("label"),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise InputError(f"method entry: {exc}") from exc
        methods = tuple(parsed)
    try:
        return harness.SweepSpec(
            axis=str(doc["axis"]),
            levels=tuple(float(v) for v in doc["levels"]),
            methods=methods,
            trials=int(doc.get("trials", 100)),
            seed=int(doc.get("seed", 0)),
            sigma_q=float(doc.get("sigma_q", 1.0)),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"sweep spec: {exc}") from exc


def _mirror_doc(mirror: MirrorPlane) -> dict:
    return {
        "normal": [float(v) for v in mirror.normal],
        "distance": float(mirror.distance),
    }


def _truth_sidecar_path(output: str) -> str:
    out = str(output)
    if out.endswith(".json"):
        out = out[: -len(".json")]
    return out + ".truth.json"


def cmd_simulate(args) -> int:
    config = _parse_scene_config(_load_json(args.config))
    truth, observations = generate(config)
    corr = {
        "intrinsics": [[float(v) for v in row] for row in config.intrinsics.matrix],
        "points": [
            {chamber_key(s): [float(uv[0]), float(uv[1])] for s, uv in obs.items()}
            for obs in observations
        ],
    }
    _dump_json(corr, args.output)
    sidecar = {
        "mirrors": [_mirror_doc(m) for m in truth.mirrors],
        "points": [[float(v) for v in p] for p in truth.points],
    }
    _dump_json(sidecar, _truth_sidecar_path(args.output))
    _print_summary(
        {
            "points": len(observations),
            "chambers": len(config.sequences),
            "noise_sigma": config.noise_sigma,
            "output": str(args.output),
        }
    )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    intrinsics, observations = _parse_correspondences(_load_json(args.input))
    diagnostics: dict = {}
    if args.method == "proposed":
        cal = calibrate_linear(observations, intrinsics)
        mirrors = cal.mirrors
        scale = "d1=1"
        diagnostics["singular_values"] = {
            name: [diag.sigma_smallest, diag.sigma_second]
            for name, diag in cal.diagnostics.items()
        }
        diagnostics["degenerate"] = cal.degenerate
        if args.ba == "on":
            mirrors, report = bundle_adjust(cal, observations, intrinsics)
            diagnostics["bundle_adjustment"] = {
                "initial_cost_px2": report.initial_cost,
                "final_cost_px2": report.final_cost,
                "iterations": report.iterations,
                "converged": report.converged,
            }
    else:
        if args.reference is None:
            print(f"error: --method {args.method} requires --reference", file=sys.stderr)
            return EXIT_MISSING
        reference = _parse_reference(_load_json(args.reference))
        require_chambers(observations)
        if any(len(obs) != len(observations[0]) for obs in observations):
            raise InputError("all points must observe the same chambers")
        chamber_pixels = {
            s: np.array([obs[s] for obs in observations])
            for s in canonical_order(observations[0])
        }
        posed = pose_chambers(chamber_pixels, reference, intrinsics)
        calibrator = baseline_calibrate if args.method == "baseline" else takahashi_calibrate
        mirrors = calibrator(posed)
        scale = "metric"

    e_rep = harness.error_reprojection(mirrors, observations, intrinsics)
    per_point = [
        harness.error_reprojection(mirrors, [obs], intrinsics) for obs in observations
    ]
    diagnostics["per_point_e_rep_px"] = per_point
    _dump_json(
        {
            "mirrors": [_mirror_doc(m) for m in mirrors],
            "scale": scale,
            "diagnostics": diagnostics,
        },
        args.output,
    )
    _print_summary({"method": args.method, "ba": args.ba == "on", "e_rep_px": e_rep})
    return EXIT_OK


def cmd_triangulate(args) -> int:
    intrinsics, observations = _parse_correspondences(_load_json(args.input))
    doc = _load_json(args.calibration)
    if not isinstance(doc, dict) or "mirrors" not in doc or len(doc["mirrors"]) != 3:
        raise InputError("calibration file needs three 'mirrors'")
    mirrors = tuple(_parse_mirror(m) for m in doc["mirrors"])
    points = triangulate(observations, intrinsics, mirrors)
    _dump_json({"points": [[float(v) for v in p] for p in points]}, args.output)
    e_rep = harness.error_reprojection(mirrors, observations, intrinsics)
    _print_summary({"points": len(points), "e_rep_px": e_rep})
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _parse_sweep_spec(_load_json(args.spec))
    rows = harness.run_sweep(spec)
    Path(args.output).write_text(harness.sweep_csv(rows))
    _print_summary({"rows": len(rows), "output": str(args.output)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kaleidocal",
        description="Mirror calibration for kaleidoscopic imaging systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic correspondence file")
    p.add_argument("config", help="scene config JSON")
    p.add_argument("-o", "--output", required=True, help="correspondence JSON to write")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="estimate mirror planes from correspondences")
    p.add_argument("input", help="correspondence JSON")
    p.add_argument("-o", "--output", required=True, help="calibration JSON to write")
    p.add_argument("--method", choices=("proposed", "baseline", "takahashi"), default="proposed")
    p.add_argument("--ba", choices=("on", "off"), default="off",
                   help="bundle-adjust after the linear solve (proposed only)")
    p.add_argument("--reference", help="reference object JSON (baseline/takahashi)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("triangulate", help="triangulate points given a calibration")
    p.add_argument("input", help="correspondence JSON")
    p.add_argument("calibration", help="calibration JSON")
    p.add_argument("-o", "--output", required=True, help="points JSON to write")
    p.set_defaults(func=cmd_triangulate)

    p = sub.add_parser("sweep", help="run a Monte-Carlo sweep to CSV")
    p.add_argument("spec", help="sweep spec JSON")
    p.add_argument("-o", "--output", required=True, help="CSV to write")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "ba", "off") == "on" and getattr(args, "method", "proposed") != "proposed":
        parser.error("--ba is only available with --method proposed")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except GenerationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except MissingChambersError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except CalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
