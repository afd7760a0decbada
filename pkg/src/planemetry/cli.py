"""Command-line interface for all measurement workflows.

Angles are degrees at this boundary and radians inside the library. Meters
print with 4 decimals and degrees with 3; ``--json`` output carries full
precision.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from . import __version__
from .errors import PlanemetryError
from .geometry import (
    PixelPoint,
    deg_to_rad,
    load_camera_config,
    rad_to_deg,
    rotate_world_to_cam,
)
from .homography import bev_from_camera, load_raster, save_raster, warp_raster
from .mono import (
    CalibrationCorrection,
    MonoRangingModel,
    fit_calibration,
    load_control_points,
    locate,
    sensitivity_sweep,
)
from .mosaic import BaSolution, evaluate as mosaic_evaluate, load_graph, save_graph, solve as mosaic_solve
from .optim import LmConfig
from .sim import (
    NoiseModel,
    evaluate_mono,
    evaluate_stereo,
    generate_ba_graph,
    generate_observations,
    load_noise,
    load_scene,
)
from .stereo import load_rig, range_target


def _parse_pixel(text: str) -> PixelPoint:
    try:
        u, v = (float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"pixel must be 'u,v', got {text!r}")
    return PixelPoint(u, v)


def _load_correction(path: str) -> CalibrationCorrection:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return CalibrationCorrection(
        delta_pitch=deg_to_rad(float(data.get("delta_pitch_deg", 0.0))),
        delta_u0=float(data.get("delta_u0", 0.0)),
        delta_v0=float(data.get("delta_v0", 0.0)),
        delta_height=float(data.get("delta_height_m", 0.0)),
    )


def cmd_mono(args) -> int:
    intr, pose = load_camera_config(args.camera)
    corr = _load_correction(args.calib) if args.calib else None
    model = MonoRangingModel(intr, pose, corr)
    point = locate(model, args.pixel)
    # Slant range is measured from the optical center, in the camera frame.
    cx, cy = rotate_world_to_cam(point.x - pose.position[0], point.y - pose.position[1], pose.yaw)
    _, _, _, height = model.effective()
    slant = math.sqrt(cx * cx + cy * cy + height * height)
    if args.json:
        print(json.dumps({"X_m": point.x, "Y_m": point.y, "slant_m": slant}))
    else:
        print(f"X = {point.x:.4f} m")
        print(f"Y = {point.y:.4f} m")
        print(f"slant = {slant:.4f} m")
    return 0


def cmd_stereo(args) -> int:
    rig = load_rig(args.rig)
    sol = range_target(rig, args.pixel_a, args.pixel_b)
    if args.json:
        print(json.dumps({
            "dist_a_m": sol.dist_a,
            "dist_b_m": sol.dist_b,
            "target_m": [sol.target.x, sol.target.y],
            "alpha_deg": rad_to_deg(sol.alpha),
            "beta_deg": rad_to_deg(sol.beta),
            "gamma_deg": rad_to_deg(sol.gamma),
        }))
    else:
        print(f"dist_a = {sol.dist_a:.4f} m")
        print(f"dist_b = {sol.dist_b:.4f} m")
        print(f"target = ({sol.target.x:.4f}, {sol.target.y:.4f}) m")
        print(f"alpha = {rad_to_deg(sol.alpha):.3f} deg")
        print(f"beta = {rad_to_deg(sol.beta):.3f} deg")
        print(f"gamma = {rad_to_deg(sol.gamma):.3f} deg")
    return 0


def cmd_sensitivity(args) -> int:
    curve = sensitivity_sweep(
        args.height,
        deg_to_rad(args.alpha_min),
        deg_to_rad(args.alpha_max),
        deg_to_rad(args.step),
    )
    if args.out:
        curve.write_csv(args.out)
        print(f"wrote {len(curve.samples)} samples to {args.out}")
    else:
        print("alpha_deg,Y_m")
        for pitch, y in curve.samples:
            print(f"{rad_to_deg(pitch):.6f},{y:.6f}")
    return 0


def cmd_calibrate(args) -> int:
    intr, pose = load_camera_config(args.camera)
    observations = load_control_points(args.points)
    result = fit_calibration(intr, pose, observations, fit_height=args.fit_height)
    corr = result.correction
    payload = {
        "delta_pitch_deg": rad_to_deg(corr.delta_pitch),
        "delta_u0": corr.delta_u0,
        "delta_v0": corr.delta_v0,
        "delta_height_m": corr.delta_height,
        "rms_m": result.rms,
        "iterations": result.iterations,
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
    print(f"delta_pitch = {rad_to_deg(corr.delta_pitch):.3f} deg")
    print(f"delta_u0 = {corr.delta_u0:.4f} px")
    print(f"delta_v0 = {corr.delta_v0:.4f} px")
    if args.fit_height:
        print(f"delta_height = {corr.delta_height:.4f} m")
    print(f"rms = {result.rms:.4f} m")
    return 0


def cmd_bev(args) -> int:
    intr, pose = load_camera_config(args.camera)
    h = bev_from_camera(intr, pose, args.scale)
    if args.pixel is not None:
        gx, gy = h.apply(args.pixel)
        if args.json:
            print(json.dumps({"X_m": gx / args.scale, "Y_m": gy / args.scale,
                              "bev_px": [gx, gy]}))
        else:
            print(f"X = {gx / args.scale:.4f} m")
            print(f"Y = {gy / args.scale:.4f} m")
        return 0
    if not args.image or not args.out:
        raise PlanemetryError("bev needs either --pixel or both --image and --out")
    src = load_raster(args.image)
    x0, y0, w, hgt = (int(v) for v in args.bounds.split(","))
    out = warp_raster(h, src, (x0, y0, w, hgt), interp=args.interp, fill=args.fill)
    save_raster(args.out, out)
    print(f"wrote {w}x{hgt} bird's-eye raster to {args.out}")
    return 0


def _load_lm_config(path: str | None) -> tuple[LmConfig, float, float]:
    edge_weight, control_weight = 1.0, 10.0
    if path is None:
        return LmConfig(), edge_weight, control_weight
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    edge_weight = float(data.pop("edge_weight", edge_weight))
    control_weight = float(data.pop("control_weight", control_weight))
    kwargs = {}
    for key in ("max_iterations", "initial_lambda", "lambda_up", "lambda_down",
                "cost_tolerance", "param_tolerance", "huber_delta"):
        if key in data:
            kwargs[key] = data[key]
    if kwargs.get("huber_delta") is not None:
        kwargs["huber_block"] = 2
    return LmConfig(**kwargs), edge_weight, control_weight


def cmd_mosaic(args) -> int:
    if args.action == "solve":
        graph = load_graph(args.graph)
        config, ew, cw = _load_lm_config(args.config)
        solution = mosaic_solve(graph, config, edge_weight=ew, control_weight=cw)
        solution.save(args.out)
        print(f"converged = {solution.converged}")
        print(f"iterations = {solution.iterations}")
        print(f"initial_cost = {solution.initial_cost:.6e}")
        print(f"final_cost = {solution.final_cost:.6e}")
        worst = max(solution.per_edge_rms.values()) if solution.per_edge_rms else 0.0
        print(f"max_edge_rms = {worst:.4f} px")
        return 0
    solution = BaSolution.load(args.solution)
    holdout = []
    import csv as _csv

    with open(args.holdout, "r", newline="", encoding="utf-8") as fh:
        for row in _csv.DictReader(fh):
            from .geometry import PlanePoint

            holdout.append((row["image_id"],
                            PixelPoint(float(row["u"]), float(row["v"])),
                            PlanePoint(float(row["X"]), float(row["Y"]))))
    report = mosaic_evaluate(solution, holdout)
    if report.rms is None:
        print("holdout is empty; no error statistics")
    else:
        print(f"holdout_rms = {report.rms:.4f} m")
        print(f"holdout_max = {report.max:.4f} m")
    return 0


def cmd_sim(args) -> int:
    scene = load_scene(args.spec)
    noise = load_noise(args.noise) if args.noise else NoiseModel()
    if args.seed is not None:
        noise = NoiseModel(**{**noise.__dict__, "seed": args.seed})
    os.makedirs(args.out, exist_ok=True)

    if args.action == "generate":
        obs = generate_observations(scene, noise)
        payload = {
            "not_visible": obs.not_visible,
            "cameras": [
                {
                    "camera_index": c.camera_index,
                    "samples": [[t.x, t.y, p.u, p.v] for t, p in c.samples],
                }
                for c in obs.per_camera
            ],
        }
        path = os.path.join(args.out, "observations.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
        print(f"wrote {sum(len(c.samples) for c in obs.per_camera)} observations to {path}")
        return 0

    if args.action == "make-graph":
        graph = generate_ba_graph(scene, noise, matches_per_edge=args.matches_per_edge)
        path = os.path.join(args.out, "graph.json")
        save_graph(graph, path)
        print(f"wrote graph with {len(graph.images)} images, {len(graph.edges)} edges to {path}")
        return 0

    evaluator = evaluate_mono if args.action == "evaluate-mono" else evaluate_stereo
    report = evaluator(scene, noise, args.trials)
    report.write_csv(os.path.join(args.out, f"{args.action}-errors.csv"))
    summary = report.summary()
    with open(os.path.join(args.out, f"{args.action}-summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    for key, value in summary.items():
        print(f"{key} = {value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="planemetry",
        description="Planar metric measurement: monocular ranging, BEV mosaicking, stereo ranging.",
    )
    parser.add_argument("--version", action="version", version=f"planemetry {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mono", help="locate a pixel on the ground plane")
    p.add_argument("--camera", required=True)
    p.add_argument("--pixel", required=True, type=_parse_pixel)
    p.add_argument("--calib")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_mono)

    p = sub.add_parser("stereo", help="range a target seen by two cameras")
    p.add_argument("--rig", required=True)
    p.add_argument("--pixel-a", required=True, type=_parse_pixel)
    p.add_argument("--pixel-b", required=True, type=_parse_pixel)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stereo)

    p = sub.add_parser("sensitivity", help="sweep Y = H/tan(alpha) over a pitch range")
    p.add_argument("--height", type=float, default=8.24)
    p.add_argument("--alpha-min", type=float, default=0.5)
    p.add_argument("--alpha-max", type=float, default=30.0)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("calibrate", help="fit pitch/principal-point corrections to known points")
    p.add_argument("--camera", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--out")
    p.add_argument("--fit-height", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bev", help="bird's-eye-view transform from camera geometry")
    p.add_argument("--camera", required=True)
    p.add_argument("--scale", type=float, required=True, help="pixels per meter")
    p.add_argument("--pixel", type=_parse_pixel)
    p.add_argument("--image")
    p.add_argument("--out")
    p.add_argument("--bounds", default="0,0,1000,1000", help="x0,y0,width,height in BEV pixels")
    p.add_argument("--interp", choices=["nearest", "bilinear"], default="bilinear")
    p.add_argument("--fill", type=float, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bev)

    p = sub.add_parser("mosaic", help="solve or evaluate a plane mosaic")
    msub = p.add_subparsers(dest="action", required=True)
    ps = msub.add_parser("solve")
    ps.add_argument("--graph", required=True)
    ps.add_argument("--out", required=True)
    ps.add_argument("--config")
    ps.set_defaults(func=cmd_mosaic, action="solve")
    pe = msub.add_parser("eval")
    pe.add_argument("--solution", required=True)
    pe.add_argument("--holdout", required=True)
    pe.set_defaults(func=cmd_mosaic, action="eval")

    p = sub.add_parser("sim", help="synthetic-scene generation and error campaigns")
    p.add_argument("action", choices=["generate", "evaluate-mono", "evaluate-stereo", "make-graph"])
    p.add_argument("--spec", required=True)
    p.add_argument("--noise")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--matches-per-edge", type=int, default=30)
    p.set_defaults(func=cmd_sim)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PlanemetryError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"FileNotFound: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
