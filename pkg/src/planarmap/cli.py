"""Command line entry points: reconstruct, simulate, evaluate, audit."""
from __future__ import annotations

import argparse
import os
import sys

from .config import RETENTION_ALL, Config, load_config
from .errors import PlanarMapError
from .evaluate import evaluate_points, sample_mesh
from .fileio import (load_map, read_cloud, read_mesh, read_poses, write_cloud,
                     write_poses)
from .pipeline import run_pipeline
from .simulate import (SCENE_PRESETS, SensorModel, default_trajectory,
                       ground_truth_cloud, make_scene, simulate_sequence)


def _retention(text: str) -> int:
    if text.lower() == "all":
        return RETENTION_ALL
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("retention must be >= 0 or 'all'")
    return value


def _cmd_reconstruct(args) -> int:
    cfg = load_config(args.config) if args.config else Config()
    if args.threads is not None:
        cfg.threads = args.threads
    if args.deterministic:
        cfg.deterministic = True
        cfg.threads = 1
    elif args.threads is not None and args.threads > 1:
        cfg.deterministic = False
    if args.seed_retention is not None:
        cfg.seed_retention = args.seed_retention
    if not os.path.isdir(args.scans):
        print(f"error: scan directory not found: {args.scans}", file=sys.stderr)
        return 2
    names = sorted(os.listdir(args.scans))
    scan_names = [n for n in names if n.startswith("scan") and n.endswith(".ply")]
    if not scan_names:  # directory of arbitrary .ply clouds
        scan_names = [n for n in names if n.endswith(".ply")
                      and n != "ground_truth.ply"]
    scan_paths = [os.path.join(args.scans, n) for n in scan_names]
    if not scan_paths:
        print(f"error: no .ply scans in {args.scans}", file=sys.stderr)
        return 2
    if not os.path.isfile(args.poses):
        print(f"error: pose file not found: {args.poses}", file=sys.stderr)
        return 2
    poses = read_poses(args.poses)
    summary = run_pipeline(cfg, scan_paths, poses, args.out,
                           timing_csv=args.timing, gt_path=args.gt,
                           eval_out=args.eval_out, save_map_path=args.save_map)
    print(f"reconstructed {summary['scans']} scans, {summary['points']} points"
          f" -> {summary['planar_meshes']} planar-meshes,"
          f" {summary['vertices']} vertices, {summary['faces']} faces,"
          f" {summary['mesh_bytes']} bytes")
    if "eval" in summary:
        r = summary["eval"]
        print(f"eval: mean={r.mean_dist:.4f} std={r.std_dist:.4f}"
              f" P={r.precision:.4f} R={r.recall:.4f} F={r.f_score:.4f}"
              f" @ tau={r.threshold}")
    return 0


def _cmd_simulate(args) -> int:
    scene = make_scene(args.scene)
    sensor = SensorModel(seed=args.seed,
                         azimuth_count=args.azimuth,
                         elevation_count=args.elevation,
                         elevation_min_deg=-args.elevation_span / 2,
                         elevation_max_deg=args.elevation_span / 2,
                         sigma_noise=args.sigma)
    poses = default_trajectory(args.scene, args.frames)
    frames = simulate_sequence(scene, poses, sensor)
    os.makedirs(args.out, exist_ok=True)
    for i, frame in enumerate(frames):
        write_cloud(frame.points, os.path.join(args.out, f"scan_{i:06d}.ply"))
    write_poses(os.path.join(args.out, "poses.txt"), poses)
    gt = ground_truth_cloud(scene, args.gt_density, seed=args.seed + 1)
    write_cloud(gt, os.path.join(args.out, "ground_truth.ply"))
    total = sum(len(f.points) for f in frames)
    print(f"simulated {len(frames)} frames of {args.scene!r}: {total} points,"
          f" {len(gt)} ground-truth points -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    verts, faces = read_mesh(args.mesh)
    gt = read_cloud(args.gt)
    n = args.samples or len(gt)
    recon = sample_mesh(verts, faces, n, seed=args.seed)
    report = evaluate_points(recon, gt, tau=args.tau,
                             file_size_bytes=os.path.getsize(args.mesh),
                             face_count=len(faces), vertex_count=len(verts))
    sys.stdout.write(report.to_text())
    return 0


def _cmd_audit(args) -> int:
    map_state = load_map(args.map)
    problems = map_state.audit()
    if problems:
        for p in problems:
            print(f"AUDIT FAIL: {p}", file=sys.stderr)
        return 1
    n_faces = sum(len(pm.faces) for pm in map_state.planar_meshes.values())
    print(f"audit ok: {len(map_state.planar_meshes)} planar-meshes,"
          f" {n_faces} faces, trees consistent")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="planarmap",
        description="Incremental adaptive-resolution surface reconstruction")
    sub = ap.add_subparsers(dest="command", required=True)

    rec = sub.add_parser("reconstruct", help="scans + poses -> mesh")
    rec.add_argument("--scans", required=True, help="directory of .ply scans")
    rec.add_argument("--poses", required=True, help="pose file")
    rec.add_argument("--config", help="key = value config file")
    rec.add_argument("--out", required=True, help="output mesh .ply")
    rec.add_argument("--timing", help="per-scan timing CSV")
    rec.add_argument("--threads", type=int, default=None)
    rec.add_argument("--deterministic", action="store_true")
    rec.add_argument("--seed-retention", type=_retention, default=None,
                     metavar="{0|K|all}")
    rec.add_argument("--save-map", help="write a binary map snapshot")
    rec.add_argument("--gt", help="ground-truth cloud for evaluation")
    rec.add_argument("--eval-out", help="evaluation report path")
    rec.set_defaults(func=_cmd_reconstruct)

    sim = sub.add_parser("simulate", help="synthetic scans of a preset scene")
    sim.add_argument("--scene", required=True, choices=SCENE_PRESETS)
    sim.add_argument("--frames", type=int, default=10)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--azimuth", type=int, default=256)
    sim.add_argument("--elevation", type=int, default=32)
    sim.add_argument("--elevation-span", type=float, default=90.0)
    sim.add_argument("--sigma", type=float, default=0.01)
    sim.add_argument("--gt-density", type=float, default=300.0)
    sim.set_defaults(func=_cmd_simulate)

    ev = sub.add_parser("evaluate", help="mesh vs ground-truth cloud")
    ev.add_argument("--mesh", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--tau", type=float, default=0.1)
    ev.add_argument("--samples", type=int, default=0,
                    help="mesh sample count (default: match gt)")
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(func=_cmd_evaluate)

    au = sub.add_parser("audit", help="full invariant checks on a map snapshot")
    au.add_argument("--map", required=True)
    au.set_defaults(func=_cmd_audit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PlanarMapError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
