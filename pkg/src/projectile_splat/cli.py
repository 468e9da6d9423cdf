"""Command line entry point: simulate, recover, evaluate, ablate."""
import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .dsa import DSAConfig
from .errors import ProjectileSplatError
from .evaluation import evaluate_dirs
from .kalman import NoiseConfig
from .physics import PhysicsConfig
from .recovery import (
    CONTROL_MODES, PRUNE_MODES, RecoveryConfig, load_scene_inputs, recover_sequence,
    write_result,
)
from .simulator import SceneConfig, load_scene, simulate, write_sequence

log = logging.getLogger("projectile_splat")

ABLATIONS = ("no-dsa", "no-lacc", "no-kalman", "no-smooth")


def _add_recovery_flags(p):
    p.add_argument("--config", help="recovery config JSON")
    p.add_argument("--lr-base", type=float, help="learning rate at the slowest frame")
    p.add_argument("--iter-base", type=int, help="iterations at the slowest frame")
    p.add_argument("--decay-floor", type=float, help="final/initial learning-rate ratio per frame")
    p.add_argument("--iter-cap", type=float, help="cap on the iteration multiplier")
    p.add_argument("--q-ds", type=float, help="process variance of displacement")
    p.add_argument("--q-v", type=float, help="process variance of velocity")
    p.add_argument("--r-flow", type=float, help="observation variance of flow displacement")
    p.add_argument("--r-learn", type=float, help="observation variance of learned displacement")
    p.add_argument("--flow-noise-px", type=float,
                   help="derive the flow variance per axis from this pixel noise")
    p.add_argument("--no-smooth", action="store_true", help="drop the flow-smoothness term")
    p.add_argument("--no-kalman", action="store_true", help="skip Kalman re-anchoring")
    p.add_argument("--literal-lacc", action="store_true",
                   help="keep the raw gravity-parallel acceleration in the consistency loss")
    p.add_argument("--prune-mode", choices=PRUNE_MODES, help="density control before recovery")
    p.add_argument("--control", choices=CONTROL_MODES,
                   help="filter control input: configured gravity or the latest estimated acceleration")
    p.add_argument("--registration-iters", type=int)
    p.add_argument("--registration-lr", type=float)


def build_recovery_config(args, physics):
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    cfg = RecoveryConfig.from_dict(raw)
    if "physics" not in raw:
        # the scene's own gravity direction and frame interval
        cfg = replace(cfg, physics=physics)
    d = cfg.dsa
    cfg = replace(cfg, dsa=DSAConfig(
        args.lr_base if args.lr_base is not None else d.lr_base,
        args.iter_base if args.iter_base is not None else d.iter_base,
        args.decay_floor if args.decay_floor is not None else d.decay_floor_ratio,
        args.iter_cap if args.iter_cap is not None else d.iter_cap_multiplier))
    q = cfg.noise
    cfg = replace(cfg, noise=NoiseConfig(
        args.q_ds if args.q_ds is not None else q.sigma_ds_sq,
        args.q_v if args.q_v is not None else q.sigma_v_sq,
        args.r_flow if args.r_flow is not None else q.sigma_flow_sq,
        args.r_learn if args.r_learn is not None else q.sigma_learn_sq))
    if args.flow_noise_px is not None:
        cfg = replace(cfg, flow_noise_px=args.flow_noise_px)
    if args.no_smooth:
        cfg = cfg.ablated("no-smooth")
    if args.no_kalman:
        cfg = replace(cfg, kalman_enabled=False)
    if args.literal_lacc:
        cfg = replace(cfg, literal_lacc=True)
    if args.prune_mode:
        cfg = replace(cfg, prune_mode=args.prune_mode)
    if args.control:
        cfg = replace(cfg, control=args.control)
    if args.registration_iters is not None:
        cfg = replace(cfg, registration_iters=args.registration_iters)
    if args.registration_lr is not None:
        cfg = replace(cfg, registration_lr=args.registration_lr)
    return cfg


def _scene_physics(scene_dir):
    with open(os.path.join(scene_dir, "scene.json")) as fh:
        return PhysicsConfig.from_dict(json.load(fh).get("physics", {}))


def _progress(n, total, row):
    log.info("frame %d/%d  loss %.6g  iterations %d", n, total - 1, row["total"], row["iterations"])


def cmd_simulate(args):
    cfg = load_scene(args.scene) if args.scene else SceneConfig()
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    if args.flow_noise is not None:
        cfg = cfg.with_(flow_noise_std=args.flow_noise)
    seq = simulate(cfg)
    write_sequence(seq, args.out)
    log.info("wrote %d frames to %s", len(seq), args.out)
    return 0


def _recover(scene_dir, cfg, out_dir):
    inputs = load_scene_inputs(scene_dir)
    result = recover_sequence(inputs.frames, inputs.flow, inputs.cloud, inputs.camera, cfg,
                              progress=_progress)
    write_result(result, out_dir)
    return result


def cmd_recover(args):
    cfg = build_recovery_config(args, _scene_physics(args.scene))
    _recover(args.scene, cfg, args.out)
    log.info("wrote recovered trajectory to %s", args.out)
    return 0


def cmd_evaluate(args):
    report = evaluate_dirs(args.result, args.gt)
    report.write(args.out or args.result)
    print(json.dumps({k: v for k, v in report.to_dict().items() if k != "per_frame"}, indent=2))
    return 0


def cmd_ablate(args):
    base = build_recovery_config(args, _scene_physics(args.scene))
    rows = {}
    for mode in ("full", args.mode):
        out = os.path.join(args.out, mode)
        _recover(args.scene, base.ablated(mode), out)
        report = evaluate_dirs(out, args.scene)
        report.write(out)
        rows[mode] = {k: v for k, v in report.to_dict().items() if k != "per_frame"}
    full, abl = rows["full"], rows[args.mode]
    rows["direction_holds"] = bool(abl["mean_iou"] <= full["mean_iou"] and abl["ate"] >= full["ate"])
    with open(os.path.join(args.out, "ablation.json"), "w") as fh:
        json.dump(rows, fh, indent=2)
    print(json.dumps(rows, indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="projectile-splat", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic projectile scene")
    p.add_argument("--scene", help="scene JSON (default: built-in desk scene)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--flow-noise", type=float, help="override flow noise std in pixels")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("recover", help="recover per-frame poses from a scene directory")
    p.add_argument("--scene", required=True, help="simulator output directory")
    p.add_argument("--out", required=True)
    _add_recovery_flags(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("evaluate", help="score a recovery against ground truth")
    p.add_argument("--result", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="where to write metrics.json (default: the result directory)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="compare the full pipeline with one component removed")
    p.add_argument("--mode", required=True, choices=ABLATIONS)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    _add_recovery_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ProjectileSplatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
