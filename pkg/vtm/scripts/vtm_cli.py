#!/usr/bin/env python
# coding=utf-8
"""Command-line front end: data preparation, training, reconstruction, evaluation and diagnostics."""

import argparse
import glob
import os
import sys
from typing import List, Optional

import numpy as np
from transformers.utils import logging

from vtm.errors import ConfigError, DatasetError, ShapeError, VtmError
from vtm.metrics import evaluate_motion, format_report
from vtm.modular.checkpoint import load_checkpoint, save_checkpoint
from vtm.modular.configuration_vtm import TpmaeConfig, TpveConfig, VtmConfig
from vtm.modular.modeling_vtm import reconstruct
from vtm.processor.bvh import DEFAULT_SCALE, load_bvh, motion_from_bvh, motion_to_bvh, save_bvh
from vtm.processor.camera import default_camera, load_camera
from vtm.processor.dataset import load_dataset, prepare_dataset, read_record
from vtm.processor.kinematics import fk_positions
from vtm.processor.representation import KeypointSequence
from vtm.processor.synth import FRAME_TIME, synthesize
from vtm.training.gradcheck_suite import run_suite
from vtm.training.trainer import LOG_NAME, TpmaeTrainer, TrainingConfig, VtmTrainer

logger = logging.get_logger(__name__)

_VERBOSITY = {
    "debug": logging.set_verbosity_debug,
    "info": logging.set_verbosity_info,
    "warning": logging.set_verbosity_warning,
    "error": logging.set_verbosity_error,
}


def _camera(path: Optional[str]):
    return load_camera(path) if path else default_camera()


def _log_path(checkpoint_path: str) -> str:
    return os.path.join(os.path.dirname(os.path.abspath(checkpoint_path)), LOG_NAME)


def _model_config(config_class, path: Optional[str]):
    if not path:
        return None
    try:
        return config_class.from_json_file(path)
    except ConfigError:
        raise
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read model config {path}: {e}") from None


def cmd_prepare(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.bvh_dir, "*.bvh")))
    if not paths:
        raise DatasetError(f"no .bvh files in {args.bvh_dir}")
    dataset = prepare_dataset(paths, _camera(args.camera), args.out, scale=args.scale,
                              align_skeletons=not args.no_align)
    print(f"prepared {len(dataset.sequences)} sequences in {args.out}"
          f"{'' if dataset.aligned else ' (unaligned skeletons)'}")
    return 0


def cmd_synth(args) -> int:
    paths = synthesize(args.n, args.frames, args.seed, args.out, scale=args.scale)
    print(f"wrote {len(paths)} BVH files to {args.out}")
    return 0


def cmd_train_tpmae(args) -> int:
    config = TrainingConfig.from_file(args.config, stage="tpmae")
    model_config = _model_config(TpmaeConfig, args.model_config)
    trainer = TpmaeTrainer(load_dataset(args.dataset), config, model_config)
    history = trainer.fit(log_path=_log_path(args.out), progress=not args.no_progress)
    save_checkpoint(args.out, trainer.bundle())
    print(f"final L_rec {history[-1].losses['L_rec']:.6g}; checkpoint {args.out}")
    return 0


def cmd_train_vtm(args) -> int:
    config = TrainingConfig.from_file(args.config, stage="vtm")
    if args.tpmae and args.tpmae_config:
        raise ConfigError("pass either --tpmae or --tpmae-config")
    tpmae_config = _model_config(TpmaeConfig, args.tpmae_config)
    model_config = _model_config(TpveConfig, args.model_config)
    tpmae = load_checkpoint(args.tpmae, expected_kind="tpmae") if args.tpmae else None
    if model_config is not None:
        # fail before the dataset is read when the latents cannot line up
        VtmConfig(tpmae_config=tpmae.tpmae.config if tpmae else tpmae_config or TpmaeConfig(),
                  tpve_config=model_config)
    trainer = VtmTrainer(load_dataset(args.dataset), tpmae, config, model_config, tpmae_config=tpmae_config)
    history = trainer.fit(log_path=_log_path(args.out), progress=not args.no_progress)
    save_checkpoint(args.out, trainer.bundle())
    print(f"final L_pred {history[-1].losses['L_pred']:.6g}; checkpoint {args.out}")
    return 0


def cmd_reconstruct(args) -> int:
    bundle = load_checkpoint(args.checkpoint, expected_kind="vtm")
    frame_time = args.frame_time
    if args.dataset:
        dataset = load_dataset(args.dataset)
        matches = [s for s in dataset.sequences if s.sequence_id == args.sequence]
        if not matches:
            raise DatasetError(f"sequence {args.sequence!r} not in {args.dataset}")
        keypoints = matches[0].keypoints
        cam = load_camera(args.camera) if args.camera else dataset.camera
        entry = next(e for e in dataset.manifest["sequences"] if e["id"] == args.sequence)
        frame_time = frame_time or entry["frame_time"]
    elif args.keypoints:
        keypoints = KeypointSequence(read_record(args.keypoints))
        cam = _camera(args.camera)
    else:
        raise DatasetError("pass either --dataset with --sequence or --keypoints")

    features = np.load(args.features) if args.features else None
    rec = reconstruct(keypoints, bundle, cam, features)
    if args.camera_space:
        rotations, root = rec.rotations, rec.root_translations
    else:
        rotations, root = rec.to_world(cam)
    save_bvh(args.out, motion_to_bvh(rec.skeleton, rotations, root, frame_time or FRAME_TIME), scale=args.scale)
    track_path = os.path.splitext(args.out)[0] + ".root.csv"
    with open(track_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(rec.root_track_csv())
    print(f"wrote {args.out} ({rec.num_frames} frames) and {track_path}")
    return 0


def cmd_evaluate(args) -> int:
    pred_rot, pred_root, pred_skel = motion_from_bvh(load_bvh(args.pred, scale=args.scale))
    gt_rot, gt_root, gt_skel = motion_from_bvh(load_bvh(args.gt, scale=args.scale))
    if pred_rot.shape[0] != gt_rot.shape[0]:
        raise ShapeError(f"prediction has {pred_rot.shape[0]} frames, ground truth {gt_rot.shape[0]}")
    pred_pos = fk_positions(pred_skel.parents, pred_skel.offsets, pred_rot, pred_root)
    gt_pos = fk_positions(gt_skel.parents, gt_skel.offsets, gt_rot, gt_root)
    text = format_report(evaluate_motion(pred_pos, gt_pos, pred_skel, gt_skel))
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    return 0


def cmd_gradcheck(args) -> int:
    passed, reports = run_suite(seed=args.seed, max_entries=args.max_entries, tol=args.tol)
    for report in reports:
        print(report.format())
    worst = max(r.max_relative_error for r in reports)
    print(f"max relative error {worst:.3e} ({'pass' if passed else 'FAIL'})")
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vtm", description="Learn 3D human motion from 2D keypoints.")
    parser.add_argument("--log-level", choices=sorted(_VERBOSITY), default="info")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="Build a dataset directory from BVH files")
    p.add_argument("--bvh-dir", required=True)
    p.add_argument("--camera", default=None, help="Camera file; the built-in front camera when omitted")
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=float, default=DEFAULT_SCALE, help="BVH length units to meters")
    p.add_argument("--no-align", action="store_true",
                   help="Keep each character's own skeleton instead of retargeting to the averaged one")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("synth", help="Generate procedural BVH motions")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--frames", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=float, default=DEFAULT_SCALE)
    p.set_defaults(func=cmd_synth)

    for stage, func in (("tpmae", cmd_train_tpmae), ("vtm", cmd_train_vtm)):
        p = sub.add_parser(
            f"train-{stage}",
            help=f"Train the {stage.upper()} stage",
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="config file keys and defaults:\n\n" + TrainingConfig.for_stage(stage).to_text(),
        )
        p.add_argument("--dataset", required=True)
        if stage == "vtm":
            p.add_argument("--tpmae", default=None,
                           help="Pre-trained TPMAE checkpoint; without it a fresh TPMAE is trained jointly")
            p.add_argument("--tpmae-config", default=None,
                           help="JSON TPMAE config for the fresh auto-encoder when --tpmae is omitted")
        p.add_argument("--config", default=None, help="key = value training config")
        p.add_argument("--model-config", default=None,
                       help="JSON model config (TPMAE or TPVE for this stage); default architecture when omitted")
        p.add_argument("--out", required=True, help="Checkpoint path; train_log.csv is written next to it")
        p.add_argument("--no-progress", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("reconstruct", help="Recover skeleton and motion from keypoints")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--sequence", default=None)
    p.add_argument("--keypoints", default=None, help="Keypoint record file [T, 24, 4]")
    p.add_argument("--features", default=None, help="Per-frame features (.npy, [T, F])")
    p.add_argument("--camera", default=None)
    p.add_argument("--camera-space", action="store_true", help="Write camera-space instead of world-space motion")
    p.add_argument("--frame-time", type=float, default=None)
    p.add_argument("--scale", type=float, default=DEFAULT_SCALE)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="Compare a predicted BVH with the ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--scale", type=float, default=DEFAULT_SCALE)
    p.add_argument("--out", default=None, help="Also write the report to this file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="Finite-difference check of the autodiff ops and objectives")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-entries", type=int, default=4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _VERBOSITY[args.log_level]()
    try:
        return args.func(args)
    except VtmError as e:
        print(f"{e.code}: {' '.join(str(e).split())}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"E_INTERNAL: {type(e).__name__}: {' '.join(str(e).split())}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
