"""End-to-end run at desk scale: procedural BVH motions, dataset preparation,
auto-encoder pre-training, joint training, reconstruction and evaluation.

    python demo/desk_scale_pipeline.py --work_dir /tmp/vtm_demo --epochs 20
"""

import argparse
import os

from transformers.utils import logging

import vtm
from vtm.metrics import format_report
from vtm.modular.checkpoint import load_checkpoint, save_checkpoint
from vtm.modular.configuration_vtm import TpmaeConfig, TpveConfig
from vtm.modular.modeling_vtm import evaluate_tpmae_reconstruction, evaluate_vtm_reconstruction, reconstruct
from vtm.processor.bvh import motion_to_bvh, save_bvh
from vtm.processor.camera import default_camera
from vtm.processor.dataset import prepare_dataset
from vtm.processor.synth import synthesize
from vtm.training.trainer import LOG_NAME, TpmaeTrainer, TrainingConfig, VtmTrainer

logging.set_verbosity_info()
logger = logging.get_logger(__name__)

CONFIG_DIR = os.path.join(os.path.dirname(vtm.__file__), "configs")


def parse_args():
    parser = argparse.ArgumentParser(description="VTM desk-scale pipeline")
    parser.add_argument("--work_dir", type=str, default="./vtm_demo", help="Directory for every artefact of the run")
    parser.add_argument("--sequences", type=int, default=6, help="Number of procedural motions")
    parser.add_argument("--frames", type=int, default=96, help="Frames per motion")
    parser.add_argument("--epochs", type=int, default=20, help="Epochs of each training stage")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    return parser.parse_args()


def main():
    args = parse_args()
    work = os.path.abspath(args.work_dir)
    bvh_dir, data_dir, out_dir = (os.path.join(work, d) for d in ("bvh", "dataset", "output"))
    os.makedirs(out_dir, exist_ok=True)
    cam = default_camera()

    bvh_paths = synthesize(args.sequences, args.frames, args.seed, bvh_dir)
    dataset = prepare_dataset(bvh_paths, cam, data_dir)

    # narrower than the defaults so a laptop finishes both stages in minutes
    tpmae_config = TpmaeConfig.from_json_file(os.path.join(CONFIG_DIR, "tpmae_desk.json"))
    tpve_config = TpveConfig.from_json_file(os.path.join(CONFIG_DIR, "tpve_desk.json"))
    common = dict(seed=args.seed, epochs=args.epochs, learning_rate=1e-3, lr_decay_every=max(args.epochs // 2, 1),
                  threads=args.threads, window_stride=8)

    tpmae_dir = os.path.join(out_dir, "tpmae")
    os.makedirs(tpmae_dir, exist_ok=True)
    trainer = TpmaeTrainer(dataset, TrainingConfig.for_stage("tpmae", **common), tpmae_config)
    trainer.fit(log_path=os.path.join(tpmae_dir, LOG_NAME))
    tpmae_path = os.path.join(tpmae_dir, "tpmae.ckpt")
    save_checkpoint(tpmae_path, trainer.bundle())
    tpmae = load_checkpoint(tpmae_path, expected_kind="tpmae")
    print("auto-encoder reconstruction")
    print(format_report(evaluate_tpmae_reconstruction(trainer.windows, tpmae, cam)))

    vtm_dir = os.path.join(out_dir, "vtm")
    os.makedirs(vtm_dir, exist_ok=True)
    vtm_cfg = TrainingConfig.for_stage("vtm", feature_dim=tpve_config.feature_dim, **common)
    trainer = VtmTrainer(dataset, tpmae, vtm_cfg, tpve_config)
    trainer.fit(log_path=os.path.join(vtm_dir, LOG_NAME))
    vtm_path = os.path.join(vtm_dir, "vtm.ckpt")
    save_checkpoint(vtm_path, trainer.bundle())
    bundle = load_checkpoint(vtm_path, expected_kind="vtm")
    print("keypoint reconstruction")
    print(format_report(evaluate_vtm_reconstruction(trainer.windows, bundle, cam, dataset.skeletons)))

    for entry, seq in zip(dataset.manifest["sequences"], dataset.sequences):
        rec = reconstruct(seq.keypoints, bundle, cam)
        rotations, root = rec.to_world(cam)
        out_path = os.path.join(vtm_dir, f"{seq.sequence_id}.bvh")
        save_bvh(out_path, motion_to_bvh(rec.skeleton, rotations, root, entry["frame_time"]))
        logger.info(f"Wrote {out_path}; ground truth in {dataset.gt_bvh_path(seq.sequence_id)}")


if __name__ == "__main__":
    main()
