"""Versioned binary checkpoints.

Layout::

    b"VTMC"  uint32 version  uint32 header_length
    header   UTF-8 JSON (sorted keys): kind, configs, virtual skeleton,
             partition, keypoint normaliser, metadata and the block table
    blocks   little-endian float64 arrays in block-table order

The block table lists ``[name, shape]`` pairs: model parameters under
``param/<name>`` and the motion normaliser statistics under ``norm/mean`` and
``norm/std``. Identical models serialise to identical bytes.
"""

import json
import struct
from typing import Dict, List, Tuple

import numpy as np
from transformers.utils import logging

from ..errors import CheckpointVersionError
from ..processor.representation import BodyPartition, KeypointNormalizer, MotionNormalizer
from ..processor.skeleton import Skeleton
from .configuration_vtm import TpmaeConfig, TpveConfig, VtmConfig
from .modeling_tpmae import TpmaeModel
from .modeling_vtm import VtmBundle, VtmModel

logger = logging.get_logger(__name__)

CHECKPOINT_MAGIC = b"VTMC"
CHECKPOINT_VERSION = 1
_PREAMBLE = struct.Struct("<4sII")


def _config_payload(config) -> dict:
    return json.loads(config.to_json_string(use_diff=True))


def _blocks(bundle: VtmBundle) -> List[Tuple[str, np.ndarray]]:
    blocks = [(f"param/{name}", value) for name, value in bundle.model.state_dict().items()]
    blocks += [(f"norm/{name}", value) for name, value in bundle.motion_normalizer.state_dict().items()]
    return blocks


def checkpoint_bytes(bundle: VtmBundle) -> bytes:
    blocks = _blocks(bundle)
    configs = {"tpmae_config": _config_payload(bundle.tpmae.config)}
    if bundle.kind == "vtm":
        configs["tpve_config"] = _config_payload(bundle.model.tpve.config)
    header = {
        "kind": bundle.kind,
        "configs": configs,
        "seed": bundle.model.seed,
        "virtual_skeleton": bundle.virtual.to_text(),
        "partition": bundle.partition.to_dict(),
        "keypoint_normalizer": {"width": bundle.keypoint_normalizer.width,
                                "height": bundle.keypoint_normalizer.height},
        "motion_std_floor": bundle.motion_normalizer.std_floor,
        "metadata": bundle.metadata,
        "blocks": [[name, list(np.shape(value))] for name, value in blocks],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [_PREAMBLE.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header_bytes)), header_bytes]
    parts += [np.ascontiguousarray(value, dtype="<f8").tobytes() for _, value in blocks]
    return b"".join(parts)


def save_checkpoint(path: str, bundle: VtmBundle):
    blob = checkpoint_bytes(bundle)
    with open(path, "wb") as f:
        f.write(blob)
    logger.info(f"Saved {bundle.kind} checkpoint to {path} ({len(blob)} bytes)")


def _read_blocks(blob: bytes, offset: int, table) -> Dict[str, np.ndarray]:
    arrays = {}
    for name, shape in table:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise CheckpointVersionError(f"checkpoint truncated inside block {name!r}")
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(blob):
        raise CheckpointVersionError(f"{len(blob) - offset} trailing bytes after the last block")
    return arrays


def load_checkpoint(path: str, expected_kind: str = None) -> VtmBundle:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _PREAMBLE.size:
        raise CheckpointVersionError(f"{path}: too short to be a checkpoint")
    magic, version, header_length = _PREAMBLE.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointVersionError(f"{path}: not a vtm checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {version}, this build reads {CHECKPOINT_VERSION}")
    start = _PREAMBLE.size
    if start + header_length > len(blob):
        raise CheckpointVersionError(f"{path}: checkpoint truncated inside the header")
    try:
        header = json.loads(blob[start:start + header_length].decode("utf-8"))
    except ValueError as e:
        raise CheckpointVersionError(f"{path}: unreadable checkpoint header ({e})") from e
    kind = header["kind"]
    if expected_kind is not None and kind != expected_kind:
        raise CheckpointVersionError(f"{path}: expected a {expected_kind} checkpoint, found {kind}")

    arrays = _read_blocks(blob, start + header_length, header["blocks"])
    seed = header["seed"]
    tpmae_config = TpmaeConfig.from_dict(header["configs"]["tpmae_config"])
    if kind == "tpmae":
        model = TpmaeModel(tpmae_config, seed)
    else:
        tpve_config = TpveConfig.from_dict(header["configs"]["tpve_config"])
        model = VtmModel(VtmConfig(tpmae_config=tpmae_config, tpve_config=tpve_config), seed)
    model.load_state_dict({name[len("param/"):]: value for name, value in arrays.items() if name.startswith("param/")})

    motion_norm = MotionNormalizer(arrays["norm/mean"], arrays["norm/std"], header["motion_std_floor"])
    keypoint_norm = KeypointNormalizer(**header["keypoint_normalizer"])
    bundle = VtmBundle(
        kind=kind,
        model=model,
        motion_normalizer=motion_norm,
        keypoint_normalizer=keypoint_norm,
        virtual=Skeleton.from_text(header["virtual_skeleton"]),
        partition=BodyPartition.from_dict(header["partition"]),
        metadata=header.get("metadata", {}),
    )
    logger.info(f"Loaded {kind} checkpoint from {path}")
    return bundle


__all__ = ["CHECKPOINT_MAGIC", "CHECKPOINT_VERSION", "checkpoint_bytes", "save_checkpoint", "load_checkpoint"]
