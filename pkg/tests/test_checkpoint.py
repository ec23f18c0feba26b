import struct

import numpy as np
import pytest

from vtm.errors import CheckpointVersionError
from vtm.modular.checkpoint import CHECKPOINT_MAGIC, checkpoint_bytes, load_checkpoint, save_checkpoint
from vtm.modular.configuration_vtm import VtmConfig
from vtm.modular.modeling_tpmae import TpmaeModel
from vtm.modular.modeling_vtm import VtmBundle, VtmModel, reconstruct
from vtm.processor.representation import KeypointNormalizer, MotionNormalizer


@pytest.fixture
def tpmae_bundle(dataset, camera, small_tpmae_config):
    return VtmBundle(
        kind="tpmae",
        model=TpmaeModel(small_tpmae_config, seed=4),
        motion_normalizer=MotionNormalizer.fit([s.motion.frames for s in dataset.sequences]),
        keypoint_normalizer=KeypointNormalizer(camera.width, camera.height),
        virtual=dataset.virtual,
        metadata={"epochs": 3},
    )


@pytest.fixture
def vtm_bundle(tpmae_bundle, small_tpve_config):
    model = VtmModel.from_tpmae(tpmae_bundle.model, small_tpve_config, seed=4)
    return VtmBundle("vtm", model, tpmae_bundle.motion_normalizer, tpmae_bundle.keypoint_normalizer,
                     tpmae_bundle.virtual)


def test_round_trip_restores_every_array(tmp_path, tpmae_bundle):
    path = str(tmp_path / "tpmae.ckpt")
    save_checkpoint(path, tpmae_bundle)
    loaded = load_checkpoint(path, expected_kind="tpmae")
    assert loaded.kind == "tpmae"
    assert loaded.metadata == {"epochs": 3}
    assert loaded.model.config.upper_encoder_channels == [8, 12, 12]
    for name, value in tpmae_bundle.model.state_dict().items():
        np.testing.assert_array_equal(loaded.model.state_dict()[name], value)
    np.testing.assert_array_equal(loaded.motion_normalizer.mean, tpmae_bundle.motion_normalizer.mean)
    np.testing.assert_array_equal(loaded.virtual.offsets, tpmae_bundle.virtual.offsets)
    assert loaded.partition == tpmae_bundle.partition
    assert checkpoint_bytes(loaded) == checkpoint_bytes(tpmae_bundle)


def test_identical_models_give_identical_bytes(tpmae_bundle, small_tpmae_config):
    twin = VtmBundle("tpmae", TpmaeModel(small_tpmae_config, seed=4), tpmae_bundle.motion_normalizer,
                     tpmae_bundle.keypoint_normalizer, tpmae_bundle.virtual, metadata={"epochs": 3})
    blob = checkpoint_bytes(tpmae_bundle)
    assert blob[:4] == CHECKPOINT_MAGIC
    assert checkpoint_bytes(twin) == blob


def test_vtm_checkpoint_reconstructs_the_same_motion(tmp_path, dataset, camera, vtm_bundle):
    path = str(tmp_path / "vtm.ckpt")
    save_checkpoint(path, vtm_bundle)
    loaded = load_checkpoint(path, expected_kind="vtm")
    assert isinstance(loaded.model.config, VtmConfig)
    assert loaded.model.tpve.config.feature_dim == 4
    keypoints = dataset.sequences[0].keypoints
    np.testing.assert_array_equal(reconstruct(keypoints, loaded, camera).frames,
                                  reconstruct(keypoints, vtm_bundle, camera).frames)


def _write(tmp_path, blob):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(blob)
    return str(path)


def test_wrong_kind(tmp_path, tpmae_bundle):
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(_write(tmp_path, checkpoint_bytes(tpmae_bundle)), expected_kind="vtm")


def test_bad_magic_and_version(tmp_path, tpmae_bundle):
    blob = checkpoint_bytes(tpmae_bundle)
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(_write(tmp_path, b"XXXX" + blob[4:]))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(_write(tmp_path, blob[:4] + struct.pack("<I", 2) + blob[8:]))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(_write(tmp_path, blob[:6]))


@pytest.mark.parametrize("cut", [20, -8])
def test_truncated_files(tmp_path, tpmae_bundle, cut):
    blob = checkpoint_bytes(tpmae_bundle)
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(_write(tmp_path, blob[:cut]))


def test_trailing_bytes(tmp_path, tpmae_bundle):
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(_write(tmp_path, checkpoint_bytes(tpmae_bundle) + b"\0" * 8))
