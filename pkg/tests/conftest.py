import os

import numpy as np
import pytest

from vtm.modular.configuration_vtm import TpmaeConfig, TpveConfig
from vtm.processor.camera import default_camera
from vtm.processor.dataset import prepare_dataset
from vtm.processor.synth import synthesize


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow training tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def camera():
    return default_camera()


@pytest.fixture
def small_tpmae_config():
    return TpmaeConfig(upper_encoder_channels=[8, 12, 12], lower_encoder_channels=[6, 8, 8], root_decoder_channels=6)


@pytest.fixture
def small_tpve_config():
    return TpveConfig(feature_dim=4, keypoint_hidden=8, feature_adapter_dim=4, upper_fusion_dim=8,
                      lower_fusion_dim=6, upper_encoder_channels=[8, 12, 12], lower_encoder_channels=[6, 8, 8],
                      ctca_layers=1, ctca_window=4, bone_hidden=6)


@pytest.fixture(scope="session")
def bvh_dir(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("bvh"))
    synthesize(3, 40, seed=7, out_dir=out)
    return out


@pytest.fixture(scope="session")
def dataset(bvh_dir, tmp_path_factory):
    paths = sorted(os.path.join(bvh_dir, n) for n in os.listdir(bvh_dir) if n.endswith(".bvh"))
    return prepare_dataset(paths, default_camera(), str(tmp_path_factory.mktemp("dataset")))
