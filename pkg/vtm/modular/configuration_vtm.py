""" VTM model configuration"""

from typing import List, Optional, Tuple

from transformers.configuration_utils import PretrainedConfig
from transformers.utils import logging

from ..errors import ConfigError

logger = logging.get_logger(__name__)


def _part_sizes(two_part: bool, upper_joints: int, lower_joints: int) -> Tuple[int, int]:
    # a single part covers every joint; the lower stream keeps only the shared root row
    if two_part:
        return upper_joints, lower_joints
    return upper_joints + lower_joints - 1, 1


class TpmaeConfig(PretrainedConfig):
    """Two-part motion auto-encoder.

    Encoders downsample time by the product of ``encoder_strides`` (x4 by
    default); decoders mirror them with transposed convolutions. With
    ``two_part=False`` the whole body goes through the upper branch alone and
    the lower channel plan is unused.
    """
    model_type = "vtm_tpmae"

    def __init__(
        self,
        upper_joints: int = 16,
        lower_joints: int = 9,
        motion_channels: int = 12,
        root_output_channels: int = 8,
        two_part: bool = True,
        # encoder
        upper_encoder_channels: Optional[List[int]] = None,
        lower_encoder_channels: Optional[List[int]] = None,
        encoder_kernel_size: int = 4,
        encoder_strides: Optional[List[int]] = None,
        # decoder
        decoder_kernel_size: int = 4,
        latent_kernel_size: int = 3,
        aggregation_kernel_size: int = 3,
        root_decoder_channels: int = 64,
        negative_slope: float = 0.2,
        **kwargs
    ):
        super().__init__(**kwargs)
        self.two_part = two_part
        self.upper_joints, self.lower_joints = _part_sizes(two_part, upper_joints, lower_joints)
        self.motion_channels = motion_channels
        self.root_output_channels = root_output_channels

        self.upper_encoder_channels = list(upper_encoder_channels) if upper_encoder_channels is not None else [96, 128, 128]
        self.lower_encoder_channels = list(lower_encoder_channels) if lower_encoder_channels is not None else [48, 64, 64]
        self.encoder_kernel_size = encoder_kernel_size
        self.encoder_strides = list(encoder_strides) if encoder_strides is not None else [2, 2, 1]
        if not (len(self.upper_encoder_channels) == len(self.lower_encoder_channels) == len(self.encoder_strides)):
            raise ConfigError("encoder channel lists and strides must have the same length")

        self.decoder_kernel_size = decoder_kernel_size
        self.latent_kernel_size = latent_kernel_size
        self.aggregation_kernel_size = aggregation_kernel_size
        self.root_decoder_channels = root_decoder_channels
        self.negative_slope = negative_slope

    @property
    def upper_latent_dim(self) -> int:
        return self.upper_encoder_channels[-1]

    @property
    def lower_latent_dim(self) -> int:
        return self.lower_encoder_channels[-1] if self.two_part else 0

    @property
    def temporal_stride(self) -> int:
        stride = 1
        for s in self.encoder_strides:
            stride *= s
        return stride

    @property
    def non_root_joints(self) -> int:
        return self.upper_joints + self.lower_joints - 2


class TpveConfig(PretrainedConfig):
    """Two-part visual encoder mapping keypoints (and optional frame features) onto the motion latents."""
    model_type = "vtm_tpve"

    def __init__(
        self,
        upper_joints: int = 16,
        lower_joints: int = 9,
        keypoint_channels: int = 4,
        num_bones: int = 23,
        two_part: bool = True,
        feature_dim: int = 512,
        keypoint_hidden: int = 128,
        keypoint_layers: int = 3,
        feature_adapter_dim: int = 64,
        upper_fusion_dim: int = 128,
        lower_fusion_dim: int = 64,
        upper_encoder_channels: Optional[List[int]] = None,
        lower_encoder_channels: Optional[List[int]] = None,
        encoder_kernel_size: int = 4,
        encoder_strides: Optional[List[int]] = None,
        use_ctca: bool = True,
        ctca_layers: int = 2,
        ctca_window: int = 8,
        bone_hidden: int = 128,
        negative_slope: float = 0.2,
        **kwargs
    ):
        super().__init__(**kwargs)
        self.two_part = two_part
        self.upper_joints, self.lower_joints = _part_sizes(two_part, upper_joints, lower_joints)
        self.keypoint_channels = keypoint_channels
        self.num_bones = num_bones
        self.feature_dim = feature_dim
        self.keypoint_hidden = keypoint_hidden
        self.keypoint_layers = keypoint_layers
        self.feature_adapter_dim = feature_adapter_dim
        self.upper_fusion_dim = upper_fusion_dim
        self.lower_fusion_dim = lower_fusion_dim
        self.upper_encoder_channels = list(upper_encoder_channels) if upper_encoder_channels is not None else [96, 128, 128]
        self.lower_encoder_channels = list(lower_encoder_channels) if lower_encoder_channels is not None else [48, 64, 64]
        self.encoder_kernel_size = encoder_kernel_size
        self.encoder_strides = list(encoder_strides) if encoder_strides is not None else [2, 2, 1]
        self.use_ctca = use_ctca
        self.ctca_layers = ctca_layers
        self.ctca_window = ctca_window
        self.bone_hidden = bone_hidden
        self.negative_slope = negative_slope

    @property
    def upper_latent_dim(self) -> int:
        return self.upper_encoder_channels[-1]

    @property
    def lower_latent_dim(self) -> int:
        return self.lower_encoder_channels[-1] if self.two_part else 0


class VtmConfig(PretrainedConfig):
    model_type = "vtm"
    is_composition = True
    sub_configs = {
        "tpmae_config": TpmaeConfig,
        "tpve_config": TpveConfig,
    }

    def __init__(
        self,
        tpmae_config=None,
        tpve_config=None,
        **kwargs
    ):
        if tpmae_config is None:
            self.tpmae_config = self.sub_configs["tpmae_config"]()
        elif isinstance(tpmae_config, dict):
            tpmae_config["model_type"] = "vtm_tpmae"
            self.tpmae_config = self.sub_configs["tpmae_config"](**tpmae_config)
        elif isinstance(tpmae_config, TpmaeConfig):
            self.tpmae_config = tpmae_config

        if tpve_config is None:
            self.tpve_config = self.sub_configs["tpve_config"]()
        elif isinstance(tpve_config, dict):
            tpve_config["model_type"] = "vtm_tpve"
            self.tpve_config = self.sub_configs["tpve_config"](**tpve_config)
        elif isinstance(tpve_config, TpveConfig):
            self.tpve_config = tpve_config

        m, v = self.tpmae_config, self.tpve_config
        if m.two_part != v.two_part:
            raise ConfigError(f"motion auto-encoder two_part={m.two_part} but visual encoder two_part={v.two_part}")
        if (m.upper_latent_dim, m.lower_latent_dim) != (v.upper_latent_dim, v.lower_latent_dim):
            raise ConfigError(
                f"visual latents ({v.upper_latent_dim}, {v.lower_latent_dim}) must match "
                f"motion latents ({m.upper_latent_dim}, {m.lower_latent_dim})"
            )
        if m.encoder_strides != v.encoder_strides:
            raise ConfigError("visual and motion encoders must downsample time identically")

        super().__init__(**kwargs)


def narrow_configs(feature_dim: int = 6) -> VtmConfig:
    """Narrow configuration with the default layer structure, used for gradient checks."""
    return VtmConfig(
        tpmae_config=TpmaeConfig(upper_encoder_channels=[5, 6, 6], lower_encoder_channels=[4, 5, 5],
                                 root_decoder_channels=4),
        tpve_config=TpveConfig(feature_dim=feature_dim, keypoint_hidden=5, feature_adapter_dim=3,
                               upper_fusion_dim=5, lower_fusion_dim=4,
                               upper_encoder_channels=[5, 6, 6], lower_encoder_channels=[4, 5, 5],
                               ctca_layers=1, ctca_window=2, bone_hidden=4),
    )


__all__ = [
    "TpmaeConfig",
    "TpveConfig",
    "VtmConfig",
    "narrow_configs",
]
