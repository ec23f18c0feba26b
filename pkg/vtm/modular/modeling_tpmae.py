from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from transformers.utils import logging

from ..autodiff import functional as F
from ..autodiff.nn import Module, component_rng
from ..autodiff.tensor import Tensor
from ..errors import ShapeError
from .configuration_vtm import TpmaeConfig
from .modular_vtm_layers import ConvDecoder, ConvEncoder, SConv1d, UpsamplingHead

logger = logging.get_logger(__name__)

TensorLike = Union[Tensor, np.ndarray]


@dataclass
class TpmaeOutput:
    """Latent motion priors and the reconstruction, all time-major.

    Args:
        upper_latents: [B, T/4, upper_latent_dim]
        lower_latents: [B, T/4, lower_latent_dim], or ``None`` for a one-part model.
        non_root: [B, T, J-1, C] reconstructed non-root joint rows.
        root: [B, T, root_output_channels] reconstructed root rotation, depth and depth velocity.
    """
    upper_latents: Tensor
    lower_latents: Optional[Tensor]
    non_root: Tensor
    root: Tensor


class VtmPreTrainedModel(Module):
    """Shared plumbing: the config, seeded per-component initialisation and channel/time layout changes."""
    config_class = None
    base_model_prefix = "model"

    def __init__(self, config, seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = int(seed)

    def _rng(self, name: str) -> np.random.Generator:
        return component_rng(self.seed, f"{self.base_model_prefix}.{name}")

    @staticmethod
    def _as_tensor(x: TensorLike) -> Tensor:
        return x if isinstance(x, Tensor) else Tensor(x)

    @staticmethod
    def _to_channels(x: Tensor, joints: int, channels: int, name: str) -> Tensor:
        """[B, T, J, C] or [B, T, J*C] (time-major) -> [B, J*C, T]."""
        if x.ndim == 4:
            if x.shape[2:] != (joints, channels):
                raise ShapeError(f"{name}: expected [B, T, {joints}, {channels}], got {x.shape}")
            x = x.reshape(x.shape[0], x.shape[1], joints * channels)
        elif x.ndim != 3 or x.shape[2] != joints * channels:
            raise ShapeError(f"{name}: expected [B, T, {joints}, {channels}], got {x.shape}")
        return x.transpose(0, 2, 1)

    @staticmethod
    def _check_length(length: int, stride: int, name: str):
        if length < stride or length % stride:
            raise ShapeError(f"{name}: sequence length {length} must be a positive multiple of {stride}")


class TpmaeModel(VtmPreTrainedModel):
    """Two-part motion auto-encoder.

    The upper and lower body are encoded separately into latent motion
    priors. Two decoders bring each latent back to frame rate; a single
    convolution aggregates both into the non-root joint rows, while the root
    head decodes the concatenated raw latents. A one-part config keeps only
    the upper branch, fed with every joint, and has no lower latents.
    """
    config_class = TpmaeConfig
    base_model_prefix = "tpmae"

    def __init__(self, config: TpmaeConfig, seed: int = 0):
        super().__init__(config, seed)
        c = config
        self.encoder_upper = ConvEncoder(c.upper_joints * c.motion_channels, c.upper_encoder_channels,
                                         c.encoder_strides, c.encoder_kernel_size, c.negative_slope,
                                         rng=self._rng("encoder_upper"))
        self.encoder_lower = None
        if c.two_part:
            self.encoder_lower = ConvEncoder(c.lower_joints * c.motion_channels, c.lower_encoder_channels,
                                             c.encoder_strides, c.encoder_kernel_size, c.negative_slope,
                                             rng=self._rng("encoder_lower"))
        self.decoder_upper = ConvDecoder(c.upper_encoder_channels, c.encoder_strides, c.decoder_kernel_size,
                                         c.latent_kernel_size, c.negative_slope, rng=self._rng("decoder_upper"))
        decoded = self.decoder_upper.out_channels
        self.decoder_lower = None
        if c.two_part:
            self.decoder_lower = ConvDecoder(c.lower_encoder_channels, c.encoder_strides, c.decoder_kernel_size,
                                             c.latent_kernel_size, c.negative_slope, rng=self._rng("decoder_lower"))
            decoded += self.decoder_lower.out_channels
        self.aggregation = SConv1d(decoded, c.non_root_joints * c.motion_channels, c.aggregation_kernel_size,
                                   rng=self._rng("aggregation"))
        self.root_decoder = UpsamplingHead(c.upper_latent_dim + c.lower_latent_dim, c.root_decoder_channels,
                                           c.root_output_channels, c.encoder_strides, c.decoder_kernel_size,
                                           c.negative_slope, rng=self._rng("root_decoder"))
        logger.info(f"{'TPMAE' if c.two_part else 'One-part MAE'} initialised with {self.num_parameters()} "
                    f"parameters (seed {self.seed})")

    def encode(self, upper: TensorLike, lower: TensorLike) -> Tuple[Tensor, Optional[Tensor]]:
        """Motion priors of the two body parts.

        Args:
            upper: [B, T, upper_joints, C] normalised motion rows of the upper part.
            lower: [B, T, lower_joints, C]

        Returns:
            (Z_u [B, T/4, upper_latent_dim], Z_l [B, T/4, lower_latent_dim]); Z_l is ``None`` for a one-part model.
        """
        c = self.config
        upper, lower = self._as_tensor(upper), self._as_tensor(lower)
        if upper.shape[:2] != lower.shape[:2]:
            raise ShapeError(f"upper {upper.shape} and lower {lower.shape} parts must share batch and time")
        self._check_length(upper.shape[1], c.temporal_stride, "tpmae_encode")
        z_u = self.encoder_upper(self._to_channels(upper, c.upper_joints, c.motion_channels, "upper"))
        if not c.two_part:
            return z_u.transpose(0, 2, 1), None
        z_l = self.encoder_lower(self._to_channels(lower, c.lower_joints, c.motion_channels, "lower"))
        return z_u.transpose(0, 2, 1), z_l.transpose(0, 2, 1)

    def decode(self, z_u: TensorLike, z_l: Optional[TensorLike] = None) -> Tuple[Tensor, Tensor]:
        """Non-root rows [B, T, J-1, C] and the root head [B, T, root_output_channels] from the latents."""
        c = self.config
        z_u = self._as_tensor(z_u)
        if z_u.ndim != 3 or z_u.shape[2] != c.upper_latent_dim:
            raise ShapeError(f"upper latents must be [B, T', {c.upper_latent_dim}], got {z_u.shape}")
        z_u = z_u.transpose(0, 2, 1)
        B, T = z_u.shape[0], z_u.shape[2] * c.temporal_stride

        if c.two_part:
            if z_l is None:
                raise ShapeError("a two-part model needs lower latents")
            z_l = self._as_tensor(z_l)
            if z_l.ndim != 3 or z_l.shape[2] != c.lower_latent_dim or z_l.shape[:2] != (B, z_u.shape[2]):
                raise ShapeError(f"lower latents must be [B, {z_u.shape[2]}, {c.lower_latent_dim}], got {z_l.shape}")
            z_l = z_l.transpose(0, 2, 1)
            parts = F.cat([self.decoder_upper(z_u), self.decoder_lower(z_l)], axis=1)
            latents = F.cat([z_u, z_l], axis=1)
        else:
            parts, latents = self.decoder_upper(z_u), z_u

        non_root = self.aggregation(parts).transpose(0, 2, 1).reshape(B, T, c.non_root_joints, c.motion_channels)
        root = self.root_decoder(latents).transpose(0, 2, 1)
        return non_root, root

    def forward(self, upper: TensorLike, lower: TensorLike) -> TpmaeOutput:
        z_u, z_l = self.encode(upper, lower)
        non_root, root = self.decode(z_u, z_l)
        return TpmaeOutput(upper_latents=z_u, lower_latents=z_l, non_root=non_root, root=root)


__all__ = ["TpmaeModel", "TpmaeOutput", "VtmPreTrainedModel"]
