from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from transformers.utils import logging

from ..autodiff import functional as F
from ..autodiff.nn import ModuleList
from ..autodiff.tensor import Tensor
from ..errors import ShapeError
from .configuration_vtm import TpveConfig
from .modeling_tpmae import TensorLike, VtmPreTrainedModel
from .modular_vtm_layers import (
    BoneRatioHead,
    ConvEncoder,
    KeypointExtractor,
    ResidualFusionBlock,
    SConv1d,
    TemporalContextAggregation,
)

logger = logging.get_logger(__name__)


@dataclass
class TpveOutput:
    """Visual latents (time-major, same shapes as the motion priors) and predicted bone ratios [B, num_bones]."""
    upper_latents: Tensor
    lower_latents: Optional[Tensor]
    bone_ratios: Tensor


class TpveModel(VtmPreTrainedModel):
    """Two-part visual encoder.

    Per body part, keypoint features and adapted frame features are fused by
    a residual block, then encoded onto the motion latent manifold and mixed
    over time by the context aggregation blocks. A small head predicts the
    bone ratios from both latents. A one-part config builds the upper branch only
    and reports no lower latents.
    """
    config_class = TpveConfig
    base_model_prefix = "tpve"

    def __init__(self, config: TpveConfig, seed: int = 0):
        super().__init__(config, seed)
        c = config
        two = c.two_part
        self.keypoint_upper = KeypointExtractor(c.upper_joints * c.keypoint_channels, c.keypoint_hidden,
                                                c.keypoint_layers, c.negative_slope, rng=self._rng("keypoint_upper"))
        self.keypoint_lower = None
        if two:
            self.keypoint_lower = KeypointExtractor(c.lower_joints * c.keypoint_channels, c.keypoint_hidden,
                                                    c.keypoint_layers, c.negative_slope,
                                                    rng=self._rng("keypoint_lower"))
        # zero bias: all-zero frame features contribute exactly nothing
        self.feature_upper = SConv1d(c.feature_dim, c.feature_adapter_dim, 3, rng=self._rng("feature_upper"),
                                     zero_bias=True)
        self.feature_lower = None
        if two:
            self.feature_lower = SConv1d(c.feature_dim, c.feature_adapter_dim, 3, rng=self._rng("feature_lower"),
                                         zero_bias=True)
        self.fusion_upper = ResidualFusionBlock(c.feature_adapter_dim + c.keypoint_hidden, c.upper_fusion_dim,
                                                c.negative_slope, rng=self._rng("fusion_upper"))
        self.fusion_lower = None
        if two:
            self.fusion_lower = ResidualFusionBlock(c.feature_adapter_dim + c.keypoint_hidden, c.lower_fusion_dim,
                                                    c.negative_slope, rng=self._rng("fusion_lower"))
        self.visual_upper = ConvEncoder(c.upper_fusion_dim, c.upper_encoder_channels, c.encoder_strides,
                                        c.encoder_kernel_size, c.negative_slope, rng=self._rng("visual_upper"))
        self.visual_lower = None
        if two:
            self.visual_lower = ConvEncoder(c.lower_fusion_dim, c.lower_encoder_channels, c.encoder_strides,
                                            c.encoder_kernel_size, c.negative_slope, rng=self._rng("visual_lower"))
        n_ctca = c.ctca_layers if c.use_ctca else 0
        ctca_rng_u, ctca_rng_l = self._rng("ctca_upper"), self._rng("ctca_lower")
        self.ctca_upper = ModuleList(TemporalContextAggregation(c.upper_latent_dim, c.ctca_window, rng=ctca_rng_u)
                                     for _ in range(n_ctca))
        self.ctca_lower = None
        if two:
            self.ctca_lower = ModuleList(TemporalContextAggregation(c.lower_latent_dim, c.ctca_window, rng=ctca_rng_l)
                                         for _ in range(n_ctca))
        self.bone_head = BoneRatioHead(c.upper_latent_dim + c.lower_latent_dim, c.bone_hidden, c.num_bones,
                                       c.negative_slope, rng=self._rng("bone_head"))
        self.temporal_stride = int(np.prod(c.encoder_strides))
        logger.info(f"TPVE initialised with {self.num_parameters()} parameters "
                    f"(feature_dim={c.feature_dim}, ctca={'on' if n_ctca else 'off'}, parts={2 if two else 1})")

    def _features(self, features: Optional[TensorLike], batch: int, length: int) -> Tensor:
        c = self.config
        if features is None:
            return Tensor(np.zeros((batch, c.feature_dim, length)))
        features = self._as_tensor(features)
        if features.shape != (batch, length, c.feature_dim):
            raise ShapeError(f"features must be [{batch}, {length}, {c.feature_dim}], got {features.shape}")
        return features.transpose(0, 2, 1)

    def _part(self, keypoints: Tensor, features: Tensor, extractor, adapter, fusion, encoder, ctca) -> Tensor:
        fused = fusion(F.cat([adapter(features), extractor(keypoints)], axis=1))
        z = encoder(fused).transpose(0, 2, 1)
        for block in ctca:
            z = block(z)
        return z

    def forward(self, upper: TensorLike, lower: TensorLike, features: Optional[TensorLike] = None) -> TpveOutput:
        """Visual latents and bone ratios.

        Args:
            upper: [B, T, upper_joints, 4] normalised keypoints of the upper part.
            lower: [B, T, lower_joints, 4]
            features: [B, T, feature_dim] per-frame features, or ``None`` for the keypoints-only path.

        Returns:
            TpveOutput with latents [B, T/4, D_part] and positive bone ratios [B, num_bones].
        """
        c = self.config
        upper, lower = self._as_tensor(upper), self._as_tensor(lower)
        if upper.shape[:2] != lower.shape[:2]:
            raise ShapeError(f"upper {upper.shape} and lower {lower.shape} keypoints must share batch and time")
        B, T = upper.shape[:2]
        self._check_length(T, self.temporal_stride, "tpve_forward")
        feats = self._features(features, B, T)

        z_u = self._part(self._to_channels(upper, c.upper_joints, c.keypoint_channels, "upper keypoints"), feats,
                         self.keypoint_upper, self.feature_upper, self.fusion_upper, self.visual_upper,
                         self.ctca_upper)
        if self.keypoint_lower is None:
            return TpveOutput(upper_latents=z_u, lower_latents=None,
                              bone_ratios=self.bone_head(z_u.transpose(0, 2, 1)))
        z_l = self._part(self._to_channels(lower, c.lower_joints, c.keypoint_channels, "lower keypoints"), feats,
                         self.keypoint_lower, self.feature_lower, self.fusion_lower, self.visual_lower,
                         self.ctca_lower)
        ratios = self.bone_head(F.cat([z_u, z_l], axis=2).transpose(0, 2, 1))
        return TpveOutput(upper_latents=z_u, lower_latents=z_l, bone_ratios=ratios)


__all__ = ["TpveModel", "TpveOutput"]
