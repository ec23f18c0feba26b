import math

import numpy as np
import pytest

from vtm.autodiff.nn import component_rng
from vtm.autodiff.tensor import Tensor
from vtm.modular.modular_vtm_layers import (
    BoneRatioHead,
    ConvDecoder,
    ConvEncoder,
    SConv1d,
    SConvTranspose1d,
    TemporalContextAggregation,
    UpsamplingHead,
    causal_window_mask,
    get_extra_padding_for_conv1d,
)


@pytest.mark.parametrize("length,kernel,stride", [(32, 4, 2), (33, 4, 2), (16, 3, 1), (8, 4, 4), (7, 1, 1)])
def test_sconv_output_length_is_ceil_of_input_over_stride(length, kernel, stride):
    conv = SConv1d(3, 5, kernel, stride, rng=component_rng(0, "c"))
    y = conv(Tensor(np.ones((2, 3, length))))
    assert y.shape == (2, 5, math.ceil(length / stride))


def test_extra_padding_is_zero_when_length_fits():
    assert get_extra_padding_for_conv1d(32, 4, 2, padding_total=2) == 0
    assert get_extra_padding_for_conv1d(33, 4, 2, padding_total=2) == 1


@pytest.mark.parametrize("kernel,stride", [(4, 2), (4, 4), (3, 1)])
def test_sconv_transpose_multiplies_length(kernel, stride):
    conv = SConvTranspose1d(4, 2, kernel, stride, rng=component_rng(0, "t"))
    assert conv(Tensor(np.ones((1, 4, 6)))).shape == (1, 2, 6 * stride)


def test_sconv_is_local(rng):
    conv = SConv1d(1, 1, 3, 1, rng=component_rng(0, "local"))
    x = rng.normal(size=(1, 1, 12))
    y0 = conv(Tensor(x)).data
    x[0, 0, 11] += 1.0
    y1 = conv(Tensor(x)).data
    changed = np.flatnonzero(np.abs(y1 - y0)[0, 0] > 0)
    assert set(changed) <= {10, 11}


def test_encoder_and_decoder_are_mirrors():
    rng = component_rng(0, "enc")
    enc = ConvEncoder(24, [8, 12, 12], [2, 2, 1], 4, 0.2, rng)
    dec = ConvDecoder([8, 12, 12], [2, 2, 1], 4, 3, 0.2, rng)
    z = enc(Tensor(np.ones((2, 24, 16))))
    assert z.shape == (2, 12, 4)
    assert dec(z).shape == (2, 8, 16)
    assert dec.out_channels == 8


def test_upsampling_head_restores_frame_rate():
    head = UpsamplingHead(10, 6, 8, [2, 2, 1], 4, 0.2, component_rng(0, "head"))
    assert head(Tensor(np.ones((3, 10, 5)))).shape == (3, 8, 20)


def test_causal_window_mask():
    mask = causal_window_mask(5, 2)
    expected = np.array([
        [1, 0, 0, 0, 0],
        [1, 1, 0, 0, 0],
        [0, 1, 1, 0, 0],
        [0, 0, 1, 1, 0],
        [0, 0, 0, 1, 1],
    ], dtype=bool)
    np.testing.assert_array_equal(mask, expected)


def test_context_aggregation_only_looks_back_within_the_window(rng):
    block = TemporalContextAggregation(6, 3, component_rng(0, "ctca"))
    x = rng.normal(size=(1, 10, 6))
    y0 = block(Tensor(x)).data
    x[0, 4] += 1.0
    y1 = block(Tensor(x)).data
    changed = np.flatnonzero(np.abs(y1 - y0).max(axis=-1)[0] > 1e-12)
    np.testing.assert_array_equal(changed, [4, 5, 6])


def test_bone_head_starts_at_unit_ratios_for_zero_features():
    head = BoneRatioHead(7, 5, 23, 0.2, component_rng(0, "bones"))
    head.conv.conv.bias.data = np.zeros(5)
    ratios = head(Tensor(np.zeros((2, 7, 4)))).data
    assert ratios.shape == (2, 23)
    np.testing.assert_allclose(ratios, 1.0)


def test_bone_head_outputs_are_positive(rng):
    head = BoneRatioHead(7, 5, 23, 0.2, component_rng(1, "bones"))
    assert np.all(head(Tensor(10.0 * rng.normal(size=(3, 7, 4)))).data > 0)
