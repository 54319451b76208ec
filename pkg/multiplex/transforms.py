# Copyright 2025 VenkatSambath
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""
Per-layer weight transformations applied around shared weights.

Attention: pre-softmax logits are mixed across heads by F2 and the resulting
attention maps are mixed by F1 before they weight the values. MLP: the (post-LN)
input tokens pass through a depth-wise convolution over the token grid first.
"""
from dataclasses import dataclass

from errors import ConfigError, DimensionError
from numerics import ops
from numerics.tensor import Tensor
from transformer.layers import (
    AttentionCapture,
    AttentionWeights,
    MlpWeights,
    combine_heads,
    linear,
    mlp_forward,
    qkv_heads,
    scaled_logits,
)


@dataclass
class MsaTransform:
    f1: Tensor
    f2: Tensor

    def __post_init__(self):
        if self.f1.ndim != 2 or self.f1.shape[0] != self.f1.shape[1] or self.f1.shape != self.f2.shape:
            raise DimensionError(f"head mixing kernels must be square and equal: {self.f1.shape}, {self.f2.shape}")

    @property
    def num_heads(self) -> int:
        return self.f1.shape[0]


@dataclass
class MlpTransform:
    kernels: Tensor

    def __post_init__(self):
        if self.kernels.ndim != 3 or self.kernels.shape[0] != self.kernels.shape[1]:
            raise DimensionError(f"depth-wise kernels must be [K, K, d], got {self.kernels.shape}")
        if self.kernels.shape[0] % 2 == 0:
            raise ConfigError(f"depth-wise kernel size must be odd, got {self.kernels.shape[0]}")

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[0]


def msa_transformed_forward(
    z: Tensor, w: AttentionWeights, t: MsaTransform, num_heads: int
) -> tuple[Tensor, AttentionCapture]:
    if t.num_heads != num_heads:
        raise DimensionError(f"head mixing is {t.num_heads}x{t.num_heads} for {num_heads} heads")
    q, k, v, qh, kh, vh = qkv_heads(z, w, num_heads)
    logits = ops.mix_heads(t.f2, scaled_logits(qh, kh))
    attn = ops.softmax_rows(logits)
    heads = ops.matmul(ops.mix_heads(t.f1, attn), vh)
    out = linear(combine_heads(heads), w.proj_weight, w.proj_bias)
    return out, AttentionCapture(q=q, k=k, v=v, logits=logits, attn=attn)


def mlp_transformed_forward(y: Tensor, w: MlpWeights, t: MlpTransform, grid: tuple[int, int]) -> Tensor:
    h, w_ = grid
    *lead, n, d = y.shape
    if n != h * w_:
        raise ConfigError(f"{n} tokens do not form a {h}x{w_} grid")
    if t.kernels.shape[-1] != d:
        raise DimensionError(f"depth-wise kernels {t.kernels.shape} do not match width {d}")
    tokens = ops.reshape(y, tuple(lead) + (h, w_, d))
    mixed = ops.reshape(ops.depthwise_conv2d(tokens, t.kernels), tuple(lead) + (n, d))
    return mlp_forward(mixed, w)
