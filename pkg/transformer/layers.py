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
Building blocks of one encoder layer: patch embedding, multi-head self-attention,
the two-layer GELU MLP and 2x2 token merging.

Token activations are [N, d] or [B, N, d]; per-head tensors are [M, N, *] or
[B, M, N, *].
"""
import math
from dataclasses import dataclass, fields

import numpy as np

from errors import ConfigError, DimensionError
from numerics import ops
from numerics.tensor import Tensor


class _Weights:
    """Dataclass mixin: build from / flatten to a prefixed parameter dict."""

    @classmethod
    def from_params(cls, params: dict, prefix: str):
        try:
            return cls(**{f.name: params[f"{prefix}.{f.name}"] for f in fields(cls)})
        except KeyError as exc:
            raise DimensionError(f"missing parameter {exc.args[0]}")

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{f.name}": getattr(self, f.name) for f in fields(self)}

    @classmethod
    def shapes(cls, *dims) -> dict[str, tuple]:
        raise NotImplementedError


@dataclass
class LayerNormWeights(_Weights):
    gain: Tensor
    bias: Tensor

    @classmethod
    def shapes(cls, d: int) -> dict[str, tuple]:
        return {"gain": (d,), "bias": (d,)}


@dataclass
class AttentionWeights(_Weights):
    q_weight: Tensor
    q_bias: Tensor
    k_weight: Tensor
    k_bias: Tensor
    v_weight: Tensor
    v_bias: Tensor
    proj_weight: Tensor
    proj_bias: Tensor

    @classmethod
    def shapes(cls, d: int) -> dict[str, tuple]:
        out = {}
        for p in ("q", "k", "v", "proj"):
            out[f"{p}_weight"] = (d, d)
            out[f"{p}_bias"] = (d,)
        return out


@dataclass
class MlpWeights(_Weights):
    fc1_weight: Tensor
    fc1_bias: Tensor
    fc2_weight: Tensor
    fc2_bias: Tensor

    @classmethod
    def shapes(cls, d: int, hidden: int) -> dict[str, tuple]:
        return {"fc1_weight": (d, hidden), "fc1_bias": (hidden,), "fc2_weight": (hidden, d), "fc2_bias": (d,)}


@dataclass
class AttentionCapture:
    q: Tensor
    k: Tensor
    v: Tensor
    logits: Tensor
    attn: Tensor


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return ops.add(ops.matmul(x, weight), bias)


# --- patch embedding ---------------------------------------------------------

def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """[B, s, s, c] -> [B, N, p*p*c]; patches row-major, pixels (row, col, channel) within a patch."""
    b, s, _, c = images.shape
    g = s // patch
    x = images.reshape(b, g, patch, g, patch, c).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(b, g * g, patch * patch * c)


def patch_embed(images, weight: Tensor, bias: Tensor, pos: Tensor, cfg) -> Tensor:
    arr = images.data if isinstance(images, Tensor) else np.asarray(images)
    batched = arr.ndim == 4
    if not batched:
        arr = arr[None]
    if arr.ndim != 4:
        raise DimensionError(f"patch_embed: expected [h, w, c] or [B, h, w, c], got {arr.shape}")
    _, h, w, c = arr.shape
    if h != cfg.image_size or w != cfg.image_size or c != cfg.in_channels:
        raise ConfigError(
            f"patch_embed: image {h}x{w}x{c} does not match config "
            f"{cfg.image_size}x{cfg.image_size}x{cfg.in_channels}"
        )
    if cfg.image_size % cfg.patch_size:
        raise ConfigError(f"patch_embed: image {cfg.image_size} not divisible by patch {cfg.patch_size}")
    patches = patchify(arr, cfg.patch_size)
    x = Tensor(patches if batched else patches[0], dtype=weight.dtype)
    return ops.add(linear(x, weight, bias), pos)


# --- attention ---------------------------------------------------------------

def split_heads(x: Tensor, num_heads: int) -> Tensor:
    *lead, n, d = x.shape
    if d % num_heads:
        raise DimensionError(f"width {d} not divisible by {num_heads} heads")
    x = ops.reshape(x, tuple(lead) + (n, num_heads, d // num_heads))
    return ops.transpose(x, (0, 2, 1, 3) if lead else (1, 0, 2))


def combine_heads(h: Tensor) -> Tensor:
    *lead, m, n, dh = h.shape
    h = ops.transpose(h, (0, 2, 1, 3) if lead else (1, 0, 2))
    return ops.reshape(h, tuple(lead) + (n, m * dh))


def qkv_heads(x: Tensor, w: AttentionWeights, num_heads: int):
    q = linear(x, w.q_weight, w.q_bias)
    k = linear(x, w.k_weight, w.k_bias)
    v = linear(x, w.v_weight, w.v_bias)
    return q, k, v, split_heads(q, num_heads), split_heads(k, num_heads), split_heads(v, num_heads)


def scaled_logits(qh: Tensor, kh: Tensor) -> Tensor:
    """Per-head Q Kᵀ / √d_h."""
    return ops.scale(ops.matmul(qh, ops.swap_last(kh)), 1.0 / math.sqrt(qh.shape[-1]))


def msa_forward(z: Tensor, w: AttentionWeights, num_heads: int) -> tuple[Tensor, AttentionCapture]:
    q, k, v, qh, kh, vh = qkv_heads(z, w, num_heads)
    logits = scaled_logits(qh, kh)
    attn = ops.softmax_rows(logits)
    out = linear(combine_heads(ops.matmul(attn, vh)), w.proj_weight, w.proj_bias)
    return out, AttentionCapture(q=q, k=k, v=v, logits=logits, attn=attn)


# --- MLP ---------------------------------------------------------------------

def mlp_forward(y: Tensor, w: MlpWeights) -> Tensor:
    if w.fc1_weight.shape[0] != y.shape[-1] or w.fc2_weight.shape != w.fc1_weight.shape[::-1]:
        raise DimensionError(
            f"mlp_forward: input {y.shape} with fc1 {w.fc1_weight.shape} and fc2 {w.fc2_weight.shape}"
        )
    return linear(ops.gelu(linear(y, w.fc1_weight, w.fc1_bias)), w.fc2_weight, w.fc2_bias)


# --- token merging -----------------------------------------------------------

def merge_index(grid: int) -> np.ndarray:
    """[N/4, 4] token indices of each 2x2 block, blocks and members row-major."""
    if grid % 2:
        raise ConfigError(f"cannot merge an odd {grid}x{grid} token grid")
    half = grid // 2
    rows, cols = np.meshgrid(np.arange(half), np.arange(half), indexing="ij")
    base = (2 * rows * grid + 2 * cols).reshape(-1, 1)
    return base + np.array([0, 1, grid, grid + 1])


def merge_tokens(z: Tensor, grid: int, weight: Tensor, bias: Tensor) -> Tensor:
    """Concatenate each 2x2 neighbourhood (4d) and project to the next stage width."""
    if z.shape[-2] != grid * grid:
        raise DimensionError(f"merge_tokens: {z.shape[-2]} tokens do not form a {grid}x{grid} grid")
    *lead, _, d = z.shape
    index = merge_index(grid)
    gathered = ops.gather_tokens(z, index)
    flat = ops.reshape(gathered, tuple(lead) + (index.shape[0], 4 * d))
    return linear(flat, weight, bias)


def drop_path(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Zero the residual branch per sample with probability rate, rescale survivors."""
    if rate <= 0.0:
        return x
    batch = x.shape[0] if x.ndim == 3 else 1
    keep = (rng.random(batch) >= rate).astype(x.dtype) / (1.0 - rate)
    mask = keep.reshape((batch, 1, 1) if x.ndim == 3 else (1, 1))
    return ops.mul(x, Tensor(mask, dtype=x.dtype))
