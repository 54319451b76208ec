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
Baseline vision transformer: pre-norm encoder layers over patch tokens, optional
2x2 token merging between stages, final LayerNorm, mean pooling and a linear head.

Parameters live in one flat name -> Tensor dict. Layers hold references into that
dict, so layers that share weights hold the very same Tensor objects.

Naming:
    patch_embed.weight / patch_embed.bias / pos_embed
    merge.{stage}.weight / merge.{stage}.bias
    blocks.{i}.norm1.* / blocks.{i}.norm2.*          per layer
    blocks.{owner}.attn.* / blocks.{owner}.mlp.*     owner = first layer of the share group
    norm.gain / norm.bias / head.weight / head.bias
"""
import copy
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import truncnorm

from errors import DimensionError
from numerics import ops
from numerics.tensor import Tensor, current_tape, resolve_dtype
from transformer.config import ModelConfig, StageConfig
from transformer.layers import (
    AttentionWeights,
    LayerNormWeights,
    MlpWeights,
    drop_path,
    linear,
    merge_tokens,
    mlp_forward,
    msa_forward,
    patch_embed,
)

logger = logging.getLogger(__name__)

INIT_STD = 0.02
PARAM_GROUPS = ("patch_embed", "pos_embed", "merge", "blocks", "transforms", "norm", "head")
TRANSFORM_KEYS = ("head_mix", "dwconv")


@dataclass
class LayerCapture:
    q: Tensor
    k: Tensor
    v: Tensor
    logits: Tensor
    attn: Tensor
    hidden: Tensor
    output: Tensor


@dataclass
class CaptureSet:
    layers: list[LayerCapture]
    logits: Tensor

    def __len__(self) -> int:
        return len(self.layers)


# --- layouts -----------------------------------------------------------------

@dataclass
class ParamLayout:
    """Parameter names and shapes of a model, without any storage."""

    cfg: ModelConfig
    shapes: dict[str, tuple]
    groups: list[list[int]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(int(np.prod(s, dtype=np.int64)) for s in self.shapes.values())


def singleton_groups(cfg: ModelConfig) -> list[list[int]]:
    return [[i] for i in range(cfg.num_layers)]


def vit_layout(
    cfg: ModelConfig,
    groups: list[list[int]] | None = None,
    layer_extras: Callable[[int, StageConfig], dict[str, tuple]] | None = None,
) -> ParamLayout:
    groups = groups or singleton_groups(cfg)
    owner = {i: g[0] for g in groups for i in g}
    stages = cfg.layer_stages()
    first = cfg.stages[0]
    num_tokens = (cfg.image_size // cfg.patch_size) ** 2

    shapes: dict[str, tuple] = {
        "patch_embed.weight": (cfg.patch_dim, first.embed_dim),
        "patch_embed.bias": (first.embed_dim,),
        "pos_embed": (num_tokens, first.embed_dim),
    }
    prev_stage = 0
    for i, s in enumerate(stages):
        stage = cfg.stages[s]
        d = stage.embed_dim
        if s != prev_stage and stage.merge_tokens:
            shapes[f"merge.{s}.weight"] = (4 * cfg.stages[s - 1].embed_dim, d)
            shapes[f"merge.{s}.bias"] = (d,)
        prev_stage = s
        blk = f"blocks.{i}"
        shared = f"blocks.{owner[i]}"
        for k, shape in LayerNormWeights.shapes(d).items():
            shapes[f"{blk}.norm1.{k}"] = shape
        if owner[i] == i:
            for k, shape in AttentionWeights.shapes(d).items():
                shapes[f"{shared}.attn.{k}"] = shape
        for k, shape in LayerNormWeights.shapes(d).items():
            shapes[f"{blk}.norm2.{k}"] = shape
        if owner[i] == i:
            for k, shape in MlpWeights.shapes(d, stage.mlp_dim).items():
                shapes[f"{shared}.mlp.{k}"] = shape
        if layer_extras is not None:
            for k, shape in layer_extras(i, stage).items():
                shapes[f"{blk}.{k}"] = shape
    last = cfg.stages[-1].embed_dim
    shapes["norm.gain"] = (last,)
    shapes["norm.bias"] = (last,)
    shapes["head.weight"] = (last, cfg.num_classes)
    shapes["head.bias"] = (cfg.num_classes,)
    return ParamLayout(cfg=cfg, shapes=shapes, groups=[list(g) for g in groups])


def param_group(name: str) -> str:
    head = name.split(".", 1)[0]
    if head == "blocks":
        parts = name.split(".")
        return "transforms" if parts[2] in TRANSFORM_KEYS else "blocks"
    if head not in PARAM_GROUPS:
        raise DimensionError(f"parameter {name!r} belongs to no known group")
    return head


def count_params(model) -> dict[str, int]:
    """Exact parameter count per group plus total; shared tensors count once."""
    layout = model if isinstance(model, ParamLayout) else model.layout()
    counts = {g: 0 for g in PARAM_GROUPS}
    for name, shape in layout.shapes.items():
        counts[param_group(name)] += int(np.prod(shape, dtype=np.int64))
    counts["total"] = sum(counts[g] for g in PARAM_GROUPS)
    return counts


def init_parameters(layout: ParamLayout, seed: int = 0, dtype=None) -> dict[str, Tensor]:
    """Truncated-normal weights, zero biases, unit gains; head mixing at identity, kernels at delta."""
    dtype = resolve_dtype(dtype)
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in layout.shapes.items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gain":
            value = np.ones(shape)
        elif leaf.endswith("bias"):
            value = np.zeros(shape)
        elif leaf in ("f1", "f2"):
            value = np.eye(shape[0])
        elif leaf == "kernel":
            value = np.zeros(shape)
            value[shape[0] // 2, shape[1] // 2, :] = 1.0
        else:
            value = truncnorm.rvs(-2.0, 2.0, scale=INIT_STD, size=shape, random_state=rng)
        params[name] = Tensor(value, dtype=dtype, name=name)
    return params


# --- layers ------------------------------------------------------------------

@dataclass
class EncoderLayer:
    index: int
    stage: int
    num_heads: int
    grid: int
    norm1: LayerNormWeights
    attn: AttentionWeights
    norm2: LayerNormWeights
    mlp: MlpWeights

    def attention(self, x: Tensor):
        return msa_forward(x, self.attn, self.num_heads)

    def feed_forward(self, y: Tensor) -> Tensor:
        return mlp_forward(y, self.mlp)

    def forward(self, z: Tensor, *, drop_rate: float = 0.0, rng=None) -> tuple[Tensor, LayerCapture]:
        a, cap = self.attention(ops.layer_norm(z, self.norm1.gain, self.norm1.bias))
        z = ops.add(z, drop_path(a, drop_rate, rng))
        hidden = self.feed_forward(ops.layer_norm(z, self.norm2.gain, self.norm2.bias))
        z = ops.add(z, drop_path(hidden, drop_rate, rng))
        return z, LayerCapture(
            q=cap.q, k=cap.k, v=cap.v, logits=cap.logits, attn=cap.attn, hidden=hidden, output=z
        )

    def with_views(self) -> "EncoderLayer":
        """Route this layer's attention/MLP weights through watched identity views.

        The gradient of blocks.{i}.view.* is this layer's own share of the
        gradient of a (possibly shared) weight. Without an active tape this is a no-op.
        """
        tape = current_tape()
        if tape is None:
            return self

        def viewed(weights, prefix):
            views = {name: ops.identity(t) for name, t in weights.named(prefix).items()}
            tape.watch(views)
            return type(weights).from_params(views, prefix)

        base = f"blocks.{self.index}.view"
        return dataclasses.replace(self, attn=viewed(self.attn, f"{base}.attn"), mlp=viewed(self.mlp, f"{base}.mlp"))


# --- model -------------------------------------------------------------------

class VisionTransformer:
    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor], groups: list[list[int]] | None = None):
        self.cfg = cfg
        self.groups = [list(g) for g in (groups or singleton_groups(cfg))]
        self._owner = {i: g[0] for g in self.groups for i in g}
        expected = self.expected_layout().shapes
        if set(expected) != set(params):
            missing = sorted(set(expected) - set(params))[:3]
            extra = sorted(set(params) - set(expected))[:3]
            raise DimensionError(f"parameters do not match the layout (missing {missing}, unexpected {extra})")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise DimensionError(f"{name}: expected shape {shape}, got {params[name].shape}")
        # layout order
        self.params = {name: params[name] for name in expected}
        self.layers = [self._make_layer(i) for i in range(cfg.num_layers)]

    def expected_layout(self) -> ParamLayout:
        return vit_layout(self.cfg, self.groups)

    def owner(self, layer: int) -> int:
        return self._owner[layer]

    def _layer_fields(self, i: int) -> dict:
        s = self.cfg.layer_stages()[i]
        p, shared = f"blocks.{i}", f"blocks.{self.owner(i)}"
        return dict(
            index=i,
            stage=s,
            num_heads=self.cfg.stages[s].num_heads,
            grid=self.cfg.grids()[s],
            norm1=LayerNormWeights.from_params(self.params, f"{p}.norm1"),
            attn=AttentionWeights.from_params(self.params, f"{shared}.attn"),
            norm2=LayerNormWeights.from_params(self.params, f"{p}.norm2"),
            mlp=MlpWeights.from_params(self.params, f"{shared}.mlp"),
        )

    def _make_layer(self, i: int) -> EncoderLayer:
        return EncoderLayer(**self._layer_fields(i))

    @property
    def dtype(self) -> np.dtype:
        return self.params["head.weight"].dtype

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.params)

    def param_shapes(self) -> dict[str, tuple]:
        return {name: t.shape for name, t in self.params.items()}

    def layout(self) -> ParamLayout:
        return ParamLayout(cfg=self.cfg, shapes=self.param_shapes(), groups=[list(g) for g in self.groups])

    def clone(self) -> "VisionTransformer":
        """Independent copy with the same sharing structure."""
        other = copy.copy(self)
        other.params = {n: Tensor(t.data.copy(), name=n) for n, t in self.params.items()}
        other.layers = [other._make_layer(i) for i in range(self.cfg.num_layers)]
        return other

    def forward_with_capture(
        self,
        images,
        *,
        train: bool = False,
        rng: np.random.Generator | None = None,
        layer_views: bool = False,
    ) -> tuple[Tensor, CaptureSet]:
        cfg, P = self.cfg, self.params
        rate = cfg.drop_path_rate if train else 0.0
        if rate > 0.0 and rng is None:
            rng = np.random.default_rng(0)
        grids = cfg.grids()

        z = patch_embed(images, P["patch_embed.weight"], P["patch_embed.bias"], P["pos_embed"], cfg)
        captures = []
        stage = 0
        for layer in self.layers:
            if layer.stage != stage:
                stage = layer.stage
                if cfg.stages[stage].merge_tokens:
                    z = merge_tokens(z, grids[stage - 1], P[f"merge.{stage}.weight"], P[f"merge.{stage}.bias"])
            if layer_views:
                layer = layer.with_views()
            z, cap = layer.forward(z, drop_rate=rate, rng=rng)
            captures.append(cap)

        z = ops.layer_norm(z, P["norm.gain"], P["norm.bias"])
        pooled = ops.mean(z, axis=-2)
        if pooled.ndim == 1:
            pooled = ops.reshape(pooled, (1, pooled.shape[0]))
            logits = ops.reshape(linear(pooled, P["head.weight"], P["head.bias"]), (cfg.num_classes,))
        else:
            logits = linear(pooled, P["head.weight"], P["head.bias"])
        return logits, CaptureSet(layers=captures, logits=logits)

    def forward(self, images, **kwargs) -> Tensor:
        return self.forward_with_capture(images, **kwargs)[0]


def build_vit(cfg: ModelConfig, seed: int = 0, dtype=None) -> VisionTransformer:
    layout = vit_layout(cfg)
    logger.debug("building baseline ViT: %d layers, %d parameters", cfg.num_layers, layout.total)
    return VisionTransformer(cfg, init_parameters(layout, seed, dtype))
