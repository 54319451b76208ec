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
Compact (weight-multiplexed) vision transformer.

Layers of one share group read the same attention/MLP tensors; each layer keeps
its own LayerNorms and, when enabled, its own head-mixing kernels (F1, F2) and
depth-wise MLP kernels.
"""
import logging
from dataclasses import dataclass

from pydantic import BaseModel, ConfigDict, Field, field_validator

from errors import ConfigError
from multiplex.plan import SharingPlan
from multiplex.transforms import MlpTransform, MsaTransform, mlp_transformed_forward, msa_transformed_forward
from numerics.tensor import Tensor
from transformer.config import ModelConfig, StageConfig
from transformer.model import EncoderLayer, ParamLayout, VisionTransformer, init_parameters, vit_layout

logger = logging.getLogger(__name__)


class TransformConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    msa: bool = False
    mlp: bool = False
    kernel_size: int = Field(default=3, ge=1)

    @field_validator("kernel_size")
    @classmethod
    def _odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {v}")
        return v


def transform_shapes(transforms: TransformConfig, stage: StageConfig) -> dict[str, tuple]:
    shapes = {}
    if transforms.msa:
        m = stage.num_heads
        shapes["head_mix.f1"] = (m, m)
        shapes["head_mix.f2"] = (m, m)
    if transforms.mlp:
        k = transforms.kernel_size
        shapes["dwconv.kernel"] = (k, k, stage.embed_dim)
    return shapes


def compact_layout(cfg: ModelConfig, plan: SharingPlan, transforms: TransformConfig) -> ParamLayout:
    plan.validate(cfg)
    return vit_layout(cfg, plan.as_lists(), lambda i, stage: transform_shapes(transforms, stage))


@dataclass
class MultiplexedLayer(EncoderLayer):
    msa_t: MsaTransform | None = None
    mlp_t: MlpTransform | None = None

    def attention(self, x: Tensor):
        if self.msa_t is None:
            return super().attention(x)
        return msa_transformed_forward(x, self.attn, self.msa_t, self.num_heads)

    def feed_forward(self, y: Tensor) -> Tensor:
        if self.mlp_t is None:
            return super().feed_forward(y)
        return mlp_transformed_forward(y, self.mlp, self.mlp_t, (self.grid, self.grid))


class CompactVisionTransformer(VisionTransformer):
    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor], plan: SharingPlan, transforms: TransformConfig):
        plan.validate(cfg)
        self.plan = plan
        self.transforms = transforms
        super().__init__(cfg, params, plan.as_lists())

    def expected_layout(self) -> ParamLayout:
        return compact_layout(self.cfg, self.plan, self.transforms)

    def _make_layer(self, i: int) -> MultiplexedLayer:
        p = f"blocks.{i}"
        msa_t = mlp_t = None
        if self.transforms.msa:
            msa_t = MsaTransform(f1=self.params[f"{p}.head_mix.f1"], f2=self.params[f"{p}.head_mix.f2"])
        if self.transforms.mlp:
            mlp_t = MlpTransform(kernels=self.params[f"{p}.dwconv.kernel"])
        return MultiplexedLayer(**self._layer_fields(i), msa_t=msa_t, mlp_t=mlp_t)


def build_compact_model(
    teacher_cfg: ModelConfig,
    plan: SharingPlan,
    transforms: TransformConfig | None = None,
    teacher: VisionTransformer | None = None,
    seed: int = 0,
    dtype=None,
) -> CompactVisionTransformer:
    """Student with the teacher's architecture, shared weights per plan group and identity transforms.

    With a teacher, every same-named tensor is copied: shared attention/MLP weights
    come from the first layer of each group, LayerNorms from the matching layer,
    plus embeddings, merges, final norm and head.
    """
    transforms = transforms or TransformConfig()
    layout = compact_layout(teacher_cfg, plan, transforms)
    if teacher is not None:
        if teacher.cfg != teacher_cfg:
            raise ConfigError("teacher checkpoint architecture differs from the requested config")
        dtype = dtype or teacher.dtype
    params = init_parameters(layout, seed, dtype)

    if teacher is not None:
        copied = 0
        for name, tensor in params.items():
            source = teacher.params.get(name)
            if source is None:
                continue
            if source.shape != tensor.shape:
                raise ConfigError(f"{name}: teacher shape {source.shape} != student shape {tensor.shape}")
            tensor.data[...] = source.data
            copied += 1
        logger.info("seeded %d of %d student tensors from the teacher", copied, len(params))

    return CompactVisionTransformer(teacher_cfg, params, plan, transforms)
