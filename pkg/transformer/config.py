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
"""Architecture description of a (possibly hierarchical) vision transformer."""
from pydantic import BaseModel, ConfigDict, Field, model_validator


class StageConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    num_layers: int = Field(ge=1)
    embed_dim: int = Field(ge=1)
    num_heads: int = Field(ge=1)
    mlp_dim: int = Field(ge=1)
    merge_tokens: bool = False

    @model_validator(mode="after")
    def _check_dims(self) -> "StageConfig":
        if self.embed_dim % self.num_heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.mlp_dim < self.embed_dim:
            raise ValueError(f"mlp_dim {self.mlp_dim} must be >= embed_dim {self.embed_dim}")
        return self


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    stages: list[StageConfig] = Field(min_length=1)
    image_size: int = Field(ge=1)
    patch_size: int = Field(ge=1)
    in_channels: int = Field(default=1, ge=1)
    num_classes: int = Field(ge=2)
    drop_path_rate: float = Field(default=0.0, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_geometry(self) -> "ModelConfig":
        if self.image_size % self.patch_size:
            raise ValueError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.stages[0].merge_tokens:
            raise ValueError("the first stage cannot merge tokens")
        grid = self.image_size // self.patch_size
        for s, stage in enumerate(self.stages[1:], start=1):
            if stage.merge_tokens:
                if grid % 2:
                    raise ValueError(f"stage {s}: cannot merge an odd {grid}x{grid} token grid")
                grid //= 2
            elif stage.embed_dim != self.stages[s - 1].embed_dim:
                raise ValueError(f"stage {s}: width changes without token merging")
        return self

    def grids(self) -> list[int]:
        """Side of the square token grid seen by each stage."""
        grid = self.image_size // self.patch_size
        out = []
        for stage in self.stages:
            if stage.merge_tokens:
                grid //= 2
            out.append(grid)
        return out

    @property
    def num_layers(self) -> int:
        return sum(s.num_layers for s in self.stages)

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.in_channels

    def layer_stages(self) -> list[int]:
        """Stage index of every global layer index."""
        return [s for s, stage in enumerate(self.stages) for _ in range(stage.num_layers)]
