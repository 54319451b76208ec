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
"""Cross-layer sharing plans: which consecutive layers of a stage reuse one weight set."""
import logging
from dataclasses import dataclass
from typing import ClassVar

from errors import ConfigError
from transformer.config import ModelConfig

logger = logging.getLogger(__name__)

MODES = ("every_k", "all_in_stage")


@dataclass(frozen=True)
class SharingPlan:
    mode: str
    k: int
    groups: tuple[tuple[int, ...], ...]
    stages: tuple[int, ...]

    # Always per layer, never shared.
    UNSHARED_PER_LAYER: ClassVar[tuple[str, ...]] = (
        "norm1.gain",
        "norm1.bias",
        "norm2.gain",
        "norm2.bias",
        "head_mix.f1",
        "head_mix.f2",
        "dwconv.kernel",
    )

    @property
    def num_layers(self) -> int:
        return sum(len(g) for g in self.groups)

    def owner(self, layer: int) -> int:
        for group in self.groups:
            if layer in group:
                return group[0]
        raise ConfigError(f"layer {layer} is not covered by the sharing plan")

    def as_lists(self) -> list[list[int]]:
        return [list(g) for g in self.groups]

    def validate(self, cfg: ModelConfig) -> None:
        """Groups must partition the layers into consecutive runs inside one stage each."""
        layer_stage = cfg.layer_stages()
        seen = [i for g in self.groups for i in g]
        if seen != list(range(cfg.num_layers)):
            raise ConfigError(f"sharing groups {self.as_lists()} do not partition {cfg.num_layers} layers in order")
        if len(self.stages) != len(self.groups):
            raise ConfigError("sharing plan has a stage entry per group")
        for group, stage in zip(self.groups, self.stages):
            if not group or any(layer_stage[i] != stage for i in group):
                raise ConfigError(f"share group {list(group)} crosses the boundary of stage {stage}")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "k": self.k, "groups": self.as_lists(), "stages": list(self.stages)}

    @classmethod
    def from_dict(cls, raw: dict) -> "SharingPlan":
        try:
            return cls(
                mode=str(raw["mode"]),
                k=int(raw["k"]),
                groups=tuple(tuple(int(i) for i in g) for g in raw["groups"]),
                stages=tuple(int(s) for s in raw["stages"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed sharing plan: {exc}")


# per-layer tensor kinds, the name segment after blocks.{i}
UNSHARED_KINDS = tuple(dict.fromkeys(name.split(".")[0] for name in SharingPlan.UNSHARED_PER_LAYER))
NORM_KINDS = tuple(kind for kind in UNSHARED_KINDS if kind.startswith("norm"))


def make_sharing_plan(cfg: ModelConfig, mode: str = "every_k", k: int = 1) -> SharingPlan:
    """every_k(K): consecutive runs of K layers per stage, the last run may be shorter.
    all_in_stage: one group per stage. every_k(1) is the unshared plan.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown sharing mode {mode!r}; expected one of {MODES}")
    if mode == "every_k" and k < 1:
        raise ConfigError(f"share K must be >= 1, got {k}")

    groups, stages = [], []
    start = 0
    for s, stage in enumerate(cfg.stages):
        layers = list(range(start, start + stage.num_layers))
        start += stage.num_layers
        if mode == "all_in_stage":
            size = len(layers)
        else:
            if k > len(layers):
                raise ConfigError(f"share K={k} exceeds the {len(layers)} layers of stage {s}")
            size = k
        for j in range(0, len(layers), size):
            groups.append(tuple(layers[j:j + size]))
            stages.append(s)

    plan = SharingPlan(mode=mode, k=k if mode == "every_k" else 0, groups=tuple(groups), stages=tuple(stages))
    logger.debug("sharing plan %s(k=%d): %s", mode, plan.k, plan.as_lists())
    return plan


def identity_plan(cfg: ModelConfig) -> SharingPlan:
    return make_sharing_plan(cfg, "every_k", 1)
