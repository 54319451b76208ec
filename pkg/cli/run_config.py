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
Run configuration: one YAML document, validated by pydantic, with every scalar
leaf overridable from the command line by a same-named dashed flag.
"""
import argparse
import logging
from typing import Any, Literal, get_args, get_origin

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

import app_config
from distill.losses import DistillConfig
from distill.optimizer import OptimConfig
from errors import ConfigError
from multiplex.compact import TransformConfig
from multiplex.plan import SharingPlan, identity_plan, make_sharing_plan
from transformer.config import ModelConfig

logger = logging.getLogger(__name__)

# read by app_config, not part of RunConfig
ENGINE_SECTIONS = ("numerics", "logging", "runtime")

TRANSFORM_ALIASES = {
    "none": (False, False),
    "msa": (True, False),
    "mlp": (False, True),
    "all": (True, True),
}


class SharingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    share: Literal["none", "every_k", "all"] = "all"
    share_k: int = Field(default=2, ge=1)


class DataConfig(BaseModel):
    """Image size and class count come from the model section."""

    model_config = ConfigDict(extra="forbid")

    data_seed: int = 0
    num_train: int = Field(default=20000, ge=0)
    num_test: int = Field(default=2000, ge=0)
    noise_sigma: float = Field(default=0.5, ge=0.0)


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    out_dir: str = "runs/default"


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ModelConfig
    sharing: SharingConfig = Field(default_factory=SharingConfig)
    transforms: TransformConfig = Field(default_factory=TransformConfig)
    distill: DistillConfig = Field(default_factory=DistillConfig)
    optim: OptimConfig = Field(default_factory=OptimConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def sharing_plan(self) -> SharingPlan:
        if self.sharing.share == "none":
            return identity_plan(self.model)
        if self.sharing.share == "every_k":
            return make_sharing_plan(self.model, "every_k", self.sharing.share_k)
        return make_sharing_plan(self.model, "all_in_stage")

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def _scalar_type(annotation) -> Any:
    if annotation in (bool, int, float, str):
        return annotation
    if get_origin(annotation) is Literal:
        return annotation
    return None


def leaf_fields() -> dict[str, tuple[str, Any]]:
    """flag name -> (section, annotation) for every scalar field of every section."""
    out = {}
    for section, info in RunConfig.model_fields.items():
        for name, field in info.annotation.model_fields.items():
            kind = _scalar_type(field.annotation)
            if kind is None:
                continue
            if name in out:
                raise ConfigError(f"config field {name!r} is not unique across sections")
            out[name] = (section, kind)
    return out


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def add_override_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides")
    for name, (section, kind) in leaf_fields().items():
        flag = "--" + name.replace("_", "-")
        help_text = f"override {section}.{name}"
        if kind is bool:
            group.add_argument(flag, dest=name, type=_parse_bool, default=None, metavar="BOOL", help=help_text)
        elif get_origin(kind) is Literal:
            group.add_argument(flag, dest=name, choices=list(get_args(kind)), default=None, help=help_text)
        else:
            group.add_argument(flag, dest=name, type=kind, default=None, help=help_text)
    group.add_argument(
        "--transform", dest="transform", choices=list(TRANSFORM_ALIASES), default=None,
        help="shorthand for transforms.msa / transforms.mlp",
    )


def overrides_from_args(args: argparse.Namespace) -> dict[str, Any]:
    out = {}
    for name in leaf_fields():
        value = getattr(args, name, None)
        if value is not None:
            out[name] = value
    alias = getattr(args, "transform", None)
    if alias is not None:
        msa, mlp = TRANSFORM_ALIASES[alias]
        out.setdefault("msa", msa)
        out.setdefault("mlp", mlp)
    return out


def load_run_config(path: str | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    path = path or app_config.CONFIG_PATH
    try:
        with open(path, "r") as f:
            raw = yaml.safe_load(f) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping of sections")
    raw = {k: v for k, v in raw.items() if k not in ENGINE_SECTIONS}

    leaves = leaf_fields()
    for name, value in (overrides or {}).items():
        if name not in leaves:
            raise ConfigError(f"unknown config field {name!r}")
        section = leaves[name][0]
        raw.setdefault(section, {})[name] = value
    return run_config_from_dict(raw, source=path)


def run_config_from_dict(raw: dict, source: str = "<dict>") -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid run config ({source}): {exc}")
