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
"""Parameter accounting for shared and multiplexed models."""
import math

from pydantic import BaseModel

from multiplex.plan import NORM_KINDS, UNSHARED_KINDS
from transformer.model import ParamLayout, count_params, vit_layout


class ParamReport(BaseModel):
    share_mode: str
    share_k: int
    num_groups: int
    shared_params: int
    layer_norm_params: int
    transform_params: int
    embedding_head_params: int
    total: int
    unshared_total: int
    compression_ratio: float
    block_params: int
    unshared_block_params: int
    block_ratio: float
    groups: dict[str, int]


def _classify(name: str) -> str:
    parts = name.split(".")
    if parts[0] != "blocks":
        return "embedding_head"
    kind = parts[2]
    if kind not in UNSHARED_KINDS:
        return "shared"
    return "layer_norm" if kind in NORM_KINDS else "transform"


def param_report(model, plan=None) -> ParamReport:
    """Totals of shared θ, per-layer θ' (LayerNorms + transforms) and embeddings/head,
    compared with the same architecture without sharing or transforms.
    """
    layout: ParamLayout = model if isinstance(model, ParamLayout) else model.layout()
    plan = plan if plan is not None else getattr(model, "plan", None)
    sums = {"shared": 0, "layer_norm": 0, "transform": 0, "embedding_head": 0}
    for name, shape in layout.shapes.items():
        sums[_classify(name)] += math.prod(shape)

    baseline = count_params(vit_layout(layout.cfg))
    block = sums["shared"] + sums["layer_norm"] + sums["transform"]
    total = block + sums["embedding_head"]
    return ParamReport(
        share_mode=plan.mode if plan is not None else "every_k",
        share_k=plan.k if plan is not None else 1,
        num_groups=len(layout.groups),
        shared_params=sums["shared"],
        layer_norm_params=sums["layer_norm"],
        transform_params=sums["transform"],
        embedding_head_params=sums["embedding_head"],
        total=total,
        unshared_total=baseline["total"],
        compression_ratio=round(baseline["total"] / total, 4),
        block_params=block,
        unshared_block_params=baseline["blocks"],
        block_ratio=round(baseline["blocks"] / block, 4),
        groups=count_params(layout),
    )
