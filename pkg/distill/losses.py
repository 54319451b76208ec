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
Distillation objectives.

Every cross-entropy is CE(student, teacher) = −(1/rows) Σ teacher · log(student),
with teacher-side tensors detached so gradient reaches the student only.
"""
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from errors import DimensionError, PairingError
from distill.relations import RELATION_PAIRS, attention_relations, hidden_relation
from numerics import ops
from numerics.tensor import Tensor, no_grad
from transformer.model import CaptureSet

logger = logging.getLogger(__name__)


class DistillConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    temperature: float = Field(default=1.0, gt=0.0)
    beta: float = Field(default=1.0, ge=0.0)
    gamma: float = Field(default=0.1, ge=0.0)
    gt_weight: float = Field(default=0.0, ge=0.0)
    hetero_teacher: bool = False

    @property
    def pred_weight(self) -> float:
        # GT and prediction terms split the unit weight (0.5 / 0.5 at gt_weight 0.5)
        return max(0.0, 1.0 - self.gt_weight) if self.gt_weight > 0 else 1.0


def detach(x: Tensor) -> Tensor:
    return Tensor(x.data, dtype=x.dtype)


def loss_pred(z_s: Tensor, z_t: Tensor, temperature: float = 1.0) -> Tensor:
    """CE(softmax(z_s/T), softmax(z_t/T)); batched logits average over the batch."""
    if z_s.shape != z_t.shape:
        raise DimensionError(f"student logits {z_s.shape} and teacher logits {z_t.shape} differ")
    p_s = ops.softmax_rows(ops.scale(z_s, 1.0 / temperature))
    p_t = ops.softmax_rows(ops.scale(detach(z_t), 1.0 / temperature))
    return ops.cross_entropy_rows(p_s, p_t)


def _paired(student: CaptureSet, teacher: CaptureSet):
    if len(student.layers) != len(teacher.layers):
        raise PairingError(f"student has {len(student.layers)} layers, teacher has {len(teacher.layers)}")
    return zip(student.layers, teacher.layers)


def _mean(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = ops.add(total, t)
    return ops.scale(total, 1.0 / len(terms))


def loss_attn(student: CaptureSet, teacher: CaptureSet) -> Tensor:
    """Mean over layers of (1/9N) Σ_pairs Σ_rows CE over the nine Q/K/V relation matrices."""
    per_layer = []
    for ls, lt in _paired(student, teacher):
        rs = attention_relations(ls)
        with no_grad():
            rt = attention_relations(lt)
        per_layer.append(
            _mean([ops.cross_entropy_rows(rs[p], detach(rt[p])) for p in RELATION_PAIRS])
        )
    return _mean(per_layer)


def loss_hddn(student: CaptureSet, teacher: CaptureSet) -> Tensor:
    """Mean over layers of (1/N) Σ_rows CE between hidden-state relation matrices."""
    per_layer = []
    for ls, lt in _paired(student, teacher):
        rs = hidden_relation(ls)
        with no_grad():
            rt = hidden_relation(lt)
        per_layer.append(ops.cross_entropy_rows(rs, detach(rt)))
    return _mean(per_layer)


def loss_gt(logits: Tensor, labels) -> Tensor:
    """Label cross-entropy of softmax(logits) against one-hot targets."""
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = logits.shape[-1]
    if labels.shape != logits.shape[:-1]:
        raise DimensionError(f"labels {labels.shape} do not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DimensionError(f"labels outside [0, {num_classes})")
    target = np.eye(num_classes)[labels]
    return ops.cross_entropy_rows(ops.softmax_rows(logits), Tensor(target, dtype=logits.dtype))


def loss_total(
    student,
    teacher,
    images,
    labels,
    cfg: DistillConfig,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
    layer_views: bool = False,
) -> tuple[Tensor, dict[str, float]]:
    """pred + β·attn + γ·hddn (+ gt_weight·GT). The teacher runs without recording."""
    with no_grad():
        t_logits, t_cap = teacher.forward_with_capture(images)
    s_logits, s_cap = student.forward_with_capture(images, train=train, rng=rng, layer_views=layer_views)

    pred = loss_pred(s_logits, t_logits, cfg.temperature)
    total = ops.scale(pred, cfg.pred_weight)
    components = {"loss_pred": pred.item(), "loss_attn": 0.0, "loss_hddn": 0.0, "loss_gt": 0.0}

    if not cfg.hetero_teacher:
        attn = loss_attn(s_cap, t_cap)
        hddn = loss_hddn(s_cap, t_cap)
        total = ops.add(ops.add(total, ops.scale(attn, cfg.beta)), ops.scale(hddn, cfg.gamma))
        components["loss_attn"] = attn.item()
        components["loss_hddn"] = hddn.item()

    if cfg.gt_weight > 0:
        gt = loss_gt(s_logits, labels)
        total = ops.add(total, ops.scale(gt, cfg.gt_weight))
        components["loss_gt"] = gt.item()

    components["loss_total"] = total.item()
    return total, components
