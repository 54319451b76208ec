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
"""AdamW with decoupled weight decay and a linear-warmup cosine learning-rate schedule."""
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from numerics.tensor import Tensor

logger = logging.getLogger(__name__)

NO_DECAY_KEYS = ("pos_embed", "head_mix.", "dwconv.")


class OptimConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(default=1e-3, ge=0.0)
    min_lr: float = Field(default=1e-5, ge=0.0)
    weight_decay: float = Field(default=0.05, ge=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    epochs: int = Field(default=30, ge=0)
    batch_size: int = Field(default=64, ge=1)
    warmup_epochs: int = Field(default=0, ge=0)
    seed: int = 0


def decays(name: str, tensor: Tensor) -> bool:
    """Biases, gains, positional table and transformation kernels are not decayed."""
    return tensor.ndim > 1 and not any(key in name for key in NO_DECAY_KEYS)


class AdamW:
    """Updates parameter arrays in place, so tensors shared between layers stay shared."""

    def __init__(self, params: dict[str, Tensor], cfg: OptimConfig):
        self.params = params
        self.cfg = cfg
        self.step_count = 0
        self._m = {n: np.zeros_like(t.data) for n, t in params.items()}
        self._v = {n: np.zeros_like(t.data) for n, t in params.items()}
        self._decay = {n: decays(n, t) for n, t in params.items()}
        logger.debug(
            "AdamW over %d tensors (%d decayed)", len(params), sum(self._decay.values())
        )

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        cfg = self.cfg
        self.step_count += 1
        bc1 = 1.0 - cfg.beta1 ** self.step_count
        bc2 = 1.0 - cfg.beta2 ** self.step_count
        for name, p in self.params.items():
            g = grads[name]
            m, v = self._m[name], self._v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            if self._decay[name] and cfg.weight_decay:
                p.data *= p.dtype.type(1.0 - lr * cfg.weight_decay)
            p.data -= (lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)).astype(p.dtype, copy=False)


class CosineSchedule:
    """Linear warmup to lr, then cosine decay to min_lr at the last step."""

    def __init__(self, lr: float, min_lr: float, total_steps: int, warmup_steps: int = 0):
        self.lr = lr
        self.min_lr = min(min_lr, lr)
        self.total_steps = max(1, total_steps)
        self.warmup_steps = warmup_steps

    def __call__(self, step: int) -> float:
        if step < self.warmup_steps:
            return self.lr * (step + 1) / self.warmup_steps
        progress = (step - self.warmup_steps) / max(1, self.total_steps - self.warmup_steps - 1)
        progress = min(1.0, progress)
        return self.min_lr + (self.lr - self.min_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))
