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
"""Linear centered kernel alignment between feature matrices and across model depth."""
import logging
from dataclasses import dataclass

import numpy as np

from errors import DimensionError, PairingError, SimilarityError
from numerics.tensor import no_grad

logger = logging.getLogger(__name__)

ACTIVATION = "post_block"


@dataclass
class SimilarityCurve:
    layer_index: list[int]
    cka: list[float]
    activation: str = ACTIVATION

    def rows(self) -> list[dict]:
        return [{"layer": i, "cka": c, "activation": self.activation} for i, c in zip(self.layer_index, self.cka)]


def cka_linear(x, y) -> float:
    """‖YᵀX‖²_F / (‖XᵀX‖_F ‖YᵀY‖_F) on column-centered float64 copies."""
    x = np.asarray(getattr(x, "data", x), dtype=np.float64)
    y = np.asarray(getattr(y, "data", y), dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionError(f"cka_linear needs [n, p] and [n, q] with equal n, got {x.shape} and {y.shape}")
    if x.shape[0] < 2:
        raise SimilarityError("cka_linear needs at least two samples")
    if np.ptp(x, axis=0).max() == 0.0 or np.ptp(y, axis=0).max() == 0.0:
        raise SimilarityError("cka_linear is undefined for zero-variance features")
    x = x - x.mean(axis=0, keepdims=True)
    y = y - y.mean(axis=0, keepdims=True)
    norm_x = np.linalg.norm(x.T @ x)
    norm_y = np.linalg.norm(y.T @ y)
    value = np.linalg.norm(y.T @ x) ** 2 / (norm_x * norm_y)
    return float(min(max(value, 0.0), 1.0))


def _features(t) -> np.ndarray:
    data = t.data
    return data.reshape(-1, data.shape[-1])


def layer_similarity(model_a, model_b, probe_images) -> SimilarityCurve:
    """Per-layer CKA of post-block hidden states; tokens of the probe batch are the samples."""
    if model_a.num_layers != model_b.num_layers:
        raise PairingError(f"models have {model_a.num_layers} and {model_b.num_layers} layers")
    with no_grad():
        _, cap_a = model_a.forward_with_capture(probe_images)
        _, cap_b = model_b.forward_with_capture(probe_images)
    values = [cka_linear(_features(la.output), _features(lb.output)) for la, lb in zip(cap_a.layers, cap_b.layers)]
    logger.debug("layer CKA: %s", ", ".join(f"{v:.4f}" for v in values))
    return SimilarityCurve(layer_index=list(range(len(values))), cka=values)
