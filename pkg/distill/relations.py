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
"""Self-attention and hidden-state relation matrices of one captured layer."""
import math
from dataclasses import dataclass
from itertools import product

from errors import DimensionError
from numerics import ops
from numerics.tensor import Tensor
from transformer.model import LayerCapture

# 1 = Q, 2 = K, 3 = V
RELATION_PAIRS = tuple(product((1, 2, 3), repeat=2))


@dataclass
class RelationSet:
    pairs: dict[tuple[int, int], Tensor]
    hidden: Tensor

    def all(self) -> list[Tensor]:
        return [self.pairs[p] for p in RELATION_PAIRS] + [self.hidden]


def _relation(a: Tensor, b: Tensor, width: int) -> Tensor:
    return ops.softmax_rows(ops.scale(ops.matmul(a, ops.swap_last(b)), 1.0 / math.sqrt(width)))


def attention_relations(layer: LayerCapture) -> dict[tuple[int, int], Tensor]:
    """The nine R_ij = softmax(S_i S_jᵀ / √(M·d_h)) over concatenated heads."""
    s = {1: layer.q, 2: layer.k, 3: layer.v}
    if layer.k.shape != layer.q.shape or layer.v.shape != layer.q.shape:
        raise DimensionError(f"Q/K/V shapes differ: {layer.q.shape}, {layer.k.shape}, {layer.v.shape}")
    width = layer.q.shape[-1]
    return {(i, j): _relation(s[i], s[j], width) for i, j in RELATION_PAIRS}


def hidden_relation(layer: LayerCapture) -> Tensor:
    """R_H = softmax(H Hᵀ / √d)."""
    if layer.hidden.shape[:-1] != layer.q.shape[:-1]:
        raise DimensionError(f"hidden state {layer.hidden.shape} does not match tokens of {layer.q.shape}")
    return _relation(layer.hidden, layer.hidden, layer.hidden.shape[-1])


def relation_matrices(layer: LayerCapture) -> RelationSet:
    return RelationSet(pairs=attention_relations(layer), hidden=hidden_relation(layer))
