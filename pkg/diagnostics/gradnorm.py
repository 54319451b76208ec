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
"""Per-layer and per-share-group ℓ2 norms of parameter gradients."""
from dataclasses import fields

import numpy as np

from errors import UsageError
from multiplex.plan import UNSHARED_KINDS
from transformer.layers import AttentionWeights, MlpWeights


def _layer_of(name: str) -> int | None:
    parts = name.split(".")
    if parts[0] != "blocks":
        return None
    return int(parts[1])


def group_grouping(model) -> dict[str, list[str]]:
    """g{j}: every tensor of share group j; shared weights appear once, with their group."""
    out = {}
    for j, group in enumerate(model.groups):
        members = set(group)
        out[f"g{j}"] = [n for n in model.params if _layer_of(n) in members]
    return out


def view_names(layer: int) -> list[str]:
    base = f"blocks.{layer}.view"
    return [f"{base}.attn.{f.name}" for f in fields(AttentionWeights)] + [
        f"{base}.mlp.{f.name}" for f in fields(MlpWeights)
    ]


def layer_grouping(model) -> dict[str, list[str]]:
    """l{i}: layer i's own tensors plus its views of the (possibly shared) attention/MLP weights.

    Needs gradients from a forward run with layer_views=True.
    """
    out = {}
    for i in range(model.num_layers):
        own = [n for n in model.params if _layer_of(n) == i and n.split(".")[2] in UNSHARED_KINDS]
        out[f"l{i}"] = own + view_names(i)
    return out


def grad_norm_per_layer(grads: dict[str, np.ndarray], grouping: dict[str, list[str]]) -> dict[str, float]:
    """√(Σ squared gradient entries) over each label's tensors."""
    row = {}
    for label, names in grouping.items():
        missing = [n for n in names if n not in grads]
        if missing:
            raise UsageError(f"no gradient for {missing[0]} (group {label})")
        if not names:
            row[label] = 0.0
            continue
        flat = np.concatenate([np.asarray(grads[n], dtype=np.float64).reshape(-1) for n in names])
        row[label] = float(np.linalg.norm(flat))
    return row


def spread(norms: dict[str, float]) -> float:
    """max / min over one trace row."""
    values = np.array(list(norms.values()), dtype=np.float64)
    if values.size == 0:
        return float("nan")
    low = values.min()
    return float("inf") if low == 0.0 else float(values.max() / low)
