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
Training loops: plain label training for teachers and weight distillation for
compact students. Both share batching, AdamW, the cosine schedule and the
per-step metrics frame.
"""
import logging
import math
from typing import Callable, Protocol

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score

from diagnostics.gradnorm import grad_norm_per_layer, group_grouping, layer_grouping
from distill.losses import DistillConfig, loss_gt, loss_total
from distill.optimizer import AdamW, CosineSchedule, OptimConfig
from errors import DivergenceError
from numerics.tensor import GradTape, backward, no_grad

logger = logging.getLogger(__name__)

DISTILL_COLUMNS = ["step", "epoch", "loss_total", "loss_pred", "loss_attn", "loss_hddn", "lr", "test_acc"]
CLASSIFIER_COLUMNS = ["step", "epoch", "loss_total", "lr", "test_acc"]
EVAL_BATCH = 256


class Split(Protocol):
    images: np.ndarray
    labels: np.ndarray


def evaluate(model, split: Split, batch_size: int = EVAL_BATCH) -> float:
    """Top-1 accuracy of argmax logits."""
    preds = []
    with no_grad():
        for start in range(0, len(split.labels), batch_size):
            logits = model.forward(split.images[start:start + batch_size])
            preds.append(np.argmax(logits.data, axis=-1))
    if not preds:
        return float("nan")
    return float(accuracy_score(split.labels, np.concatenate(preds)))


def _norm_columns(model, trace_layers: bool) -> tuple[dict, dict]:
    groups = group_grouping(model)
    layers = layer_grouping(model) if trace_layers else {}
    return groups, layers


def _fit(
    model,
    train: Split,
    test: Split | None,
    cfg: OptimConfig,
    loss_fn: Callable,
    columns: list[str],
    *,
    trace_layers: bool,
    max_steps: int | None = None,
    label: str,
) -> pd.DataFrame:
    params = model.parameters()
    optimizer = AdamW(params, cfg)
    n = len(train.labels)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    schedule = CosineSchedule(cfg.lr, cfg.min_lr, cfg.epochs * steps_per_epoch, cfg.warmup_epochs * steps_per_epoch)
    order_rng = np.random.default_rng(cfg.seed)
    drop_rng = np.random.default_rng([cfg.seed, 1])
    groups, layers = _norm_columns(model, trace_layers)
    norm_columns = [f"grad_norm_{k}" for k in groups] + [f"grad_norm_{k}" for k in layers]

    rows = []
    step = 0
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            if max_steps is not None and step >= max_steps:
                break
            idx = order[start:start + cfg.batch_size]
            lr = schedule(step)
            with GradTape() as tape:
                tape.watch(params)
                loss, components = loss_fn(train.images[idx], train.labels[idx], drop_rng, trace_layers)
            if not np.isfinite(loss.item()):
                raise DivergenceError(f"{label}: non-finite loss {loss.item()} at step {step} (epoch {epoch})")
            grads = backward(tape, loss)

            row = {"step": step, "epoch": epoch, **components, "lr": lr, "test_acc": np.nan}
            for key, value in grad_norm_per_layer(grads, groups).items():
                row[f"grad_norm_{key}"] = value
            if layers:
                for key, value in grad_norm_per_layer(grads, layers).items():
                    row[f"grad_norm_{key}"] = value
            optimizer.step(grads, lr)
            rows.append(row)
            step += 1

        acc = evaluate(model, test) if test is not None else float("nan")
        if rows:
            rows[-1]["test_acc"] = acc
            logger.info(
                "%s epoch %d/%d: loss=%.4f lr=%.2e test_acc=%.4f",
                label, epoch + 1, cfg.epochs, rows[-1]["loss_total"], rows[-1]["lr"], acc,
            )
        if max_steps is not None and step >= max_steps:
            break

    return pd.DataFrame(rows, columns=columns + norm_columns)


def train_classifier(
    model,
    train: Split,
    test: Split | None,
    cfg: OptimConfig,
    *,
    trace_layers: bool = False,
    max_steps: int | None = None,
):
    """Label cross-entropy training (teacher phase, and GT-only students)."""

    def loss_fn(images, labels, rng, views):
        logits = model.forward(images, train=True, rng=rng, layer_views=views)
        loss = loss_gt(logits, labels)
        return loss, {"loss_total": loss.item()}

    metrics = _fit(
        model, train, test, cfg, loss_fn, CLASSIFIER_COLUMNS,
        trace_layers=trace_layers, max_steps=max_steps, label="classifier",
    )
    return model, metrics


def train_distill(
    student,
    teacher,
    train: Split,
    test: Split | None,
    cfg: OptimConfig,
    distill_cfg: DistillConfig,
    *,
    trace_layers: bool = False,
    max_steps: int | None = None,
):
    """Minimise pred + β·attn + γ·hddn (+ GT) against a frozen teacher."""

    def loss_fn(images, labels, rng, views):
        total, components = loss_total(
            student, teacher, images, labels, distill_cfg, train=True, rng=rng, layer_views=views
        )
        return total, components

    metrics = _fit(
        student, train, test, cfg, loss_fn, DISTILL_COLUMNS,
        trace_layers=trace_layers, max_steps=max_steps, label="distill",
    )
    return student, metrics
