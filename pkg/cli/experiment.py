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
Desk-scale ablation over weight-shared students, over several seeds. Every arm
shares weights across each stage; the arms differ in whether the per-layer
transforms are present and whether training distills from the teacher:

    ws    no transforms, labels only
    wd    no transforms, weight distillation
    wt    transforms, labels only
    mux   transforms, weight distillation
"""
import logging

import numpy as np
import pandas as pd

from diagnostics.cka import layer_similarity
from diagnostics.gradnorm import spread
from distill.losses import DistillConfig
from distill.trainer import evaluate, train_classifier, train_distill
from multiplex.compact import TransformConfig, build_compact_model
from multiplex.plan import make_sharing_plan

logger = logging.getLogger(__name__)

SMOOTH_WINDOW = 50

# arm -> (transforms, distill)
ARMS = {
    "ws": (False, False),
    "wd": (False, True),
    "wt": (True, False),
    "mux": (True, True),
}


def first_epoch_spread(metrics: pd.DataFrame) -> float:
    """Mean over first-epoch steps of max/min per-layer gradient norm."""
    columns = [c for c in metrics.columns if c.startswith("grad_norm_l")]
    rows = metrics[metrics["epoch"] == 0][columns]
    if rows.empty:
        return float("nan")
    return float(np.mean([spread(row.to_dict()) for _, row in rows.iterrows()]))


def loss_settles(metrics: pd.DataFrame, window: int = SMOOTH_WINDOW) -> bool:
    """Finite throughout, and the rolling-mean loss never rises over the final half."""
    loss = metrics["loss_total"].to_numpy(dtype=np.float64)
    if loss.size == 0 or not np.all(np.isfinite(loss)):
        return False
    smoothed = pd.Series(loss).rolling(window, min_periods=1).mean().to_numpy()
    tail = smoothed[len(smoothed) // 2:]
    return bool(np.all(np.diff(tail) <= 1e-9))


def run_arm(run_cfg, teacher, train, test, probe, seed: int, arm: str) -> dict:
    with_transforms, distill = ARMS[arm]
    cfg = run_cfg.model
    plan = make_sharing_plan(cfg, "all_in_stage")
    optim = run_cfg.optim.model_copy(update={"seed": seed})
    transforms = (
        TransformConfig(msa=True, mlp=True, kernel_size=run_cfg.transforms.kernel_size)
        if with_transforms else TransformConfig()
    )
    student = build_compact_model(cfg, plan, transforms, teacher=teacher, seed=seed)
    if distill:
        _, metrics = train_distill(student, teacher, train, test, optim, DistillConfig(), trace_layers=True)
    else:
        _, metrics = train_classifier(student, train, test, optim, trace_layers=True)
    return {
        f"{arm}_top1": evaluate(student, test),
        f"{arm}_last_cka": layer_similarity(teacher, student, probe).cka[-1],
        f"{arm}_grad_spread": first_epoch_spread(metrics),
        f"{arm}_loss_settles": loss_settles(metrics),
    }


def run_seed(run_cfg, teacher, train, test, probe, seed: int) -> dict:
    result = {"seed": seed}
    for arm in ARMS:
        result.update(run_arm(run_cfg, teacher, train, test, probe, seed, arm))
    logger.info("seed %d: %s", seed, result)
    return result


def run_experiment(run_cfg, teacher, train, test, probe, seeds: list[int]) -> dict:
    runs = [run_seed(run_cfg, teacher, train, test, probe, s) for s in seeds]
    majority = len(runs) // 2 + 1
    mean_top1 = {arm: float(np.mean([r[f"{arm}_top1"] for r in runs])) for arm in ARMS}
    checks = {
        "mux_accuracy_at_least_ws": mean_top1["mux"] >= mean_top1["ws"],
        "mux_loss_finite_and_settling": all(r["mux_loss_settles"] for r in runs),
        "mux_last_layer_cka_higher": sum(r["mux_last_cka"] > r["ws_last_cka"] for r in runs) >= majority,
        "mux_grad_spread_lower": sum(r["mux_grad_spread"] < r["ws_grad_spread"] for r in runs) >= majority,
    }
    summary = {"teacher_top1": evaluate(teacher, test)}
    summary.update({f"{arm}_mean_top1": acc for arm, acc in mean_top1.items()})
    summary.update({"runs": runs, "checks": checks})
    return summary
