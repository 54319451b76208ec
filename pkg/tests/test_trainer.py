import math

import numpy as np
import pytest
from pydantic import ValidationError

from cli.dataset import synth_dataset
from distill.losses import DistillConfig
from distill.optimizer import AdamW, CosineSchedule, OptimConfig, decays
from distill.trainer import CLASSIFIER_COLUMNS, DISTILL_COLUMNS, evaluate, train_classifier, train_distill
from errors import DivergenceError
from multiplex.compact import TransformConfig, build_compact_model
from multiplex.plan import make_sharing_plan
from numerics.tensor import Tensor
from transformer.model import build_vit


@pytest.fixture
def data(toy_cfg):
    train = synth_dataset(0, 24, toy_cfg.image_size, toy_cfg.num_classes, 0.5, workers=1)
    test = synth_dataset(0, 12, toy_cfg.image_size, toy_cfg.num_classes, 0.5, start=24, workers=1)
    return train, test


@pytest.fixture
def teacher(toy_cfg):
    return build_vit(toy_cfg, seed=1)


def _student(cfg, teacher):
    plan = make_sharing_plan(cfg, "all_in_stage")
    return build_compact_model(cfg, plan, TransformConfig(msa=True, mlp=True), teacher=teacher)


def _snapshot(model):
    return {n: t.data.copy() for n, t in model.params.items()}


# --- optimizer ---------------------------------------------------------------

def test_decay_excludes_vectors_positions_and_kernels():
    matrix = Tensor(np.zeros((2, 2)))
    assert decays("blocks.0.attn.q_weight", matrix)
    assert not decays("blocks.0.attn.q_bias", Tensor(np.zeros(2)))
    assert not decays("pos_embed", matrix)
    assert not decays("blocks.0.head_mix.f1", matrix)
    assert not decays("blocks.0.dwconv.kernel", Tensor(np.zeros((3, 3, 2))))


def test_adamw_first_step_moves_by_lr():
    p = Tensor(np.array([[1.0, -1.0]]))
    opt = AdamW({"w": p}, OptimConfig(weight_decay=0.0))
    opt.step({"w": np.array([[0.5, -2.0]])}, lr=0.1)
    np.testing.assert_allclose(p.data, [[0.9, -0.9]], rtol=1e-6)


def test_adamw_decay_is_decoupled_from_gradient():
    p = Tensor(np.array([[2.0]]))
    opt = AdamW({"w": p}, OptimConfig(weight_decay=0.5))
    opt.step({"w": np.zeros((1, 1))}, lr=0.1)
    np.testing.assert_allclose(p.data, [[2.0 * (1 - 0.1 * 0.5)]], rtol=1e-12)


def test_adamw_keeps_shared_tensor_identity(toy_cfg, teacher):
    student = _student(toy_cfg, teacher)
    shared = student.params["blocks.0.attn.q_weight"]
    opt = AdamW(student.parameters(), OptimConfig())
    opt.step({n: np.ones(t.shape) for n, t in student.params.items()}, lr=1e-2)
    assert student.layers[1].attn.q_weight is shared
    assert student.layers[0].attn.q_weight is shared


def test_cosine_schedule_endpoints():
    sched = CosineSchedule(lr=1.0, min_lr=0.1, total_steps=11)
    assert sched(0) == pytest.approx(1.0)
    assert sched(5) == pytest.approx(0.55)
    assert sched(10) == pytest.approx(0.1)
    assert sched(50) == pytest.approx(0.1)


def test_cosine_schedule_warmup_and_min_lr_cap():
    sched = CosineSchedule(lr=1.0, min_lr=0.0, total_steps=10, warmup_steps=4)
    assert [sched(s) for s in range(4)] == pytest.approx([0.25, 0.5, 0.75, 1.0])
    assert sched(4) == pytest.approx(1.0)
    assert CosineSchedule(lr=0.0, min_lr=1e-5, total_steps=5)(3) == 0.0


def test_optim_config_rejects_negative_epochs():
    with pytest.raises(ValidationError):
        OptimConfig(epochs=-1)


# --- training loops ----------------------------------------------------------

def test_zero_epochs_leave_student_unchanged(toy_cfg, teacher, data):
    train, test = data
    student = _student(toy_cfg, teacher)
    before = _snapshot(student)
    _, metrics = train_distill(student, teacher, train, test, OptimConfig(epochs=0), DistillConfig())
    assert metrics.empty
    for name, value in _snapshot(student).items():
        np.testing.assert_array_equal(value, before[name])


def test_zero_lr_keeps_losses_constant(toy_cfg, teacher, data):
    train, test = data
    student = _student(toy_cfg, teacher)
    cfg = OptimConfig(lr=0.0, min_lr=0.0, epochs=2, batch_size=len(train))
    _, metrics = train_distill(student, teacher, train, test, cfg, DistillConfig())
    assert len(metrics) == 2
    assert metrics["loss_total"].iloc[1] == pytest.approx(metrics["loss_total"].iloc[0], rel=1e-5)


def test_distill_metrics_columns_and_accuracy(toy_cfg, teacher, data):
    train, test = data
    student = _student(toy_cfg, teacher)
    cfg = OptimConfig(epochs=2, batch_size=8)
    _, metrics = train_distill(student, teacher, train, test, cfg, DistillConfig(), trace_layers=True)
    assert list(metrics.columns[: len(DISTILL_COLUMNS)]) == DISTILL_COLUMNS
    assert {"grad_norm_g0", "grad_norm_l0", "grad_norm_l1"} <= set(metrics.columns)
    assert len(metrics) == 6
    assert metrics["step"].tolist() == list(range(6))
    epoch_ends = metrics["test_acc"].notna()
    assert epoch_ends.tolist() == [False, False, True, False, False, True]
    assert metrics["test_acc"].iloc[-1] == pytest.approx(evaluate(student, test))
    assert (metrics["lr"].diff().dropna() <= 0).all()


def test_training_is_deterministic(toy_cfg, data):
    train, test = data
    cfg = OptimConfig(epochs=1, batch_size=8, seed=3)
    _, first = train_classifier(build_vit(toy_cfg, seed=1), train, test, cfg)
    _, second = train_classifier(build_vit(toy_cfg, seed=1), train, test, cfg)
    assert list(first.columns[: len(CLASSIFIER_COLUMNS)]) == CLASSIFIER_COLUMNS
    assert first.equals(second)


def test_max_steps_stops_early(toy_cfg, data):
    train, test = data
    _, metrics = train_classifier(build_vit(toy_cfg), train, test, OptimConfig(epochs=5, batch_size=8), max_steps=2)
    assert len(metrics) == 2


def test_non_finite_loss_raises_divergence(toy_cfg, data):
    train, test = data
    model = build_vit(toy_cfg)
    model.params["head.weight"].data[...] = np.nan
    with pytest.raises(DivergenceError):
        train_classifier(model, train, test, OptimConfig(epochs=1, batch_size=8))


def test_classifier_training_reduces_loss(toy_cfg):
    train = synth_dataset(0, 64, toy_cfg.image_size, toy_cfg.num_classes, 0.1, workers=1)
    cfg = OptimConfig(lr=5e-3, epochs=8, batch_size=len(train), weight_decay=0.0)
    _, metrics = train_classifier(build_vit(toy_cfg), train, None, cfg)
    losses = metrics["loss_total"]
    assert losses.iloc[-1] < losses.iloc[0]
    assert math.isnan(metrics["test_acc"].iloc[-1])
