import numpy as np
import pytest

from errors import UsageError
from numerics import ops
from numerics.gradcheck import finite_diff_check
from numerics.tensor import Tensor, apply
from tests.conftest import t64


def _assert_passes(f, params):
    report = finite_diff_check(f, params)
    assert report.passed, report.summary()
    return report


def test_quadratic_is_exact():
    x = t64([0.5, -1.2, 2.0])
    report = finite_diff_check(lambda: ops.scale(ops.sum(ops.mul(x, x)), 0.5), {"x": x})
    assert report.passed
    assert report.results[0].max_rel_error < 1e-9


def test_softmax_cross_entropy_composite(rng):
    logits = t64(rng.normal(size=(3, 4)))
    target = rng.random((3, 4))
    target = t64(target / target.sum(axis=1, keepdims=True))
    _assert_passes(lambda: ops.cross_entropy_rows(ops.softmax_rows(logits), target), {"logits": logits})


def test_cross_entropy_gradient_into_both_arguments(rng):
    a, b = t64(rng.normal(size=(2, 3))), t64(rng.normal(size=(2, 3)))
    _assert_passes(
        lambda: ops.cross_entropy_rows(ops.softmax_rows(a), ops.softmax_rows(b)), {"a": a, "b": b}
    )


def test_batched_matmul_with_broadcast_weight(rng):
    x, w, bias = t64(rng.normal(size=(2, 3, 4))), t64(rng.normal(size=(4, 5))), t64(rng.normal(size=5))
    _assert_passes(lambda: ops.sum(ops.gelu(ops.add(ops.matmul(x, w), bias))), {"x": x, "w": w, "bias": bias})


def test_layer_norm(rng):
    x, g, b = t64(rng.normal(size=(2, 3, 5))), t64(rng.normal(size=5)), t64(rng.normal(size=5))
    weights = t64(rng.normal(size=(2, 3, 5)))
    _assert_passes(lambda: ops.sum(ops.mul(ops.layer_norm(x, g, b), weights)), {"x": x, "gain": g, "bias": b})


def test_depthwise_conv(rng):
    x, k = t64(rng.normal(size=(2, 4, 3, 2))), t64(rng.normal(size=(3, 3, 2)))
    weights = t64(rng.normal(size=(2, 4, 3, 2)))
    _assert_passes(lambda: ops.sum(ops.mul(ops.depthwise_conv2d(x, k), weights)), {"x": x, "kernels": k})


def test_mix_heads_and_transpose(rng):
    f, x = t64(rng.normal(size=(2, 2))), t64(rng.normal(size=(3, 2, 3, 3)))
    weights = t64(rng.normal(size=(3, 2, 3, 3)))
    _assert_passes(
        lambda: ops.sum(ops.mul(ops.softmax_rows(ops.transpose(ops.mix_heads(f, x), (0, 1, 3, 2))), weights)),
        {"f": f, "x": x},
    )


def test_gather_reshape_mean(rng):
    x = t64(rng.normal(size=(2, 4, 3)))
    index = np.array([[0, 1, 2, 3], [3, 2, 1, 0]])
    weights = t64(rng.normal(size=(2, 2, 12)))
    _assert_passes(
        lambda: ops.mean(ops.mul(ops.reshape(ops.gather_tokens(x, index), (2, 2, 12)), weights)), {"x": x}
    )


def test_sub_and_sum_over_axis(rng):
    a, b = t64(rng.normal(size=(3, 4))), t64(rng.normal(size=(1, 4)))
    _assert_passes(lambda: ops.sum(ops.gelu(ops.sum(ops.sub(a, b), axis=0))), {"a": a, "b": b})


def test_wrong_gradient_is_reported():
    x = t64([1.0, 2.0])

    def doubled_wrong(t):
        return apply("bad_square", t.data ** 2, (t,), lambda g: (g * t.data,))

    report = finite_diff_check(lambda: ops.sum(doubled_wrong(x)), {"x": x})
    assert not report.passed
    assert report.failures[0].name == "x"


def test_single_precision_is_rejected():
    x = Tensor(np.ones(2, dtype=np.float32))
    with pytest.raises(UsageError):
        finite_diff_check(lambda: ops.sum(x), {"x": x})


def test_parameters_are_restored(rng):
    x = t64(rng.normal(size=(2, 2)))
    before = x.data.copy()
    finite_diff_check(lambda: ops.sum(ops.gelu(x)), {"x": x})
    np.testing.assert_array_equal(x.data, before)
