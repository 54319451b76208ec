import math

import numpy as np
import pytest

from errors import ConfigError, DimensionError, DistributionError, NonFiniteError, UsageError
from numerics import ops
from numerics.tensor import GradTape, Tensor, backward, finite_checks, no_grad
from tests.conftest import t64


# --- matmul ------------------------------------------------------------------

def test_matmul_identity():
    b = t64([[1, 2], [3, 4]])
    np.testing.assert_array_equal(ops.matmul(t64(np.eye(2)), b).data, b.data)


def test_matmul_projector():
    out = ops.matmul(t64([[1, 0], [0, 0]]), t64([[5, 6], [7, 8]]))
    np.testing.assert_array_equal(out.data, [[5, 6], [0, 0]])


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(ops.matmul(t64(a), t64(b)).data, expected, rtol=1e-12)


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(3, 4\).*\(3, 2\)"):
        ops.matmul(t64(np.zeros((3, 4))), t64(np.zeros((3, 2))))


# --- softmax -----------------------------------------------------------------

def test_softmax_uniform_row():
    np.testing.assert_allclose(ops.softmax_rows(t64(np.zeros((1, 4)))).data, [[0.25] * 4])


def test_softmax_analytic_row():
    out = ops.softmax_rows(t64([[math.log(1), math.log(2), math.log(3)]]))
    np.testing.assert_allclose(out.data, [[1 / 6, 2 / 6, 3 / 6]], rtol=1e-12)


def test_softmax_large_values_are_stable():
    out = ops.softmax_rows(t64([[1000.0, 1001.0]]))
    assert np.all(np.isfinite(out.data))
    np.testing.assert_allclose(out.data, ops.softmax_rows(t64([[0.0, 1.0]])).data, atol=1e-12)


def test_softmax_rows_stochastic_and_shift_invariant(rng):
    for _ in range(200):
        x = rng.normal(scale=10.0, size=(int(rng.integers(1, 6)), int(rng.integers(1, 8))))
        shift = rng.normal(scale=100.0, size=(x.shape[0], 1))
        y = ops.softmax_rows(t64(x)).data
        assert np.all(y >= 0)
        np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-6)
        np.testing.assert_allclose(ops.softmax_rows(t64(x + shift)).data, y, atol=1e-6)


# --- layer norm --------------------------------------------------------------

def test_layer_norm_constant_row_collapses_to_bias():
    out = ops.layer_norm(t64([[3.0, 3.0, 3.0]]), t64(np.ones(3)), t64(np.zeros(3)))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_layer_norm_normalized_row_unchanged():
    out = ops.layer_norm(t64([[1.0, -1.0]]), t64(np.ones(2)), t64(np.zeros(2)), eps=1e-12)
    np.testing.assert_allclose(out.data, [[1.0, -1.0]], atol=1e-9)


def test_layer_norm_matches_direct_formula(rng):
    x, g, b = rng.normal(size=(3, 5)), rng.normal(size=5), rng.normal(size=5)
    out = ops.layer_norm(t64(x), t64(g), t64(b), eps=1e-5)
    for r in range(3):
        row = [float(v) for v in x[r]]
        mu = math.fsum(row) / 5
        var = math.fsum((v - mu) ** 2 for v in row) / 5
        expected = [(v - mu) / math.sqrt(var + 1e-5) * g[j] + b[j] for j, v in enumerate(row)]
        np.testing.assert_allclose(out.data[r], expected, rtol=1e-10)


def test_layer_norm_default_eps_comes_from_config():
    x = t64([[1.0, 2.0]])
    a = ops.layer_norm(x, t64(np.ones(2)), t64(np.zeros(2)))
    b = ops.layer_norm(x, t64(np.ones(2)), t64(np.zeros(2)), eps=1e-5)
    np.testing.assert_array_equal(a.data, b.data)


# --- gelu --------------------------------------------------------------------

def test_gelu_zero():
    assert ops.gelu(t64([0.0])).data[0] == 0.0


def test_gelu_large_positive_is_identity():
    np.testing.assert_allclose(ops.gelu(t64([10.0, 20.0])).data, [10.0, 20.0], atol=1e-6)


def test_gelu_matches_erf_oracle():
    expected = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
    np.testing.assert_allclose(ops.gelu(t64([1.0])).data[0], expected, rtol=1e-14)


# --- depthwise convolution ---------------------------------------------------

def _naive_conv(x, k):
    h, w, d = x.shape
    size = k.shape[0]
    p = size // 2
    out = np.zeros_like(x)
    for c in range(d):
        for i in range(h):
            for j in range(w):
                for u in range(size):
                    for v in range(size):
                        r, s = i + u - p, j + v - p
                        if 0 <= r < h and 0 <= s < w:
                            out[i, j, c] += x[r, s, c] * k[u, v, c]
    return out


def test_depthwise_delta_kernel_is_identity(rng):
    x = rng.normal(size=(4, 5, 3))
    k = np.zeros((3, 3, 3))
    k[1, 1, :] = 1.0
    np.testing.assert_array_equal(ops.depthwise_conv2d(t64(x), t64(k)).data, x)


def test_depthwise_box_sum_on_interior_pixel():
    out = ops.depthwise_conv2d(t64(np.ones((5, 5, 1))), t64(np.ones((3, 3, 1))))
    assert out.data[2, 2, 0] == 9.0
    assert out.data[0, 0, 0] == 4.0


def test_depthwise_matches_sliding_window(rng):
    x, k = rng.normal(size=(5, 5, 2)), rng.normal(size=(3, 3, 2))
    np.testing.assert_allclose(ops.depthwise_conv2d(t64(x), t64(k)).data, _naive_conv(x, k), rtol=1e-12)


def test_depthwise_batched_matches_per_sample(rng):
    x, k = rng.normal(size=(2, 4, 4, 3)), rng.normal(size=(3, 3, 3))
    out = ops.depthwise_conv2d(t64(x), t64(k)).data
    for b in range(2):
        np.testing.assert_allclose(out[b], _naive_conv(x[b], k), rtol=1e-12)


def test_depthwise_is_linear(rng):
    x, y, k = rng.normal(size=(4, 4, 2)), rng.normal(size=(4, 4, 2)), rng.normal(size=(3, 3, 2))
    alpha, beta = 1.7, -0.3
    lhs = ops.depthwise_conv2d(t64(alpha * x + beta * y), t64(k)).data
    rhs = alpha * ops.depthwise_conv2d(t64(x), t64(k)).data + beta * ops.depthwise_conv2d(t64(y), t64(k)).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-5)


def test_depthwise_even_kernel_is_config_error():
    with pytest.raises(ConfigError):
        ops.depthwise_conv2d(t64(np.zeros((4, 4, 1))), t64(np.zeros((2, 2, 1))))


# --- cross entropy -----------------------------------------------------------

def test_cross_entropy_uniform():
    u = t64(np.full((2, 4), 0.25))
    np.testing.assert_allclose(ops.cross_entropy_rows(u, u).item(), math.log(4), rtol=1e-9)


def test_cross_entropy_perfect_one_hot():
    p = t64([[0.0, 1.0, 0.0]])
    assert abs(ops.cross_entropy_rows(p, p).item()) < 1e-9


def test_cross_entropy_matches_direct_sum(rng):
    p = rng.random((3, 5))
    q = rng.random((3, 5))
    p /= p.sum(axis=1, keepdims=True)
    q /= q.sum(axis=1, keepdims=True)
    expected = -sum(q[i, j] * math.log(p[i, j] + 1e-12) for i in range(3) for j in range(5)) / 3
    np.testing.assert_allclose(ops.cross_entropy_rows(t64(p), t64(q)).item(), expected, rtol=1e-12)


def test_cross_entropy_rejects_non_distributions():
    with pytest.raises(DistributionError):
        ops.cross_entropy_rows(t64([[0.5, 0.5]]), t64([[0.5, 0.6]]))
    with pytest.raises(DistributionError):
        ops.cross_entropy_rows(t64([[0.2, 0.2]]), t64([[0.5, 0.5]]))


# --- head mixing and gathering -----------------------------------------------

def test_mix_heads_matches_double_sum(rng):
    f, x = rng.normal(size=(3, 3)), rng.normal(size=(2, 3, 4, 4))
    out = ops.mix_heads(t64(f), t64(x)).data
    expected = np.zeros_like(x)
    for b in range(2):
        for n in range(3):
            for m in range(3):
                expected[b, n] += f[n, m] * x[b, m]
    np.testing.assert_allclose(out, expected, rtol=1e-12)


def test_gather_tokens_picks_rows(rng):
    x = rng.normal(size=(2, 4, 3))
    index = np.array([[0, 1], [2, 3]])
    out = ops.gather_tokens(t64(x), index).data
    assert out.shape == (2, 2, 2, 3)
    np.testing.assert_array_equal(out[1, 1, 0], x[1, 2])


# --- tape --------------------------------------------------------------------

def test_backward_of_sum_is_ones(rng):
    x = t64(rng.normal(size=(2, 3, 4)))
    with GradTape() as tape:
        tape.watch({"x": x})
        loss = ops.sum(x)
    np.testing.assert_array_equal(backward(tape, loss)["x"], np.ones((2, 3, 4)))


def test_backward_of_matmul_sum_is_linear_adjoint(rng):
    a, b = t64(rng.normal(size=(3, 4))), t64(rng.normal(size=(4, 2)))
    with GradTape() as tape:
        tape.watch({"a": a, "b": b})
        loss = ops.sum(ops.matmul(a, b))
    grads = backward(tape, loss)
    np.testing.assert_allclose(grads["a"], np.ones((3, 2)) @ b.data.T, rtol=1e-12)
    np.testing.assert_allclose(grads["b"], a.data.T @ np.ones((3, 2)), rtol=1e-12)


def test_unused_parameter_gets_exact_zero(rng):
    x, unused = t64(rng.normal(size=3)), t64(rng.normal(size=(2, 2)))
    with GradTape() as tape:
        tape.watch({"x": x, "unused": unused})
        loss = ops.sum(ops.mul(x, x))
    grads = backward(tape, loss)
    assert grads["unused"].shape == (2, 2)
    assert not grads["unused"].any()


def test_backward_is_deterministic(rng):
    a, b = t64(rng.normal(size=(3, 3))), t64(rng.normal(size=(3, 3)))

    def run():
        with GradTape() as tape:
            tape.watch({"a": a, "b": b})
            loss = ops.sum(ops.softmax_rows(ops.matmul(a, b)))
        return backward(tape, loss)

    first, second = run(), run()
    for name in first:
        np.testing.assert_array_equal(first[name], second[name])


def test_backward_rejects_loss_off_tape(rng):
    x = t64(rng.normal(size=3))
    loss = ops.sum(x)
    with GradTape() as tape:
        tape.watch({"x": x})
    with pytest.raises(UsageError):
        backward(tape, loss)


def test_backward_rejects_non_scalar(rng):
    x = t64(rng.normal(size=3))
    with GradTape() as tape:
        tape.watch({"x": x})
        y = ops.scale(x, 2.0)
    with pytest.raises(UsageError):
        backward(tape, y)


def test_no_grad_ops_are_not_recorded(rng):
    x = t64(rng.normal(size=3))
    with GradTape() as tape:
        tape.watch({"x": x})
        with no_grad():
            ops.sum(x)
        assert len(tape) == 0
        ops.sum(x)
        assert len(tape) == 1


def test_finite_checks_raise_on_nan():
    with finite_checks(True):
        with pytest.raises(NonFiniteError):
            ops.scale(t64([np.inf]), 0.0)
    ops.scale(t64([np.inf]), 0.0)


def test_rank_above_four_is_rejected():
    with pytest.raises(DimensionError):
        Tensor(np.zeros((1, 1, 1, 1, 1)))


def test_forward_ops_are_pure(rng):
    x, k = rng.normal(size=(4, 4, 2)), rng.normal(size=(3, 3, 2))
    a = ops.gelu(ops.depthwise_conv2d(t64(x), t64(k))).data
    b = ops.gelu(ops.depthwise_conv2d(t64(x), t64(k))).data
    assert a.tobytes() == b.tobytes()
