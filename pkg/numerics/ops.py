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
Forward operations with their vector-Jacobian products.

Shapes follow the last-axis convention: rows are the last axis, matrices are
the last two axes, and any leading axes are batch axes (rank stays ≤ 4).
"""
import math

import numpy as np
from scipy.special import erf

import app_config
from errors import ConfigError, DimensionError, DistributionError
from numerics.tensor import Tensor, apply

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_ROW_SUM_TOL = 1e-4


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=like.dtype if like is not None else None)


def _operands(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def _broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast(a, b, "add")

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return apply("add", a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast(a, b, "sub")

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return apply("sub", a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast(a, b, "mul")

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return apply("mul", a.data * b.data, (a, b), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    c = a.dtype.type(c)

    def vjp(g):
        return (g * c,)

    return apply("scale", a.data * c, (a,), vjp)


def identity(a: Tensor) -> Tensor:
    """Same values under a new tensor; gradients reaching it are reported separately."""
    return apply("identity", a.data, (a,), lambda g: (g,))


# --- shape -------------------------------------------------------------------

def transpose(a: Tensor, axes: tuple) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"transpose: axes {axes} invalid for shape {a.shape}")
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (np.transpose(g, inverse),)

    return apply("transpose", np.transpose(a.data, axes), (a,), vjp)


def swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def reshape(a: Tensor, shape: tuple) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}")

    def vjp(g):
        return (g.reshape(a.shape),)

    return apply("reshape", out, (a,), vjp)


def gather_tokens(a: Tensor, index: np.ndarray) -> Tensor:
    """Pick tokens along the token axis (-2): out[..., i, j, :] = a[..., index[i, j], :]."""
    index = np.asarray(index, dtype=np.int64)
    if a.ndim < 2:
        raise DimensionError(f"gather_tokens: need [..., N, d], got {a.shape}")
    n, d = a.shape[-2:]
    if index.size and (index.min() < 0 or index.max() >= n):
        raise DimensionError(f"gather_tokens: index out of range for {n} tokens")
    out = np.take(a.data, index, axis=-2)

    def vjp(g):
        flat = np.zeros((int(np.prod(a.shape[:-2], dtype=np.int64)), n, d), dtype=a.dtype)
        np.add.at(flat, (slice(None), index.reshape(-1)), g.reshape(flat.shape[0], index.size, d))
        return (flat.reshape(a.shape),)

    return apply("gather_tokens", out, (a,), vjp)


# --- reductions --------------------------------------------------------------

def sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return apply("sum", np.sum(a.data, axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# --- linear algebra ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = _operands(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast")

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return apply("matmul", out, (a, b), vjp)


def mix_heads(f: Tensor, x: Tensor) -> Tensor:
    """out[..., n, :, :] = Σ_m f[n, m] · x[..., m, :, :] (head axis is -3)."""
    if f.ndim != 2 or f.shape[0] != f.shape[1] or x.ndim < 3 or x.shape[-3] != f.shape[1]:
        raise DimensionError(f"mix_heads: kernel {f.shape} does not match heads of {x.shape}")
    heads = x.shape[-3:]
    x4 = x.data.reshape((-1,) + heads)
    out = np.einsum("nm,bmij->bnij", f.data, x4).reshape(x.shape)

    def vjp(g):
        g4 = g.reshape((-1,) + heads)
        gf = np.einsum("bnij,bmij->nm", g4, x4)
        gx = np.einsum("nm,bnij->bmij", f.data, g4).reshape(x.shape)
        return gf, gx

    return apply("mix_heads", out, (f, x), vjp)


# --- nonlinearities ----------------------------------------------------------

def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, stabilized by row-max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return apply("softmax_rows", y, (x,), vjp)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU x·Φ(x) with the erf-based normal CDF."""
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    out = x.data * cdf

    def vjp(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        return (g * (cdf + x.data * pdf),)

    return apply("gelu", out.astype(x.dtype, copy=False), (x,), vjp)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float | None = None) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match width {d}")
    eps = x.dtype.type(app_config.LAYER_NORM_EPS if eps is None else eps)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gain.data + bias.data

    def vjp(g):
        lead = tuple(range(x.ndim - 1))
        dxhat = g * gain.data
        dx = rstd * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return apply("layer_norm", out, (x, gain, bias), vjp)


# --- convolution -------------------------------------------------------------

def depthwise_conv2d(x: Tensor, kernels: Tensor) -> Tensor:
    """Per-channel 2-D cross-correlation, stride 1, zero same-padding.

    x is [h, w, d] or [B, h, w, d]; kernels is [K, K, d] with K odd.
    """
    if kernels.ndim != 3 or kernels.shape[0] != kernels.shape[1]:
        raise DimensionError(f"depthwise_conv2d: kernels must be [K, K, d], got {kernels.shape}")
    size, _, d = kernels.shape
    if size % 2 == 0:
        raise ConfigError(f"depthwise_conv2d: kernel size must be odd, got {size}")
    if x.ndim not in (3, 4) or x.shape[-1] != d:
        raise DimensionError(f"depthwise_conv2d: input {x.shape} does not match kernels {kernels.shape}")

    batched = x.ndim == 4
    xb = x.data if batched else x.data[None]
    _, h, w, _ = xb.shape
    p = size // 2
    xp = np.pad(xb, ((0, 0), (p, p), (p, p), (0, 0)))
    k = kernels.data
    out = np.zeros_like(xb)
    for u in range(size):
        for v in range(size):
            out += xp[:, u:u + h, v:v + w, :] * k[u, v]

    def vjp(g):
        gb = g if batched else g[None]
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(k)
        for u in range(size):
            for v in range(size):
                gxp[:, u:u + h, v:v + w, :] += gb * k[u, v]
                gk[u, v] = (gb * xp[:, u:u + h, v:v + w, :]).sum(axis=(0, 1, 2))
        gx = gxp[:, p:p + h, p:p + w, :]
        return (gx if batched else gx[0]), gk

    return apply("depthwise_conv2d", out if batched else out[0], (x, kernels), vjp)


# --- losses ------------------------------------------------------------------

def _check_rows(p: np.ndarray, role: str) -> None:
    sums = p.sum(axis=-1)
    bad = np.abs(sums - 1.0) > _ROW_SUM_TOL
    if np.any(bad):
        worst = float(sums.reshape(-1)[np.argmax(np.abs(sums - 1.0).reshape(-1))])
        raise DistributionError(f"{role} rows must sum to 1 (worst row sums to {worst:.6f})")


def cross_entropy_rows(student: Tensor, teacher: Tensor) -> Tensor:
    """−(1/m) Σ_rows Σ_j teacher_j · log(student_j + eps_log), m = number of rows."""
    if student.shape != teacher.shape or student.ndim < 1:
        raise DimensionError(f"cross_entropy_rows: shapes {student.shape} and {teacher.shape} differ")
    _check_rows(teacher.data, "teacher")
    _check_rows(student.data, "student")
    n = student.shape[-1]
    rows = student.size // n
    eps = student.dtype.type(app_config.LOG_EPS)
    shifted = student.data + eps
    logp = np.log(shifted)
    loss = -(teacher.data * logp).sum() / rows

    def vjp(g):
        return -g * teacher.data / shifted / rows, -g * logp / rows

    return apply("cross_entropy_rows", np.asarray(loss, dtype=student.dtype), (student, teacher), vjp)
