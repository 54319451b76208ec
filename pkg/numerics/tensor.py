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
Dense tensors and the gradient tape.

Every op in numerics.ops builds its output through apply(). When a GradTape is
active on the current thread and one of the op's inputs is tracked (a watched
parameter or something computed from one), the op is appended to the tape
together with its vector-Jacobian product. backward() replays the tape in
reverse and returns one gradient per watched name.

Tapes are single-owner: the active-tape stack is thread-local.
"""
import contextlib
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

import app_config
from errors import DimensionError, NonFiniteError, UsageError

logger = logging.getLogger(__name__)

MAX_RANK = 4
DTYPES = {"float32": np.float32, "float64": np.float64}

_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def default_dtype() -> np.dtype:
    return np.dtype(DTYPES[app_config.DEFAULT_DTYPE])


def resolve_dtype(dtype) -> np.dtype:
    if dtype is None:
        return default_dtype()
    if isinstance(dtype, str):
        try:
            return np.dtype(DTYPES[dtype])
        except KeyError:
            raise DimensionError(f"unsupported dtype {dtype!r}; expected one of {sorted(DTYPES)}")
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise DimensionError(f"unsupported dtype {dtype}")
    return dtype


def _finite_checks_enabled() -> bool:
    return getattr(_local, "check_finite", app_config.CHECK_FINITE)


@contextlib.contextmanager
def finite_checks(enabled: bool = True) -> Iterator[None]:
    """Raise NonFiniteError whenever a tensor with NaN/Inf is created."""
    previous = _finite_checks_enabled()
    _local.check_finite = enabled
    try:
        yield
    finally:
        _local.check_finite = previous


class Tensor:
    """Rank ≤ 4 real array, single or double precision, row-major."""

    __slots__ = ("data", "name")

    def __init__(self, data, dtype=None, name: str | None = None):
        if dtype is None and isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            dtype = data.dtype
        arr = np.asarray(data, dtype=resolve_dtype(dtype))
        if arr.ndim > MAX_RANK:
            raise DimensionError(f"tensor rank {arr.ndim} exceeds {MAX_RANK} (shape {arr.shape})")
        if _finite_checks_enabled() and not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values in tensor {name or ''} of shape {arr.shape}")
        self.data = arr
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype})"


@dataclass(frozen=True)
class _Record:
    op: str
    inputs: tuple
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class GradTape:
    """Ordered record of executed ops, sufficient to differentiate a scalar loss.

    Usage:
        with GradTape() as tape:
            tape.watch(model.parameters())
            loss = ...
        grads = backward(tape, loss)
    """

    def __init__(self):
        self._records: list[_Record] = []
        self._tracked: set[int] = set()
        self._watched: dict[str, Tensor] = {}
        self._paused = 0

    def watch(self, params: Mapping[str, Tensor]) -> None:
        for name, tensor in params.items():
            existing = self._watched.get(name)
            if existing is not None and existing is not tensor:
                raise UsageError(f"name {name!r} already watched for a different tensor")
            self._watched[name] = tensor
            self._tracked.add(id(tensor))

    def is_tracked(self, tensor: Tensor) -> bool:
        return id(tensor) in self._tracked

    def __len__(self) -> int:
        return len(self._records)

    def __enter__(self) -> "GradTape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()


def current_tape() -> GradTape | None:
    stack = _stack()
    if not stack:
        return None
    tape = stack[-1]
    return None if tape._paused else tape


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Ops executed inside are never recorded on the active tape."""
    tape = _stack()[-1] if _stack() else None
    if tape is not None:
        tape._paused += 1
    try:
        yield
    finally:
        if tape is not None:
            tape._paused -= 1


def apply(op: str, output: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    """Wrap an op result and record it when any input is tracked."""
    output = np.asarray(output)
    out = Tensor(output, dtype=output.dtype if output.dtype in (np.float32, np.float64) else None)
    tape = current_tape()
    if tape is not None and any(tape.is_tracked(t) for t in inputs):
        tape._records.append(_Record(op, tuple(inputs), out, vjp))
        tape._tracked.add(id(out))
    return out


def backward(tape: GradTape, loss: Tensor) -> dict[str, np.ndarray]:
    """Gradient of a scalar loss with respect to every watched tensor.

    Watched tensors the loss does not depend on get exact zeros.
    """
    if loss.size != 1:
        raise UsageError(f"loss must be a scalar, got shape {loss.shape}")
    if not tape.is_tracked(loss):
        raise UsageError("loss was not produced through this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for record in reversed(tape._records):
        g = grads.get(id(record.output))
        if g is None:
            continue
        for tensor, g_in in zip(record.inputs, record.vjp(g)):
            if g_in is None or not tape.is_tracked(tensor):
                continue
            key = id(tensor)
            grads[key] = g_in if key not in grads else grads[key] + g_in

    result = {}
    for name, tensor in tape._watched.items():
        g = grads.get(id(tensor))
        if g is None:
            g = np.zeros_like(tensor.data)
        result[name] = np.array(g, dtype=tensor.dtype).reshape(tensor.shape)
    logger.debug("backward: %d records, %d watched tensors", len(tape._records), len(result))
    return result
