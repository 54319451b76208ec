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
Central finite-difference verification of tape gradients.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

import app_config
from errors import UsageError
from numerics.tensor import GradTape, Tensor, backward

logger = logging.getLogger(__name__)

_REL_GUARD = 1e-8


@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    max_abs_error: float
    passed: bool


@dataclass
class GradCheckReport:
    results: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[ParamCheck]:
        return [r for r in self.results if not r.passed]

    def summary(self) -> str:
        if self.passed:
            return f"{len(self.results)} tensors ok"
        return "; ".join(f"{r.name}: rel={r.max_rel_error:.3e} abs={r.max_abs_error:.3e}" for r in self.failures)


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    eps: float | None = None,
    tol: float | None = None,
    abs_tol: float | None = None,
) -> GradCheckReport:
    """Compare backward() against central differences for every tensor in params.

    f must rebuild the loss from the current contents of params on every call;
    the check perturbs params in place and restores them afterwards.
    """
    eps = app_config.GRADCHECK_EPS if eps is None else eps
    tol = app_config.GRADCHECK_TOL if tol is None else tol
    abs_tol = app_config.GRADCHECK_ABS_TOL if abs_tol is None else abs_tol
    for name, t in params.items():
        if t.dtype != np.float64:
            raise UsageError(f"gradient check needs float64 parameters; {name} is {t.dtype}")

    with GradTape() as tape:
        tape.watch(params)
        loss = f()
    analytic = backward(tape, loss)

    report = GradCheckReport()
    for name, t in params.items():
        numeric = np.zeros(t.size, dtype=np.float64)
        for i in range(t.size):
            idx = np.unravel_index(i, t.shape)
            orig = t.data[idx]
            t.data[idx] = orig + eps
            plus = f().item()
            t.data[idx] = orig - eps
            minus = f().item()
            t.data[idx] = orig
            numeric[i] = (plus - minus) / (2.0 * eps)
        diff = np.abs(analytic[name].reshape(-1) - numeric)
        rel = diff / (np.abs(numeric) + _REL_GUARD)
        bad = (rel > tol) & (diff > abs_tol)
        check = ParamCheck(
            name=name,
            max_rel_error=float(rel.max()) if rel.size else 0.0,
            max_abs_error=float(diff.max()) if diff.size else 0.0,
            passed=not bool(bad.any()),
        )
        if not check.passed:
            logger.warning("gradcheck %s failed: rel=%.3e abs=%.3e", name, check.max_rel_error, check.max_abs_error)
        report.results.append(check)
    return report
