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
"""Central configuration loader. Reads config.yaml once and exposes typed constants.

Only engine/process settings live here. The run configuration (model, sharing,
distillation, optimizer, data) is parsed by cli.run_config from the same file.
"""
import os
import yaml

CONFIG_PATH = os.path.join(os.path.dirname(__file__), "config.yaml")

with open(CONFIG_PATH, "r") as _f:
    _raw = yaml.safe_load(_f)

DEFAULT_DTYPE: str = _raw["numerics"]["dtype"]
LAYER_NORM_EPS: float = float(_raw["numerics"]["layer_norm_eps"])
LOG_EPS: float = float(_raw["numerics"]["log_eps"])
CHECK_FINITE: bool = bool(_raw["numerics"].get("check_finite", False))
GRADCHECK_EPS: float = float(_raw["numerics"]["gradcheck_eps"])
GRADCHECK_TOL: float = float(_raw["numerics"]["gradcheck_tol"])
GRADCHECK_ABS_TOL: float = float(_raw["numerics"].get("gradcheck_abs_tol", 1e-9))

LOG_LEVEL: str = _raw["logging"].get("level", "INFO")

DATA_WORKERS: int = _raw["runtime"].get("data_workers", 1)
PROBE_SAMPLES: int = _raw["runtime"].get("probe_samples", 64)
PROBE_SEED: int = _raw["runtime"].get("probe_seed", 1234)
