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
"""CSV and JSON report emission."""
import json
import logging
import os

import pandas as pd

logger = logging.getLogger(__name__)


def _ensure_dir(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def write_csv(frame: pd.DataFrame, path: str) -> None:
    """UTF-8, header row, '\\n' line endings, empty cells for missing values."""
    _ensure_dir(path)
    frame.to_csv(path, index=False, lineterminator="\n", na_rep="", encoding="utf-8")
    logger.info("wrote %s (%d rows)", path, len(frame))


def to_json(payload) -> str:
    if hasattr(payload, "model_dump"):
        payload = payload.model_dump(mode="json")
    return json.dumps(payload, indent=2)


def write_json(payload, path: str) -> None:
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(to_json(payload) + "\n")
    logger.info("wrote %s", path)
