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
"""Exception hierarchy shared by every package."""


class VitMuxError(Exception):
    """Base class for all errors raised by this project."""


class DimensionError(VitMuxError, ValueError):
    """Tensor shapes do not fit the operation."""


class ConfigError(VitMuxError, ValueError):
    """Invalid model, plan, dataset or run configuration."""


class DistributionError(VitMuxError, ValueError):
    """A row expected to be a probability distribution does not sum to 1."""


class UsageError(VitMuxError):
    """An API was called out of contract (e.g. loss not recorded on the tape)."""


class NonFiniteError(VitMuxError, FloatingPointError):
    """NaN or Inf produced while finite checks are enabled."""


class PairingError(VitMuxError, ValueError):
    """Student and teacher (or two compared models) have different depths."""


class SimilarityError(VitMuxError, ValueError):
    """Similarity is undefined for the given features (zero variance)."""


class DivergenceError(VitMuxError, FloatingPointError):
    """Training loss became non-finite."""


class CheckpointError(VitMuxError):
    """Malformed checkpoint file."""


class CheckpointMagicError(CheckpointError):
    """File does not start with the checkpoint magic bytes."""


class CheckpointTruncatedError(CheckpointError):
    """Header or payload ends before the declared length."""


class CheckpointVersionError(CheckpointError):
    """Unknown checkpoint format version."""


class CheckpointAliasError(CheckpointError):
    """Stored tensors do not match the parameter layout implied by the sharing plan."""
