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
Synthetic oriented-grating classification task.

Sample i of a dataset with seed S is generated from its own stream
default_rng([S, i]), so any sample can be regenerated in isolation and the
whole set is independent of chunking and worker count.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from joblib import Parallel, delayed

import app_config
from errors import ConfigError

logger = logging.getLogger(__name__)

FREQUENCIES = (2, 3, 4)
CLAMP = 2.0
CHUNK = 2048


@dataclass
class SynthSample:
    image: np.ndarray
    label: int


@dataclass
class SynthSplit:
    images: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def _validate(n: int, s: int, num_classes: int, noise_sigma: float) -> None:
    if num_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {num_classes}")
    if s < 8:
        raise ConfigError(f"image size must be >= 8, got {s}")
    if n < 0:
        raise ConfigError(f"sample count must be >= 0, got {n}")
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")


def synth_sample(seed: int, index: int, s: int, num_classes: int, noise_sigma: float) -> SynthSample:
    rng = np.random.default_rng([seed, index])
    label = int(rng.integers(0, 2**32) % num_classes)
    freq = FREQUENCIES[int(rng.integers(0, len(FREQUENCIES)))]
    phase = rng.uniform(0.0, 2.0 * math.pi)
    theta = label * math.pi / num_classes
    y, x = np.mgrid[0:s, 0:s].astype(np.float64)
    wave = np.sin(2.0 * math.pi * freq * (x * math.cos(theta) + y * math.sin(theta)) / s + phase)
    image = np.clip(wave + rng.normal(0.0, noise_sigma, size=(s, s)), -CLAMP, CLAMP)
    return SynthSample(image=image.astype(np.float32)[:, :, None], label=label)


def _chunk(seed, start, stop, s, num_classes, noise_sigma):
    samples = [synth_sample(seed, i, s, num_classes, noise_sigma) for i in range(start, stop)]
    images = np.stack([x.image for x in samples]) if samples else np.zeros((0, s, s, 1), np.float32)
    return images, np.array([x.label for x in samples], dtype=np.int64)


def iter_samples(seed: int, n: int, s: int, num_classes: int, noise_sigma: float, start: int = 0) -> Iterator[SynthSample]:
    _validate(n, s, num_classes, noise_sigma)
    for i in range(start, start + n):
        yield synth_sample(seed, i, s, num_classes, noise_sigma)


def synth_dataset(
    seed: int,
    n: int,
    s: int,
    num_classes: int,
    noise_sigma: float,
    start: int = 0,
    workers: int | None = None,
) -> SynthSplit:
    """Samples start .. start+n-1 as stacked arrays; chunks are generated in parallel, order preserved."""
    _validate(n, s, num_classes, noise_sigma)
    workers = app_config.DATA_WORKERS if workers is None else workers
    bounds = [(a, min(a + CHUNK, start + n)) for a in range(start, start + n, CHUNK)]
    if len(bounds) <= 1 or workers <= 1:
        parts = [_chunk(seed, a, b, s, num_classes, noise_sigma) for a, b in bounds]
    else:
        parts = Parallel(n_jobs=workers)(delayed(_chunk)(seed, a, b, s, num_classes, noise_sigma) for a, b in bounds)
    if not parts:
        return SynthSplit(images=np.zeros((0, s, s, 1), np.float32), labels=np.zeros(0, np.int64))
    logger.debug("generated %d samples (seed=%d, start=%d) in %d chunks", n, seed, start, len(parts))
    return SynthSplit(images=np.concatenate([p[0] for p in parts]), labels=np.concatenate([p[1] for p in parts]))


def make_splits(run_cfg) -> tuple[SynthSplit, SynthSplit]:
    """Train samples 0..num_train-1, test samples follow them in the same stream."""
    data, model = run_cfg.data, run_cfg.model
    if model.in_channels != 1:
        raise ConfigError(f"the grating task produces 1-channel images, model expects {model.in_channels}")
    train = synth_dataset(data.data_seed, data.num_train, model.image_size, model.num_classes, data.noise_sigma)
    test = synth_dataset(
        data.data_seed, data.num_test, model.image_size, model.num_classes, data.noise_sigma, start=data.num_train
    )
    return train, test


def probe_batch(run_cfg) -> np.ndarray:
    """Fixed-seed probe images for similarity reports."""
    model = run_cfg.model
    split = synth_dataset(
        app_config.PROBE_SEED, app_config.PROBE_SAMPLES, model.image_size, model.num_classes,
        run_cfg.data.noise_sigma, workers=1,
    )
    return split.images
