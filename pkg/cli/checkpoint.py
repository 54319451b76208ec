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
Checkpoint container.

Layout (all integers little-endian):
    b"MVC1"
    u64  header length H (bytes, including trailing space padding)
    H    UTF-8 JSON header, space-padded so the payload starts 64-byte aligned
    ...  payload: float32 tensors, each starting at a 64-byte aligned offset

Header: {"format_version": 1,
         "tensors": [{"name", "shape", "dtype": "f32", "offset", "byte_len"}, ...],
         "metadata": {"kind", "run_config", "sharing_plan", "transforms"}}
Offsets are relative to the payload start. Shared tensors are stored once; the
sharing plan in the metadata re-creates the aliases on load.
"""
import json
import logging
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from cli.run_config import RunConfig, run_config_from_dict
from errors import (
    CheckpointAliasError,
    CheckpointError,
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
    DimensionError,
)
from multiplex.compact import CompactVisionTransformer, TransformConfig, compact_layout
from multiplex.plan import SharingPlan, identity_plan
from numerics.tensor import Tensor
from transformer.model import VisionTransformer

logger = logging.getLogger(__name__)

MAGIC = b"MVC1"
FORMAT_VERSION = 1
ALIGN = 64
_PREFIX = len(MAGIC) + 8


@dataclass
class Checkpoint:
    model: VisionTransformer
    run_config: RunConfig
    metadata: dict


def _aligned(n: int) -> int:
    return (n + ALIGN - 1) // ALIGN * ALIGN


def checkpoint_metadata(model: VisionTransformer, run_cfg: RunConfig) -> dict:
    compact = isinstance(model, CompactVisionTransformer)
    plan = model.plan if compact else identity_plan(model.cfg)
    transforms = model.transforms if compact else TransformConfig()
    return {
        "kind": "compact" if compact else "baseline",
        "run_config": run_cfg.model_dump(mode="json"),
        "sharing_plan": plan.to_dict(),
        "transforms": transforms.model_dump(mode="json"),
    }


def to_bytes(model: VisionTransformer, metadata: dict) -> bytes:
    entries, chunks = [], []
    offset = 0
    for name, tensor in model.params.items():
        raw = np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
        start = _aligned(offset)
        if start > offset:
            chunks.append(b"\x00" * (start - offset))
        entries.append({"name": name, "shape": list(tensor.shape), "dtype": "f32", "offset": start, "byte_len": len(raw)})
        chunks.append(raw)
        offset = start + len(raw)

    header = json.dumps(
        {"format_version": FORMAT_VERSION, "tensors": entries, "metadata": metadata},
        separators=(",", ":"),
        ensure_ascii=False,
    ).encode("utf-8")
    header += b" " * (_aligned(_PREFIX + len(header)) - _PREFIX - len(header))
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def save_checkpoint(model: VisionTransformer, run_cfg: RunConfig, path: str, *, metadata: dict | None = None) -> None:
    """metadata, when given, is written as is (used to carry a source checkpoint's metadata forward)."""
    blob = to_bytes(model, metadata if metadata is not None else checkpoint_metadata(model, run_cfg))
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(blob)
    logger.info("wrote checkpoint %s (%d tensors, %d bytes)", path, len(model.params), len(blob))


def _parse(blob: bytes) -> tuple[dict, memoryview]:
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointMagicError("not a checkpoint: bad magic bytes")
    if len(blob) < _PREFIX:
        raise CheckpointTruncatedError("checkpoint ends inside the header length")
    (header_len,) = struct.unpack("<Q", blob[len(MAGIC):_PREFIX])
    if len(blob) < _PREFIX + header_len:
        raise CheckpointTruncatedError(f"checkpoint header declares {header_len} bytes, file is shorter")
    try:
        header = json.loads(blob[_PREFIX:_PREFIX + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}")
    if not isinstance(header, dict):
        raise CheckpointError(f"checkpoint header must be a JSON object, got {type(header).__name__}")
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint format version {version!r}")
    return header, memoryview(blob)[_PREFIX + header_len:]


def _entry(entry) -> tuple[str, tuple, str, int, int]:
    try:
        name = str(entry["name"])
        shape = tuple(int(n) for n in entry["shape"])
        offset, byte_len = int(entry["offset"]), int(entry["byte_len"])
        return name, shape, entry.get("dtype"), offset, byte_len
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CheckpointError(f"malformed tensor entry {entry!r}: {exc!r}")


def _tensors(header: dict, payload: memoryview) -> dict[str, np.ndarray]:
    arrays = {}
    entries = header.get("tensors", [])
    if not isinstance(entries, list):
        raise CheckpointError("checkpoint header field tensors must be a list")
    for raw in entries:
        name, shape, dtype, offset, byte_len = _entry(raw)
        if offset < 0 or any(n < 0 for n in shape):
            raise CheckpointError(f"{name}: negative offset or dimension")
        if dtype != "f32":
            raise CheckpointError(f"{name}: unsupported dtype {dtype!r}")
        if name in arrays:
            raise CheckpointAliasError(f"tensor {name} stored twice")
        if byte_len != 4 * math.prod(shape):
            raise CheckpointError(f"{name}: {byte_len} bytes for shape {shape}")
        if offset + byte_len > len(payload):
            raise CheckpointTruncatedError(f"{name}: payload ends before byte {offset + byte_len}")
        arrays[name] = np.frombuffer(payload[offset:offset + byte_len], dtype="<f4").astype(np.float32).reshape(shape)
    return arrays


def _assemble(arrays: dict[str, np.ndarray], metadata: dict) -> tuple[VisionTransformer, RunConfig]:
    run_cfg = run_config_from_dict(metadata["run_config"], source="checkpoint metadata")
    cfg = run_cfg.model
    try:
        plan = SharingPlan.from_dict(metadata["sharing_plan"])
        transforms = TransformConfig(**metadata.get("transforms", {}))
        expected = compact_layout(cfg, plan, transforms).shapes
    except (ConfigError, TypeError, ValueError) as exc:
        raise CheckpointAliasError(f"sharing plan does not fit the stored architecture: {exc}")
    if list(expected) != list(arrays):
        missing = sorted(set(expected) - set(arrays))[:3]
        extra = sorted(set(arrays) - set(expected))[:3]
        raise CheckpointAliasError(f"stored tensors do not match the sharing plan (missing {missing}, unexpected {extra})")

    params = {name: Tensor(arr, dtype=np.float32, name=name) for name, arr in arrays.items()}
    try:
        if metadata.get("kind") == "baseline":
            if plan.num_layers != len(plan.groups) or transforms.msa or transforms.mlp:
                raise CheckpointAliasError("baseline checkpoint carries shared or transformed layers")
            model = VisionTransformer(cfg, params)
        else:
            model = CompactVisionTransformer(cfg, params, plan, transforms)
    except DimensionError as exc:
        raise CheckpointAliasError(str(exc))
    return model, run_cfg


def read_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        blob = f.read()
    header, payload = _parse(blob)
    metadata = header.get("metadata")
    if not isinstance(metadata, dict) or "run_config" not in metadata or "sharing_plan" not in metadata:
        raise CheckpointError("checkpoint metadata lacks run_config / sharing_plan")
    arrays = _tensors(header, payload)
    model, run_cfg = _assemble(arrays, metadata)
    logger.info("loaded checkpoint %s (%s, %d tensors)", path, metadata.get("kind"), len(arrays))
    return Checkpoint(model=model, run_config=run_cfg, metadata=metadata)


def load_checkpoint(path: str) -> VisionTransformer:
    return read_checkpoint(path).model
