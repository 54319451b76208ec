import json
import struct

import numpy as np
import pytest
import yaml

from cli.checkpoint import (
    ALIGN,
    MAGIC,
    checkpoint_metadata,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    to_bytes,
)
from cli.commands import run
from cli.run_config import RunConfig
from errors import (
    CheckpointAliasError,
    CheckpointError,
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from multiplex.compact import CompactVisionTransformer, TransformConfig, build_compact_model
from multiplex.plan import make_sharing_plan
from tests.conftest import randomize
from transformer.model import VisionTransformer, build_vit


@pytest.fixture
def run_cfg(toy_cfg):
    return RunConfig(model=toy_cfg)


@pytest.fixture
def compact(rng, toy_cfg):
    plan = make_sharing_plan(toy_cfg, "all_in_stage")
    return randomize(build_compact_model(toy_cfg, plan, TransformConfig(msa=True, mlp=True)), rng)


def _header(blob):
    (length,) = struct.unpack("<Q", blob[4:12])
    return json.loads(blob[12:12 + length]), 12 + length


def _rewrite(blob, mutate):
    header, payload_start = _header(blob)
    mutate(header)
    raw = json.dumps(header).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(raw)) + raw + blob[payload_start:]


def test_round_trip_is_byte_identical(tmp_path, compact, run_cfg):
    first, second = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(compact, run_cfg, str(first))
    save_checkpoint(load_checkpoint(str(first)), run_cfg, str(second))
    assert first.read_bytes() == second.read_bytes()


def test_loaded_compact_model_keeps_aliases(tmp_path, compact, run_cfg):
    path = tmp_path / "m.ckpt"
    save_checkpoint(compact, run_cfg, str(path))
    ckpt = read_checkpoint(str(path))
    model = ckpt.model
    assert isinstance(model, CompactVisionTransformer)
    assert model.plan == compact.plan
    assert model.layers[0].attn.q_weight is model.layers[1].attn.q_weight
    assert model.layers[0].norm1.gain is not model.layers[1].norm1.gain
    for name, t in compact.params.items():
        np.testing.assert_array_equal(model.params[name].data, t.data)
    assert ckpt.run_config == run_cfg
    assert ckpt.metadata["kind"] == "compact"


def test_baseline_round_trip(tmp_path, rng, toy_cfg, run_cfg, images):
    model = randomize(build_vit(toy_cfg), rng)
    path = tmp_path / "t.ckpt"
    save_checkpoint(model, run_cfg, str(path))
    loaded = load_checkpoint(str(path))
    assert type(loaded) is VisionTransformer
    np.testing.assert_array_equal(loaded.forward(images).data, model.forward(images).data)


def test_shared_tensors_are_stored_once_and_aligned(compact, run_cfg):
    blob = to_bytes(compact, checkpoint_metadata(compact, run_cfg))
    assert blob[:4] == MAGIC
    header, payload_start = _header(blob)
    assert payload_start % ALIGN == 0
    names = [e["name"] for e in header["tensors"]]
    assert len(names) == len(set(names))
    assert "blocks.1.attn.q_weight" not in names
    assert all(e["offset"] % ALIGN == 0 and e["dtype"] == "f32" for e in header["tensors"])
    assert header["metadata"]["sharing_plan"]["groups"] == [[0, 1]]


def test_bad_magic(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(CheckpointMagicError):
        read_checkpoint(str(path))


def test_truncated_payload(tmp_path, compact, run_cfg):
    path = tmp_path / "x.ckpt"
    path.write_bytes(to_bytes(compact, checkpoint_metadata(compact, run_cfg))[:-16])
    with pytest.raises(CheckpointTruncatedError):
        read_checkpoint(str(path))


def test_truncated_header(tmp_path, compact, run_cfg):
    path = tmp_path / "x.ckpt"
    path.write_bytes(to_bytes(compact, checkpoint_metadata(compact, run_cfg))[:40])
    with pytest.raises(CheckpointTruncatedError):
        read_checkpoint(str(path))


def test_unknown_version(tmp_path, compact, run_cfg):
    blob = to_bytes(compact, checkpoint_metadata(compact, run_cfg))
    path = tmp_path / "x.ckpt"
    path.write_bytes(blob.replace(b'"format_version":1', b'"format_version":9', 1))
    with pytest.raises(CheckpointVersionError):
        read_checkpoint(str(path))


def test_tensors_not_matching_plan_are_alias_error(tmp_path, toy_cfg, compact, run_cfg):
    baseline = build_vit(toy_cfg)
    path = tmp_path / "x.ckpt"
    save_checkpoint(baseline, run_cfg, str(path), metadata=checkpoint_metadata(compact, run_cfg))
    with pytest.raises(CheckpointAliasError):
        read_checkpoint(str(path))


def test_checkpoint_errors_share_a_base():
    for cls in (CheckpointMagicError, CheckpointTruncatedError, CheckpointVersionError, CheckpointAliasError):
        assert issubclass(cls, CheckpointError)


def test_mutation_through_first_layer_is_visible_in_second_after_load(tmp_path, compact, run_cfg):
    path = tmp_path / "m.ckpt"
    save_checkpoint(compact, run_cfg, str(path))
    model = load_checkpoint(str(path))
    model.layers[0].mlp.fc1_weight.data[0, 0] = 7.0
    assert model.layers[1].mlp.fc1_weight.data[0, 0] == 7.0


@pytest.mark.parametrize(
    "mutate",
    [
        lambda h: h["tensors"][0].pop("offset"),
        lambda h: h["tensors"][0].pop("shape"),
        lambda h: h["tensors"][0].update(byte_len="many"),
        lambda h: h["tensors"][0].update(shape=None),
        lambda h: h["tensors"][0].update(offset=-4),
        lambda h: h["tensors"].__setitem__(0, "not an entry"),
        lambda h: h.update(tensors={"a": 1}),
    ],
)
def test_malformed_tensor_entry_is_checkpoint_error(tmp_path, compact, run_cfg, mutate):
    path = tmp_path / "x.ckpt"
    path.write_bytes(_rewrite(to_bytes(compact, checkpoint_metadata(compact, run_cfg)), mutate))
    with pytest.raises(CheckpointError):
        read_checkpoint(str(path))


def test_header_that_is_not_an_object(tmp_path):
    raw = b"[1, 2, 3]"
    path = tmp_path / "x.ckpt"
    path.write_bytes(MAGIC + struct.pack("<Q", len(raw)) + raw)
    with pytest.raises(CheckpointError):
        read_checkpoint(str(path))


def test_eval_on_malformed_checkpoint_exits_nonzero(tmp_path, compact, run_cfg):
    path = tmp_path / "x.ckpt"
    path.write_bytes(_rewrite(to_bytes(compact, checkpoint_metadata(compact, run_cfg)), lambda h: h["tensors"][0].pop("offset")))
    config = tmp_path / "run.yaml"
    config.write_text(yaml.safe_dump(run_cfg.model_dump(mode="json")))
    assert run(["eval", "--config", str(config), "--checkpoint", str(path)]) == 1
