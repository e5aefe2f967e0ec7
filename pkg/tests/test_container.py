import struct

import numpy as np
import pytest

from core.checkpoint import load_checkpoint, save_checkpoint
from core.dialogue import Vocabulary
from core.errors import CheckpointError
from core.path_generator import PathGeneratorModel, generate_path
from utils.container import MAGIC, decode_container, encode_container, read_container, write_container


def test_container_layout():
    blob = encode_container({"b": np.array([1.5]), "a": np.zeros((2, 2))}, {"kind": "test"})
    magic, version, header_len = struct.unpack_from("<8sIQ", blob)
    assert magic == MAGIC
    assert version == 1
    assert len(blob) == 20 + header_len + 8 * 5
    arrays, meta = decode_container(blob)
    assert meta == {"kind": "test"}
    assert arrays["b"].tolist() == [1.5]
    assert arrays["a"].shape == (2, 2)


def test_container_bytes_are_deterministic():
    arrays = {"x": np.arange(3.0), "y": np.eye(2)}
    assert encode_container(arrays, {"n": 1}) == encode_container(dict(reversed(list(arrays.items()))), {"n": 1})


@pytest.mark.parametrize("blob", [
    b"short",
    b"NOTMAGIC" + struct.pack("<IQ", 1, 2) + b"{}",
    MAGIC + struct.pack("<IQ", 2, 2) + b"{}",
    MAGIC + struct.pack("<IQ", 1, 50) + b"{}",
    MAGIC + struct.pack("<IQ", 1, 3) + b"{x}",
])
def test_corrupt_containers_rejected(blob):
    with pytest.raises(CheckpointError):
        decode_container(blob)


def test_truncated_body_rejected():
    blob = encode_container({"x": np.arange(4.0)})
    with pytest.raises(CheckpointError):
        decode_container(blob[:-8])


def test_non_finite_arrays_rejected():
    with pytest.raises(CheckpointError):
        encode_container({"x": np.array([np.inf])})


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        read_container(str(tmp_path / "absent.dpc"))


def test_checkpoint_restores_model(tmp_path, tiny_params, living_room_vocab, living_room_example):
    model = PathGeneratorModel(tiny_params, len(living_room_vocab))
    path = str(tmp_path / "model.dpc")
    save_checkpoint(path, {"path": model}, tiny_params, living_room_vocab, {"graph_config": {"tau": 0.6}})

    checkpoint = load_checkpoint(path)
    assert checkpoint.params == tiny_params
    assert checkpoint.vocab.id_to_token == living_room_vocab.id_to_token
    assert checkpoint.meta == {"graph_config": {"tau": 0.6}}
    assert checkpoint.has_model("path") and not checkpoint.has_model("propagation")

    other = PathGeneratorModel(tiny_params._replace(seed=11), len(living_room_vocab))
    checkpoint.restore("path", other)
    assert not other.training
    assert generate_path(living_room_example, other).log_prob == pytest.approx(generate_path(living_room_example, model).log_prob)
    with pytest.raises(CheckpointError):
        checkpoint.restore("propagation", other)


def test_checkpoint_shape_mismatch(tmp_path, tiny_params, living_room_vocab):
    path = str(tmp_path / "model.dpc")
    save_checkpoint(path, {"path": PathGeneratorModel(tiny_params, len(living_room_vocab))}, tiny_params, living_room_vocab)
    wider = PathGeneratorModel(tiny_params._replace(d=16), len(living_room_vocab))
    with pytest.raises(CheckpointError):
        load_checkpoint(path).restore("path", wider)


def test_grid_container_is_not_a_checkpoint(tmp_path):
    path = str(tmp_path / "grids.dpc")
    write_container(path, {"vid00000": np.zeros((2, 3))}, {"kind": "visual-grids"})
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_requires_reserved_tokens(tmp_path, tiny_params):
    path = str(tmp_path / "model.dpc")
    save_checkpoint(path, {}, tiny_params, Vocabulary(["a"]))
    arrays, header = read_container(path)
    header["vocab"] = ["a"]
    write_container(path, arrays, header)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
