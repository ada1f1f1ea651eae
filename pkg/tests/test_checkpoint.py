"""Checkpoint container: bit-exact round trips and format errors."""

import struct

import numpy as np
import pytest

from ladderlab.checkpoint import MAGIC, load_entries, save_entries
from ladderlab.errors import FormatError, LengthError


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    entries = {
        "w": rng.normal(size=(3, 4, 5)).astype(np.float32),
        "b": rng.normal(size=7).astype(np.float32),
        "scalarish": np.array(3.25, dtype=np.float32),
    }
    path = tmp_path / "model.ckpt"
    save_entries(path, entries)
    loaded = load_entries(path)
    assert list(loaded) == list(entries)
    for name in entries:
        assert loaded[name].dtype == np.float32
        assert loaded[name].shape == entries[name].shape
        assert loaded[name].tobytes() == entries[name].tobytes()


def test_header_layout(tmp_path):
    path = tmp_path / "one.ckpt"
    save_entries(path, {"x": np.ones(2, dtype=np.float32)})
    blob = path.read_bytes()
    assert blob[:4] == MAGIC == b"LDDR"
    version, count = struct.unpack_from("<HI", blob, 4)
    assert (version, count) == (1, 1)
    (name_len,) = struct.unpack_from("<H", blob, 10)
    assert blob[12 : 12 + name_len] == b"x"


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FormatError):
        load_entries(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "trunc.ckpt"
    save_entries(path, {"x": np.ones(5, dtype=np.float32)})
    blob = path.read_bytes()
    path.write_bytes(blob[:-3])
    with pytest.raises(LengthError):
        load_entries(path)
