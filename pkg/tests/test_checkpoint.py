"""Checkpoint binary format round-trip and validation."""

import json

import numpy as np
import pytest

from gohome.exceptions import SceneParseError
from gohome.nn.checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint


def test_roundtrip_bitexact(tmp_path):
    rng = np.random.default_rng(0)
    named = [
        ("enc.W", rng.normal(size=(4, 7))),
        ("enc.b", rng.normal(size=(7,))),
        ("head.w", rng.normal(size=(3, 2, 5))),
    ]
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, named, meta={"channels": 7})
    meta, params = load_checkpoint(path)
    assert meta == {"channels": 7}
    assert set(params) == {"enc.W", "enc.b", "head.w"}
    for name, arr in named:
        np.testing.assert_array_equal(params[name], arr)


def test_header_is_single_json_line(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, [("p", np.zeros(3))], meta={})
    raw = path.read_bytes()
    header = json.loads(raw[: raw.find(b"\n")])
    assert header["version"] == FORMAT_VERSION
    assert header["params"][0] == {"name": "p", "shape": [3], "offset": 0}
    assert len(raw) == raw.find(b"\n") + 1 + 3 * 8


def test_bad_version_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(b'{"version": "other", "params": []}\n')
    with pytest.raises(SceneParseError, match="version"):
        load_checkpoint(path)


def test_truncated_blob_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, [("p", np.zeros(4))], meta={})
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(SceneParseError, match="overruns"):
        load_checkpoint(path)
