"""Parameter checkpoint format.

Layout: one JSON header line (utf-8, ends with \\n) followed by the
concatenated parameter values as little-endian float64.  The header lists
every parameter's name, shape, and offset in float64 elements, plus a
``meta`` object the caller can use to rebuild the owning model.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..exceptions import SceneParseError

FORMAT_VERSION = "gohome-ckpt-1"


def save_checkpoint(path, named_params: list[tuple[str, np.ndarray]], meta: dict | None = None):
    entries = []
    offset = 0
    blobs = []
    for name, value in named_params:
        arr = np.ascontiguousarray(value, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        blobs.append(arr.tobytes())
    header = {"version": FORMAT_VERSION, "meta": meta or {}, "params": entries}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(b"".join(blobs))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint; returns (meta, {name: array})."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise SceneParseError("checkpoint has no header line", location=str(path))
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise SceneParseError(f"checkpoint header is not JSON: {err}", location=str(path))
    if header.get("version") != FORMAT_VERSION:
        raise SceneParseError(
            f"unsupported checkpoint version {header.get('version')!r}", location="/version"
        )
    blob = np.frombuffer(raw[nl + 1 :], dtype="<f8")
    params = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        if start + n > blob.size:
            raise SceneParseError(
                f"parameter {entry['name']!r} overruns the blob", location="/params"
            )
        params[entry["name"]] = blob[start : start + n].reshape(shape).astype(np.float64)
    return header.get("meta", {}), params
