"""
Versioned binary container of named float64 arrays.

Used for model checkpoints and visual feature grids. Layout (little-endian):

    magic        8 bytes   b"DPATHCK\\0"
    version      u32       1
    header_len   u64       length of the JSON header in bytes
    header       UTF-8 JSON, sorted keys:
                 {"arrays": [{"name", "shape", "offset"}], "meta": {...}}
    body         raw f64 data of every array, C order, in header order;
                 offsets are relative to the first body byte
"""

import json
import struct
from typing import Dict, Mapping, Tuple

import numpy as np

from core.errors import CheckpointError

MAGIC = b"DPATHCK\0"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def encode_container(arrays: Mapping[str, np.ndarray], meta: Mapping = None) -> bytes:
    """Serialize arrays (sorted by name) and a JSON-able meta dict."""
    index = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        array = np.ascontiguousarray(arrays[name], dtype='<f8')
        if not np.all(np.isfinite(array)):
            raise CheckpointError(f"array '{name}' holds non-finite values")
        data = array.tobytes()
        index.append({"name": name, "shape": list(array.shape), "offset": offset})
        chunks.append(data)
        offset += len(data)
    header = json.dumps({"arrays": index, "meta": dict(meta or {})}, sort_keys=True).encode('utf-8')
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(chunks)


def decode_container(blob: bytes) -> Tuple[Dict[str, np.ndarray], dict]:
    """
    Parse container bytes.

    Returns:
        (arrays by name, meta dict)

    Raises:
        CheckpointError: bad magic, unknown version or truncated data
    """
    if len(blob) < _PREFIX.size:
        raise CheckpointError("container truncated before header")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("not a dialpath container (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported container version {version}")
    body_start = _PREFIX.size + header_len
    if len(blob) < body_start:
        raise CheckpointError("container truncated inside header")
    try:
        header = json.loads(blob[_PREFIX.size:body_start].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable container header: {e}")
    arrays = {}
    for entry in header.get("arrays", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = body_start + entry["offset"]
        end = start + 8 * count
        if end > len(blob):
            raise CheckpointError(f"array '{entry['name']}' runs past the end of the container")
        arrays[entry["name"]] = np.frombuffer(blob[start:end], dtype='<f8').astype(np.float64).reshape(shape)
    return arrays, header.get("meta", {})


def write_container(path: str, arrays: Mapping[str, np.ndarray], meta: Mapping = None):
    with open(path, 'wb') as f:
        f.write(encode_container(arrays, meta))


def read_container(path: str) -> Tuple[Dict[str, np.ndarray], dict]:
    try:
        with open(path, 'rb') as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read container {path}: {e}")
    return decode_container(blob)
