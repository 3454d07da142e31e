"""Self-describing checkpoint files.

Layout::

    b"VLCKPT\\n"                   magic
    uint64 little-endian           header length in bytes
    header                         UTF-8 JSON
    data blocks                    raw little-endian arrays, in header order

The header lists every block as ``{name, dtype, shape, offset, nbytes}`` with
offsets relative to the end of the header. Network weights and optimizer
moments are ``<f4``; simulator state blocks keep their native dtypes so a
resumed run continues bit-for-bit.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"VLCKPT\n"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _dtype_str(a: np.ndarray) -> str:
    if a.dtype == np.bool_:
        return "|b1"
    return a.dtype.newbyteorder("<").str


def write_checkpoint(path: str | Path, header: dict, blocks: dict[str, np.ndarray]) -> None:
    entries, payload, offset = [], [], 0
    for name, arr in blocks.items():
        arr = np.ascontiguousarray(arr)
        dt = _dtype_str(arr)
        data = arr.astype(dt, copy=False).tobytes()
        entries.append({"name": name, "dtype": dt, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        payload.append(data)
        offset += len(data)
    head = dict(header, format_version=FORMAT_VERSION, blocks=entries)
    raw = json.dumps(head, sort_keys=False).encode()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for data in payload:
            fh.write(data)
    tmp.replace(path)


def read_header(path: str | Path) -> tuple[dict, int]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"corrupt checkpoint {path}: bad magic")
        size = fh.read(8)
        if len(size) != 8:
            raise CheckpointError(f"corrupt checkpoint {path}: truncated header length")
        (n,) = struct.unpack("<Q", size)
        raw = fh.read(n)
    if len(raw) != n:
        raise CheckpointError(f"corrupt checkpoint {path}: truncated header")
    try:
        header = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: header is not valid JSON ({exc})") from exc
    return header, len(MAGIC) + 8 + n


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    header, start = read_header(path)
    data = Path(path).read_bytes()[start:]
    blocks = {}
    for e in header.get("blocks", []):
        chunk = data[e["offset"]: e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise CheckpointError(f"corrupt checkpoint {path}: block {e['name']} is truncated")
        blocks[e["name"]] = np.frombuffer(chunk, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return header, blocks


def dims_diff(expected: dict, found: dict) -> list[str]:
    keys = sorted(set(expected) | set(found))
    return [f"{k}: expected {expected.get(k)!r}, checkpoint has {found.get(k)!r}"
            for k in keys if expected.get(k) != found.get(k)]
