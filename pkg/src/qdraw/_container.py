"""Byte-stable tensor container shared by checkpoints and encoded datasets.

Layout::

    <MAGIC> <version>\n
    <one line of JSON: {"meta": {...}, "tensors": [{"name", "shape", "offset"}...]}>\n
    <raw little-endian float64 payload, tensors back to back>

JSON keys are sorted and floats are written by ``repr`` so identical content
gives identical bytes.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class ContainerError(ValueError):
    pass


def write(path, magic: str, version: int, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps({"meta": meta, "tensors": entries}, sort_keys=True, separators=(",", ":"))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(f"{magic} {version}\n".encode())
        fh.write(header.encode() + b"\n")
        for b in blobs:
            fh.write(b)
    tmp.replace(path)


def read(path, magic: str, version: int) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    try:
        first, rest = raw.split(b"\n", 1)
        header, payload = rest.split(b"\n", 1)
        got_magic, got_version = first.decode().split()
        doc = json.loads(header)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ContainerError(f"{path}: not a {magic} file") from exc
    if got_magic != magic:
        raise ContainerError(f"{path}: expected {magic}, found {got_magic}")
    if int(got_version) != version:
        raise ContainerError(f"{path}: unsupported {magic} version {got_version} (want {version})")
    tensors = {}
    for e in doc["tensors"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        start, stop = e["offset"], e["offset"] + 8 * count
        if stop > len(payload):
            raise ContainerError(f"{path}: truncated payload for tensor {e['name']}")
        tensors[e["name"]] = np.frombuffer(payload[start:stop], dtype="<f8").reshape(e["shape"]).copy()
    return doc["meta"], tensors
