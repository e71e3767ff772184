"""Binary model files.

Layout (all integers little-endian ``uint32``)::

    magic        8 bytes  b"MACCQNET"
    version      uint32   (1)
    agent_id     uint32
    n_layers     uint32   number of entries in layer_dims
    layer_dims   n_layers x uint32
    parameters   float64 little-endian: W1 (row-major), b1, W2, b2, ...

Loading checks the magic, the version and that the file length matches the
declared dimensions exactly, so truncation or trailing garbage is fatal.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from ..errors import ModelFormatError
from .network import QNetwork

MAGIC = b"MACCQNET"
VERSION = 1
_HEADER = struct.Struct("<8sIII")


def _n_params(dims):
    return sum(o * i + o for i, o in zip(dims[:-1], dims[1:]))


def encode(net: QNetwork) -> bytes:
    dims = net.layer_dims
    head = _HEADER.pack(MAGIC, VERSION, net.agent_id, len(dims)) + struct.pack(f"<{len(dims)}I", *dims)
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.params)
    return head + body


def decode(data: bytes, source="<bytes>") -> QNetwork:
    if len(data) < _HEADER.size:
        raise ModelFormatError(f"{source}: file too short for a model header ({len(data)} bytes)")
    magic, version, agent_id, n_layers = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise ModelFormatError(f"{source}: unsupported format version {version}")
    if n_layers < 2 or n_layers > 64:
        raise ModelFormatError(f"{source}: implausible layer count {n_layers}")
    off = _HEADER.size
    if len(data) < off + 4 * n_layers:
        raise ModelFormatError(f"{source}: truncated layer table")
    dims = list(struct.unpack_from(f"<{n_layers}I", data, off))
    off += 4 * n_layers
    expected = off + 8 * _n_params(dims)
    if len(data) != expected:
        raise ModelFormatError(f"{source}: expected {expected} bytes for dims {dims}, found {len(data)}")
    flat = np.frombuffer(data, dtype="<f8", offset=off).astype(np.float64)
    weights, biases = [], []
    k = 0
    for i, o in zip(dims[:-1], dims[1:]):
        weights.append(flat[k:k + o * i].reshape(o, i).copy())
        k += o * i
        biases.append(flat[k:k + o].copy())
        k += o
    return QNetwork(dims, weights, biases, agent_id)


def save_model(net: QNetwork, path):
    """Atomically write ``net`` to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(net))
    os.replace(tmp, path)


def load_model(path) -> QNetwork:
    path = Path(path)
    return decode(path.read_bytes(), str(path))


def load_or_initialize(path, layer_dims, rng, agent_id=0):
    """Reload ``path`` if it exists, otherwise build a fresh network.

    Returns ``(net, reloaded)``. A file that exists but does not decode, or
    whose dimensions differ from ``layer_dims``, raises ModelFormatError.
    """
    if path is not None and Path(path).exists():
        net = load_model(path)
        if net.layer_dims != list(layer_dims):
            raise ModelFormatError(f"{path}: stored dims {net.layer_dims} do not match {list(layer_dims)}")
        return net, True
    return QNetwork.initialize(list(layer_dims), rng, agent_id), False
