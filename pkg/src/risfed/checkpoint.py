"""Versioned binary checkpoint of named Q-networks.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic  b"RISFEDCK"
    offset 8   uint32    format version (1)
    offset 12  uint64    header length H
    offset 20  H bytes   UTF-8 JSON header
    then       payload   for each network in header order, for each layer:
                         W as float64 LE, row-major (out x in), then b (out)

Header::

    {"version": 1, "meta": {...},
     "networks": [{"name": str,
                   "layers": [{"out": int, "in": int, "activation": str}, ...]}]}
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .dqn import NetworkWeights
from .errors import CheckpointError

MAGIC = b"RISFEDCK"
VERSION = 1
_DTYPE = np.dtype("<f8")


def dumps_checkpoint(networks: dict[str, NetworkWeights], meta: dict | None = None) -> bytes:
    header = {"version": VERSION, "meta": meta or {}, "networks": []}
    payload = []
    for name, net in networks.items():
        layers = []
        for W, b, act in zip(net.weights, net.biases, net.activations):
            layers.append({"out": int(W.shape[0]), "in": int(W.shape[1]), "activation": act})
            payload.append(np.ascontiguousarray(W, dtype=_DTYPE).tobytes())
            payload.append(np.ascontiguousarray(b, dtype=_DTYPE).tobytes())
        header["networks"].append({"name": name, "layers": layers})
    head = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(head)) + head + b"".join(payload)


def loads_checkpoint(data: bytes, expected: dict[str, NetworkWeights] | None = None):
    """Parse checkpoint bytes into ``(networks, meta)``.

    With ``expected``, every named network must be present with identical
    layer shapes and activations.
    """
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if len(data) < 20:
        raise CheckpointError("truncated checkpoint header")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    try:
        header = json.loads(data[20 : 20 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt header: {exc}") from None
    offset = 20 + hlen
    networks = {}
    for entry in header["networks"]:
        ws, bs, acts = [], [], []
        for layer in entry["layers"]:
            n_out, n_in = layer["out"], layer["in"]
            need = (n_out * n_in + n_out) * 8
            if offset + need > len(data):
                raise CheckpointError("truncated checkpoint payload")
            ws.append(np.frombuffer(data, _DTYPE, n_out * n_in, offset).reshape(n_out, n_in).astype(float))
            offset += n_out * n_in * 8
            bs.append(np.frombuffer(data, _DTYPE, n_out, offset).astype(float))
            offset += n_out * 8
            acts.append(layer["activation"])
        networks[entry["name"]] = NetworkWeights(ws, bs, acts)
    if offset != len(data):
        raise CheckpointError("trailing bytes after payload")
    if expected is not None:
        for name, net in expected.items():
            if name not in networks:
                raise CheckpointError(f"checkpoint lacks network {name!r}")
            if not net.same_shape(networks[name]):
                raise CheckpointError(
                    f"network {name!r}: shapes {networks[name].shapes()} do not match {net.shapes()}"
                )
    return networks, header.get("meta", {})


def save_checkpoint(path, networks: dict[str, NetworkWeights], meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps_checkpoint(networks, meta))


def load_checkpoint(path, expected: dict[str, NetworkWeights] | None = None):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from None
    return loads_checkpoint(data, expected)
