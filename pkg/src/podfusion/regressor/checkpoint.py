"""Checkpoint files.

Layout: ``b"PFRMCKPT"``, uint32 format version, uint32 header length, the
UTF-8 JSON header (network config, seed, target scale, and one entry per
block with name, shape and CRC-32), then each block as little-endian
float64 in header order.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import CorruptCheckpoint, VersionMismatch
from .network import Network, NetworkConfig

MAGIC = b"PFRMCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<II")


def save_model(net: Network, path: str | Path) -> None:
    blocks, payload = [], []
    for name, arr in net.state().items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        blocks.append({"name": name, "shape": list(arr.shape), "crc32": zlib.crc32(raw)})
        payload.append(raw)
    header = json.dumps({
        "format_version": FORMAT_VERSION,
        "config": net.config.to_dict(),
        "seed": net.config.seed,
        "target_scale": net.target_scale,
        "blocks": blocks,
    }, sort_keys=True).encode()
    Path(path).write_bytes(MAGIC + _PREFIX.pack(FORMAT_VERSION, len(header)) + header + b"".join(payload))


def load_model(path: str | Path) -> Network:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC) or len(raw) < len(MAGIC) + _PREFIX.size:
        raise CorruptCheckpoint(f"{path}: not a checkpoint file")
    version, header_len = _PREFIX.unpack_from(raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: checkpoint format {version}, this build reads {FORMAT_VERSION}")
    start = len(MAGIC) + _PREFIX.size
    try:
        header = json.loads(raw[start:start + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable header") from exc
    net = Network(NetworkConfig.from_dict(header["config"]))
    net.target_scale = float(header["target_scale"])
    state = net.state()
    offset = start + header_len
    for block in header["blocks"]:
        name, shape = block["name"], tuple(block["shape"])
        if name not in state or state[name].shape != shape:
            raise CorruptCheckpoint(f"{path}: block {name} does not fit the network")
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        chunk = raw[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CorruptCheckpoint(f"{path}: truncated at block {name}")
        if zlib.crc32(chunk) != block["crc32"]:
            raise CorruptCheckpoint(f"{path}: checksum mismatch in block {name}")
        state[name][...] = np.frombuffer(chunk, dtype="<f8").reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise CorruptCheckpoint(f"{path}: {len(raw) - offset} trailing bytes")
    if set(b["name"] for b in header["blocks"]) != set(state):
        raise CorruptCheckpoint(f"{path}: missing parameter blocks")
    return net
