"""Single-file checkpoint container.

Layout: magic ``UXEC`` | u32 version | u32 header length | UTF-8 header |
payload | u32 CRC32(payload).  The header is line-oriented text: ``config
key = value`` entries followed by ``tensor name dims offset`` entries whose
offsets index into the payload of little-endian float32 data.  Loading
verifies the checksum before materializing any tensor, and a save/load
round trip is bit-identical.
"""

import pathlib
import struct
import zlib

import numpy as np

from .errors import DataError

MAGIC = b"UXEC"
VERSION = 1


def save_checkpoint(path, tensors, config=None):
    """Write named float arrays plus config strings; tensors are stored float32."""
    lines = []
    for key in sorted(config or {}):
        lines.append(f"config {key} = {config[key]}")
    payload_parts = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        dims = ",".join(str(d) for d in arr.shape) if arr.ndim else "scalar"
        lines.append(f"tensor {name} {dims} {offset}")
        payload_parts.append(arr.tobytes())
        offset += arr.nbytes
    header = ("\n".join(lines) + "\n").encode("utf-8")
    payload = b"".join(payload_parts)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def _parse_header(header):
    config = {}
    entries = []
    for line in header.decode("utf-8").splitlines():
        if not line.strip():
            continue
        kind, _, rest = line.partition(" ")
        if kind == "config":
            key, _, value = rest.partition(" = ")
            config[key] = value
        elif kind == "tensor":
            name, dims, offset = rest.rsplit(" ", 2)
            shape = () if dims == "scalar" else tuple(int(d) for d in dims.split(","))
            entries.append((name, shape, int(offset)))
        else:
            raise DataError(f"unknown checkpoint header entry {kind!r}")
    return config, entries


def load_checkpoint(path):
    """Return ``(tensors, config)``; checksum is verified before any tensor is built."""
    path = pathlib.Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}, not a checkpoint")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    header_end = 12 + header_len
    payload = blob[header_end:-4]
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise DataError(f"{path}: payload checksum mismatch, file is corrupt")
    config, entries = _parse_header(blob[12:header_end])
    tensors = {}
    for name, shape, offset in entries:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(payload):
            raise DataError(f"{path}: tensor {name!r} overruns the payload")
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        tensors[name] = arr.reshape(shape).copy()
    return tensors, config


def inspect_checkpoint(path):
    """Header summary without materializing tensors (checksum still verified)."""
    tensors, config = load_checkpoint(path)
    return {
        "config": config,
        "tensors": {name: tuple(arr.shape) for name, arr in tensors.items()},
        "n_parameters": int(sum(arr.size for arr in tensors.values())),
    }
