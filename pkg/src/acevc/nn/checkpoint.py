"""Self-describing binary container for parameters, moments, and features.

Layout (all integers little-endian):

    magic   6 bytes  b"ACEVC1"
    version u32
    kind    u16 length + utf-8 bytes      (e.g. "extractor", "synthesizer")
    fprint  32 bytes sha256(kind + NUL + config_text)
    config  u32 length + utf-8 bytes      (canonical resolved config)
    n       u32 entry count
    table   per entry: u16 name length, name bytes, u8 dtype code,
            u8 ndim, u32 per dim, u64 byte offset, u64 byte length
    payload raw C-order array bytes
    crc     u32 CRC32 over everything above

Round-trips are bit-exact; the CRC catches truncation and corruption.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Container",
    "ContainerError",
    "CorruptContainerError",
    "ContainerVersionError",
    "ContainerKindError",
    "FingerprintError",
    "write_container",
    "read_container",
    "config_fingerprint",
]

MAGIC = b"ACEVC1"
VERSION = 1

_DTYPE_CODES = {
    np.dtype(np.float32): 1,
    np.dtype(np.float64): 2,
    np.dtype(np.int64): 3,
    np.dtype(np.int32): 4,
    np.dtype(np.uint8): 5,
}
_CODE_DTYPES = {code: dt for dt, code in _DTYPE_CODES.items()}


class ContainerError(RuntimeError):
    pass


class CorruptContainerError(ContainerError):
    pass


class ContainerVersionError(ContainerError):
    pass


class ContainerKindError(ContainerError):
    pass


class FingerprintError(ContainerError):
    pass


@dataclass
class Container:
    kind: str
    config_text: str
    arrays: dict
    fingerprint: bytes


def config_fingerprint(kind: str, config_text: str) -> bytes:
    return hashlib.sha256(kind.encode() + b"\x00" + config_text.encode()).digest()


def write_container(path, kind: str, config_text: str, arrays: dict):
    entries = []
    payload = bytearray()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype not in _DTYPE_CODES:
            raise ContainerError(f"unsupported dtype {arr.dtype} for '{name}'")
        if not np.issubdtype(arr.dtype, np.integer) and not np.isfinite(arr).all():
            raise ContainerError(f"non-finite values in '{name}'")
        raw = arr.tobytes()
        entries.append((name, arr, len(payload), len(raw)))
        payload.extend(raw)

    head = bytearray()
    head += MAGIC
    head += struct.pack("<I", VERSION)
    kind_b = kind.encode()
    head += struct.pack("<H", len(kind_b)) + kind_b
    head += config_fingerprint(kind, config_text)
    config_b = config_text.encode()
    head += struct.pack("<I", len(config_b)) + config_b
    head += struct.pack("<I", len(entries))
    for name, arr, offset, length in entries:
        name_b = name.encode()
        head += struct.pack("<H", len(name_b)) + name_b
        head += struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim)
        head += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
        head += struct.pack("<QQ", offset, length)

    blob = bytes(head) + bytes(payload)
    crc = zlib.crc32(blob) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(blob)
        f.write(struct.pack("<I", crc))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptContainerError("truncated container")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(path, expect_kind: str | None = None,
                   expect_fingerprint: bytes | None = None) -> Container:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(MAGIC) + 8:
        raise CorruptContainerError("truncated container")
    body, crc_stored = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise CorruptContainerError("checksum mismatch")

    r = _Reader(body)
    if r.take(len(MAGIC)) != MAGIC:
        raise CorruptContainerError("bad magic bytes")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise ContainerVersionError(f"unsupported container version {version}")
    (kind_len,) = r.unpack("<H")
    kind = r.take(kind_len).decode()
    fingerprint = r.take(32)
    (config_len,) = r.unpack("<I")
    config_text = r.take(config_len).decode()
    if config_fingerprint(kind, config_text) != fingerprint:
        raise FingerprintError("config fingerprint does not match contents")
    if expect_kind is not None and kind != expect_kind:
        raise ContainerKindError(
            f"container holds a '{kind}' checkpoint, expected '{expect_kind}'")
    if expect_fingerprint is not None and fingerprint != expect_fingerprint:
        raise FingerprintError("checkpoint was built from a different config")

    (n_entries,) = r.unpack("<I")
    table = []
    for _ in range(n_entries):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        code, ndim = r.unpack("<BB")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        offset, length = r.unpack("<QQ")
        table.append((name, code, shape, offset, length))
    payload_start = r.pos

    arrays = {}
    for name, code, shape, offset, length in table:
        if code not in _CODE_DTYPES:
            raise CorruptContainerError(f"unknown dtype code {code}")
        start = payload_start + offset
        raw = body[start:start + length]
        if len(raw) != length:
            raise CorruptContainerError("entry data out of bounds")
        arrays[name] = np.frombuffer(raw, dtype=_CODE_DTYPES[code]).reshape(shape).copy()
    return Container(kind=kind, config_text=config_text, arrays=arrays,
                     fingerprint=fingerprint)


def model_arrays(model, optimizer=None, step: int | None = None) -> dict:
    """Flatten a model (and optional optimizer state) into container entries."""
    arrays = {}
    for name, p in model.named_parameters().items():
        arrays[f"param/{name}"] = p.data
    groups = "\n".join(f"{name}:{p.group}"
                       for name, p in model.named_parameters().items())
    arrays["meta/groups"] = np.frombuffer(groups.encode(), dtype=np.uint8).copy()
    if optimizer is not None:
        for key, value in optimizer.state_dict().items():
            if key == "step":
                arrays["meta/step"] = np.asarray(value, dtype=np.int64)
            else:
                arrays[f"adam/{key}"] = value
    if step is not None:
        arrays["meta/step"] = np.asarray(step, dtype=np.int64)
    return arrays


def load_model_arrays(model, arrays: dict, optimizer=None):
    state = {name[len("param/"):]: arr for name, arr in arrays.items()
             if name.startswith("param/")}
    model.load_state_dict(state)
    if optimizer is not None:
        opt_state = {"step": arrays.get("meta/step", np.int64(0))}
        for name, arr in arrays.items():
            if name.startswith("adam/"):
                opt_state[name[len("adam/"):]] = arr
        optimizer.load_state_dict(opt_state)
