"""Versioned binary serialization of model parameters.

File layout (all integers little-endian):

    magic "AUSC" | version u16 | header length u32 | header bytes (UTF-8 text)
    then per tensor, in the canonical parameter order:
        name length u16 | name bytes | rank u8 | extents u32 x rank
        | float32 values
    trailing CRC-32 (u32) over every preceding byte.

The header is line-oriented ``key: value`` text carrying the model
configuration, the canonical class order, and caller-supplied metadata.
Writes are atomic and byte-deterministic for identical inputs.
"""

import struct
import zlib
from dataclasses import asdict

import numpy as np

from . import features as feat
from .dataset import _atomic_write_bytes
from .errors import CorruptModelError, NotAModelError, VersionError
from .nn import ModelConfig, ParameterSet, parameter_shapes

MAGIC = b"AUSC"
FORMAT_VERSION = 1
MAX_PAYLOAD_BYTES = 1 << 30  # refuse to allocate for absurd declared sizes

_TUPLE_FIELDS = ("gru_units", "dense_units")


def _render_header(cfg, metadata):
    lines = []
    for key, value in asdict(cfg).items():
        if key in _TUPLE_FIELDS:
            value = ",".join(str(v) for v in value)
        lines.append(f"config.{key}: {value}")
    lines.append("classes: " + ",".join(feat.CLASSES))
    for key in sorted(metadata):
        value = str(metadata[key])
        if "\n" in value:
            raise CorruptModelError(f"metadata value for {key!r} contains a newline")
        lines.append(f"meta.{key}: {value}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_header(blob):
    config_fields = {}
    metadata = {}
    for line in blob.decode("utf-8").splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(": ")
        if key.startswith("config."):
            config_fields[key[len("config."):]] = value
        elif key.startswith("meta."):
            metadata[key[len("meta."):]] = value
        elif key == "classes":
            if tuple(value.split(",")) != feat.CLASSES:
                raise CorruptModelError(
                    f"artifact class order {value!r} does not match this build"
                )
    kwargs = {}
    for key, value in config_fields.items():
        if key in _TUPLE_FIELDS:
            kwargs[key] = tuple(int(v) for v in value.split(","))
        elif key == "leaky_slope":
            kwargs[key] = float(value)
        else:
            kwargs[key] = int(value)
    try:
        cfg = ModelConfig(**kwargs)
    except TypeError as exc:
        raise CorruptModelError(f"bad config header: {exc}") from None
    return cfg, metadata


def save_model(params, path, metadata=None):
    """Write one artifact; atomic, byte-deterministic for identical inputs."""
    cfg = params.cfg
    parts = [MAGIC, struct.pack("<H", FORMAT_VERSION)]
    header = _render_header(cfg, metadata or {})
    parts.append(struct.pack("<I", len(header)))
    parts.append(header)
    for name in parameter_shapes(cfg):
        tensor = np.ascontiguousarray(params[name], dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", tensor.ndim))
        parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        parts.append(tensor.tobytes())
    body = b"".join(parts)
    _atomic_write_bytes(path, body + struct.pack("<I", zlib.crc32(body)))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CorruptModelError(f"truncated artifact while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self, what):
        return self.take(1, what)[0]

    def u16(self, what):
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def load_model(path):
    """Validated load; returns (ParameterSet, ModelConfig)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 14 or data[:4] != MAGIC:
        raise NotAModelError(f"{path} is not a model artifact (bad magic)")
    (stored_crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != stored_crc:
        raise CorruptModelError(f"{path} fails its CRC-32 check")

    r = _Reader(data[:-4])
    r.take(4, "magic")
    version = r.u16("version")
    if version != FORMAT_VERSION:
        raise VersionError(
            f"{path} uses format version {version}; this build reads "
            f"{FORMAT_VERSION}"
        )
    header_len = r.u32("header length")
    cfg, _ = _parse_header(r.take(header_len, "header"))

    expected = parameter_shapes(cfg)
    declared_total = 0
    tensors = {}
    for name, shape in expected.items():
        name_len = r.u16("tensor name length")
        got_name = r.take(name_len, "tensor name").decode("utf-8")
        if got_name != name:
            raise CorruptModelError(
                f"tensor order mismatch: expected {name!r}, found {got_name!r}"
            )
        rank = r.u8("tensor rank")
        extents = tuple(r.u32(f"extent of {name}") for _ in range(rank))
        if extents != shape:
            raise CorruptModelError(
                f"{name}: stored shape {extents} does not match config shape {shape}"
            )
        n_values = int(np.prod(shape, dtype=np.int64)) if shape else 1
        declared_total += 4 * n_values
        if declared_total > MAX_PAYLOAD_BYTES:
            raise CorruptModelError(
                f"declared payload exceeds the {MAX_PAYLOAD_BYTES} byte cap"
            )
        raw = r.take(4 * n_values, f"values of {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if r.pos != len(r.data):
        raise CorruptModelError(f"{len(r.data) - r.pos} trailing bytes after payload")
    return ParameterSet(cfg, tensors), cfg


def load_metadata(path):
    """Header metadata only (cheap; reads the header block and skips tensors)."""
    with open(path, "rb") as fh:
        prefix = fh.read(10)
        if len(prefix) < 10 or prefix[:4] != MAGIC:
            raise NotAModelError(f"{path} is not a model artifact (bad magic)")
        version = struct.unpack("<H", prefix[4:6])[0]
        if version != FORMAT_VERSION:
            raise VersionError(f"{path} uses format version {version}")
        (header_len,) = struct.unpack("<I", prefix[6:10])
        if header_len > MAX_PAYLOAD_BYTES:
            raise CorruptModelError("header length exceeds the payload cap")
        header = fh.read(header_len)
    if len(header) != header_len:
        raise CorruptModelError("truncated artifact while reading header")
    _, metadata = _parse_header(header)
    return metadata
