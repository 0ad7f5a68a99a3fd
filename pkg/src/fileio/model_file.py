"""Model files.

Layout (little-endian)::

    4s   magic b"DHMD"
    u16  version (1)
    u32  block count
    per block:
        u16  name length, then the UTF-8 name
        u8   rank, then rank × u32 dims
        float32 values, row-major
    u32  CRC32 of every preceding byte

The architecture itself is not stored; loading checks the blocks against
the configured architecture so every parameter appears exactly once.
"""

import struct
import zlib

import numpy as np

from ..config import ArchitectureConfig
from ..errors import ConfigurationError, ParseError
from ..net.params import ModelParams, architecture_shapes
from ..utils.log import log

MODEL_MAGIC = b"DHMD"
MODEL_VERSION = 1
_HEADER = struct.Struct("<4sHI")
_U16 = struct.Struct("<H")
_U8 = struct.Struct("<B")
_U32 = struct.Struct("<I")


def encode_model(model: ModelParams) -> bytes:
    parts = [_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(model))]
    for name, array in model.items():
        raw = name.encode("utf-8")
        parts.append(_U16.pack(len(raw)) + raw)
        parts.append(_U8.pack(array.ndim) + b"".join(_U32.pack(d) for d in array.shape))
        parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes, end: int, path: str | None):
        self.data = data
        self.end = end
        self.pos = 0
        self.path = path

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > self.end:
            raise ParseError(f"truncated {what}", offset=self.pos, path=self.path)
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: struct.Struct, what: str):
        return fmt.unpack(self.take(fmt.size, what))


def decode_model_blocks(data: bytes, path: str | None = None) -> dict[str, np.ndarray]:
    """Name → float32 array for every block; verifies magic, version and CRC."""
    if len(data) < _HEADER.size + _U32.size:
        raise ParseError("truncated model file", offset=len(data), path=path)
    end = len(data) - _U32.size
    (stored_crc,) = _U32.unpack_from(data, end)
    if zlib.crc32(data[:end]) != stored_crc:
        raise ParseError("CRC32 mismatch", offset=end, path=path)

    reader = _Reader(data, end, path)
    magic, version, count = reader.unpack(_HEADER, "header")
    if magic != MODEL_MAGIC:
        raise ParseError(f"bad magic {magic!r}", offset=0, path=path)
    if version != MODEL_VERSION:
        raise ParseError(f"unsupported version {version}", offset=4, path=path)

    blocks: dict[str, np.ndarray] = {}
    for _ in range(count):
        start = reader.pos
        (length,) = reader.unpack(_U16, "name length")
        try:
            name = reader.take(length, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("parameter name is not UTF-8", offset=start + _U16.size, path=path)
        if name in blocks:
            raise ParseError(f"duplicate parameter block '{name}'", offset=start, path=path)
        (rank,) = reader.unpack(_U8, "rank")
        shape = tuple(reader.unpack(_U32, "dimension")[0] for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.take(4 * size, f"values of '{name}'"), dtype="<f4")
        blocks[name] = values.reshape(shape).astype(np.float32)
    if reader.pos != end:
        raise ParseError("trailing bytes after the last block", offset=reader.pos, path=path)
    return blocks


def save_model(path: str, model: ModelParams):
    with open(path, "wb") as f:
        f.write(encode_model(model))
    log.logger.info(f"Saved model ({len(model)} parameter blocks) to {path}")


def load_model(path: str, arch: ArchitectureConfig, dtype=np.float32) -> ModelParams:
    with open(path, "rb") as f:
        data = f.read()
    blocks = decode_model_blocks(data, path=str(path))
    expected = architecture_shapes(arch)
    missing = sorted(set(expected) - set(blocks))
    unknown = sorted(set(blocks) - set(expected))
    wrong = sorted(n for n in expected if n in blocks and blocks[n].shape != expected[n])
    if missing or unknown or wrong:
        raise ConfigurationError(
            f"model {path} does not match the configured architecture "
            f"(missing={missing[:5]}, unknown={unknown[:5]}, wrong shape={wrong[:5]})"
        )
    log.logger.debug(f"Loaded model {path}")
    return ModelParams(arch, blocks, dtype=dtype)
