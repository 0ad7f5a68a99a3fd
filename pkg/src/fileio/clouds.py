"""Point-cloud files.

``.dhpc`` (little-endian)::

    offset 0   4s   magic b"DHPC"
    offset 4   u16  version (1)
    offset 6   u32  point count N
    offset 10  N×3 float32  x, y, z in meters, z upright

``.xyz`` is plain text with one ``x y z`` triple per line; blank lines and
``#`` comments are skipped.
"""

import os
import struct

import numpy as np

from ..errors import InvalidArgumentError, ParseError
from ..geometry import PointCloud
from ..utils.log import log

CLOUD_MAGIC = b"DHPC"
CLOUD_VERSION = 1
_HEADER = struct.Struct("<4sHI")


def encode_dhpc(cloud: PointCloud) -> bytes:
    payload = np.ascontiguousarray(cloud.points, dtype="<f4")
    return _HEADER.pack(CLOUD_MAGIC, CLOUD_VERSION, cloud.count) + payload.tobytes()


def decode_dhpc(data: bytes, path: str | None = None) -> PointCloud:
    if len(data) < _HEADER.size:
        raise ParseError("truncated header", offset=len(data), path=path)
    magic, version, count = _HEADER.unpack_from(data, 0)
    if magic != CLOUD_MAGIC:
        raise ParseError(f"bad magic {magic!r}", offset=0, path=path)
    if version != CLOUD_VERSION:
        raise ParseError(f"unsupported version {version}", offset=4, path=path)
    expected = _HEADER.size + 12 * count
    if len(data) != expected:
        raise ParseError(
            f"declared {count} points need {expected} bytes, file has {len(data)}",
            offset=min(len(data), expected),
            path=path,
        )
    if count == 0:
        raise ParseError("cloud declares zero points", offset=6, path=path)
    points = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(count, 3)
    bad = np.flatnonzero(~np.isfinite(points))
    if bad.size:
        raise ParseError("non-finite coordinate", offset=_HEADER.size + 4 * int(bad[0]), path=path)
    return PointCloud(points.astype(np.float64))


def write_dhpc(path: str, cloud: PointCloud):
    with open(path, "wb") as f:
        f.write(encode_dhpc(cloud))
    log.logger.debug(f"Wrote {cloud.count} points to {path}")


def read_dhpc(path: str) -> PointCloud:
    with open(path, "rb") as f:
        data = f.read()
    return decode_dhpc(data, path=str(path))


def write_xyz(path: str, cloud: PointCloud):
    with open(path, "w") as f:
        for x, y, z in cloud.points:
            f.write(f"{x!r} {y!r} {z!r}\n")


def read_xyz(path: str) -> PointCloud:
    with open(path, "rb") as f:
        data = f.read()
    rows = []
    offset = 0
    for raw in data.splitlines(keepends=True):
        line = raw.split(b"#", 1)[0].strip()
        if line:
            fields = line.split()
            if len(fields) != 3:
                raise ParseError(f"expected 3 coordinates, got {len(fields)}", offset=offset, path=str(path))
            try:
                row = [float(v) for v in fields]
            except ValueError:
                raise ParseError("malformed coordinate", offset=offset, path=str(path))
            if not all(np.isfinite(row)):
                raise ParseError("non-finite coordinate", offset=offset, path=str(path))
            rows.append(row)
        offset += len(raw)
    if not rows:
        raise ParseError("no points", offset=0, path=str(path))
    return PointCloud(np.array(rows))


_READERS = {".dhpc": read_dhpc, ".xyz": read_xyz}
_WRITERS = {".dhpc": write_dhpc, ".xyz": write_xyz}


def _suffix(path: str) -> str:
    suffix = os.path.splitext(str(path))[1].lower()
    if suffix not in _READERS:
        raise InvalidArgumentError(f"unsupported cloud format '{suffix}' (expected .dhpc or .xyz): {path}")
    return suffix


def load_cloud(path: str) -> PointCloud:
    return _READERS[_suffix(path)](path)


def save_cloud(path: str, cloud: PointCloud):
    _WRITERS[_suffix(path)](path, cloud)
