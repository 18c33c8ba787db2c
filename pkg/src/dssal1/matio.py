"""Binary matrix files for shards and share histories.

Layout (little-endian):

    bytes 0-7    magic ``b"DSSMAT01"``
    bytes 8-15   uint64 number of rows
    bytes 16-23  uint64 number of columns
    bytes 24-    float64 entries, row-major
"""
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DSSMAT01"
_HEADER = struct.Struct("<8sQQ")


class MatrixFormatError(ValueError):
    pass


def save_matrix(path, M):
    M = np.ascontiguousarray(M, dtype="<f8")
    if M.ndim != 2:
        raise MatrixFormatError(f"only 2-D arrays can be saved, got shape {M.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, M.shape[0], M.shape[1]))
        fh.write(M.tobytes(order="C"))


def load_matrix(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise MatrixFormatError(f"{path}: file too short for a header")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise MatrixFormatError(f"{path}: expected {expected} bytes for a {rows}x{cols} matrix, "
                                f"found {len(data)}")
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(float)


def save_shards(directory, shards):
    """Write ``shard_000.mat``, ``shard_001.mat``, ... and return the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in shards:
        path = directory / f"shard_{s.agent_id:03d}.mat"
        save_matrix(path, s.samples)
        paths.append(path)
    return paths


def load_shards(directory):
    from .problem import DataShard
    paths = sorted(Path(directory).glob("shard_*.mat"))
    if not paths:
        raise FileNotFoundError(f"no shard_*.mat files in {directory}")
    return [DataShard(load_matrix(p), agent_id=i) for i, p in enumerate(paths)]
