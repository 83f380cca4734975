"""Binary formats: DVF1 parameter checkpoints, DVE1 embedding stores, CSV matrices.

All multi-byte integers are little-endian u32.

DVF1 layout::

    b"DVF1" | u32 n_tensors | n_tensors * (u32 name_len | name utf-8 |
                                            u32 rows | u32 cols | rows*cols f64)

DVE1 layout::

    b"DVE1" | u32 dim | u32 count | count * (u32 id_len | id utf-8 | dim f32)
"""

from __future__ import annotations

import csv
import hashlib
import io
import struct
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

PathLike = Union[str, Path]

CHECKPOINT_MAGIC = b"DVF1"
EMBEDDING_MAGIC = b"DVE1"


class CorruptFileError(ValueError):
    pass


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptFileError(f"{self.path}: truncated at byte {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def done(self) -> bool:
        return self.pos == len(self.data)


def encode_tensors(tensors: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim > 2:
            raise ValueError(f"tensor {name!r} has rank {arr.ndim}; at most 2 is storable")
        mat = arr.reshape(1, -1) if arr.ndim < 2 else arr
        key = name.encode("utf-8")
        buf.write(struct.pack("<I", len(key)))
        buf.write(key)
        buf.write(struct.pack("<II", *mat.shape))
        buf.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(path: PathLike, tensors: Mapping[str, np.ndarray]) -> None:
    """Write named tensors. Vectors and scalars are stored as a single row."""
    Path(path).write_bytes(encode_tensors(tensors))


def load_checkpoint(path: PathLike) -> Dict[str, np.ndarray]:
    """Read a DVF1 file back as a dict of 2-D float64 arrays (in file order)."""
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise CorruptFileError(f"{path}: bad magic, expected DVF1")
    out: Dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rows, cols = r.u32(), r.u32()
        out[name] = np.frombuffer(r.take(8 * rows * cols), dtype="<f8").reshape(rows, cols).copy()
    if not r.done():
        raise CorruptFileError(f"{path}: trailing bytes after last tensor")
    return out


def tensors_digest(tensors: Mapping[str, np.ndarray]) -> str:
    return hashlib.sha256(encode_tensors(tensors)).hexdigest()


def _stable_f32(vec: np.ndarray, max_iter: int = 16) -> np.ndarray:
    # pick f32 values whose renormalization rounds back to themselves,
    # so store(load(x)) reproduces the same bytes
    q = vec.astype("<f4")
    for _ in range(max_iter):
        wide = q.astype(np.float64)
        nxt = (wide / np.linalg.norm(wide)).astype("<f4")
        if np.array_equal(nxt, q):
            break
        q = nxt
    return q


def store_embeddings(path: PathLike, items: Sequence[Tuple[str, np.ndarray]]) -> None:
    """Write ``(id, unit vector)`` pairs as DVE1. Nothing is written on error."""
    ids = [i for i, _ in items]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ValueError(f"duplicate embedding id {dup!r}")
    dims = {np.asarray(v).shape for _, v in items}
    if len(dims) > 1:
        raise ValueError(f"embeddings have mixed shapes {sorted(dims)}")
    dim = int(next(iter(dims))[0]) if dims else 0
    buf = io.BytesIO()
    buf.write(EMBEDDING_MAGIC)
    buf.write(struct.pack("<II", dim, len(items)))
    for ident, vec in items:
        vec = np.asarray(vec, dtype=np.float64)
        if not np.all(np.isfinite(vec)) or abs(np.linalg.norm(vec) - 1.0) > 1e-5:
            raise ValueError(f"embedding {ident!r} is not a finite unit vector")
        key = ident.encode("utf-8")
        buf.write(struct.pack("<I", len(key)))
        buf.write(key)
        buf.write(_stable_f32(vec).tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_embeddings(path: PathLike) -> List[Tuple[str, np.ndarray]]:
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != EMBEDDING_MAGIC:
        raise CorruptFileError(f"{path}: bad magic, expected DVE1")
    dim, count = r.u32(), r.u32()
    out = []
    for _ in range(count):
        ident = r.take(r.u32()).decode("utf-8")
        vec = np.frombuffer(r.take(4 * dim), dtype="<f4").astype(np.float64)
        norm = np.linalg.norm(vec)
        if not np.isfinite(norm) or norm == 0:
            raise CorruptFileError(f"{path}: record {ident!r} is not a valid embedding")
        out.append((ident, vec / norm))
    if not r.done():
        raise CorruptFileError(f"{path}: trailing bytes after {count} records")
    return out


def save_matrix_csv(path: PathLike, matrix: np.ndarray, header: Sequence[str] | None = None) -> None:
    """One row per frame, values written with ``repr`` precision."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in matrix:
            w.writerow([repr(float(v)) for v in row])


def load_matrix_csv(path: PathLike, has_header: bool = False) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if has_header:
        rows = rows[1:]
    return np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
