"""HNSW approximate nearest-neighbour index with inner-product distance.

The index stores unit-norm float32 vectors together with a :class:`PointLabel`
and answers k-NN queries under ``1 - dot(a, b)``. A built index is treated as
immutable: :func:`add_points` returns a new index and leaves its argument
untouched, so one prebuilt outlier index can be shared by many workers and
augmented per document.

Binary layout (all integers little-endian)::

    magic        8s   b"SOREANN1"
    dim          u32
    M            u32
    ef_constr    u32
    count        u32
    seed         u64
    entry_point  i32  (-1 when empty)
    max_level    i32
    count x node record:
        level        u32
        kind         u8
        ref_id       i64
        name_len     u32  (0xFFFFFFFF when group_name is None)
        name         name_len bytes, utf-8
        vector       dim x f32
        (level + 1) x [n_links u32, n_links x u32]
    crc32        u32  over every preceding byte
"""

from __future__ import annotations

import enum
import math
import struct
import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from sore import _hnsw
from sore.errors import CorruptIndex, DimensionMismatch

MAGIC = b"SOREANN1"
_HEADER = struct.Struct("<8sIIIIQii")
_NODE_HEAD = struct.Struct("<IBqI")
_NO_NAME = 0xFFFFFFFF
_MASK64 = (1 << 64) - 1

DEFAULT_M = 16
DEFAULT_EF_CONSTRUCTION = 200
DEFAULT_EF_SEARCH = 64


class PointKind(enum.IntEnum):
    OUTLIER_PHRASE = 0
    CORE_SEGMENT = 1
    METADATA = 2


@dataclass(frozen=True)
class PointLabel:
    kind: PointKind
    ref_id: int
    group_name: str | None = None

    def __post_init__(self):
        if (self.group_name is not None) != (self.kind == PointKind.OUTLIER_PHRASE):
            raise ValueError("group_name must be set exactly for outlier phrases")


Point = tuple[np.ndarray, PointLabel]


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _draw_level(seed: int, node_id: int, level_mult: float) -> int:
    # Stateless per-node draw: an index rebuilt from bytes assigns the same
    # levels to later insertions as the original would have.
    h = _splitmix64((seed & _MASK64) ^ _splitmix64(node_id))
    u = ((h >> 11) + 1) / float(1 << 53)  # (0, 1]
    return int(-math.log(u) * level_mult)


class AnnIndex:
    """Layered proximity graph over labelled unit vectors.

    Use :func:`build_index` / :func:`add_points` rather than mutating an
    instance directly.
    """

    def __init__(self, dim: int, M: int = DEFAULT_M,
                 ef_construction: int = DEFAULT_EF_CONSTRUCTION, seed: int = 0):
        if dim <= 0 or M < 2 or ef_construction < 1:
            raise ValueError("dim must be > 0, M >= 2, ef_construction >= 1")
        if not 0 <= seed <= _MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.dim = dim
        self.M = M
        self.ef_construction = ef_construction
        self.seed = seed
        self.labels: list[PointLabel] = []
        self.entry_point = -1
        self.max_level = -1
        self._level_mult = 1.0 / math.log(M)
        self._alloc(0, 0)

    def _alloc(self, cap: int, cap_up: int) -> None:
        self._vecs = np.zeros((cap, self.dim), dtype=np.float32)
        self._levels = np.zeros(cap, dtype=np.int64)
        self._links0 = np.zeros((cap, 2 * self.M), dtype=np.int64)
        self._n0 = np.zeros(cap, dtype=np.int64)
        self._up_off = np.full(cap, -1, dtype=np.int64)
        self._links_up = np.zeros((cap_up, self.M), dtype=np.int64)
        self._n_up = np.zeros(cap_up, dtype=np.int64)
        self._n_up_rows = 0

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def vectors(self) -> np.ndarray:
        return self._vecs[: len(self.labels)]

    @property
    def levels(self) -> list[int]:
        return self._levels[: len(self.labels)].tolist()

    def neighbours(self, node: int, layer: int) -> list[int]:
        if layer > self._levels[node]:
            raise IndexError(f"node {node} has no layer {layer}")
        if layer == 0:
            return self._links0[node, : self._n0[node]].tolist()
        row = self._up_off[node] + layer - 1
        return self._links_up[row, : self._n_up[row]].tolist()

    def copy(self) -> "AnnIndex":
        new = AnnIndex(self.dim, self.M, self.ef_construction, self.seed)
        new.labels = list(self.labels)
        new.entry_point = self.entry_point
        new.max_level = self.max_level
        for name in ("_vecs", "_levels", "_links0", "_n0", "_up_off", "_links_up", "_n_up"):
            setattr(new, name, getattr(self, name).copy())
        new._n_up_rows = self._n_up_rows
        return new

    def _check_vector(self, vec) -> np.ndarray:
        v = np.asarray(vec, dtype=np.float32)
        if v.ndim != 1 or v.shape[0] != self.dim:
            raise DimensionMismatch(f"expected dim {self.dim}, got shape {v.shape}")
        return np.ascontiguousarray(v)

    def _reserve(self, extra: int) -> None:
        n = len(self.labels)
        cap = self._vecs.shape[0]
        if n + extra > cap:
            new_cap = max(n + extra, 2 * cap, 16)
            pad = new_cap - cap
            self._vecs = np.concatenate([self._vecs, np.zeros((pad, self.dim), np.float32)])
            self._levels = np.concatenate([self._levels, np.zeros(pad, np.int64)])
            self._links0 = np.concatenate([self._links0, np.zeros((pad, 2 * self.M), np.int64)])
            self._n0 = np.concatenate([self._n0, np.zeros(pad, np.int64)])
            self._up_off = np.concatenate([self._up_off, np.full(pad, -1, np.int64)])

    def _reserve_up(self, rows: int) -> None:
        cap = self._links_up.shape[0]
        if self._n_up_rows + rows > cap:
            pad = max(self._n_up_rows + rows, 2 * cap, 16) - cap
            self._links_up = np.concatenate([self._links_up, np.zeros((pad, self.M), np.int64)])
            self._n_up = np.concatenate([self._n_up, np.zeros(pad, np.int64)])

    def _insert_many(self, vecs: list[np.ndarray], labels: list[PointLabel]) -> None:
        self._reserve(len(vecs))
        visited = np.zeros(self._vecs.shape[0], dtype=np.int64)
        tag = 0
        for vec, label in zip(vecs, labels):
            node = len(self.labels)
            level = _draw_level(self.seed, node, self._level_mult)
            self._vecs[node] = vec
            self._levels[node] = level
            if level > 0:
                self._reserve_up(level)
                self._up_off[node] = self._n_up_rows
                self._n_up[self._n_up_rows:self._n_up_rows + level] = 0
                self._n_up_rows += level
            self.labels.append(label)
            if self.entry_point < 0:
                self.entry_point, self.max_level = node, level
                continue
            tag = _hnsw.insert(self._vecs, self._levels, self._links0, self._n0,
                               self._links_up, self._n_up, self._up_off, visited, tag,
                               node, self.entry_point, self.max_level,
                               self.M, self.ef_construction)
            if level > self.max_level:
                self.entry_point, self.max_level = node, level

    def _knn(self, q: np.ndarray, k: int, ef: int) -> list[tuple[float, int]]:
        visited = np.zeros(len(self.labels), dtype=np.int64)
        ds, ns = _hnsw.knn(self._vecs, self._links0, self._n0, self._links_up, self._n_up,
                           self._up_off, visited, 1, q, self.entry_point, self.max_level,
                           k, ef)
        return list(zip(ds.tolist(), ns.tolist()))


def _validate_points(points: Iterable[Point], dim: int | None) -> tuple[list[np.ndarray], list[PointLabel], int | None]:
    vecs, labels = [], []
    for vec, label in points:
        v = np.asarray(vec, dtype=np.float32)
        if v.ndim != 1:
            raise DimensionMismatch(f"vector must be 1-D, got shape {v.shape}")
        if dim is None:
            dim = v.shape[0]
        elif v.shape[0] != dim:
            raise DimensionMismatch(f"expected dim {dim}, got {v.shape[0]}")
        vecs.append(v)
        labels.append(label)
    return vecs, labels, dim


def build_index(points: Sequence[Point], M: int = DEFAULT_M,
                ef_construction: int = DEFAULT_EF_CONSTRUCTION, seed: int = 0) -> AnnIndex:
    """Build an index from ``(vector, label)`` pairs in the given order.

    Level assignment is a pure function of ``seed`` and insertion position,
    so the same inputs always produce the same graph.
    """
    vecs, labels, dim = _validate_points(points, None)
    if not vecs:
        raise ValueError("build_index needs at least one point")
    index = AnnIndex(dim, M, ef_construction, seed)
    index._insert_many(vecs, labels)
    return index


def add_points(index: AnnIndex, points: Sequence[Point]) -> AnnIndex:
    """Return a copy of ``index`` with ``points`` inserted; ``index`` is not modified."""
    vecs, labels, _ = _validate_points(points, index.dim)
    new = index.copy()
    if vecs:
        new._insert_many(vecs, labels)
    return new


def search(index: AnnIndex, query, k: int, ef_search: int = DEFAULT_EF_SEARCH) -> list[tuple[PointLabel, float]]:
    """Approximate k-NN; results ascend by distance, ties by insertion order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if ef_search < k:
        raise ValueError("ef_search must be >= k")
    q = index._check_vector(query)
    if len(index) == 0:
        return []
    return [(index.labels[n], d) for d, n in index._knn(q, k, ef_search)]


def exact_search(points: Sequence[Point] | AnnIndex, query, k: int) -> list[tuple[PointLabel, float]]:
    """Brute-force k-NN with the same ordering contract as :func:`search`."""
    if isinstance(points, AnnIndex):
        matrix, labels = points.vectors, points.labels
        q = points._check_vector(query)
    else:
        vecs, labels, dim = _validate_points(points, None)
        if not vecs:
            return []
        matrix = np.stack(vecs)
        q = np.asarray(query, dtype=np.float32)
        if q.shape != (dim,):
            raise DimensionMismatch(f"expected dim {dim}, got shape {q.shape}")
    dists = (1.0 - matrix.astype(np.float64) @ q.astype(np.float64)).tolist()
    order = sorted(range(len(dists)), key=lambda i: (dists[i], i))[:k]
    return [(labels[i], dists[i]) for i in order]


# serialization

def serialize(index: AnnIndex) -> bytes:
    parts = [_HEADER.pack(MAGIC, index.dim, index.M, index.ef_construction, len(index),
                          index.seed, index.entry_point, index.max_level)]
    vectors = index.vectors.astype("<f4", copy=False)
    levels = index.levels
    for node, label in enumerate(index.labels):
        if label.group_name is None:
            name = b""
            name_len = _NO_NAME
        else:
            name = label.group_name.encode("utf-8")
            name_len = len(name)
        parts.append(_NODE_HEAD.pack(levels[node], int(label.kind), label.ref_id, name_len))
        parts.append(name)
        parts.append(vectors[node].tobytes())
        for layer in range(levels[node] + 1):
            nbrs = index.neighbours(node, layer)
            parts.append(struct.pack(f"<I{len(nbrs)}I", len(nbrs), *nbrs))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize(data: bytes) -> AnnIndex:
    data = bytes(data)
    if len(data) < _HEADER.size + 4:
        raise CorruptIndex("truncated index: shorter than header")
    if data[:8] != MAGIC:
        raise CorruptIndex(f"bad magic {data[:8]!r}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptIndex("checksum mismatch")
    try:
        _, dim, M, ef_c, count, seed, entry, max_level = _HEADER.unpack_from(body, 0)
        index = AnnIndex(dim, M, ef_c, seed)
        index._reserve(count)
        off = _HEADER.size
        vec_bytes = 4 * dim
        for node in range(count):
            level, kind, ref_id, name_len = _NODE_HEAD.unpack_from(body, off)
            off += _NODE_HEAD.size
            if name_len == _NO_NAME:
                name = None
            else:
                name = body[off:off + name_len].decode("utf-8")
                off += name_len
            if off + vec_bytes > len(body):
                raise CorruptIndex("truncated vector data")
            index._vecs[node] = np.frombuffer(body, dtype="<f4", count=dim, offset=off)
            off += vec_bytes
            index._levels[node] = level
            if level > 0:
                index._reserve_up(level)
                index._up_off[node] = index._n_up_rows
                index._n_up_rows += level
            for layer in range(level + 1):
                (n,) = struct.unpack_from("<I", body, off)
                off += 4
                cap = 2 * M if layer == 0 else M
                if n > cap:
                    raise CorruptIndex(f"node {node} layer {layer} has {n} links (max {cap})")
                links = struct.unpack_from(f"<{n}I", body, off)
                off += 4 * n
                if any(x >= count for x in links):
                    raise CorruptIndex("neighbour id out of range")
                if layer == 0:
                    index._links0[node, :n] = links
                    index._n0[node] = n
                else:
                    row = index._up_off[node] + layer - 1
                    index._links_up[row, :n] = links
                    index._n_up[row] = n
            index.labels.append(PointLabel(PointKind(kind), ref_id, name))
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CorruptIndex(f"malformed index: {exc}") from exc
    if off != len(body):
        raise CorruptIndex(f"{len(body) - off} trailing bytes after node records")
    if count and not (0 <= entry < count):
        raise CorruptIndex("entry point out of range")
    index.entry_point, index.max_level = entry, max_level
    return index
