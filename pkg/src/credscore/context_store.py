"""Exact similarity index over feature-space embeddings and attention-style context fusion."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import softmax

from ._utils import atomic_write_bytes, atomic_write_text

METRICS = ("cosine", "dot")
_MAGIC = b"CSVI"
_VERSION = 1


@dataclass
class EmbeddingRecord:
    id: str
    vector: np.ndarray
    metadata: dict = field(default_factory=dict)
    timestamp: str | None = None


class VectorIndex:
    """Flat index returning exact top-k neighbours, ties broken by id.

    Reads may run concurrently; ``upsert`` must have exclusive access.
    """

    def __init__(self, dimension: int, metric: str = "cosine"):
        if metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = int(dimension)
        self.metric = metric
        self._ids: list = []
        self._pos: dict = {}
        self._vectors = np.empty((0, self.dimension))
        self._meta: list = []
        self._time: list = []

    def __len__(self):
        return len(self._ids)

    @property
    def ids(self) -> list:
        return list(self._ids)

    def vector(self, id_: str) -> np.ndarray:
        return self._vectors[self._pos[id_]].copy()

    def upsert(self, records) -> "VectorIndex":
        new_rows = []
        for rec in records:
            v = np.asarray(rec.vector, dtype=float).ravel()
            if v.size != self.dimension:
                raise ValueError(f"record {rec.id!r} has dimension {v.size}, index expects {self.dimension}")
            if rec.id in self._pos:
                i = self._pos[rec.id]
                if i < self._vectors.shape[0]:
                    self._vectors[i] = v
                else:
                    new_rows[i - self._vectors.shape[0]] = v
                self._meta[i] = dict(rec.metadata)
                self._time[i] = rec.timestamp
                continue
            self._pos[rec.id] = len(self._ids)
            self._ids.append(rec.id)
            self._meta.append(dict(rec.metadata))
            self._time.append(rec.timestamp)
            new_rows.append(v)
        if new_rows:
            self._vectors = np.vstack([self._vectors, np.array(new_rows)])
        return self

    def similarities(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float).ravel()
        if q.size != self.dimension:
            raise ValueError(f"query has dimension {q.size}, index expects {self.dimension}")
        dots = self._vectors @ q
        if self.metric == "dot":
            return dots
        qn = np.linalg.norm(q)
        if qn == 0:
            raise ValueError("zero-norm query has no cosine similarity")
        norms = np.linalg.norm(self._vectors, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            sims = np.where(norms > 0, dots / (norms * qn), 0.0)
        return sims

    def query_topk(self, q, k: int) -> list:
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self._ids:
            raise ValueError("index is empty")
        sims = self.similarities(q)
        order = sorted(range(len(self._ids)), key=lambda i: (-sims[i], self._ids[i]))
        return [(self._ids[i], float(sims[i])) for i in order[:k]]

    # ------------------------------------------------------------------ persistence

    def save(self, path) -> None:
        """Binary body: magic, version, d, count, (len, utf-8 id)*, float64 row-major vectors.

        All integers are little-endian uint32. Metric, metadata and timestamps go to a
        JSON sidecar at ``<path>.json``.
        """
        path = Path(path)
        buf = bytearray(_MAGIC)
        buf += struct.pack("<III", _VERSION, self.dimension, len(self._ids))
        for id_ in self._ids:
            raw = id_.encode("utf-8")
            buf += struct.pack("<I", len(raw)) + raw
        buf += self._vectors.astype("<f8").tobytes(order="C")
        atomic_write_bytes(path, bytes(buf))
        sidecar = {"metric": self.metric, "metadata": self._meta, "timestamps": self._time}
        atomic_write_text(path.with_name(path.name + ".json"), json.dumps(sidecar, sort_keys=True))

    @classmethod
    def load(cls, path) -> "VectorIndex":
        path = Path(path)
        data = path.read_bytes()
        if data[:4] != _MAGIC:
            raise ValueError(f"{path} is not a vector index file")
        version, d, count = struct.unpack_from("<III", data, 4)
        if version != _VERSION:
            raise ValueError(f"unsupported index version {version}")
        off = 16
        ids = []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            ids.append(data[off : off + n].decode("utf-8"))
            off += n
        vecs = np.frombuffer(data, dtype="<f8", count=count * d, offset=off).reshape(count, d).astype(float)
        sidecar = json.loads(path.with_name(path.name + ".json").read_text(encoding="utf-8"))
        idx = cls(d, sidecar["metric"])
        idx._ids = ids
        idx._pos = {k: i for i, k in enumerate(ids)}
        idx._vectors = vecs
        idx._meta = sidecar["metadata"]
        idx._time = sidecar["timestamps"]
        return idx


@dataclass
class FusionConfig:
    projection: np.ndarray  # W_q, shape (d, d_h): maps a hidden vector into key space

    @property
    def hidden_dim(self) -> int:
        return self.projection.shape[1]


def fusion_weights(h, V, cfg: FusionConfig) -> np.ndarray:
    h = np.asarray(h, dtype=float).ravel()
    V = np.atleast_2d(np.asarray(V, dtype=float))
    W = np.asarray(cfg.projection, dtype=float)
    if V.shape[0] < 1:
        raise ValueError("need at least one retrieved vector")
    if W.ndim != 2 or W.shape[1] != h.size or W.shape[0] != V.shape[1]:
        raise ValueError(f"shape mismatch: W_q {W.shape}, h {h.shape}, V {V.shape}")
    logits = V @ (W @ h)
    return softmax(logits)


def fuse(h, V, cfg: FusionConfig) -> np.ndarray:
    """``softmax((W_q h) . V^T) V``: a convex combination of the retrieved rows."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    return fusion_weights(h, V, cfg) @ V


def index_from_matrix(matrix, ids, metric: str = "cosine", metadata=None, timestamps=None) -> VectorIndex:
    """Build an index whose embeddings are standardized feature rows."""
    values = np.asarray(getattr(matrix, "values", matrix), dtype=float)
    idx = VectorIndex(values.shape[1], metric)
    metadata = metadata or [{} for _ in ids]
    timestamps = timestamps or [None for _ in ids]
    idx.upsert(EmbeddingRecord(str(i), v, m, t) for i, v, m, t in zip(ids, values, metadata, timestamps))
    return idx
