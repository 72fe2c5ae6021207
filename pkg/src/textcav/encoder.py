"""Text to representation mapping.

The built-in encoder hashes lowercased word n-grams into ``B`` buckets
(64-bit FNV-1a over the UTF-8 bytes of the n-gram, modulo ``B``), applies a
learned ``B x m`` projection and L2-normalizes the result.  Externally computed
representations can be brought in through the EMB v1 file format.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_TOKEN_RE = re.compile(r"\w+")


class EncoderError(ValueError):
    pass


@lru_cache(maxsize=1 << 20)
def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class FeaturizerSpec:
    n_min: int = 1
    n_max: int = 2
    buckets: int = 2**18

    def __post_init__(self):
        if not (1 <= self.n_min <= self.n_max):
            raise EncoderError(f"invalid n-gram range [{self.n_min}, {self.n_max}]")
        if self.buckets < 2**10:
            raise EncoderError(f"bucket count {self.buckets} below minimum 1024")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def ngrams(tokens: Sequence[str], n_min: int, n_max: int) -> Iterable[str]:
    for n in range(n_min, n_max + 1):
        for i in range(len(tokens) - n + 1):
            yield " ".join(tokens[i : i + n])


def bucket_of(gram: str, buckets: int) -> int:
    return fnv1a_64(gram.encode("utf-8")) % buckets


def _bucket_counts(text: str, spec: FeaturizerSpec) -> dict[int, int]:
    counts: dict[int, int] = {}
    for gram in ngrams(tokenize(text), spec.n_min, spec.n_max):
        b = bucket_of(gram, spec.buckets)
        counts[b] = counts.get(b, 0) + 1
    return counts


def featurize(text: str, spec: FeaturizerSpec) -> sp.csr_matrix:
    """Hashed n-gram counts of ``text`` as a 1 x B sparse row."""
    return featurize_batch([text], spec)


def featurize_batch(texts: Sequence[str], spec: FeaturizerSpec) -> sp.csr_matrix:
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for text in texts:
        counts = _bucket_counts(text, spec)
        for b in sorted(counts):
            indices.append(b)
            data.append(float(counts[b]))
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
        shape=(len(texts), spec.buckets),
    )


def compress_columns(feats: sp.csr_matrix) -> tuple[sp.csr_matrix, np.ndarray]:
    """Restrict ``feats`` to its nonzero columns; returns (n x k matrix, the k column ids)."""
    cols, inv = np.unique(feats.indices, return_inverse=True)
    sub = sp.csr_matrix((feats.data, inv.ravel(), feats.indptr), shape=(feats.shape[0], len(cols)))
    return sub, cols


def l2_normalize(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize; zero rows stay zero.  Returns (r, norms)."""
    norms = np.linalg.norm(z, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return z / safe[:, None], norms


@dataclass
class EncoderModel:
    spec: FeaturizerSpec
    projection: np.ndarray  # (B, m) float32
    normalize: bool = True

    def __post_init__(self):
        if self.projection.ndim != 2:
            raise EncoderError("projection must be a 2-D matrix")
        if self.projection.shape[0] != self.spec.buckets:
            raise EncoderError(
                f"dimension mismatch: projection has {self.projection.shape[0]} rows, "
                f"featurizer has {self.spec.buckets} buckets"
            )
        if self.m < 8:
            raise EncoderError(f"representation dimension {self.m} below minimum 8")

    @property
    def m(self) -> int:
        return self.projection.shape[1]

    @classmethod
    def initialize(
        cls, spec: FeaturizerSpec, m: int, rng: np.random.Generator, scale: float = 0.1, normalize: bool = True
    ) -> "EncoderModel":
        proj = rng.standard_normal((spec.buckets, m), dtype=np.float32)
        proj *= np.float32(scale)
        return cls(spec, proj, normalize)

    def project(self, feats: sp.csr_matrix) -> np.ndarray:
        if feats.shape[1] != self.spec.buckets:
            raise EncoderError(
                f"dimension mismatch: features have length {feats.shape[1]}, expected {self.spec.buckets}"
            )
        sub, cols = compress_columns(feats)
        return sub @ self.projection[cols].astype(np.float64)

    def encode_features(self, feats: sp.csr_matrix) -> np.ndarray:
        z = self.project(feats)
        if not self.normalize:
            return z
        return l2_normalize(z)[0]

    def encode_batch(self, texts: Sequence[str]) -> np.ndarray:
        return self.encode_features(featurize_batch(texts, self.spec))


def encode(model: EncoderModel, text: str) -> np.ndarray:
    """Representation of a single text, shape (m,)."""
    return model.encode_batch([text])[0]


@dataclass
class EmbeddingStore:
    ids: tuple[str, ...]
    vectors: np.ndarray  # (n, m) float32
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.ids = tuple(self.ids)
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise EncoderError("row count mismatch between ids and vectors")
        if not np.all(np.isfinite(self.vectors)):
            raise EncoderError("non-finite values in embedding store")
        self._index = {}
        for i, id_ in enumerate(self.ids):
            if id_ in self._index:
                raise EncoderError(f"duplicate id {id_!r} in embedding store")
            self._index[id_] = i

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, id_: str) -> bool:
        return id_ in self._index

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self.vectors, other.vectors)

    def lookup(self, ids: Sequence[str]) -> np.ndarray:
        try:
            rows = [self._index[i] for i in ids]
        except KeyError as exc:
            raise EncoderError(f"id {exc.args[0]!r} not in embedding store") from None
        return self.vectors[rows].astype(np.float64)


def ids_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".ids")


def export_embeddings(store: EmbeddingStore, path: str | Path) -> None:
    """Write ``path`` (EMB v1) and its ``path.ids`` sidecar."""
    path = Path(path)
    n, m = store.vectors.shape
    with open(path, "wb") as fh:
        fh.write(f"EMB v1 {n} {m}\n".encode("ascii"))
        fh.write(store.vectors.astype("<f4").tobytes())
    ids_path(path).write_text("".join(i + "\n" for i in store.ids), encoding="utf-8")


def import_embeddings(path: str | Path) -> EmbeddingStore:
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise EncoderError("missing EMB header line")
    parts = raw[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 4 or parts[:2] != ["EMB", "v1"]:
        raise EncoderError(f"bad EMB header: {raw[:nl]!r}")
    try:
        count, dim = int(parts[2]), int(parts[3])
    except ValueError:
        raise EncoderError(f"bad EMB header: {raw[:nl]!r}") from None
    body = raw[nl + 1 :]
    if len(body) % (4 * dim) != 0 or len(body) // (4 * dim) != count:
        raise EncoderError(
            f"row count mismatch: header declares {count} rows, payload holds {len(body) / (4 * dim):g}"
        )
    vectors = np.frombuffer(body, dtype="<f4").reshape(count, dim)
    if not np.all(np.isfinite(vectors)):
        raise EncoderError("non-finite values in EMB payload")
    ids = ids_path(path).read_text(encoding="utf-8").splitlines()
    if len(ids) != count:
        raise EncoderError(f"row count mismatch: {count} rows but {len(ids)} ids")
    return EmbeddingStore(tuple(ids), vectors.astype(np.float32))
