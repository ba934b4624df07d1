"""Continuous retrieval: exhaustive cosine top-K and a quantized variant.

Candidates are L2-normalized at indexing time so a query scores all of
them with one matrix-vector product. The quantized index compresses each
dimension to an 8-bit code against a per-dimension affine codebook and
scores asymmetrically (full-precision query against decoded candidates),
which is enough to stay within a fraction of a MAP point of exhaustive
search. Scores are raw cosines: any affine rescaling of the model's logits
is monotone and cannot change a ranking.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


@dataclass
class RankedList:
    """Ordered (candidate id, score) results, best first.

    Scores are nonincreasing, ties are broken by ascending id, and ids are
    unique; these rules make every producer deterministic.
    """

    entries: list[tuple[str, float]]

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [cid for cid, _ in self.entries]


def top_k_ranked(ids: Sequence[str], scores: np.ndarray, k: int) -> RankedList:
    """Select the K best (score desc, id asc) without sorting all N.

    Partitions on the K-th largest score, then order-sorts only the
    boundary subset, so the result is identical to a full sort regardless
    of ties at the cutoff.
    """
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    n = len(ids)
    if n == 0:
        return RankedList([])
    scores = np.asarray(scores, dtype=np.float64)
    if k >= n:
        subset = np.arange(n)
    else:
        kth = np.partition(scores, n - k)[n - k]
        subset = np.flatnonzero(scores >= kth)
    id_arr = np.asarray(ids, dtype=object)[subset]
    order = subset[np.lexsort((id_arr, -scores[subset]))][:k]
    return RankedList([(ids[i], float(scores[i])) for i in order])


def _normalize_rows(encodings: Iterable[tuple[str, np.ndarray]]):
    ids: list[str] = []
    rows: list[np.ndarray] = []
    for cid, vec in encodings:
        ids.append(cid)
        rows.append(np.asarray(vec, dtype=np.float64))
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate candidate id in index input")
    if not rows:
        return ids, np.zeros((0, 0)), np.zeros(0, dtype=bool)
    mat = np.vstack(rows)
    norms = np.linalg.norm(mat, axis=1)
    flags = norms == 0.0
    mat = mat / np.where(flags, 1.0, norms)[:, None]
    return ids, mat, flags


@dataclass
class CandidateIndex:
    """Unit-normalized candidate vectors; zero vectors are flagged and score 0."""

    ids: list[str]
    vectors: np.ndarray
    zero_flags: np.ndarray


def build_index(encodings: Iterable[tuple[str, np.ndarray]]) -> CandidateIndex:
    ids, mat, flags = _normalize_rows(encodings)
    return CandidateIndex(ids, mat, flags)


def exhaustive_top_k(index: CandidateIndex, query: np.ndarray, k: int) -> RankedList:
    """Cosine of the query against every candidate, truncated to the top K."""
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if not index.ids:
        return RankedList([])
    q = np.asarray(query, dtype=np.float64)
    qnorm = np.linalg.norm(q)
    if qnorm == 0.0:
        scores = np.zeros(len(index.ids))
    else:
        scores = index.vectors @ (q / qnorm)
    return top_k_ranked(index.ids, scores, k)


@dataclass
class QuantizedIndex:
    """8-bit per-dimension scalar quantization of a normalized candidate set.

    code = round((v - min) / step) per dimension, so decoding is off by at
    most one step per dimension. Constant dimensions store step = 0 and
    decode exactly.
    """

    ids: list[str]
    mins: np.ndarray
    steps: np.ndarray
    codes: np.ndarray
    zero_flags: np.ndarray

    def decode(self, row: int) -> np.ndarray:
        return self.mins + self.codes[row].astype(np.float64) * self.steps


def build_quantized_index(encodings: Iterable[tuple[str, np.ndarray]]) -> QuantizedIndex:
    ids, mat, flags = _normalize_rows(encodings)
    if not ids:
        return QuantizedIndex(ids, np.zeros(0), np.zeros(0), np.zeros((0, 0), np.uint8), flags)
    mins = mat.min(axis=0)
    steps = (mat.max(axis=0) - mins) / 255.0
    scaled = np.divide(mat - mins, steps, out=np.zeros_like(mat), where=steps > 0)
    codes = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    return QuantizedIndex(ids, mins, steps, codes, flags)


def quantized_top_k(qindex: QuantizedIndex, query: np.ndarray, k: int) -> RankedList:
    """Asymmetric scoring: full-precision query against decoded codes.

    dot(q, min + code * step) = q . min + (q * step) . code, so the whole
    candidate set is scored with one integer-matrix product.
    """
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if not qindex.ids:
        return RankedList([])
    q = np.asarray(query, dtype=np.float64)
    qnorm = np.linalg.norm(q)
    if qnorm == 0.0:
        scores = np.zeros(len(qindex.ids))
    else:
        q = q / qnorm
        scores = qindex.codes.astype(np.float64) @ (q * qindex.steps) + q @ qindex.mins
        scores[qindex.zero_flags] = 0.0
    return top_k_ranked(qindex.ids, scores, k)


# --- persistence ------------------------------------------------------------
#
# Layout: ASCII header line "N d", a 0/1 zero-flag line, N id lines, then
# the numeric payload in little-endian binary (float64 vectors for the
# exhaustive index; float64 codebooks plus uint8 codes for the quantized
# one).


def _write_header(f, ids: list[str], dim: int, flags: np.ndarray) -> None:
    f.write(f"{len(ids)} {dim}\n".encode())
    f.write(("".join("1" if x else "0" for x in flags) + "\n").encode())
    for cid in ids:
        f.write(cid.encode("utf-8") + b"\n")


def _read_header(f):
    n, dim = (int(x) for x in f.readline().split())
    flag_line = f.readline().decode().strip()
    flags = np.array([c == "1" for c in flag_line], dtype=bool)
    if flags.shape[0] != n:
        raise ValueError("index header: flag line length does not match N")
    ids = [f.readline().decode("utf-8").rstrip("\n") for _ in range(n)]
    return n, dim, flags, ids


def save_index(path: str | Path, index: CandidateIndex) -> None:
    with open(path, "wb") as f:
        _write_header(f, index.ids, index.vectors.shape[1] if index.ids else 0, index.zero_flags)
        f.write(index.vectors.astype("<f8").tobytes())


def load_index(path: str | Path) -> CandidateIndex:
    with open(path, "rb") as f:
        n, dim, flags, ids = _read_header(f)
        vectors = np.frombuffer(f.read(8 * n * dim), dtype="<f8").reshape(n, dim).copy()
    return CandidateIndex(ids, vectors, flags)


def save_quantized_index(path: str | Path, qindex: QuantizedIndex) -> None:
    dim = qindex.codes.shape[1] if qindex.ids else 0
    with open(path, "wb") as f:
        _write_header(f, qindex.ids, dim, qindex.zero_flags)
        f.write(qindex.mins.astype("<f8").tobytes())
        f.write(qindex.steps.astype("<f8").tobytes())
        f.write(qindex.codes.astype(np.uint8).tobytes())


def load_quantized_index(path: str | Path) -> QuantizedIndex:
    with open(path, "rb") as f:
        n, dim, flags, ids = _read_header(f)
        mins = np.frombuffer(f.read(8 * dim), dtype="<f8").copy()
        steps = np.frombuffer(f.read(8 * dim), dtype="<f8").copy()
        codes = np.frombuffer(f.read(n * dim), dtype=np.uint8).reshape(n, dim).copy()
    return QuantizedIndex(ids, mins, steps, codes, flags)


def export_index_text(path: str | Path, index: CandidateIndex | QuantizedIndex) -> None:
    """Debug export mirroring the embedding-table text format."""
    if isinstance(index, QuantizedIndex):
        rows = (index.decode(i) for i in range(len(index.ids)))
        dim = index.codes.shape[1] if index.ids else 0
    else:
        rows = iter(index.vectors)
        dim = index.vectors.shape[1] if index.ids else 0
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(index.ids)} {dim}\n")
        for cid, row in zip(index.ids, rows):
            f.write(cid + " " + " ".join(repr(float(x)) for x in row) + "\n")
