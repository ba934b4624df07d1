"""Averaged-embedding question encoder: forward pass and analytic gradients.

A question is encoded as the mean of its token embedding rows, pairs are
scored by cosine similarity, and a learned affine transform (alpha, beta)
turns the cosine into a logit. The backward pass maps a gradient with
respect to the batch score matrix back to gradients on the embedding rows
that the batch touched and on alpha/beta.

Conventions (both directions):
  * an empty id list encodes to the zero vector;
  * cosine against a zero-norm vector is 0, and the gradient through that
    cosine is 0 (subgradient choice at the norm singularity).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

IdList = Sequence[int]


@dataclass
class EmbeddingTable:
    """V x d learnable matrix; the entire parameter set of the encoder."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[0]

    @property
    def dimension(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.weights.copy())

    @classmethod
    def random_init(
        cls, vocab_size: int, dimension: int = 300, rng: np.random.Generator | None = None
    ) -> "EmbeddingTable":
        """Uniform(-0.5/d, +0.5/d) per entry; pass a seeded rng for reproducible runs."""
        rng = rng if rng is not None else np.random.default_rng()
        half = 0.5 / dimension
        return cls(rng.uniform(-half, half, size=(vocab_size, dimension)))


@dataclass
class AffineScale:
    """Learned alpha * cosine + beta transform turning similarities into logits."""

    alpha: float = 5.0
    beta: float = 0.0

    def copy(self) -> "AffineScale":
        return AffineScale(self.alpha, self.beta)


@dataclass
class SimilarityMatrix:
    """All-pairs batch similarities: raw cosines and their affine-scaled logits."""

    scores: np.ndarray
    raw_cosines: np.ndarray
    batch_size: int


@dataclass
class ParameterGradients:
    """Sparse embedding-row gradients plus the two scale gradients.

    `rows` holds the unique touched row ids; `row_values[i]` is the gradient
    for row `rows[i]`. Rows absent from the batch implicitly have zero
    gradient.
    """

    rows: np.ndarray
    row_values: np.ndarray
    d_alpha: float = 0.0
    d_beta: float = 0.0

    def to_dense(self, vocab_size: int) -> np.ndarray:
        dense = np.zeros((vocab_size, self.row_values.shape[1]))
        dense[self.rows] = self.row_values
        return dense


def _check_ids(ids: np.ndarray, vocab_size: int) -> None:
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise ValueError(
            f"token id out of range for table with {vocab_size} rows "
            "(vocabulary/table mismatch)"
        )


def encode_average(table: EmbeddingTable, ids: IdList) -> np.ndarray:
    """Mean of the selected embedding rows; empty ids give the zero vector."""
    idx = np.asarray(ids, dtype=np.intp)
    _check_ids(idx, table.vocab_size)
    if idx.size == 0:
        return np.zeros(table.dimension)
    return table.weights[idx].mean(axis=0)


def encode_idf_weighted(
    table: EmbeddingTable, ids: IdList, weights: Sequence[float]
) -> np.ndarray:
    """IDF-weighted mean: sum(w_i * row_i) / sum(w_i), zero vector if sum(w) = 0."""
    idx = np.asarray(ids, dtype=np.intp)
    w = np.asarray(weights, dtype=np.float64)
    if idx.shape[0] != w.shape[0]:
        raise ValueError(f"{idx.shape[0]} ids but {w.shape[0]} weights")
    _check_ids(idx, table.vocab_size)
    total = w.sum()
    if idx.size == 0 or total == 0.0:
        return np.zeros(table.dimension)
    return (table.weights[idx] * w[:, None]).sum(axis=0) / total


def encode_batch(table: EmbeddingTable, id_lists: Sequence[IdList]) -> np.ndarray:
    """Stack encode_average over a batch into a B x d matrix."""
    out = np.zeros((len(id_lists), table.dimension))
    for i, ids in enumerate(id_lists):
        if len(ids):
            out[i] = encode_average(table, ids)
    return out


def cosine(e1: np.ndarray, e2: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; 0 if either vector has zero norm."""
    e1 = np.asarray(e1, dtype=np.float64)
    e2 = np.asarray(e2, dtype=np.float64)
    n1 = np.linalg.norm(e1)
    n2 = np.linalg.norm(e2)
    if n1 == 0.0 or n2 == 0.0:
        return 0.0
    return float(e1 @ e2 / (n1 * n2))


def scaled_score(c: float, scale: AffineScale) -> float:
    return scale.alpha * c + scale.beta


def _pairwise_cosines(queries: np.ndarray, candidates: np.ndarray):
    """All-pairs cosines with zero-norm rows contributing exact zeros.

    Returns (cosines, query_norms, candidate_norms); norms are the true
    (possibly zero) L2 norms.
    """
    nq = np.linalg.norm(queries, axis=1)
    nc = np.linalg.norm(candidates, axis=1)
    safe_q = np.where(nq == 0.0, 1.0, nq)
    safe_c = np.where(nc == 0.0, 1.0, nc)
    cos = (queries @ candidates.T) / np.outer(safe_q, safe_c)
    return cos, nq, nc


def similarity_matrix(
    query_encodings: Sequence[np.ndarray] | np.ndarray,
    candidate_encodings: Sequence[np.ndarray] | np.ndarray,
    scale: AffineScale,
) -> SimilarityMatrix:
    """Pairwise cosines of two equal-length encoding lists, affine-scaled.

    raw_cosines[i][j] = cosine(query_i, candidate_j); the diagonal carries
    the positive pairs during training.
    """
    q = np.atleast_2d(np.asarray(query_encodings, dtype=np.float64))
    c = np.atleast_2d(np.asarray(candidate_encodings, dtype=np.float64))
    if q.shape[0] != c.shape[0]:
        raise ValueError(f"batch size mismatch: {q.shape[0]} queries vs {c.shape[0]} candidates")
    if q.shape[0] < 1:
        raise ValueError("similarity matrix needs at least one pair")
    cos, _, _ = _pairwise_cosines(q, c)
    return SimilarityMatrix(scale.alpha * cos + scale.beta, cos, q.shape[0])


def _scatter_to_rows(id_lists: Sequence[IdList], d_enc: np.ndarray):
    """Distribute per-question encoding gradients onto embedding rows.

    The encoding is a mean over n rows, so each id occurrence receives
    d_enc / n; repeated ids within one question accumulate.
    """
    flat_ids: list[int] = []
    chunks: list[np.ndarray] = []
    for i, ids in enumerate(id_lists):
        n = len(ids)
        if n == 0:
            continue
        flat_ids.extend(int(t) for t in ids)
        chunks.append(np.repeat(d_enc[i : i + 1] / n, n, axis=0))
    if not flat_ids:
        return np.empty(0, dtype=np.intp), np.empty((0, d_enc.shape[1]))
    ids_arr = np.asarray(flat_ids, dtype=np.intp)
    vals = np.concatenate(chunks, axis=0)
    rows, inverse = np.unique(ids_arr, return_inverse=True)
    reduced = np.zeros((rows.shape[0], d_enc.shape[1]))
    np.add.at(reduced, inverse, vals)
    return rows, reduced


def merge_row_grads(parts: Sequence[tuple[np.ndarray, np.ndarray]], dimension: int):
    """Sum several (rows, values) sparse gradients into one unique-row pair."""
    parts = [p for p in parts if p[0].size]
    if not parts:
        return np.empty(0, dtype=np.intp), np.empty((0, dimension))
    ids_arr = np.concatenate([p[0] for p in parts])
    vals = np.concatenate([p[1] for p in parts], axis=0)
    rows, inverse = np.unique(ids_arr, return_inverse=True)
    reduced = np.zeros((rows.shape[0], dimension))
    np.add.at(reduced, inverse, vals)
    return rows, reduced


def encoder_backward(
    ids1: Sequence[IdList],
    ids2: Sequence[IdList],
    table: EmbeddingTable,
    scale: AffineScale,
    d_matrix: np.ndarray,
    wrt_raw_cosines: bool = False,
) -> ParameterGradients:
    """Chain rule from a loss gradient on the B x B matrix to the parameters.

    `d_matrix` is dL/dscores by default, or dL/draw_cosines when
    `wrt_raw_cosines` is set (the triplet loss consumes raw cosines and
    bypasses alpha/beta). Forward quantities are recomputed here, which
    keeps the call self-contained; the recompute is cheap next to the
    B x B x d products.
    """
    d_matrix = np.asarray(d_matrix, dtype=np.float64)
    B = len(ids1)
    if len(ids2) != B:
        raise ValueError(f"batch sides differ: {B} vs {len(ids2)}")
    if d_matrix.shape != (B, B):
        raise ValueError(f"d_matrix shape {d_matrix.shape} does not match batch size {B}")

    U = encode_batch(table, ids1)
    V = encode_batch(table, ids2)
    cos, nu, nv = _pairwise_cosines(U, V)

    if wrt_raw_cosines:
        d_cos = d_matrix
        d_alpha = 0.0
        d_beta = 0.0
    else:
        d_cos = scale.alpha * d_matrix
        d_alpha = float((d_matrix * cos).sum())
        d_beta = float(d_matrix.sum())

    safe_u = np.where(nu == 0.0, 1.0, nu)
    safe_v = np.where(nv == 0.0, 1.0, nv)

    # d cos_ij / d u_i = v_j/(|u_i||v_j|) - cos_ij * u_i/|u_i|^2, and
    # symmetrically for v_j; zero-norm rows get zero gradient by convention.
    dU = (d_cos / safe_v[None, :]) @ V / safe_u[:, None]
    dU -= U * ((d_cos * cos).sum(axis=1) / safe_u**2)[:, None]
    dU[nu == 0.0] = 0.0

    dV = (d_cos / safe_u[:, None]).T @ U / safe_v[:, None]
    dV -= V * ((d_cos * cos).sum(axis=0) / safe_v**2)[:, None]
    dV[nv == 0.0] = 0.0

    rows, values = merge_row_grads(
        [_scatter_to_rows(ids1, dU), _scatter_to_rows(ids2, dV)], table.dimension
    )
    return ParameterGradients(rows, values, d_alpha, d_beta)


# --- embedding-table text format ------------------------------------------
#
# Optional `V d` header, then one `token v1 ... vd` line per row. The same
# format ingests externally pretrained vectors for the averaged-embedding
# baselines.


def save_embeddings(path: str | Path, table: EmbeddingTable, tokens: Sequence[str]) -> None:
    if len(tokens) != table.vocab_size:
        raise ValueError(f"{len(tokens)} tokens for a table with {table.vocab_size} rows")
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{table.vocab_size} {table.dimension}\n")
        for token, row in zip(tokens, table.weights):
            f.write(token + " " + " ".join(repr(x) for x in row.tolist()) + "\n")


def load_embeddings(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read whitespace-delimited embeddings; header line is optional."""
    tokens: list[str] = []
    rows: list[list[float]] = []
    dim: int | None = None
    with open(path, encoding="utf-8") as f:
        first = f.readline().split()
        start = 2
        if len(first) == 2 and all(p.lstrip("+-").isdigit() for p in first):
            pass  # header: row/vector counts are implied by the body
        elif first:
            tokens.append(first[0])
            rows.append([float(x) for x in first[1:]])
            dim = len(rows[0])
        else:
            start = 2
        for lineno, line in enumerate(f, start=start):
            parts = line.split()
            if not parts:
                continue
            vec = [float(x) for x in parts[1:]]
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(vec)}")
            tokens.append(parts[0])
            rows.append(vec)
    if len(set(tokens)) != len(tokens):
        raise ValueError(f"{path}: duplicate tokens in embedding file")
    if not rows:
        return [], np.zeros((0, 0))
    return tokens, np.asarray(rows, dtype=np.float64)
