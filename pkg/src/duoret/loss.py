"""Training objectives over the batch similarity matrix, with gradients.

Each loss returns a scalar value plus its exact gradient with respect to
the matrix it consumed: the scaled scores for the softmax / cross-entropy
losses, the raw cosines for the triplet loss (its 0.5 margin is sized for
the [-1, 1] cosine range, so it bypasses the affine scale).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import SimilarityMatrix

LOSS_KINDS = ("softmax", "in-batch-ce", "triplet", "pairwise-ce")


@dataclass
class LossOutput:
    value: float
    d_matrix: np.ndarray
    wrt_raw_cosines: bool = False


@dataclass
class TripletConfig:
    delta: float = 0.5

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise ValueError(f"margin must be >= 0, got {self.delta}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _stable_bce(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Elementwise -log p(label | score) in log-sum-exp form; never overflows."""
    return np.maximum(scores, 0.0) - scores * labels + np.log1p(np.exp(-np.abs(scores)))


def in_batch_sampled_softmax(m: SimilarityMatrix) -> LossOutput:
    """Per-row softmax with the diagonal as the target class, averaged.

    value = (1/B) sum_i -log softmax(scores[i])[i];
    gradient = (rowwise_softmax - I) / B.
    """
    s = m.scores
    b = m.batch_size
    row_max = s.max(axis=1, keepdims=True)
    z = np.exp(s - row_max)
    denom = z.sum(axis=1)
    value = float(np.mean(np.log(denom) - (np.diag(s) - row_max[:, 0])))
    grad = (z / denom[:, None] - np.eye(b)) / b
    return LossOutput(value, grad)


def in_batch_cross_entropy(m: SimilarityMatrix) -> LossOutput:
    """Independent binary cross-entropy on every matrix element.

    Positives on the diagonal, negatives off it; normalized by B^2 so the
    magnitude is comparable across batch sizes. gradient = (sigmoid - I)/B^2.
    """
    s = m.scores
    b = m.batch_size
    labels = np.eye(b)
    value = float(_stable_bce(s, labels).mean())
    grad = (_sigmoid(s) - labels) / (b * b)
    return LossOutput(value, grad)


def in_batch_triplet(m: SimilarityMatrix, cfg: TripletConfig | None = None) -> LossOutput:
    """Hinge on the gap between the positive and the hardest in-row negative.

    Per row: max(0, delta - cos[i][i] + max_{j!=i} cos[i][j]), averaged.
    Consumes raw cosines; the returned gradient is with respect to them
    (wrt_raw_cosines=True). Arg-max ties break to the lowest column index.
    """
    cfg = cfg or TripletConfig()
    b = m.batch_size
    if b < 2:
        raise ValueError("triplet loss needs batch size >= 2 to have a negative")
    cos = m.raw_cosines
    positives = np.diag(cos).copy()
    masked = cos.copy()
    np.fill_diagonal(masked, -np.inf)
    hardest = masked.argmax(axis=1)
    negatives = masked[np.arange(b), hardest]
    hinge = cfg.delta - positives + negatives
    active = hinge > 0
    value = float(np.maximum(hinge, 0.0).mean())
    grad = np.zeros((b, b))
    rows = np.flatnonzero(active)
    grad[rows, rows] -= 1.0 / b
    np.add.at(grad, (rows, hardest[rows]), 1.0 / b)
    return LossOutput(value, grad, wrt_raw_cosines=True)


def pairwise_cross_entropy(scores, labels) -> LossOutput:
    """Mean logistic loss of independent (score, 0/1 label) pairs.

    gradient = (sigmoid(score) - label) / N per element; this is the
    standard objective when labeled negatives are available.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape:
        raise ValueError(f"{s.shape} scores vs {y.shape} labels")
    if s.size < 1:
        raise ValueError("pairwise cross-entropy needs at least one pair")
    value = float(_stable_bce(s, y).mean())
    grad = (_sigmoid(s) - y) / s.size
    return LossOutput(value, grad)


def in_batch_precision_at_1(m: SimilarityMatrix) -> float:
    """Fraction of rows whose diagonal strictly beats every off-diagonal entry.

    Ties count as failures. The training loop uses this as its tuning
    metric, a cheap proxy for retrieval precision over the full candidate
    set.
    """
    s = m.scores
    masked = s.copy()
    np.fill_diagonal(masked, -np.inf)
    return float(np.mean(np.diag(s) > masked.max(axis=1)))
