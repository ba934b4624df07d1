"""Tokenization, vocabulary construction, and document-frequency statistics.

Every component that touches raw text (the trainable encoder, the averaged
pretrained-embedding encoders, and the TFIDF/BM25 baselines) goes through
this module, so they all agree on what a token is and what IDF means.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

# Per-character punctuation test memoized; question corpora reuse a small
# set of distinct characters so this stays tiny.
_punct_cache: dict[str, bool] = {}


def _is_punct(ch: str) -> bool:
    hit = _punct_cache.get(ch)
    if hit is None:
        hit = unicodedata.category(ch).startswith("P")
        _punct_cache[ch] = hit
    return hit


def tokenize(text: str) -> list[str]:
    """Lowercase unigram tokenizer.

    Lowercases, splits on Unicode whitespace, strips leading/trailing
    punctuation from each piece, and drops pieces that end up empty.
    Total and deterministic: any string in, possibly empty list out.
    """
    tokens = []
    for piece in text.lower().split():
        start, end = 0, len(piece)
        while start < end and _is_punct(piece[start]):
            start += 1
        while end > start and _is_punct(piece[end - 1]):
            end -= 1
        if end > start:
            tokens.append(piece[start:end])
    return tokens


def smoothed_idf(num_docs: int, doc_freq: int) -> float:
    """ln((1 + N) / (1 + df)) + 1: finite and positive for df = 0 and df = N."""
    return math.log((1 + num_docs) / (1 + doc_freq)) + 1.0


@dataclass
class Vocabulary:
    """Token/id bijection plus the document-frequency statistics behind IDF.

    Ids are assigned by descending total frequency (ties lexicographic), so
    construction is deterministic for a fixed corpus order. Immutable after
    construction; safe to share across threads.
    """

    token_to_id: dict[str, int]
    id_to_token: list[str]
    doc_freq: list[int]
    num_docs: int

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int | None:
        return self.token_to_id.get(token)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        """Map tokens to ids, dropping out-of-vocabulary tokens."""
        out = []
        for t in tokens:
            i = self.token_to_id.get(t)
            if i is not None:
                out.append(i)
        return out

    def save(self, path: str | Path) -> None:
        """One `token<TAB>id<TAB>doc_freq` line per token after a `#num_docs=` header."""
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"#num_docs={self.num_docs}\n")
            for i, token in enumerate(self.id_to_token):
                f.write(f"{token}\t{i}\t{self.doc_freq[i]}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        token_to_id: dict[str, int] = {}
        id_to_token: list[str] = []
        doc_freq: list[int] = []
        with open(path, encoding="utf-8") as f:
            header = f.readline().strip()
            if not header.startswith("#num_docs="):
                raise ValueError(f"{path}: missing #num_docs= header")
            num_docs = int(header.split("=", 1)[1])
            for lineno, line in enumerate(f, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected token<TAB>id<TAB>doc_freq")
                token, token_id, df = parts[0], int(parts[1]), int(parts[2])
                if token_id != len(id_to_token):
                    raise ValueError(f"{path}:{lineno}: ids must be contiguous and in order")
                token_to_id[token] = token_id
                id_to_token.append(token)
                doc_freq.append(df)
        return cls(token_to_id, id_to_token, doc_freq, num_docs)


def build_vocabulary(corpus: Sequence[Sequence[str]], min_count: int = 2) -> Vocabulary:
    """Build a Vocabulary from tokenized documents.

    Keeps tokens whose total occurrence count is >= min_count. doc_freq
    counts distinct documents containing the token; num_docs is the corpus
    size. An empty corpus yields an empty vocabulary.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    totals: Counter[str] = Counter()
    by_doc: Counter[str] = Counter()
    for doc in corpus:
        totals.update(doc)
        by_doc.update(set(doc))
    kept = sorted(
        (t for t, c in totals.items() if c >= min_count),
        key=lambda t: (-totals[t], t),
    )
    token_to_id = {t: i for i, t in enumerate(kept)}
    doc_freq = [by_doc[t] for t in kept]
    return Vocabulary(token_to_id, kept, doc_freq, len(corpus))


def idf(vocab: Vocabulary, token: str) -> float:
    """Smoothed inverse document frequency; unknown tokens count as df = 0."""
    if vocab.num_docs < 1:
        raise ValueError("IDF requested before any document statistics were built")
    token_id = vocab.token_to_id.get(token)
    df = vocab.doc_freq[token_id] if token_id is not None else 0
    return smoothed_idf(vocab.num_docs, df)
