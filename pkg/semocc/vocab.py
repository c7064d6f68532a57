"""
Vocabularies, embedding matrices and cosine text classification.

- Labels are canonicalized (lowercase + trim); label id = position in the set.
- Label ids are uint16; 0xFFFF (UNLABELED) and 0xFFFE (FREE) never index a vocabulary.
- classify = argmax cosine; ties go to the smallest label id.
"""

from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

LABEL_DTYPE = np.uint16
UNLABELED = 0xFFFF
FREE = 0xFFFE
MAX_VOCAB = FREE  # ids 0 .. 0xFFFD


class VocabScope(str, Enum):
    FRAME = "per-frame"
    SEQUENCE = "per-sequence"
    DATASET = "dataset"


def canonicalize(label: str) -> str:
    return label.strip().lower()


def is_sentinel(ids) -> np.ndarray:
    ids = np.asarray(ids)
    return (ids == UNLABELED) | (ids == FREE)


class VocabularySet:
    """Ordered, duplicate-free text labels."""

    def __init__(self, labels: Iterable[str], scope: VocabScope = VocabScope.FRAME):
        canon = [canonicalize(str(x)) for x in labels]
        for i, c in enumerate(canon):
            if not c:
                raise ValueError(f"Empty vocabulary label at index {i}")
        if len(set(canon)) != len(canon):
            seen = set()
            dup = next(c for c in canon if c in seen or seen.add(c))
            raise ValueError(f"Duplicate vocabulary label after canonicalization: {dup!r}")
        if len(canon) > MAX_VOCAB:
            raise ValueError(f"Vocabulary too large: {len(canon)} labels (max {MAX_VOCAB})")
        self._labels: Tuple[str, ...] = tuple(canon)
        self._index = {c: i for i, c in enumerate(canon)}
        self.scope = VocabScope(scope)

    @property
    def labels(self) -> Tuple[str, ...]:
        return self._labels

    def index_of(self, label: str) -> int:
        """Label id of `label`; KeyError when absent."""
        return self._index[canonicalize(label)]

    def __contains__(self, label: str) -> bool:
        return canonicalize(label) in self._index

    def __len__(self) -> int:
        return len(self._labels)

    def __iter__(self):
        return iter(self._labels)

    def __getitem__(self, label_id: int) -> str:
        return self._labels[label_id]

    def __eq__(self, other) -> bool:
        if not isinstance(other, VocabularySet):
            return NotImplemented
        return self._labels == other._labels and self.scope == other.scope

    def __hash__(self) -> int:
        return hash((self._labels, self.scope))

    def __repr__(self) -> str:
        return f"VocabularySet({list(self._labels)!r}, scope={self.scope.value!r})"


def merge_sequence_vocab(frames: Sequence[VocabularySet]) -> VocabularySet:
    """
    Ordered union of frame vocabularies (frame order, then within-frame order).
    Per-sequence inputs are accepted too, which makes merging idempotent.
    """
    if not frames:
        raise ValueError("No vocabulary: merge_sequence_vocab needs at least one frame")
    for k, v in enumerate(frames):
        if v.scope == VocabScope.DATASET:
            raise ValueError(f"Frame {k} has dataset scope; expected per-frame vocabularies")
    merged: List[str] = []
    for v in frames:
        merged.extend(v.labels)
    return VocabularySet(dict.fromkeys(merged), scope=VocabScope.SEQUENCE)


def remap_labels(ids, src: VocabularySet, dst: VocabularySet) -> np.ndarray:
    """
    Translate label ids from src to dst by canonical text. Sentinels pass through;
    labels missing from dst become UNLABELED.
    """
    ids = np.asarray(ids, dtype=LABEL_DTYPE)
    table = np.full(len(src) + 1, UNLABELED, dtype=LABEL_DTYPE)
    for i, label in enumerate(src.labels):
        if label in dst:
            table[i] = dst.index_of(label)
    out = np.where(ids < len(src), table[np.minimum(ids, len(src))], ids)
    return out.astype(LABEL_DTYPE)


class EmbeddingMatrix:
    """N_t x D text embeddings, one row per vocabulary label."""

    def __init__(self, rows, vocab: Optional[VocabularySet] = None):
        r = np.array(rows, dtype=np.float64)
        if r.ndim != 2 or r.shape[0] == 0 or r.shape[1] == 0:
            raise ValueError(f"Embedding rows must be a non-empty 2D array, got shape {r.shape}")
        if not np.all(np.isfinite(r)):
            raise ValueError("Embedding rows must be finite")
        norms = np.linalg.norm(r, axis=1)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise ValueError(f"Embedding row {int(zero[0])} has zero norm")
        if vocab is not None and len(vocab) != r.shape[0]:
            raise ValueError(f"Embedding has {r.shape[0]} rows but vocabulary has {len(vocab)} labels")
        r.setflags(write=False)
        self.rows = r
        self.vocab = vocab

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.rows.shape[0]

    def subset(self, vocab: VocabularySet) -> "EmbeddingMatrix":
        """Rows for the labels of `vocab`, in its order; needs self.vocab."""
        if self.vocab is None:
            raise ValueError("Embedding matrix has no vocabulary to select from")
        missing = [x for x in vocab.labels if x not in self.vocab]
        if missing:
            raise ValueError(f"No embedding for labels {missing!r}")
        idx = [self.vocab.index_of(x) for x in vocab.labels]
        return EmbeddingMatrix(self.rows[idx], vocab)


def normalize_rows(emb: EmbeddingMatrix) -> EmbeddingMatrix:
    norms = np.linalg.norm(emb.rows, axis=1, keepdims=True)
    return EmbeddingMatrix(emb.rows / norms, emb.vocab)


def classify_many(features, emb: EmbeddingMatrix) -> Tuple[np.ndarray, np.ndarray]:
    """
    Argmax-cosine label per feature row. Returns (labels uint16, scores);
    zero-norm features get UNLABELED with score NaN.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != emb.dim:
        raise ValueError(f"Feature dimension {f.shape[-1]} does not match embedding dimension {emb.dim}")
    unit_rows = emb.rows / np.linalg.norm(emb.rows, axis=1, keepdims=True)
    fnorm = np.linalg.norm(f, axis=1)
    labels = np.full(f.shape[0], UNLABELED, dtype=LABEL_DTYPE)
    scores = np.full(f.shape[0], np.nan)
    ok = fnorm > 0
    if np.any(ok):
        cos = (f[ok] @ unit_rows.T) / fnorm[ok, None]
        best = np.argmax(cos, axis=1)  # first max = smallest id
        labels[ok] = best
        scores[ok] = np.clip(cos[np.arange(best.size), best], -1.0, 1.0)
    return labels, scores


def classify(feature, emb: EmbeddingMatrix) -> Tuple[int, float]:
    f = np.asarray(feature, dtype=np.float64).reshape(1, -1)
    if not np.linalg.norm(f) > 0:
        raise ValueError("Cannot classify a zero-norm feature (cosine undefined)")
    labels, scores = classify_many(f, emb)
    return int(labels[0]), float(scores[0])
