"""Pre-trained word vector loading and the frozen concatenated embedding table.

Each vocabulary word gets a vector of dimension D1 + D2 built from two text
sources (GloVe-style files). Words missing from a source get a seeded random
vector in that source's slice, so table construction is reproducible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mtltox.corpus import PAD_INDEX, Vocabulary


class EmbeddingError(ValueError):
    """Malformed embedding file."""


@dataclass(frozen=True)
class EmbeddingTable:
    """Frozen |V| x (D1 + D2) lookup matrix; row 0 (padding) is all zeros."""

    matrix: np.ndarray
    dim1: int
    dim2: int

    @property
    def dim(self) -> int:
        return self.dim1 + self.dim2


def load_vectors(path: str | Path, dim: int) -> dict[str, np.ndarray]:
    """Parse a text embedding file: one ``word v1 ... v_dim`` per line.

    A FastText-style header line (``count dim``) is detected and skipped.
    Duplicate words keep the last occurrence, with a warning.
    """
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # header
                except ValueError:
                    pass
            if len(parts) != dim + 1:
                raise EmbeddingError(
                    f"{path}: line {lineno}: expected {dim + 1} fields, got {len(parts)}"
                )
            word = parts[0]
            try:
                vec = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise EmbeddingError(f"{path}: line {lineno}: bad number: {exc}") from exc
            if word in vectors:
                warnings.warn(f"duplicate embedding for {word!r} at line {lineno}; keeping last")
            vectors[word] = vec
    return vectors


def build_table(
    vocab: Vocabulary,
    src1: dict[str, np.ndarray],
    src2: dict[str, np.ndarray],
    oov_seed: int = 0,
    dim1: int | None = None,
    dim2: int | None = None,
) -> EmbeddingTable:
    """Concatenate two embedding sources over the vocabulary.

    Words absent from a source draw a Uniform(-0.05, 0.05) vector for that
    source's slice from a generator seeded with oov_seed; the padding row is
    zeroed last. Two builds with the same inputs are identical.
    """
    if dim1 is None:
        dim1 = len(next(iter(src1.values())))
    if dim2 is None:
        dim2 = len(next(iter(src2.values())))
    rng = np.random.default_rng(oov_seed)
    tokens = vocab.tokens_by_index()
    matrix = np.zeros((len(tokens), dim1 + dim2))
    for idx, tok in enumerate(tokens):
        for (src, lo, hi) in ((src1, 0, dim1), (src2, dim1, dim1 + dim2)):
            if tok is not None and tok in src:
                vec = src[tok]
                if len(vec) != hi - lo:
                    raise EmbeddingError(f"vector for {tok!r} has length {len(vec)}, want {hi - lo}")
                matrix[idx, lo:hi] = vec
            else:
                # Reserved and OOV rows draw in index order, keeping builds
                # reproducible; the padding row is overwritten below.
                matrix[idx, lo:hi] = rng.uniform(-0.05, 0.05, hi - lo)
    matrix[PAD_INDEX, :] = 0.0
    return EmbeddingTable(matrix=matrix, dim1=dim1, dim2=dim2)


def random_table(
    vocab: Vocabulary, dim1: int, dim2: int, seed: int = 0, scale: float = 1.0
) -> EmbeddingTable:
    """Table with no pre-trained sources: every word is a seeded random vector.

    ``scale`` multiplies the random rows; padding stays zero. Handy when a toy
    model needs inputs with a magnitude closer to real pre-trained vectors.
    """
    table = build_table(vocab, {}, {}, oov_seed=seed, dim1=dim1, dim2=dim2)
    if scale != 1.0:
        table.matrix[1:] *= scale
    return table


def lookup(table: EmbeddingTable, token_ids: np.ndarray) -> np.ndarray:
    """Row-gather: result row m is the table row for token_ids[m]."""
    ids = np.asarray(token_ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.matrix.shape[0]):
        raise IndexError(f"token id out of range [0, {table.matrix.shape[0]})")
    return table.matrix[ids]


def checksum(table: EmbeddingTable) -> str:
    """Content hash, used to verify the table was not mutated by training."""
    import hashlib

    return hashlib.sha256(np.ascontiguousarray(table.matrix).tobytes()).hexdigest()
