"""Corpus ingestion: parsing, tokenization, vocabulary, label binarization, folds.

Input follows the Civil Comments CSV/JSONL schema: a ``comment_text`` column,
a fractional ``target`` toxicity score, nine identity columns and five
toxicity-subtype columns, all in [0, 1]. Identity cells may be empty, in
which case the record is treated as unannotated (distinct from zero) and
flagged for identity propagation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD_INDEX = 0
UNK_INDEX = 1

IDENTITY_COLUMNS = (
    "male",
    "female",
    "homosexual_gay_or_lesbian",
    "christian",
    "jewish",
    "muslim",
    "black",
    "white",
    "psychiatric_or_mental_illness",
)

SUBTYPE_COLUMNS = (
    "severe_toxicity",
    "obscene",
    "threat",
    "identity_attack",
    "insult",
)

# Stripped before whitespace splitting; apostrophes are kept so contractions
# survive, and case is never folded.
DEFAULT_PUNCTUATION = '.,!?;:"()'


class CorpusError(ValueError):
    """Malformed input data (bad row, unknown column, unusable value)."""


@dataclass
class RawRecord:
    """One parsed input row, pre-tokenization."""

    id: str
    comment_text: str
    target: float
    identity_scores: dict[str, float] | None  # None = not annotated
    subtype_scores: dict[str, float] = field(default_factory=dict)


@dataclass
class Comment:
    """One encoded training/evaluation example."""

    id: str
    token_ids: np.ndarray  # shape (max_len,), int
    true_length: int
    y: float
    y_bin: int
    identity_labels: np.ndarray  # shape (9,), floats in [0, 1]
    subtype_labels: np.ndarray  # shape (5,), floats in [0, 1]
    identity_present: bool
    beta: float
    needs_propagation: bool = False
    propagated: bool = False


@dataclass(frozen=True)
class FoldPlan:
    """Deterministic K-fold split: ``folds[i] = (train_idx, val_idx)``."""

    n: int
    k_folds: int
    seed: int
    folds: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]


def tokenize(text: str, punctuation: str = DEFAULT_PUNCTUATION) -> list[str]:
    """Strip the configured punctuation characters and split on whitespace.

    Case is preserved. Total: any string (including empty) tokenizes.
    """
    cleaned = text.translate(str.maketrans("", "", punctuation))
    return cleaned.split()


class Vocabulary:
    """Token-to-index map with index 0 reserved for padding, 1 for unknown."""

    def __init__(self, tokens_by_index: dict[str, int] | None = None):
        self._token_to_index: dict[str, int] = {}
        if tokens_by_index:
            for token, index in tokens_by_index.items():
                if index < 2:
                    raise CorpusError(f"vocabulary index {index} is reserved")
                self._token_to_index[token] = index
            indices = sorted(self._token_to_index.values())
            if indices != list(range(2, 2 + len(indices))):
                raise CorpusError("vocabulary indices must be contiguous from 2")

    @classmethod
    def build(
        cls,
        token_sequences,
        min_freq: int = 1,
        max_size: int | None = None,
    ) -> "Vocabulary":
        """Build from an iterable of token lists (training split only).

        Tokens are ranked by descending frequency, ties broken by first
        occurrence, so the result is deterministic.
        """
        counts: dict[str, int] = {}
        order: dict[str, int] = {}
        for seq in token_sequences:
            for tok in seq:
                counts[tok] = counts.get(tok, 0) + 1
                order.setdefault(tok, len(order))
        ranked = sorted(counts, key=lambda t: (-counts[t], order[t]))
        if max_size is not None:
            ranked = ranked[:max_size]
        vocab = cls()
        for tok in ranked:
            if counts[tok] >= min_freq:
                vocab._token_to_index[tok] = 2 + len(vocab._token_to_index)
        return vocab

    def __len__(self) -> int:
        # Includes the two reserved indices.
        return len(self._token_to_index) + 2

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_index

    def index_of(self, token: str) -> int:
        return self._token_to_index.get(token, UNK_INDEX)

    def tokens_by_index(self) -> list[str | None]:
        """Token for each index; None at the two reserved slots."""
        out: list[str | None] = [None] * len(self)
        for tok, idx in self._token_to_index.items():
            out[idx] = tok
        return out

    def save(self, path: str | Path) -> None:
        """Write one ``token<TAB>index`` line per token, sorted by index."""
        lines = [
            f"{tok}\t{idx}"
            for tok, idx in sorted(self._token_to_index.items(), key=lambda kv: kv[1])
        ]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        mapping: dict[str, int] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line:
                continue
            try:
                tok, idx = line.rsplit("\t", 1)
                mapping[tok] = int(idx)
            except ValueError as exc:
                raise CorpusError(f"{path}: bad vocabulary line {lineno}: {line!r}") from exc
        return cls(mapping)

    def checksum(self) -> str:
        """Stable hex digest of the serialized form, for checkpoint pairing."""
        import hashlib

        payload = "\n".join(
            f"{tok}\t{idx}"
            for tok, idx in sorted(self._token_to_index.items(), key=lambda kv: kv[1])
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def encode(
    tokens: list[str], vocab: Vocabulary, max_len: int
) -> tuple[np.ndarray, int]:
    """Map tokens to indices, truncate to max_len, right-pad with PAD_INDEX."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    kept = tokens[:max_len]
    ids = np.full(max_len, PAD_INDEX, dtype=np.int64)
    for i, tok in enumerate(kept):
        ids[i] = vocab.index_of(tok)
    return ids, len(kept)


def _parse_score(value, row_num: int, name: str) -> float:
    try:
        score = float(value)
    except (TypeError, ValueError):
        raise CorpusError(f"row {row_num}: field {name!r} is not a number: {value!r}")
    if not 0.0 <= score <= 1.0:
        raise CorpusError(f"row {row_num}: field {name!r} out of [0,1]: {score}")
    return score


def _record_from_mapping(row: dict, row_num: int, identity_columns) -> RawRecord:
    if "comment_text" not in row or row["comment_text"] is None:
        raise CorpusError(f"row {row_num}: missing field 'comment_text'")
    if "target" not in row or row["target"] in (None, ""):
        raise CorpusError(f"row {row_num}: missing field 'target'")
    target = _parse_score(row["target"], row_num, "target")

    identity_scores: dict[str, float] = {}
    any_identity_column = False
    for name in identity_columns:
        if name in row:
            any_identity_column = True
            value = row[name]
            if value in (None, ""):
                continue
            identity_scores[name] = _parse_score(value, row_num, name)
    subtype_scores: dict[str, float] = {}
    for name in SUBTYPE_COLUMNS:
        value = row.get(name)
        if value not in (None, ""):
            subtype_scores[name] = _parse_score(value, row_num, name)

    return RawRecord(
        id=str(row.get("id", row_num)),
        comment_text=str(row["comment_text"]),
        target=target,
        identity_scores=identity_scores if (any_identity_column and identity_scores) else None,
        subtype_scores=subtype_scores,
    )


def load_corpus(
    path: str | Path,
    schema: str = "csv",
    identity_columns=IDENTITY_COLUMNS,
) -> list[RawRecord]:
    """Parse a CSV or JSONL file into RawRecords.

    Identity columns that are absent from the file, or empty in a row, leave
    that record's ``identity_scores`` as None (unannotated), never zero.
    """
    for name in identity_columns:
        if name not in IDENTITY_COLUMNS:
            raise CorpusError(f"unknown identity column: {name!r}")
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"input file not found: {path}")

    records: list[RawRecord] = []
    if schema == "csv":
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "comment_text" not in reader.fieldnames:
                raise CorpusError(f"{path}: header must include 'comment_text'")
            for row_num, row in enumerate(reader, 1):
                records.append(_record_from_mapping(row, row_num, identity_columns))
    elif schema == "jsonl":
        for row_num, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"row {row_num}: invalid JSON: {exc}") from exc
            records.append(_record_from_mapping(row, row_num, identity_columns))
    else:
        raise CorpusError(f"unknown schema: {schema!r} (expected 'csv' or 'jsonl')")
    return records


def binarize_and_weight(
    record: RawRecord,
    c: float,
    vocab: Vocabulary,
    max_len: int = 220,
    punctuation: str = DEFAULT_PUNCTUATION,
) -> Comment:
    """Encode one record and derive binary label, identity flag, and weight.

    Non-toxic examples that mention an identity get weight c (the false
    positive penalty multiplier); everything else gets weight 1. Records
    without identity annotation are weighted as identity-absent but flagged
    ``needs_propagation``.
    """
    if c <= 0:
        raise ValueError("c must be > 0")
    token_ids, true_length = encode(tokenize(record.comment_text, punctuation), vocab, max_len)
    y = record.target
    y_bin = int(y >= 0.5)

    identity_labels = np.zeros(len(IDENTITY_COLUMNS))
    needs_propagation = record.identity_scores is None
    if record.identity_scores is not None:
        for i, name in enumerate(IDENTITY_COLUMNS):
            identity_labels[i] = record.identity_scores.get(name, 0.0)
    subtype_labels = np.zeros(len(SUBTYPE_COLUMNS))
    for i, name in enumerate(SUBTYPE_COLUMNS):
        subtype_labels[i] = record.subtype_scores.get(name, 0.0)

    identity_present = bool(np.any(identity_labels >= 0.5))
    beta = c if (y_bin == 0 and identity_present) else 1.0
    return Comment(
        id=record.id,
        token_ids=token_ids,
        true_length=true_length,
        y=y,
        y_bin=y_bin,
        identity_labels=identity_labels,
        subtype_labels=subtype_labels,
        identity_present=identity_present,
        beta=beta,
        needs_propagation=needs_propagation,
    )


def reweight(comment: Comment, c: float) -> None:
    """Recompute identity_present and beta in place from identity_labels."""
    comment.identity_present = bool(np.any(comment.identity_labels >= 0.5))
    comment.beta = c if (comment.y_bin == 0 and comment.identity_present) else 1.0


def comment_to_dict(comment: Comment) -> dict:
    return {
        "id": comment.id,
        "token_ids": comment.token_ids.tolist(),
        "true_length": comment.true_length,
        "y": comment.y,
        "y_bin": comment.y_bin,
        "identity_labels": comment.identity_labels.tolist(),
        "subtype_labels": comment.subtype_labels.tolist(),
        "identity_present": comment.identity_present,
        "beta": comment.beta,
        "needs_propagation": comment.needs_propagation,
        "propagated": comment.propagated,
    }


def comment_from_dict(obj: dict) -> Comment:
    return Comment(
        id=obj["id"],
        token_ids=np.array(obj["token_ids"], dtype=np.int64),
        true_length=obj["true_length"],
        y=obj["y"],
        y_bin=obj["y_bin"],
        identity_labels=np.array(obj["identity_labels"], dtype=float),
        subtype_labels=np.array(obj["subtype_labels"], dtype=float),
        identity_present=obj["identity_present"],
        beta=obj["beta"],
        needs_propagation=obj["needs_propagation"],
        propagated=obj.get("propagated", False),
    )


def save_comments(path: str | Path, comments: list[Comment]) -> None:
    """One JSON object per line, in order."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for comment in comments:
            fh.write(json.dumps(comment_to_dict(comment)) + "\n")


def load_comments(path: str | Path) -> list[Comment]:
    comments = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            comments.append(comment_from_dict(json.loads(line)))
    return comments


def make_folds(n: int, k_folds: int = 5, seed: int = 0) -> FoldPlan:
    """Shuffle indices with the given seed and split into K disjoint folds.

    Validation fold sizes differ by at most one; together they cover every
    index exactly once.
    """
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    if n < k_folds:
        raise ValueError(f"need at least {k_folds} records, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    base, extra = divmod(n, k_folds)
    folds = []
    start = 0
    for i in range(k_folds):
        size = base + (1 if i < extra else 0)
        val = perm[start : start + size]
        train = np.concatenate([perm[:start], perm[start + size :]])
        folds.append((tuple(int(j) for j in train), tuple(int(j) for j in val)))
        start += size
    return FoldPlan(n=n, k_folds=k_folds, seed=seed, folds=tuple(folds))
