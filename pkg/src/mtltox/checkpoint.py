"""Model checkpoint serialization.

Checkpoints are versioned JSON containers holding the hyperparameters, every
parameter tensor, the frozen embedding table, and checksums tying the model
to the vocabulary it was trained with. Floats serialize via Python's repr
(shortest round-tripping decimal), so save/load/save is byte-identical.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from mtltox.embeddings import EmbeddingTable
from mtltox.network import Hyper, ModelParams

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable or incompatible checkpoint."""


def _tensor_to_json(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _tensor_from_json(obj: dict) -> np.ndarray:
    return np.array(obj["data"], dtype=float).reshape(obj["shape"])


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    table: EmbeddingTable,
    vocab_checksum: str,
    meta: dict | None = None,
) -> None:
    """Atomic write: serialize to a temp file, then rename into place."""
    payload = {
        "version": FORMAT_VERSION,
        "hyper": asdict(params.hyper),
        "vocab_checksum": vocab_checksum,
        "embedding": {
            "dim1": table.dim1,
            "dim2": table.dim2,
            "matrix": _tensor_to_json(table.matrix),
        },
        "tensors": {name: _tensor_to_json(arr) for name, arr in params.tensors.items()},
        "meta": meta or {},
    }
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> tuple[ModelParams, EmbeddingTable, str, dict]:
    """Returns (params, embedding table, vocab checksum, meta)."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version: {payload.get('version')!r}")
    hyper = Hyper(**payload["hyper"])
    params = ModelParams(
        hyper=hyper,
        tensors={name: _tensor_from_json(obj) for name, obj in payload["tensors"].items()},
    )
    emb = payload["embedding"]
    table = EmbeddingTable(
        matrix=_tensor_from_json(emb["matrix"]), dim1=emb["dim1"], dim2=emb["dim2"]
    )
    return params, table, payload["vocab_checksum"], payload.get("meta", {})
