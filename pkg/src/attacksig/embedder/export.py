"""Embedding export as JSON Lines: {"utterance_id", "label", "vector"} per row."""

from __future__ import annotations

import json

import numpy as np


def write_embeddings(ids, labels, E, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for uid, label, v in zip(ids, labels, np.asarray(E, dtype=np.float64)):
            row = {"utterance_id": uid, "label": label, "vector": [float(x) for x in v]}
            fh.write(json.dumps(row) + "\n")


def read_embeddings(path):
    """Return (ids, labels, E)."""
    ids, labels, rows = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                ids.append(row["utterance_id"])
                labels.append(row.get("label"))
                rows.append(row["vector"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed embedding row ({exc})") from None
    if len({len(r) for r in rows}) > 1:
        raise ValueError(f"{path}: embedding vectors have inconsistent lengths")
    return ids, labels, np.array(rows, dtype=np.float64)
