"""Embedding CSV files: header ``id,label,e0,...,e{d-1}``, values to 9 significant digits."""

from __future__ import annotations

import csv
import io

import numpy as np


class EmbeddingFormatError(ValueError):
    pass


def format_embeddings(embeddings, labels, ids=None) -> str:
    emb = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    labels = np.asarray(labels)
    if labels.shape != (emb.shape[0],):
        raise ValueError("one label per embedding row required")
    ids = [str(i) for i in (range(len(labels)) if ids is None else ids)]
    buf = io.StringIO()
    buf.write(",".join(["id", "label"] + [f"e{j}" for j in range(emb.shape[1])]) + "\n")
    for i, lab, row in zip(ids, labels, emb):
        buf.write(",".join([i, str(int(lab))] + ["%.9g" % v for v in row]) + "\n")
    return buf.getvalue()


def parse_embeddings(text: str) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Return (ids, labels, embeddings); raises EmbeddingFormatError with the line number."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise EmbeddingFormatError("empty embedding file")
    header = rows[0]
    d = len(header) - 2
    if header[:2] != ["id", "label"] or d < 1 or header[2:] != [f"e{j}" for j in range(d)]:
        raise EmbeddingFormatError("line 1: header must be id,label,e0,...,e{d-1}")
    ids, labels, emb = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 2:
            raise EmbeddingFormatError(f"line {lineno}: expected {d + 2} fields, got {len(row)}")
        try:
            labels.append(int(row[1]))
            vals = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise EmbeddingFormatError(f"line {lineno}: {exc}") from exc
        if not np.all(np.isfinite(vals)):
            raise EmbeddingFormatError(f"line {lineno}: non-finite value")
        ids.append(row[0])
        emb.append(vals)
    if not emb:
        raise EmbeddingFormatError("embedding file has no rows")
    return ids, np.asarray(labels, dtype=np.int64), np.asarray(emb)
