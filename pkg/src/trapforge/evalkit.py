"""Evaluation of frozen embeddings: open-world retrieval, kNN, linear probe, downstream metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

UNIT_TOL = 1e-6


@dataclass(frozen=True)
class Gallery:
    embeddings: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        labels = np.asarray(self.labels)
        if emb.ndim != 2 or emb.shape[0] < 1:
            raise ValueError(f"embeddings must be a non-empty N x d matrix, got {emb.shape}")
        if labels.shape != (emb.shape[0],):
            raise ValueError(f"expected {emb.shape[0]} labels, got shape {labels.shape}")
        norms = np.linalg.norm(emb, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise ValueError("gallery rows must be unit-norm (use Gallery.from_raw)")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @classmethod
    def from_raw(cls, embeddings, labels) -> "Gallery":
        emb = np.asarray(embeddings, dtype=np.float64)
        norms = np.linalg.norm(emb, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise ValueError("cannot normalize zero-norm embedding rows")
        return cls(emb / norms, labels)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class KnnConfig:
    k: int = 200
    temperature: float = 0.07

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class ProbeConfig:
    learning_rate: float = 1.0
    epochs: int = 200
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if not self.learning_rate > 0 or self.epochs < 1:
            raise ValueError("probe needs learning_rate > 0 and epochs >= 1")


@dataclass
class EvalReport:
    metrics: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    digests: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.metrics.items():
            if not math.isfinite(value):
                raise ValueError(f"metric {name} is not finite: {value}")

    def to_json(self) -> str:
        return json.dumps({"metrics": self.metrics, "config": self.config,
                           "digests": self.digests}, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls({k: float(v) for k, v in doc["metrics"].items()}, doc.get("config", {}),
                   doc.get("digests", {}))


# -- retrieval ---------------------------------------------------------------

def average_precision(relevance) -> float:
    """Mean over relevant ranks r of precision@r."""
    rel = np.asarray(relevance, dtype=bool)
    if rel.size == 0 or not rel.any():
        raise ValueError("average precision needs at least one relevant item")
    hits = np.cumsum(rel)
    ranks = np.flatnonzero(rel) + 1
    return float(np.mean(hits[rel] / ranks))


def _similarities(queries: Gallery, gallery: Gallery) -> np.ndarray:
    if queries.embeddings.shape[1] != gallery.embeddings.shape[1]:
        raise ValueError("query and gallery dimensions differ")
    return queries.embeddings @ gallery.embeddings.T


def retrieval_ap(queries: Gallery, gallery: Gallery | None = None) -> np.ndarray:
    """Per-query average precision; ``nan`` marks queries that were excluded.

    ``gallery=None`` means leave-one-out over ``queries``: each item queries
    the others and items whose label has no other member are excluded.
    Ties in similarity rank by ascending gallery index.
    """
    loo = gallery is None
    gallery = queries if loo else gallery
    if not loo:
        missing = set(queries.labels.tolist()) - set(gallery.labels.tolist())
        if missing:
            raise ValueError(f"query labels absent from gallery: {sorted(missing)}")
    sim = _similarities(queries, gallery)
    out = np.full(len(queries), np.nan)
    idx = np.arange(len(gallery))
    for i in range(len(queries)):
        keep = idx != i if loo else np.ones(len(gallery), dtype=bool)
        order = idx[keep][np.argsort(-sim[i, keep], kind="stable")]
        rel = gallery.labels[order] == queries.labels[i]
        if rel.any():
            out[i] = average_precision(rel)
    return out


def retrieval_map(queries: Gallery, gallery: Gallery | None = None) -> float:
    ap = retrieval_ap(queries, gallery)
    if np.all(np.isnan(ap)):
        raise ValueError("no query has a relevant gallery item")
    return float(np.nanmean(ap))


# -- kNN and linear probe ----------------------------------------------------

def effective_k(k: int, n_train: int, leave_one_out: bool = False) -> int:
    return max(1, min(k, n_train - 1 if leave_one_out else n_train))


def weighted_knn(train: Gallery, test: Gallery, cfg: KnnConfig = KnnConfig(),
                 leave_one_out: bool = False):
    """Temperature-weighted kNN vote; returns (predictions, top-1 accuracy).

    Neighbour j contributes exp(cos_j / tau) to its label. Ties in class
    score go to the smaller class id. With ``leave_one_out`` test must be
    train and each row's own entry is skipped.
    """
    if leave_one_out and test is not train:
        raise ValueError("leave_one_out requires test to be the train gallery")
    k = effective_k(cfg.k, len(train), leave_one_out)
    sim = _similarities(test, train)
    if leave_one_out:
        np.fill_diagonal(sim, -np.inf)
    order = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    top = np.take_along_axis(sim, order, axis=1)
    weights = np.exp((top - top[:, :1]) / cfg.temperature)

    classes = np.unique(train.labels)
    votes = np.searchsorted(classes, train.labels[order])
    scores = np.zeros((len(test), len(classes)))
    np.add.at(scores, (np.arange(len(test))[:, None], votes), weights)
    pred = classes[np.argmax(scores, axis=1)]
    return pred, float(np.mean(pred == test.labels))


def linear_probe(train: Gallery, test: Gallery, cfg: ProbeConfig = ProbeConfig()) -> float:
    """Top-1 accuracy of a softmax regression fit by full-batch gradient descent."""
    classes = np.unique(train.labels)
    if len(classes) < 2:
        raise ValueError("linear probe needs at least two classes in the train set")
    unseen = set(test.labels.tolist()) - set(classes.tolist())
    if unseen:
        raise ValueError(f"test labels not seen in training: {sorted(unseen)}")
    X, y = train.embeddings, np.searchsorted(classes, train.labels)
    n, d = X.shape
    rng = np.random.default_rng(cfg.seed)
    W = cfg.init_scale * rng.standard_normal((d, len(classes)))
    b = np.zeros(len(classes))
    onehot = np.eye(len(classes))[y]
    for _ in range(cfg.epochs):
        logits = X @ W + b
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        W -= cfg.learning_rate * X.T @ g
        b -= cfg.learning_rate * g.sum(axis=0)
    pred = classes[np.argmax(test.embeddings @ W + b, axis=1)]
    return float(np.mean(pred == test.labels))


# -- downstream task metrics ---------------------------------------------------

def multilabel_accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 2:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return float(np.mean(np.mean(pred == truth, axis=0)))


def pck(pred, truth, visibility, threshold: float) -> float:
    """Fraction of visible keypoints within ``threshold`` (coordinate units) of the truth."""
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    vis = np.asarray(visibility).astype(bool)
    if pred.shape != truth.shape or pred.shape[-1] != 2 or vis.shape != pred.shape[:-1]:
        raise ValueError("pred/truth must be N x J x 2 with N x J visibility")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if not vis.any():
        raise ValueError("no visible keypoints")
    err = np.linalg.norm(pred - truth, axis=-1)
    return float(np.mean(err[vis] <= threshold))


def confusion_matrix(pred, truth, num_classes: int) -> np.ndarray:
    pred, truth = np.ravel(pred).astype(np.int64), np.ravel(truth).astype(np.int64)
    if pred.shape != truth.shape:
        raise ValueError("label maps differ in size")
    for arr in (pred, truth):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"label out of range [0, {num_classes})")
    return np.bincount(truth * num_classes + pred, minlength=num_classes ** 2).reshape(
        num_classes, num_classes)


def miou(pred, truth, num_classes: int) -> float:
    """Mean IoU over classes present in prediction or truth."""
    cm = confusion_matrix(pred, truth, num_classes)
    inter = np.diag(cm)
    union = cm.sum(axis=0) + cm.sum(axis=1) - inter
    present = union > 0
    if not present.any():
        raise ValueError("empty label maps")
    return float(np.mean(inter[present] / union[present]))
