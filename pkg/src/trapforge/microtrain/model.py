"""One-hidden-layer encoder f, projection g and optional head h, with manual backprop."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..losszoo import l2_normalize


@dataclass
class EncoderParams:
    """f: x -> relu(x W1 + b1); g: -> W2, b2; optional head h: -> Wh, bh.

    ``centers`` holds ArcFace class centres when that objective is used.
    """
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    Wh: np.ndarray | None = None
    bh: np.ndarray | None = None
    centers: np.ndarray | None = None

    def names(self) -> list[str]:
        return [f.name for f in fields(self) if getattr(self, f.name) is not None]

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in self.names()}

    def copy(self) -> "EncoderParams":
        return EncoderParams(**{n: v.copy() for n, v in self.arrays().items()})

    def zeros_like(self) -> "EncoderParams":
        return EncoderParams(**{n: np.zeros_like(v) for n, v in self.arrays().items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays().values()])

    def with_flat(self, vec) -> "EncoderParams":
        vec = np.asarray(vec, dtype=np.float64)
        out, i = {}, 0
        for n, v in self.arrays().items():
            out[n] = vec[i:i + v.size].reshape(v.shape).copy()
            i += v.size
        if i != vec.size:
            raise ValueError(f"flat vector has {vec.size} entries, expected {i}")
        return EncoderParams(**out)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays().values())

    def to_dict(self) -> dict:
        return {n: v.tolist() for n, v in self.arrays().items()}


def init_params(input_dim: int, hidden_dim: int, embed_dim: int, seed,
                head_dim: int | None = None, num_classes: int | None = None) -> EncoderParams:
    """He-scaled Gaussian weights, zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def layer(n_in, n_out):
        return rng.standard_normal((n_in, n_out)) * np.sqrt(2.0 / n_in), np.zeros(n_out)

    W1, b1 = layer(input_dim, hidden_dim)
    W2, b2 = layer(hidden_dim, embed_dim)
    Wh = bh = centers = None
    if head_dim is not None:
        Wh, bh = layer(embed_dim, head_dim)
    if num_classes is not None:
        centers = rng.standard_normal((num_classes, embed_dim))
    return EncoderParams(W1, b1, W2, b2, Wh, bh, centers)


@dataclass
class Forward:
    X: np.ndarray
    pre: np.ndarray
    hidden: np.ndarray
    z: np.ndarray
    p: np.ndarray | None


def forward(params: EncoderParams, X) -> Forward:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != params.W1.shape[0]:
        raise ValueError(f"input has dimension {X.shape[1]}, encoder expects {params.W1.shape[0]}")
    pre = X @ params.W1 + params.b1
    hidden = np.maximum(pre, 0.0)
    z = hidden @ params.W2 + params.b2
    p = z @ params.Wh + params.bh if params.Wh is not None else None
    return Forward(X, pre, hidden, z, p)


def backward(params: EncoderParams, fwd: Forward, dz=None, dp=None) -> EncoderParams:
    """Parameter gradients given upstream grads on z and (optionally) the head output."""
    grads = params.zeros_like()
    dz = np.zeros_like(fwd.z) if dz is None else np.array(dz, dtype=np.float64)
    if dp is not None:
        if params.Wh is None:
            raise ValueError("head gradient given but the encoder has no head")
        grads.Wh = fwd.z.T @ dp
        grads.bh = dp.sum(axis=0)
        dz = dz + dp @ params.Wh.T
    grads.W2 = fwd.hidden.T @ dz
    grads.b2 = dz.sum(axis=0)
    dpre = (dz @ params.W2.T) * (fwd.pre > 0)
    grads.W1 = fwd.X.T @ dpre
    grads.b1 = dpre.sum(axis=0)
    return grads


def add_grads(a: EncoderParams, b: EncoderParams) -> EncoderParams:
    return EncoderParams(**{n: a.arrays()[n] + v for n, v in b.arrays().items()})


def embed(params: EncoderParams, X) -> np.ndarray:
    """Unit-normalized projections g(f(X))."""
    return l2_normalize(forward(params, X).z, "embedding")[0]
