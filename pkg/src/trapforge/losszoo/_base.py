from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NORM_FLOOR = 1e-12


class LossInputError(ValueError):
    pass


@dataclass
class LossOutput:
    """Scalar loss plus the gradient w.r.t. each named input.

    Stop-gradient inputs are present in ``grads`` with an all-zero array.
    """
    value: float
    grads: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise FloatingPointError(f"non-finite loss value {self.value}")


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.1
    vmf_sigma: float = 0.5

    def __post_init__(self):
        if self.temperature <= 0 or self.vmf_sigma <= 0:
            raise ValueError("temperature and vmf_sigma must be positive")


@dataclass(frozen=True)
class BarlowConfig:
    lambda_offdiag: float = 5e-3
    eps: float = 1e-5

    def __post_init__(self):
        if self.lambda_offdiag < 0:
            raise ValueError("lambda_offdiag must be non-negative")


@dataclass(frozen=True)
class SupervisedConfig:
    arcface_scale: float = 64.0
    arcface_margin: float = 0.5
    triplet_margin: float = 0.2

    def __post_init__(self):
        if self.arcface_scale <= 0:
            raise ValueError("arcface_scale must be positive")
        if not 0 <= self.arcface_margin < math.pi / 2:
            raise ValueError("arcface_margin must lie in [0, pi/2)")
        if self.triplet_margin < 0:
            raise ValueError("triplet_margin must be non-negative")


def as_batch(z, name: str = "z") -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 1:
        raise LossInputError(f"{name} must be a non-empty N x d matrix, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise LossInputError(f"{name} contains non-finite entries")
    return z


def same_shape(**arrays: np.ndarray):
    shapes = {k: v.shape for k, v in arrays.items()}
    if len(set(shapes.values())) != 1:
        raise LossInputError(f"shape mismatch: {shapes}")


def l2_normalize(z: np.ndarray, name: str = "z") -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize; returns (unit rows, norms as a column)."""
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    bad = np.flatnonzero(norms[:, 0] < NORM_FLOOR)
    if bad.size:
        raise LossInputError(f"{name} has zero-norm rows at {bad.tolist()}")
    return z / norms, norms


def l2_normalize_backward(unit: np.ndarray, norms: np.ndarray, grad_unit: np.ndarray) -> np.ndarray:
    # d(x/|x|) projects out the radial component
    radial = np.sum(grad_unit * unit, axis=1, keepdims=True)
    return (grad_unit - unit * radial) / norms


def logsumexp(a: np.ndarray, axis: int = -1, where: np.ndarray | None = None) -> np.ndarray:
    if where is None:
        m = np.max(a, axis=axis, keepdims=True)
        return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)
    masked = np.where(where, a, -np.inf)
    m = np.max(masked, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.where(where, np.exp(masked - m), 0.0), axis=axis, keepdims=True)
    return (m + np.log(s)).squeeze(axis)


def masked_softmax(a: np.ndarray, where: np.ndarray) -> np.ndarray:
    masked = np.where(where, a, -np.inf)
    m = np.max(masked, axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.where(where, np.exp(masked - m), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def softmax(a: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(a - np.max(a, axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)
