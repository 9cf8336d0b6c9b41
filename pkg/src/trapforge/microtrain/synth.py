"""Synthetic identities and views standing in for camera-trap crops.

Coordinates are split into identity | pose | lighting blocks. Each identity
is a unit prototype in the identity block. A frame adds a pose component,
redrawn for every frame, and a lighting component shared by consecutive
frames of the same visit, plus isotropic noise::

    view_a = prototype + pose_a + light + N(0, view_noise_sigma^2)
    view_b = view_a + N(0, drift_sigma^2) + (pose_b - pose_a)

A temporal pair therefore shares identity and lighting but not pose.
Augmenting a single frame can jitter its lighting ("colour jitter") but
never changes its pose. With ``pose_sigma = light_sigma = 0`` this is plain
prototype + noise, drift.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

PAIR_MODES = ("temporal", "augmented", "combined")


@dataclass(frozen=True)
class SynthConfig:
    num_identities: int = 32
    views_per_identity: int = 20
    input_dim: int = 32
    view_noise_sigma: float = 0.1
    drift_sigma: float = 0.05
    pose_dim: int = 8
    pose_sigma: float = 0.7
    light_dim: int = 4
    light_sigma: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.num_identities < 1 or self.views_per_identity < 1:
            raise ValueError("need at least one identity and one view")
        if self.pose_dim < 0 or self.light_dim < 0 or self.identity_dim < 2:
            raise ValueError("identity subspace must have at least 2 dimensions")
        if min(self.view_noise_sigma, self.drift_sigma, self.pose_sigma, self.light_sigma) < 0:
            raise ValueError("sigmas must be non-negative")

    @property
    def identity_dim(self) -> int:
        return self.input_dim - self.pose_dim - self.light_dim

    @property
    def pose_dims(self) -> slice:
        return slice(self.identity_dim, self.identity_dim + self.pose_dim)

    @property
    def light_dims(self) -> slice:
        return slice(self.input_dim - self.light_dim, self.input_dim)


@dataclass(frozen=True)
class PairDataset:
    view_a: np.ndarray
    view_b: np.ndarray
    identity: np.ndarray
    source_mode: str = "temporal"

    def __post_init__(self):
        if self.view_a.ndim != 2 or self.view_a.shape[0] == 0:
            raise ValueError("pair dataset must be non-empty")
        if self.view_b.shape != self.view_a.shape or self.identity.shape != (self.view_a.shape[0],):
            raise ValueError("views and identities disagree in shape")
        if self.source_mode not in PAIR_MODES:
            raise ValueError(f"unknown pair source {self.source_mode!r}")

    def __len__(self) -> int:
        return len(self.identity)

    @property
    def input_dim(self) -> int:
        return self.view_a.shape[1]


def _prototypes(cfg: SynthConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    p = rng.standard_normal((n, cfg.identity_dim))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    return np.hstack([p, np.zeros((n, cfg.input_dim - cfg.identity_dim))])


def _block(cfg: SynthConfig, rng: np.random.Generator, n: int, dims: slice, sigma: float) -> np.ndarray:
    out = np.zeros((n, cfg.input_dim))
    out[:, dims] = sigma * rng.standard_normal((n, dims.stop - dims.start))
    return out


def synth_dataset(cfg: SynthConfig) -> tuple[PairDataset, np.ndarray]:
    """Temporal pairs for ``num_identities * views_per_identity`` frames."""
    rng = np.random.default_rng(cfg.seed)
    protos = _prototypes(cfg, rng, cfg.num_identities)
    labels = np.repeat(np.arange(cfg.num_identities), cfg.views_per_identity)
    m, d = len(labels), cfg.input_dim
    pose_a = _block(cfg, rng, m, cfg.pose_dims, cfg.pose_sigma)
    pose_b = _block(cfg, rng, m, cfg.pose_dims, cfg.pose_sigma)
    light = _block(cfg, rng, m, cfg.light_dims, cfg.light_sigma)
    view_a = protos[labels] + pose_a + light + cfg.view_noise_sigma * rng.standard_normal((m, d))
    view_b = view_a + cfg.drift_sigma * rng.standard_normal((m, d)) + (pose_b - pose_a)
    return PairDataset(view_a, view_b, labels, "temporal"), labels


def augment_view(x, sigma: float, seed, dropout: float = 0.1,
                 scale_range: tuple[float, float] = (0.8, 1.25),
                 jitter_sigma: float = 0.0, jitter_dims: slice | None = None) -> np.ndarray:
    """Gaussian noise, optional colour jitter, coordinate dropout, positive rescale.

    Colour jitter adds N(0, jitter_sigma^2) to the ``jitter_dims`` block only.
    ``x`` may be one vector or a batch (rows augmented independently).
    ``seed`` is an int or a ``numpy.random.Generator``.
    """
    if sigma < 0 or jitter_sigma < 0:
        raise ValueError("sigma must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = np.asarray(x, dtype=np.float64)
    batch = np.atleast_2d(x)
    out = batch + sigma * rng.standard_normal(batch.shape)
    if jitter_sigma > 0 and jitter_dims is not None:
        block = out[:, jitter_dims]
        out[:, jitter_dims] = block + jitter_sigma * rng.standard_normal(block.shape)
    out = out * (rng.random(batch.shape) >= dropout)
    out = out * rng.uniform(scale_range[0], scale_range[1], size=(batch.shape[0], 1))
    return out.reshape(x.shape)


def build_pairs(base: PairDataset, mode: str, aug_sigma: float = 0.1, seed=0,
                jitter_sigma: float = 0.0, jitter_dims: slice | None = None) -> PairDataset:
    """Switch the positive-pair source.

    ``augmented`` pairs two augmentations of ``view_a`` (``view_b`` is never
    read); ``combined`` concatenates the temporal and augmented sets.
    """
    if base.source_mode != "temporal":
        raise ValueError("build_pairs expects a temporal-mode dataset")
    if mode not in PAIR_MODES:
        raise ValueError(f"unknown pair source {mode!r}")
    if mode == "temporal":
        return base
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    a1 = augment_view(base.view_a, aug_sigma, rng, jitter_sigma=jitter_sigma, jitter_dims=jitter_dims)
    a2 = augment_view(base.view_a, aug_sigma, rng, jitter_sigma=jitter_sigma, jitter_dims=jitter_dims)
    if mode == "augmented":
        return PairDataset(a1, a2, base.identity.copy(), "augmented")
    return PairDataset(np.vstack([base.view_a, a1]), np.vstack([base.view_b, a2]),
                       np.concatenate([base.identity, base.identity]), "combined")


def eval_config(cfg: SynthConfig, offset: int = 10_000) -> SynthConfig:
    """Same generator with unseen identities (a disjoint seed)."""
    return replace(cfg, seed=cfg.seed + offset)
