"""Synthetic replay of a mined pair manifest.

Mined pairs carry no pixels, so each detection gets a synthetic view keyed
by its (file, det) identity. Detections linked by pairs form one putative
individual (connected component); every component gets its own prototype
and lighting, every detection its own pose. Mining mistakes that link two
animals therefore survive into the replay as merged identities.
"""

from __future__ import annotations

import hashlib

import numpy as np

from ..trapstream import PairManifest
from .synth import PairDataset, SynthConfig, _block, _prototypes


def _key_seed(base_seed: int, key: tuple[str, int]) -> np.random.Generator:
    digest = hashlib.sha256(f"{base_seed}|{key[0]}|{key[1]}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _components(manifest: PairManifest) -> dict[tuple[str, int], int]:
    parent: dict = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p in manifest.pairs:
        ra, rb = find(p.anchor), find(p.partner)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = sorted({find(k) for k in parent})
    index = {r: i for i, r in enumerate(roots)}
    return {k: index[find(k)] for k in sorted(parent)}


def replay_manifest(manifest: PairManifest, cfg: SynthConfig) -> PairDataset:
    """Temporal-mode dataset with one row per mined pair."""
    if not manifest.pairs:
        raise ValueError("manifest has no pairs to replay")
    comp = _components(manifest)
    n_comp = max(comp.values()) + 1
    rng = np.random.default_rng(cfg.seed)
    protos = _prototypes(cfg, rng, n_comp)
    light = _block(cfg, rng, n_comp, cfg.light_dims, cfg.light_sigma)

    def view(key):
        r = _key_seed(cfg.seed, key)
        c = comp[key]
        pose = _block(cfg, r, 1, cfg.pose_dims, cfg.pose_sigma)[0]
        return protos[c] + light[c] + pose + cfg.view_noise_sigma * r.standard_normal(cfg.input_dim)

    views = {k: view(k) for k in comp}
    a = np.array([views[p.anchor] for p in manifest.pairs])
    b = np.array([views[p.partner] for p in manifest.pairs])
    ids = np.array([comp[p.anchor] for p in manifest.pairs], dtype=np.int64)
    return PairDataset(a, b, ids, "temporal")
