"""Label-driven baselines: ArcFace and triplet margin loss."""

from __future__ import annotations

import numpy as np

from ._base import (LossInputError, LossOutput, SupervisedConfig, as_batch, l2_normalize,
                    l2_normalize_backward, logsumexp, same_shape, softmax)

ARCCOS_CLIP = 1e-7


def arcface(z, labels, class_centers, cfg: SupervisedConfig = SupervisedConfig()) -> LossOutput:
    """Additive angular margin softmax over cosine similarities to class centers.

    Grads are returned for both ``z`` and ``class_centers``. Where the target
    cosine is clipped for arccos the margin term has zero slope.
    """
    z = as_batch(z, "z")
    centers = as_batch(class_centers, "class_centers")
    if centers.shape[1] != z.shape[1]:
        raise LossInputError("embedding and class-center dimensions differ")
    labels = np.asarray(labels)
    n, n_cls = z.shape[0], centers.shape[0]
    if labels.shape != (n,) or not np.issubdtype(labels.dtype, np.integer):
        raise LossInputError(f"labels must be {n} integers")
    bad = labels[(labels < 0) | (labels >= n_cls)]
    if bad.size:
        raise LossInputError(f"labels out of range [0, {n_cls}): {sorted(set(bad.tolist()))}")

    s, margin = cfg.arcface_scale, cfg.arcface_margin
    zu, zn = l2_normalize(z, "z")
    cu, cn = l2_normalize(centers, "class_centers")
    cos = zu @ cu.T
    rows = np.arange(n)
    cy = cos[rows, labels]
    clipped = np.clip(cy, -1.0 + ARCCOS_CLIP, 1.0 - ARCCOS_CLIP)
    theta = np.arccos(clipped)
    logits = s * cos
    logits[rows, labels] = s * np.cos(theta + margin)
    value = float(np.mean(logsumexp(logits, axis=1) - logits[rows, labels]))

    dlogits = softmax(logits, axis=1)
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    dcos = s * dlogits
    inside = (cy > -1.0 + ARCCOS_CLIP) & (cy < 1.0 - ARCCOS_CLIP)
    slope = np.where(inside, np.sin(theta + margin) / np.sin(theta), 0.0)
    dcos[rows, labels] *= slope

    return LossOutput(value, {
        "z": l2_normalize_backward(zu, zn, dcos @ cu),
        "class_centers": l2_normalize_backward(cu, cn, dcos.T @ zu),
    })


def scaled_cosine_ce(z, labels, class_centers, scale: float) -> float:
    """Softmax cross entropy on ``scale * cos``: ArcFace with zero margin."""
    zu, _ = l2_normalize(as_batch(z, "z"))
    cu, _ = l2_normalize(as_batch(class_centers, "class_centers"))
    logits = scale * zu @ cu.T
    labels = np.asarray(labels)
    return float(np.mean(logsumexp(logits, axis=1) - logits[np.arange(len(labels)), labels]))


def _triplet_parts(anchor, positive, negative):
    a, p, n = (as_batch(v, name) for v, name in
               ((anchor, "anchor"), (positive, "positive"), (negative, "negative")))
    same_shape(anchor=a, positive=p, negative=n)
    return [l2_normalize(v, name) for v, name in ((a, "anchor"), (p, "positive"), (n, "negative"))]


def triplet_hinge(anchor, positive, negative, cfg: SupervisedConfig = SupervisedConfig()) -> np.ndarray:
    """Per-row hinge argument ``d(a,p) - d(a,n) + margin`` (before clamping)."""
    (au, _), (pu, _), (nu, _) = _triplet_parts(anchor, positive, negative)
    return (np.linalg.norm(au - pu, axis=1) - np.linalg.norm(au - nu, axis=1)
            + cfg.triplet_margin)


def triplet(anchor, positive, negative, cfg: SupervisedConfig = SupervisedConfig()) -> LossOutput:
    """Mean triplet margin loss on unit-normalized rows, Euclidean distance.

    The subgradient at the hinge (argument exactly 0) is taken as 0, as is
    the gradient of a zero distance.
    """
    (au, an), (pu, pn), (nu, nn_) = _triplet_parts(anchor, positive, negative)
    dap_vec, dan_vec = au - pu, au - nu
    dap = np.linalg.norm(dap_vec, axis=1)
    dan = np.linalg.norm(dan_vec, axis=1)
    h = dap - dan + cfg.triplet_margin
    active = (h > 0).astype(np.float64) / len(h)

    with np.errstate(invalid="ignore", divide="ignore"):
        gp = np.where(dap[:, None] > 0, dap_vec / dap[:, None], 0.0) * active[:, None]
        gn = np.where(dan[:, None] > 0, dan_vec / dan[:, None], 0.0) * active[:, None]
    return LossOutput(float(np.mean(np.maximum(h, 0.0))), {
        "anchor": l2_normalize_backward(au, an, gp - gn),
        "positive": l2_normalize_backward(pu, pn, -gp),
        "negative": l2_normalize_backward(nu, nn_, gn),
    })
