"""Negative-free objectives: negative cosine (BYOL, FastSiam) and Barlow Twins."""

from __future__ import annotations

import numpy as np

from ._base import (BarlowConfig, LossInputError, LossOutput, as_batch, l2_normalize,
                    l2_normalize_backward, same_shape)


def negative_cosine(p, z_target) -> LossOutput:
    """Mean of -cos(p_i, z_i). ``z_target`` is stop-gradient."""
    p, z = as_batch(p, "p"), as_batch(z_target, "z_target")
    same_shape(p=p, z_target=z)
    pu, pn = l2_normalize(p, "p")
    zu, _ = l2_normalize(z, "z_target")
    n = p.shape[0]
    value = -float(np.sum(pu * zu)) / n
    return LossOutput(value, {"p": l2_normalize_backward(pu, pn, -zu / n),
                              "z_target": np.zeros_like(z)})


def byol(pA, zB_target, pB, zA_target) -> LossOutput:
    """Symmetrized BYOL loss: each view's prediction regresses the other view's target."""
    ab = negative_cosine(pA, zB_target)
    ba = negative_cosine(pB, zA_target)
    return LossOutput(ab.value + ba.value, {
        "pA": ab.grads["p"], "zB_target": ab.grads["z_target"],
        "pB": ba.grads["p"], "zA_target": ba.grads["z_target"],
    })


def fastsiam(p, targets) -> LossOutput:
    """Negative cosine between ``p`` and the mean of the unit-normalized target views."""
    if len(targets) == 0:
        raise LossInputError("fastsiam needs at least one target view")
    p = as_batch(p, "p")
    stacked = np.stack([as_batch(t, f"targets[{i}]") for i, t in enumerate(targets)])
    if stacked.shape[1:] != p.shape:
        raise LossInputError(f"target views have shape {stacked.shape[1:]}, expected {p.shape}")
    mean_target = np.mean([l2_normalize(t, "target")[0] for t in stacked], axis=0)
    out = negative_cosine(p, mean_target)
    return LossOutput(out.value, {"p": out.grads["p"], "targets": np.zeros_like(stacked)})


def _standardize(z, eps):
    mu = z.mean(axis=0)
    xc = z - mu
    var = np.mean(xc * xc, axis=0)
    s = np.sqrt(var + eps)
    return xc / s, xc, var, s


def _standardize_backward(dy, xc, var, s, eps):
    n = dy.shape[0]
    dvar = np.sum(dy * xc, axis=0) * -0.5 / (var + eps) ** 1.5
    return (dy - dy.mean(axis=0)) / s + dvar * 2.0 * xc / n


def barlow_twins(zA, zB, cfg: BarlowConfig = BarlowConfig()) -> LossOutput:
    """Redundancy-reduction loss on the cross-correlation of batch-standardized views.

    Columns are standardized with the biased batch variance and ``eps`` added
    under the square root, so a constant column maps to zero instead of
    raising. Rows are not L2-normalized.
    """
    zA, zB = as_batch(zA, "zA"), as_batch(zB, "zB")
    same_shape(zA=zA, zB=zB)
    n = zA.shape[0]
    if n < 2:
        raise LossInputError("barlow_twins needs N >= 2 to standardize columns")
    a, xa, va, sa = _standardize(zA, cfg.eps)
    b, xb, vb, sb = _standardize(zB, cfg.eps)
    C = a.T @ b / n
    diag = np.diag(C)
    off = C - np.diag(diag)
    value = float(np.sum((1.0 - diag) ** 2) + cfg.lambda_offdiag * np.sum(off ** 2))

    dC = 2.0 * cfg.lambda_offdiag * off + np.diag(-2.0 * (1.0 - diag))
    da = b @ dC.T / n
    db = a @ dC / n
    return LossOutput(value, {"zA": _standardize_backward(da, xa, va, sa, cfg.eps),
                              "zB": _standardize_backward(db, xb, vb, sb, cfg.eps)})
