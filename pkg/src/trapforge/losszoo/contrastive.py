"""In-batch contrastive objectives: NT-Xent, its queue variant, DCL/DCLW, SupCon."""

from __future__ import annotations

import numpy as np

from ._base import (ContrastiveConfig, LossInputError, LossOutput, as_batch, l2_normalize,
                    l2_normalize_backward, logsumexp, masked_softmax, same_shape, softmax)
from .momentum import MomentumState


def _two_view(zA, zB):
    zA, zB = as_batch(zA, "zA"), as_batch(zB, "zB")
    same_shape(zA=zA, zB=zB)
    n = zA.shape[0]
    u, norms = l2_normalize(np.vstack([zA, zB]), "zA|zB")
    pos = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
    return n, u, norms, pos


def _split_grads(n, u, norms, dS, tau):
    du = (dS + dS.T) @ u / tau
    dz = l2_normalize_backward(u, norms, du)
    return {"zA": dz[:n], "zB": dz[n:]}


def nt_xent(zA, zB, cfg: ContrastiveConfig = ContrastiveConfig()) -> LossOutput:
    """Normalized temperature-scaled cross entropy over the 2N stacked views.

    Each row's positive is its partner view; every other row except itself
    is a negative.
    """
    n, u, norms, pos = _two_view(zA, zB)
    m = 2 * n
    S = u @ u.T / cfg.temperature
    off = ~np.eye(m, dtype=bool)
    rows = np.arange(m)
    losses = logsumexp(S, axis=1, where=off) - S[rows, pos]

    dS = masked_softmax(S, off)
    dS[rows, pos] -= 1.0
    dS /= m
    return LossOutput(float(losses.mean()), _split_grads(n, u, norms, dS, cfg.temperature))


def nt_xent_queue(q, k_pos, queue, cfg: ContrastiveConfig = ContrastiveConfig()) -> LossOutput:
    """InfoNCE against a queue of negatives (MoCo style).

    ``k_pos`` and the queue are stop-gradient: their grads are zero.
    """
    if isinstance(queue, MomentumState):
        queue = queue.queue
    q, k_pos = as_batch(q, "q"), as_batch(k_pos, "k_pos")
    same_shape(q=q, k_pos=k_pos)
    d = q.shape[1]
    if queue is None or np.size(queue) == 0:
        queue = np.zeros((0, d))
    else:
        queue = as_batch(queue, "queue")
    if queue.shape[1] != d:
        raise LossInputError(f"queue rows have dimension {queue.shape[1]}, expected {d}")

    tau = cfg.temperature
    qu, qn = l2_normalize(q, "q")
    ku, _ = l2_normalize(k_pos, "k_pos")
    nu = l2_normalize(queue, "queue")[0] if len(queue) else queue
    logits = np.hstack([np.sum(qu * ku, axis=1, keepdims=True), qu @ nu.T]) / tau
    losses = logsumexp(logits, axis=1) - logits[:, 0]

    dl = softmax(logits, axis=1)
    dl[:, 0] -= 1.0
    dl /= q.shape[0]
    dqu = (dl[:, :1] * ku + dl[:, 1:] @ nu) / tau
    return LossOutput(float(losses.mean()), {
        "q": l2_normalize_backward(qu, qn, dqu),
        "k_pos": np.zeros_like(k_pos),
        "queue": np.zeros_like(queue),
    })


def vmf_weights(pos_sim: np.ndarray, sigma: float) -> np.ndarray:
    """Negative von Mises-Fisher weighting of positive pairs: 2 - N softmax(s / sigma)."""
    return 2.0 - len(pos_sim) * softmax(pos_sim / sigma)


def dcl(zA, zB, cfg: ContrastiveConfig = ContrastiveConfig(), weighted: bool = False) -> LossOutput:
    """Decoupled contrastive loss; the positive never enters the denominator.

    With ``weighted`` the positive term of pair k is scaled by the vMF weight
    computed from the batch of positive cosines. The weight is differentiated
    through (it is a function of the inputs).
    """
    n, u, norms, pos = _two_view(zA, zB)
    if n < 2:
        raise LossInputError("decoupled contrastive loss needs N >= 2 pairs")
    m = 2 * n
    tau = cfg.temperature
    C = u @ u.T
    rows = np.arange(m)
    neg = ~np.eye(m, dtype=bool)
    neg[rows, pos] = False

    pair_sim = C[np.arange(n), np.arange(n) + n]
    w = vmf_weights(pair_sim, cfg.vmf_sigma) if weighted else np.ones(n)
    w_row = np.concatenate([w, w])
    losses = -w_row * C[rows, pos] / tau + logsumexp(C / tau, axis=1, where=neg)

    dC = masked_softmax(C / tau, neg) / tau
    dC[rows, pos] -= w_row / tau
    if weighted:
        # both anchors of pair k share w_k and the same positive cosine
        dw = -2.0 * pair_sim / tau
        s = softmax(pair_sim / cfg.vmf_sigma)
        dp = -n / cfg.vmf_sigma * s * (dw - np.dot(dw, s))
        dC[np.arange(n), np.arange(n) + n] += dp
    dC /= m
    return LossOutput(float(losses.mean()), _split_grads(n, u, norms, dC, 1.0))


def dclw(zA, zB, cfg: ContrastiveConfig = ContrastiveConfig()) -> LossOutput:
    """Weighted decoupled contrastive loss (the SimCLR objective used here)."""
    return dcl(zA, zB, cfg, weighted=True)


def supcon(z, labels, cfg: ContrastiveConfig = ContrastiveConfig()) -> LossOutput:
    """Supervised contrastive loss: every same-label row is a positive."""
    z = as_batch(z, "z")
    labels = np.asarray(labels)
    if labels.shape != (z.shape[0],):
        raise LossInputError(f"labels must have length {z.shape[0]}")
    n = z.shape[0]
    if n < 2:
        raise LossInputError("supcon needs N >= 2")
    off = ~np.eye(n, dtype=bool)
    P = (labels[:, None] == labels[None, :]) & off
    n_pos = P.sum(axis=1)
    if np.any(n_pos == 0):
        lonely = sorted({int(v) for v in labels[n_pos == 0]})
        raise LossInputError(f"labels without a second member in the batch: {lonely}")

    u, norms = l2_normalize(z, "z")
    S = u @ u.T / cfg.temperature
    log_prob = S - logsumexp(S, axis=1, where=off)[:, None]
    losses = -np.sum(np.where(P, log_prob, 0.0), axis=1) / n_pos

    dS = (masked_softmax(S, off) - P / n_pos[:, None]) / n
    du = (dS + dS.T) @ u / cfg.temperature
    return LossOutput(float(losses.mean()), {"z": l2_normalize_backward(u, norms, du)})
