"""Self-distillation with a centered, sharpened teacher (DINO)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._base import LossInputError, LossOutput, as_batch, logsumexp, softmax


@dataclass(frozen=True)
class DinoConfig:
    student_temp: float = 0.1
    teacher_temp: float = 0.04
    center: np.ndarray | None = None
    center_momentum: float = 0.9

    def __post_init__(self):
        if self.student_temp <= 0 or self.teacher_temp <= 0:
            raise ValueError("DINO temperatures must be positive")
        if not 0.0 <= self.center_momentum <= 1.0:
            raise ValueError("center_momentum must lie in [0, 1]")
        if self.center is not None and not np.all(np.isfinite(self.center)):
            raise ValueError("center must be finite")


def dino(student_views, teacher_views, cfg: DinoConfig = DinoConfig()):
    """Cross-entropy between teacher and student softmaxes over all cross-view pairs.

    Teacher view ``t`` and student view ``s`` are paired whenever ``t != s``
    (teacher views are the leading, global student views). Returns the loss
    and the updated teacher center; teacher logits are stop-gradient.
    """
    students = [as_batch(s, f"student_views[{i}]") for i, s in enumerate(student_views)]
    teachers = [as_batch(t, f"teacher_views[{i}]") for i, t in enumerate(teacher_views)]
    if len(students) + len(teachers) < 2 or not students or not teachers:
        raise LossInputError("DINO needs at least one teacher and one student view and two views in total")
    shape = students[0].shape
    if any(v.shape != shape for v in students + teachers):
        raise LossInputError("all DINO views must share one N x K shape")
    n, k = shape
    center = np.zeros(k) if cfg.center is None else np.asarray(cfg.center, dtype=np.float64)
    if center.shape != (k,):
        raise LossInputError(f"center has length {center.size}, logits have K={k}")

    pairs = [(t, s) for t in range(len(teachers)) for s in range(len(students)) if t != s]
    if not pairs:
        raise LossInputError("no teacher/student pair with distinct view indices")

    P = [softmax((t - center) / cfg.teacher_temp, axis=1) for t in teachers]
    logQ = [s / cfg.student_temp - logsumexp(s / cfg.student_temp, axis=1)[:, None] for s in students]
    Q = [np.exp(lq) for lq in logQ]

    total = 0.0
    grads = np.zeros((len(students), n, k))
    scale = 1.0 / (n * len(pairs))
    for t, s in pairs:
        total += -np.sum(P[t] * logQ[s])
        grads[s] += (Q[s] - P[t]) * scale / cfg.student_temp
    value = total * scale

    teacher_mean = np.mean(np.vstack(teachers), axis=0)
    new_center = cfg.center_momentum * center + (1.0 - cfg.center_momentum) * teacher_mean
    out = LossOutput(float(value), {"student_views": grads,
                                    "teacher_views": np.zeros((len(teachers), n, k))})
    return out, new_center
