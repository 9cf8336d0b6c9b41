"""Central finite-difference verification of analytic loss gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from ._base import BarlowConfig, ContrastiveConfig, LossOutput, SupervisedConfig
from .contrastive import dclw, nt_xent, nt_xent_queue, supcon
from .distill import DinoConfig, dino
from .siamese import barlow_twins, byol, fastsiam, negative_cosine
from .supervised import arcface, triplet, triplet_hinge

KINK_TOL = 1e-6


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_input: str | None
    worst_index: tuple | None
    stop_gradient_ok: bool
    checked: int
    skipped: int

    def passed(self, tolerance: float) -> bool:
        return self.stop_gradient_ok and self.max_rel_error <= tolerance


def _value(out) -> float:
    if isinstance(out, tuple):
        out = out[0]
    return out.value if isinstance(out, LossOutput) else float(out)


def grad_check(loss: Callable, inputs: Mapping[str, np.ndarray], eps: float = 1e-5,
               stop_gradient: tuple[str, ...] = (), kink: Callable | None = None) -> GradCheckResult:
    """Compare ``loss(**inputs)`` gradients with central differences.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``.
    ``kink`` maps inputs to hinge arguments; coordinates whose perturbation
    lands within 1e-6 of (or across) a kink are skipped.
    """
    if not 1e-7 <= eps <= 1e-4:
        raise ValueError(f"eps must lie in [1e-7, 1e-4], got {eps}")
    x = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    out = loss(**x)
    out = out[0] if isinstance(out, tuple) else out

    stop_ok = all(np.all(np.asarray(out.grads[name]) == 0.0) for name in stop_gradient)
    worst, worst_at, checked, skipped = 0.0, (None, None), 0, 0
    for name, arr in x.items():
        if name in stop_gradient or name not in out.grads:
            continue
        analytic = np.asarray(out.grads[name])
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            f_plus = _value(loss(**x))
            h_plus = kink(**x) if kink else None
            arr[idx] = orig - eps
            f_minus = _value(loss(**x))
            h_minus = kink(**x) if kink else None
            arr[idx] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise FloatingPointError(f"non-finite loss perturbing {name}{list(idx)}")
            if kink is not None and (np.any(np.abs(h_plus) < KINK_TOL) or np.any(np.abs(h_minus) < KINK_TOL)
                                     or np.any(np.sign(h_plus) != np.sign(h_minus))):
                skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(analytic[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            checked += 1
            if rel > worst:
                worst, worst_at = rel, (name, idx)
    return GradCheckResult(worst, worst_at[0], worst_at[1], stop_ok, checked, skipped)


# -- registry used by the gradcheck command and the test-suite ---------------

@dataclass(frozen=True)
class GradCheckCase:
    loss: Callable
    make_inputs: Callable[[np.random.Generator], dict]
    stop_gradient: tuple[str, ...] = ()
    kink: Callable | None = None


def _randn(rng, *shape):
    return rng.standard_normal(shape)


def _two_views(rng, n=4, d=8):
    return {"zA": _randn(rng, n, d), "zB": _randn(rng, n, d)}


def _labels(rng, n, n_cls):
    # every class appears at least twice so supcon has positives
    base = np.repeat(np.arange(n_cls), 2)
    return rng.permutation(np.concatenate([base, rng.integers(0, n_cls, n - base.size)]))


_CCFG = ContrastiveConfig()
_SCFG = SupervisedConfig()
# s = 64 (and unit-scale DINO logits at tau_t = 0.04) saturate the softmax so
# many coordinates sit at the rounding floor; smaller scales keep them measurable.
_ARC_CHECK = SupervisedConfig(arcface_scale=8.0, arcface_margin=0.5)

CASES: dict[str, GradCheckCase] = {
    "simclr_dclw": GradCheckCase(lambda zA, zB: dclw(zA, zB, _CCFG), _two_views),
    "ntxent": GradCheckCase(lambda zA, zB: nt_xent(zA, zB, _CCFG), _two_views),
    "moco": GradCheckCase(
        lambda q, k_pos, queue: nt_xent_queue(q, k_pos, queue, _CCFG),
        lambda rng: {"q": _randn(rng, 4, 8), "k_pos": _randn(rng, 4, 8), "queue": _randn(rng, 6, 8)},
        stop_gradient=("k_pos", "queue")),
    "barlow": GradCheckCase(lambda zA, zB: barlow_twins(zA, zB, BarlowConfig()),
                            lambda rng: _two_views(rng, 6, 4)),
    "byol": GradCheckCase(
        byol, lambda rng: {k: _randn(rng, 3, 4) for k in ("pA", "zB_target", "pB", "zA_target")},
        stop_gradient=("zB_target", "zA_target")),
    "fastsiam": GradCheckCase(
        lambda p, targets: fastsiam(p, targets),
        lambda rng: {"p": _randn(rng, 4, 8), "targets": _randn(rng, 3, 4, 8)},
        stop_gradient=("targets",)),
    "dino": GradCheckCase(
        lambda student_views, teacher_views, center: dino(
            student_views, teacher_views, DinoConfig(center=center)),
        lambda rng: {"student_views": 0.1 * _randn(rng, 4, 3, 6),
                     "teacher_views": 0.1 * _randn(rng, 2, 3, 6), "center": 0.01 * _randn(rng, 6)},
        stop_gradient=("teacher_views",)),
    "arcface": GradCheckCase(
        lambda z, class_centers, labels: arcface(z, labels.astype(int), class_centers, _ARC_CHECK),
        lambda rng: {"z": _randn(rng, 4, 8), "class_centers": _randn(rng, 3, 8),
                     "labels": rng.integers(0, 3, 4).astype(float)}),
    "triplet": GradCheckCase(
        lambda anchor, positive, negative: triplet(anchor, positive, negative, _SCFG),
        lambda rng: {k: _randn(rng, 4, 8) for k in ("anchor", "positive", "negative")},
        kink=lambda anchor, positive, negative: triplet_hinge(anchor, positive, negative, _SCFG)),
    "supcon": GradCheckCase(
        lambda z, labels: supcon(z, labels.astype(int), _CCFG),
        lambda rng: {"z": _randn(rng, 6, 8), "labels": _labels(rng, 6, 2).astype(float)}),
    "negative_cosine": GradCheckCase(
        negative_cosine, lambda rng: {"p": _randn(rng, 4, 8), "z_target": _randn(rng, 4, 8)},
        stop_gradient=("z_target",)),
}

# the ten training objectives; negative_cosine is covered inside byol/fastsiam
DEFAULT_METHODS = ("simclr_dclw", "ntxent", "moco", "barlow", "byol",
                   "fastsiam", "dino", "arcface", "triplet", "supcon")


def check_method(method: str, trials: int = 20, seed: int = 0, eps: float = 1e-5) -> GradCheckResult:
    """Worst result over ``trials`` random double-precision inputs."""
    case = CASES[method]
    rng = np.random.default_rng(seed)
    worst, stop_ok, checked, skipped = None, True, 0, 0
    for _ in range(trials):
        res = grad_check(case.loss, case.make_inputs(rng), eps, case.stop_gradient, case.kink)
        stop_ok &= res.stop_gradient_ok
        checked += res.checked
        skipped += res.skipped
        if worst is None or res.max_rel_error > worst.max_rel_error:
            worst = res
    worst.stop_gradient_ok, worst.checked, worst.skipped = stop_ok, checked, skipped
    return worst
