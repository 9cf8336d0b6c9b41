"""Self-supervised and supervised objectives with analytic gradients.

Every loss takes plain arrays (rows are embeddings), works in float64 and
returns a :class:`LossOutput` whose ``grads`` mirror the argument names.
"""

from ._base import (BarlowConfig, ContrastiveConfig, LossInputError, LossOutput,
                    SupervisedConfig, l2_normalize)
from .contrastive import dcl, dclw, nt_xent, nt_xent_queue, supcon, vmf_weights
from .distill import DinoConfig, dino
from .gradcheck import CASES, DEFAULT_METHODS, GradCheckResult, check_method, grad_check
from .momentum import MomentumState, ema_update, queue_push
from .siamese import barlow_twins, byol, fastsiam, negative_cosine
from .supervised import arcface, scaled_cosine_ce, triplet, triplet_hinge

__all__ = [
    "BarlowConfig", "ContrastiveConfig", "DinoConfig", "LossInputError", "LossOutput",
    "MomentumState", "SupervisedConfig", "GradCheckResult", "CASES", "DEFAULT_METHODS",
    "arcface", "barlow_twins", "byol", "check_method", "dcl", "dclw", "dino", "ema_update",
    "fastsiam", "grad_check", "l2_normalize", "negative_cosine", "nt_xent", "nt_xent_queue",
    "queue_push", "scaled_cosine_ce", "supcon", "triplet", "triplet_hinge", "vmf_weights",
]
