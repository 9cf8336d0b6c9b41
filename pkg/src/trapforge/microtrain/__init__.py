"""Small encoder trained with manual backprop on synthetic identity pairs."""

from .experiments import efficacy, open_world_gallery, open_world_map, pair_source_ablation
from .model import EncoderParams, Forward, backward, embed, forward, init_params
from .replay import replay_manifest
from .synth import PAIR_MODES, PairDataset, SynthConfig, augment_view, build_pairs, synth_dataset
from .train import (METHODS, TrainConfig, TrainingDiverged, TrainReport, TrainState,
                    loss_and_grads, make_batch, train)

__all__ = [
    "EncoderParams", "Forward", "METHODS", "PAIR_MODES", "PairDataset", "SynthConfig",
    "TrainConfig", "TrainReport", "TrainState", "TrainingDiverged", "augment_view", "backward",
    "build_pairs", "efficacy", "embed", "forward", "init_params", "loss_and_grads", "make_batch",
    "open_world_gallery", "open_world_map", "pair_source_ablation", "replay_manifest", "synth_dataset", "train",
]
