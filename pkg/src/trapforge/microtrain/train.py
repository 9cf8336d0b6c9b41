"""Objectives wired to the encoder and a seeded minibatch SGD loop."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .. import losszoo as lz
from .model import EncoderParams, add_grads, backward, forward, init_params
from .synth import PairDataset, augment_view

METHODS = ("simclr_dclw", "ntxent", "moco", "barlow", "byol",
           "fastsiam", "dino", "arcface", "triplet", "supcon")
CONTRASTIVE = ("simclr_dclw", "ntxent", "moco", "supcon")
# negative-cosine gradients scale like 1/N per row and need larger steps
LR_OVERRIDES = {"byol": 1.0, "fastsiam": 3.0}
TARGET_NETWORK = ("byol", "moco", "dino")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, value: float):
        self.step = step
        super().__init__(f"non-finite loss {value} at step {step}")


@dataclass(frozen=True)
class TrainConfig:
    method: str = "simclr_dclw"
    learning_rate: float | None = None
    batch_size: int = 64
    steps: int = 500
    seed: int = 0
    hidden_dim: int = 64
    embed_dim: int = 16
    dino_out_dim: int = 32
    aug_sigma: float = 0.1
    local_sigma: float = 0.3
    contrastive: lz.ContrastiveConfig = lz.ContrastiveConfig()
    barlow: lz.BarlowConfig = lz.BarlowConfig()
    supervised: lz.SupervisedConfig = lz.SupervisedConfig()
    dino: lz.DinoConfig = lz.DinoConfig()
    ema_momentum: float = 0.99
    queue_size: int = 4096

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.learning_rate is not None and not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")

    @property
    def lr(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        if self.method in LR_OVERRIDES:
            return LR_OVERRIDES[self.method]
        return 0.5 if self.method in CONTRASTIVE else 0.1

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("method", "batch_size", "steps", "seed", "hidden_dim",
                                              "embed_dim", "dino_out_dim", "aug_sigma", "local_sigma",
                                              "ema_momentum", "queue_size")}
        out["learning_rate"] = self.lr
        out["contrastive"] = vars(self.contrastive).copy()
        out["barlow"] = vars(self.barlow).copy()
        out["supervised"] = vars(self.supervised).copy()
        out["dino"] = {k: v for k, v in vars(self.dino).items() if k != "center"}
        return out


@dataclass
class TrainState:
    """Everything besides the online parameters that evolves during training."""
    target: EncoderParams | None = None
    momentum: lz.MomentumState | None = None
    center: np.ndarray | None = None


@dataclass
class Batch:
    xa: np.ndarray
    xb: np.ndarray
    labels: np.ndarray
    extra: list[np.ndarray] = field(default_factory=list)


@dataclass
class TrainReport:
    loss_trace: list[float]
    params: EncoderParams
    elapsed_seconds: float
    config: dict = field(default_factory=dict)
    steps_per_epoch: int = 1

    def epoch_means(self) -> list[float]:
        k = self.steps_per_epoch
        trace = self.loss_trace
        return [float(np.mean(trace[i:i + k])) for i in range(0, len(trace), k)]

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {"config": self.config, "loss_trace": self.loss_trace,
               "steps_per_epoch": self.steps_per_epoch, "params": self.params.to_dict()}
        if include_timing:
            out["elapsed_seconds"] = self.elapsed_seconds
        return out


def init_for(cfg: TrainConfig, input_dim: int, num_classes: int | None = None) -> EncoderParams:
    head = {"byol": cfg.embed_dim, "fastsiam": cfg.embed_dim, "dino": cfg.dino_out_dim}.get(cfg.method)
    classes = num_classes if cfg.method == "arcface" else None
    return init_params(input_dim, cfg.hidden_dim, cfg.embed_dim, cfg.seed, head, classes)


def init_state(cfg: TrainConfig, params: EncoderParams) -> TrainState:
    state = TrainState()
    if cfg.method in TARGET_NETWORK:
        state.target = params.copy()
    if cfg.method == "moco":
        state.momentum = lz.MomentumState(cfg.ema_momentum, cfg.queue_size, np.zeros((0, cfg.embed_dim)))
    if cfg.method == "dino":
        state.center = np.zeros(cfg.dino_out_dim)
    return state


def make_batch(cfg: TrainConfig, xa, xb, labels, rng: np.random.Generator) -> Batch:
    """Draw the stochastic extra views a method needs, so the loss itself is deterministic."""
    extra = []
    if cfg.method == "fastsiam":
        extra = [augment_view(xa, cfg.aug_sigma, rng), augment_view(xb, cfg.aug_sigma, rng)]
    elif cfg.method == "dino":
        extra = [augment_view(xa, cfg.local_sigma, rng), augment_view(xb, cfg.local_sigma, rng)]
    return Batch(np.asarray(xa), np.asarray(xb), np.asarray(labels), extra)


def _different_label_partner(labels: np.ndarray) -> np.ndarray:
    n = len(labels)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        for step in range(1, n):
            j = (i + step) % n
            if labels[j] != labels[i]:
                out[i] = j
                break
        else:
            raise ValueError("triplet batch needs at least two identities")
    return out


def loss_and_grads(cfg: TrainConfig, params: EncoderParams, batch: Batch, state: TrainState,
                   stop_params: EncoderParams | None = None) -> tuple[float, EncoderParams, dict]:
    """Loss value, online-parameter gradients and state updates for one batch.

    Target/teacher branches are evaluated with ``state.target`` and never
    enter backward. FastSiam's targets come from the online network itself;
    they are computed with ``stop_params`` (default ``params``) and treated
    as constants. Returned ``updates`` hold the new queue rows / center.
    """
    m = cfg.method
    fa, fb = forward(params, batch.xa), forward(params, batch.xb)
    n = len(batch.labels)
    updates: dict = {}

    if m in ("simclr_dclw", "ntxent", "barlow"):
        fn = {"simclr_dclw": lambda a, b: lz.dclw(a, b, cfg.contrastive),
              "ntxent": lambda a, b: lz.nt_xent(a, b, cfg.contrastive),
              "barlow": lambda a, b: lz.barlow_twins(a, b, cfg.barlow)}[m]
        out = fn(fa.z, fb.z)
        grads = add_grads(backward(params, fa, out.grads["zA"]), backward(params, fb, out.grads["zB"]))
    elif m in ("supcon", "arcface"):
        z = np.vstack([fa.z, fb.z])
        labels = np.concatenate([batch.labels, batch.labels])
        if m == "supcon":
            out = lz.supcon(z, labels, cfg.contrastive)
        else:
            out = lz.arcface(z, labels, params.centers, cfg.supervised)
        dz = out.grads["z"]
        grads = add_grads(backward(params, fa, dz[:n]), backward(params, fb, dz[n:]))
        if m == "arcface":
            grads.centers = out.grads["class_centers"]
    elif m == "triplet":
        neg = _different_label_partner(batch.labels)
        out = lz.triplet(fa.z, fb.z, fb.z[neg], cfg.supervised)
        dzb = out.grads["positive"].copy()
        np.add.at(dzb, neg, out.grads["negative"])
        grads = add_grads(backward(params, fa, out.grads["anchor"]), backward(params, fb, dzb))
    elif m == "byol":
        ta, tb = forward(state.target, batch.xa), forward(state.target, batch.xb)
        out = lz.byol(fa.p, tb.z, fb.p, ta.z)
        grads = add_grads(backward(params, fa, dp=out.grads["pA"]), backward(params, fb, dp=out.grads["pB"]))
    elif m == "moco":
        k = forward(state.target, batch.xb).z
        out = lz.nt_xent_queue(fa.z, k, state.momentum.queue, cfg.contrastive)
        grads = backward(params, fa, out.grads["q"])
        updates["queue_rows"] = lz.l2_normalize(k)[0]
    elif m == "fastsiam":
        fwds = [fa, fb] + [forward(params, x) for x in batch.extra]
        frozen = params if stop_params is None else stop_params
        targets = [forward(frozen, x).z for x in [batch.xa, batch.xb] + batch.extra]
        value, grads = 0.0, params.zeros_like()
        for i, f in enumerate(fwds):
            o = lz.fastsiam(f.p, [t for j, t in enumerate(targets) if j != i])
            value += o.value / len(fwds)
            grads = add_grads(grads, backward(params, f, dp=o.grads["p"] / len(fwds)))
        out = lz.LossOutput(value)
    elif m == "dino":
        fwds = [fa, fb] + [forward(params, x) for x in batch.extra]
        teacher = [forward(state.target, x).p for x in (batch.xa, batch.xb)]
        dcfg = replace(cfg.dino, center=state.center)
        out, updates["center"] = lz.dino([f.p for f in fwds], teacher, dcfg)
        grads = params.zeros_like()
        for f, g in zip(fwds, out.grads["student_views"]):
            grads = add_grads(grads, backward(params, f, dp=g))
    else:  # pragma: no cover - guarded by TrainConfig
        raise ValueError(m)
    return out.value, grads, updates


def _apply_updates(cfg: TrainConfig, params: EncoderParams, state: TrainState, updates: dict):
    if state.target is not None:
        state.target = params.with_flat(lz.ema_update(state.target.flat(), params.flat(), cfg.ema_momentum))
    if "queue_rows" in updates:
        state.momentum = lz.queue_push(state.momentum, updates["queue_rows"])
    if "center" in updates:
        state.center = updates["center"]


def train(data: PairDataset, cfg: TrainConfig, params: EncoderParams | None = None) -> TrainReport:
    """Minibatch SGD over seeded epoch permutations (last partial batch dropped)."""
    if cfg.batch_size > len(data):
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {len(data)}")
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    num_classes = int(data.identity.max()) + 1
    params = init_for(cfg, data.input_dim, num_classes) if params is None else params.copy()
    state = init_state(cfg, params)
    per_epoch = len(data) // cfg.batch_size
    trace: list[float] = []
    order = np.empty(0, dtype=np.int64)
    for step in range(cfg.steps):
        pos = step % per_epoch
        if pos == 0:
            order = rng.permutation(len(data))
        idx = order[pos * cfg.batch_size:(pos + 1) * cfg.batch_size]
        batch = make_batch(cfg, data.view_a[idx], data.view_b[idx], data.identity[idx], rng)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                value, grads, updates = loss_and_grads(cfg, params, batch, state)
        except (FloatingPointError, lz.LossInputError) as exc:
            raise TrainingDiverged(step, float("nan")) from exc
        if not np.isfinite(value):
            raise TrainingDiverged(step, value)
        lr = cfg.lr
        params = EncoderParams(**{n: v - lr * grads.arrays()[n] for n, v in params.arrays().items()})
        if not params.is_finite():
            raise TrainingDiverged(step, float("nan"))
        _apply_updates(cfg, params, state, updates)
        trace.append(float(value))
    return TrainReport(trace, params, time.perf_counter() - t0, cfg.to_dict(), per_epoch)
