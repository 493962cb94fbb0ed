"""Self-supervised training: Adam/AdamW, step learning-rate decay and the
per-triplet objective tying depth, ego-motion and (optionally) intrinsics."""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import losses
from .geometry import Intrinsics, invert_pose
from .ndiff import Tensor, backward, ops
from .nets.model import SfMModel

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class OptimConfig:
    kind: str = "adamw"  # "adam" or "adamw"
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    epochs: int = 20
    decay_epoch: int = 15
    decay_factor: float = 10.0
    batch_size: int = 8

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in ("adam", "adamw"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")

    @classmethod
    def for_network(cls, kind: str, **kw) -> "OptimConfig":
        """Default recipe: AdamW 1e-5 for transformer nets, Adam 1e-4 for CNNs."""
        if kind.lower() == "t":
            return cls(kind="adamw", lr=1e-5, **kw)
        return cls(kind="adam", lr=1e-4, weight_decay=0.0, **kw)


def lr_schedule(epoch: int, cfg: OptimConfig) -> float:
    """Step decay: lr for epochs < decay_epoch, lr / decay_factor afterwards (0-based)."""
    return cfg.lr if epoch < cfg.decay_epoch else cfg.lr / cfg.decay_factor


def optimizer_step(params, grads, state: dict, cfg: OptimConfig, step_index: Optional[int] = None, lr: Optional[float] = None):
    """One bias-corrected Adam(W) update on lists of arrays, in place.

    ``state`` holds ``t``, ``m`` and ``v``; it is created on first use.
    ``step_index`` (1-based) overrides the stored step count for bias
    correction. AdamW applies decoupled decay (p -= lr * wd * p) before the
    moment update.
    """
    lr = cfg.lr if lr is None else lr
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state:
        state["t"] = 0
        state["m"] = [np.zeros_like(p) for p in params]
        state["v"] = [np.zeros_like(p) for p in params]
    if len(state["m"]) != len(params):
        raise ValueError("optimizer state does not match the parameter list")
    state["t"] = state["t"] + 1 if step_index is None else int(step_index)
    t = state["t"]
    c1 = 1 - cfg.beta1**t
    c2 = 1 - cfg.beta2**t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if g is None:
            continue
        if g.shape != p.shape or m.shape != p.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
        if cfg.kind == "adamw" and cfg.weight_decay:
            p -= lr * cfg.weight_decay * p
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return params, state


class Optimizer:
    def __init__(self, params: Sequence[Tensor], cfg: OptimConfig):
        self.params = list(params)
        self.cfg = cfg
        self.lr = cfg.lr
        self.state: dict = {}

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad for p in self.params]
        for g in grads:
            if g is not None and not np.all(np.isfinite(g)):
                raise TrainingError("non-finite gradient")
        optimizer_step([p.data for p in self.params], grads, self.state, self.cfg, lr=self.lr)

    def set_epoch(self, epoch: int):
        self.lr = lr_schedule(epoch, self.cfg)


def make_optimizers(model: SfMModel, cfg: Optional[OptimConfig] = None) -> list:
    """One optimizer over everything if ``cfg`` is given, else the per-network defaults."""
    if cfg is not None:
        return [Optimizer(model.parameters(), cfg)]
    return [
        Optimizer(model.depth.parameters(), OptimConfig.for_network(model.arch[0])),
        Optimizer(model.ego.parameters(), OptimConfig.for_network(model.arch[1])),
    ]


def _mean_intrinsics(ks):
    ks = [k for k in ks if k is not None]
    if len(ks) == 1:
        return ks[0]
    return (ks[0] + ks[1]) * 0.5


POSE_CONVENTIONS = ("temporal", "direct")


def _check_finite(disps, poses, ks):
    # a diverged network would otherwise fail deep inside view synthesis
    for i, pyr in enumerate(disps):
        for s, d in enumerate(pyr):
            if not np.all(np.isfinite(d.data)):
                raise TrainingError(f"non-finite disparity at sample {i}, scale {s}")
    for j, p in enumerate(poses):
        if not np.all(np.isfinite(p.data)):
            raise TrainingError(f"non-finite pose for pair {j}")
    for j, k in enumerate(ks or []):
        if not np.all(np.isfinite(k.data)):
            raise TrainingError(f"non-finite intrinsics for pair {j}")


def batch_loss(model: SfMModel, batch: Sequence, loss_cfg: losses.LossConfig = None, intrinsics=None, convention: str = "temporal"):
    """Mean loss over a list of ImageTriplets, plus the intrinsics used per sample.

    The ego net sees (I-1, I0) and (I0, I1). Under the "temporal" convention
    both outputs mean "motion from the first frame to the second", so the
    first is inverted to give T_0->-1; under "direct" the outputs are taken
    as T_0->-1 and T_0->1 as-is. With learned intrinsics the two predictions
    are averaged; otherwise ``intrinsics`` (or each triplet's own) is used.
    """
    if convention not in POSE_CONVENTIONS:
        raise ValueError(f"pose convention must be one of {POSE_CONVENTIONS}")
    loss_cfg = loss_cfg or losses.LossConfig(min_depth=model.cfg.min_depth, max_depth=model.cfg.max_depth)
    disps = model.disparities_batch([t.target for t in batch])
    firsts, seconds, owner, backwards = [], [], [], []
    for i, t in enumerate(batch):
        if t.prev is not None:
            firsts.append(t.prev)
            seconds.append(t.target)
            owner.append(i)
            backwards.append(len(firsts) - 1)
        if t.next is not None:
            firsts.append(t.target)
            seconds.append(t.next)
            owner.append(i)
    if not firsts:
        raise TrainingError("batch has no source frames")
    poses, ks = model.pose_batch(firsts, seconds, model.learn_intrinsics)
    _check_finite(disps, poses, ks)
    if convention == "temporal":
        for j in backwards:
            poses[j] = invert_pose(poses[j])
    total, used = None, []
    for i, t in enumerate(batch):
        mine = [j for j, o in enumerate(owner) if o == i]
        if model.learn_intrinsics:
            k = _mean_intrinsics([ks[j] for j in mine])
            used.append(k.data.copy())
        else:
            k = intrinsics if intrinsics is not None else t.intrinsics
            if k is None:
                raise TrainingError(f"no intrinsics for {t.name or i}")
            used.append(k)
        term = losses.total_loss(disps[i], t.target, t.sources, k, [poses[j] for j in mine], loss_cfg)
        total = term if total is None else total + term
    return total * (1.0 / len(batch)), used


def train_step(model, batch, optimizers, loss_cfg=None, intrinsics=None, convention="temporal") -> float:
    model.train()
    for opt in optimizers:
        opt.zero_grad()
    loss, _ = batch_loss(model, batch, loss_cfg, intrinsics, convention)
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingError(f"non-finite loss {value}")
    backward(loss)
    for opt in optimizers:
        opt.step()
    return value


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    lr: float
    steps: int


def train_epoch(
    model, dataset, optimizers, epoch: int, batch_size: int = 8, loss_cfg=None, rng=None, intrinsics=None, convention="temporal"
) -> EpochStats:
    rng = rng if rng is not None else np.random.default_rng(epoch)
    for opt in optimizers:
        opt.set_epoch(epoch)
    order = rng.permutation(len(dataset))
    vals = []
    for start in range(0, len(order), batch_size):
        batch = [dataset[i] for i in order[start : start + batch_size]]
        vals.append(train_step(model, batch, optimizers, loss_cfg, intrinsics, convention))
    return EpochStats(epoch, float(np.mean(vals)), optimizers[0].lr, len(vals))


def fit(
    model: SfMModel,
    dataset,
    optim: Optional[OptimConfig] = None,
    epochs: Optional[int] = None,
    batch_size: Optional[int] = None,
    loss_cfg=None,
    out_dir=None,
    seed: int = 0,
    intrinsics=None,
    convention: str = "temporal",
) -> list:
    """Train for whole epochs, writing config.txt, metrics.csv and a checkpoint
    per epoch to ``out_dir`` when given."""
    optimizers = make_optimizers(model, optim)
    ref = optim or optimizers[0].cfg
    epochs = ref.epochs if epochs is None else epochs
    batch_size = ref.batch_size if batch_size is None else batch_size
    rng = np.random.default_rng(seed)
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        lines = [model.manifest().rstrip("\n")]
        for i, opt in enumerate(optimizers):
            lines += [f"optim{i}.{k}={v}" for k, v in asdict(opt.cfg).items()]
        lines += [f"batch_size={batch_size}", f"epochs={epochs}", f"seed={seed}", f"pose_convention={convention}"]
        (out / "config.txt").write_text("\n".join(lines) + "\n")
        with open(out / "metrics.csv", "w", newline="") as fh:
            csv.writer(fh).writerow(["epoch", "mean_loss", "lr"])
    history = []
    for epoch in range(epochs):
        stats = train_epoch(model, dataset, optimizers, epoch, batch_size, loss_cfg, rng, intrinsics, convention)
        history.append(stats)
        log.info("epoch %d loss %.5f lr %.2e", epoch, stats.mean_loss, stats.lr)
        if out:
            with open(out / "metrics.csv", "a", newline="") as fh:
                csv.writer(fh).writerow([epoch, repr(stats.mean_loss), repr(stats.lr)])
            model.save(out / f"epoch_{epoch:03d}.sfmk")
            model.save(out / "last.sfmk")
    return history
