"""L-inf PGD on the training loss and flip-target attacks on predicted depth.

Strengths and step sizes are in 1/255 pixel units.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..ndiff import Tensor, backward

log = logging.getLogger(__name__)

PGD_EPSILONS = (0.25, 0.5, 1, 2, 4, 8, 16, 32)
FLIP_EPSILONS = (1, 2, 4)
LOSS_SOURCES = ("training_loss", "flip_rmse_h", "flip_rmse_v")


def pgd_iterations(epsilon: float) -> int:
    """min(eps + 4, ceil(1.25 * eps)); at least one step for eps > 0."""
    if epsilon <= 0:
        return 0
    return max(1, int(min(epsilon + 4, math.ceil(1.25 * epsilon - 1e-12))))


@dataclass
class AttackConfig:
    epsilon: float
    step_size: float = 1.0
    loss_source: str = "training_loss"

    def __post_init__(self):
        if self.loss_source not in LOSS_SOURCES:
            raise ValueError(f"loss_source must be one of {LOSS_SOURCES}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        allowed = PGD_EPSILONS if self.loss_source == "training_loss" else FLIP_EPSILONS
        if self.epsilon and self.epsilon not in allowed:
            warnings.warn(f"epsilon {self.epsilon} outside the evaluated set {allowed}", stacklevel=2)

    @property
    def iterations(self) -> int:
        return pgd_iterations(self.epsilon)


def pgd(loss_fn: Callable, images: Sequence[np.ndarray], cfg: AttackConfig, ascend: bool = True) -> list:
    """Signed-gradient steps projected onto the eps/255 L-inf ball and [0, 1].

    ``loss_fn`` maps a list of image Tensors to a scalar Tensor. ``ascend``
    False runs descent (targeted attacks).
    """
    x0 = [np.asarray(im, dtype=float) for im in images]
    if cfg.epsilon == 0:
        return [x.copy() for x in x0]
    eps = cfg.epsilon / 255.0
    step = cfg.step_size / 255.0
    sign = 1.0 if ascend else -1.0
    x = [v.copy() for v in x0]
    log.info("pgd: eps=%g, %d iterations", cfg.epsilon, cfg.iterations)
    for _ in range(cfg.iterations):
        ts = [Tensor(v, requires_grad=True) for v in x]
        loss = loss_fn(ts)
        backward(loss)
        for i, t in enumerate(ts):
            g = t.grad if t.grad is not None else np.zeros_like(x[i])
            v = x[i] + sign * step * np.sign(g)
            v = np.clip(v, x0[i] - eps, x0[i] + eps)
            x[i] = np.clip(v, 0.0, 1.0)
    return x


def training_loss_fn(model, triplet, loss_cfg=None, intrinsics=None, convention: str = "temporal") -> Callable:
    """Loss on the frames of one triplet (None frames stay absent, so boundary
    triplets use the only feasible pair). Runs the nets in eval mode."""
    from ..train import batch_loss

    present = [f is not None for f in (triplet.prev, triplet.target, triplet.next)]

    def fn(frames):
        it = iter(frames)
        prev, target, nxt = (next(it) if ok else None for ok in present)
        model.eval()
        loss, _ = batch_loss(model, [triplet.with_frames(prev, target, nxt)], loss_cfg, intrinsics, convention)
        return loss

    return fn


def pgd_attack(model, triplet, cfg: AttackConfig, loss_cfg=None, intrinsics=None, convention: str = "temporal"):
    """Adversarial copy of ``triplet``: all present frames perturbed to raise the training loss."""
    frames = [f for f in (triplet.prev, triplet.target, triplet.next) if f is not None]
    adv = iter(pgd(training_loss_fn(model, triplet, loss_cfg, intrinsics, convention), frames, cfg))
    prev = next(adv) if triplet.prev is not None else None
    target = next(adv)
    nxt = next(adv) if triplet.next is not None else None
    return triplet.with_frames(prev, target, nxt)


def flip(depth: np.ndarray, direction: str) -> np.ndarray:
    if direction in ("horizontal", "h"):
        return depth[:, ::-1].copy()
    if direction in ("vertical", "v"):
        return depth[::-1, :].copy()
    raise ValueError("direction must be 'horizontal' or 'vertical'")


def flip_loss_fn(model, target_depth: np.ndarray) -> Callable:
    goal = Tensor(target_depth)

    def fn(frames):
        model.eval()
        d = model.depth_tensor(frames[0])
        return (((d - goal) * (d - goal)).mean() + 1e-12).sqrt()

    return fn


def flip_attack(model, image: np.ndarray, direction: str, cfg: AttackConfig) -> np.ndarray:
    """Push the prediction towards the flipped clean prediction by PGD descent."""
    target = flip(model.predict_depth(image), direction)
    return pgd(flip_loss_fn(model, target), [image], cfg, ascend=False)[0]


def flip_rmse(model, image: np.ndarray, target_depth: np.ndarray) -> float:
    d = model.predict_depth(image)
    return float(np.sqrt(np.mean((d - target_depth) ** 2)))
