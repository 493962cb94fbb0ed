"""Appearance-based training objective: SSIM + L1 photometric error,
per-pixel minimum reprojection with auto-masking, edge-aware smoothness and
the multi-scale total loss computed at full resolution."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import geometry
from .ndiff import Tensor, ops
from .nets.common import disp_to_depth


@dataclass
class LossConfig:
    alpha: float = 0.85
    smooth_weight: float = 1e-3
    num_scales: int = 4
    ssim_window: int = 3
    c1: float = 0.01**2
    c2: float = 0.03**2
    min_depth: float = 0.1
    max_depth: float = 100.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.num_scales < 1:
            raise ValueError("num_scales must be >= 1")
        if self.smooth_weight < 0:
            raise ValueError("smooth_weight must be >= 0")


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def ssim(x, y, cfg: LossConfig = None) -> Tensor:
    """Per-pixel, per-channel SSIM of two (H, W, C) images.

    Local statistics use a 3x3 mean filter over edge-replicated borders.
    """
    cfg = cfg or LossConfig()
    x, y = _t(x), _t(y)
    if x.shape != y.shape:
        raise ValueError(f"ssim: shape mismatch {x.shape} vs {y.shape}")
    k = cfg.ssim_window
    pad = k // 2
    xc = ops.pad2d(x.permute(2, 0, 1), pad, "edge")
    yc = ops.pad2d(y.permute(2, 0, 1), pad, "edge")
    mu_x = ops.avg_pool2d(xc, k, 1)
    mu_y = ops.avg_pool2d(yc, k, 1)
    sigma_x = ops.avg_pool2d(xc * xc, k, 1) - mu_x * mu_x
    sigma_y = ops.avg_pool2d(yc * yc, k, 1) - mu_y * mu_y
    sigma_xy = ops.avg_pool2d(xc * yc, k, 1) - mu_x * mu_y
    num = (mu_x * mu_y * 2 + cfg.c1) * (sigma_xy * 2 + cfg.c2)
    den = (mu_x * mu_x + mu_y * mu_y + cfg.c1) * (sigma_x + sigma_y + cfg.c2)
    return (num / den).permute(1, 2, 0)


def photometric_error(target, synth, cfg: LossConfig = None) -> Tensor:
    """(H, W) map of alpha * (1 - SSIM)/2 + (1 - alpha) * |target - synth|, channel-averaged."""
    cfg = cfg or LossConfig()
    target, synth = _t(target), _t(synth)
    if target.shape != synth.shape:
        raise ValueError(f"photometric_error: shape mismatch {target.shape} vs {synth.shape}")
    l1 = (target - synth).abs().mean(axis=2)
    if cfg.alpha == 0:
        return l1
    s = ops.clamp((1.0 - ssim(target, synth, cfg)) * 0.5, 0.0, 1.0).mean(axis=2)
    return s * cfg.alpha + l1 * (1.0 - cfg.alpha)


def min_reprojection_with_automask(
    target,
    synths: Sequence,
    sources: Sequence,
    masks: Sequence,
    cfg: LossConfig = None,
    identity_errors: Optional[Sequence[Tensor]] = None,
    return_mask: bool = False,
):
    """Mean over pixels of the per-pixel minimum warped error, keeping only
    pixels where it beats the unwarped sources and lands inside a view.

    ``identity_errors`` lets callers reuse pe(target, source) across scales.
    """
    cfg = cfg or LossConfig()
    if not synths:
        raise ValueError("at least one source frame is required")
    if not (len(synths) == len(sources) == len(masks)):
        raise ValueError("synths, sources and masks must align")
    warped = [photometric_error(target, s, cfg) for s in synths]
    if identity_errors is None:
        identity_errors = [photometric_error(target, s, cfg) for s in sources]
    h, w = warped[0].shape
    # invalid pixels must never win the minimum
    big = 1e3
    penalised = [e + Tensor(np.where(m, 0.0, big).astype(e.dtype)) for e, m in zip(warped, masks)]
    l_warp = ops.reduce_min(ops.stack(penalised, axis=0), axis=0)
    l_id = np.min(np.stack([e.data for e in identity_errors]), axis=0)
    valid = l_warp.data < big / 2
    mu = (l_warp.data < l_id) & valid
    loss = (l_warp * Tensor(mu.astype(l_warp.dtype))).mean()
    return (loss, mu) if return_mask else loss


def smoothness(disp, image) -> Tensor:
    """Edge-aware first-order smoothness of mean-normalised disparity (H, W)
    against an (H, W, C) image."""
    disp, image = _t(disp), _t(image)
    d = disp / (disp.mean() + 1e-7)
    h, w = d.shape
    total = None
    if w > 1:
        gx = (d[:, 1:] - d[:, :-1]).abs()
        ix = (image[:, 1:, :] - image[:, :-1, :]).abs().mean(axis=2)
        total = (gx * (-ix).exp()).mean()
    if h > 1:
        gy = (d[1:, :] - d[:-1, :]).abs()
        iy = (image[1:, :, :] - image[:-1, :, :]).abs().mean(axis=2)
        term = (gy * (-iy).exp()).mean()
        total = term if total is None else total + term
    if total is None:
        return d.sum() * 0.0
    return total


def downscale_image(image, factor: int) -> Tensor:
    """Box-filter downscale of an (H, W, C) image by an integer factor."""
    image = _t(image)
    if factor == 1:
        return image
    return ops.avg_pool2d(image.permute(2, 0, 1), factor, factor).permute(1, 2, 0)


def total_loss(
    disparities: Sequence,
    target,
    sources: Sequence,
    k,
    poses: Sequence,
    cfg: LossConfig = None,
) -> Tensor:
    """Multi-scale appearance loss for one target frame.

    ``disparities[s]`` is the (H/2^s, W/2^s) prediction. Each is upscaled to
    full resolution before view synthesis; smoothness uses the native-scale
    disparity against the target downscaled to that scale. ``poses[i]`` maps
    target-camera points into ``sources[i]``'s camera.
    """
    cfg = cfg or LossConfig()
    target = _t(target)
    sources = [_t(s) for s in sources]
    if len(sources) != len(poses):
        raise ValueError("one pose per source frame is required")
    h, w = target.shape[:2]
    n = min(cfg.num_scales, len(disparities))
    id_err = [photometric_error(target, s, cfg) for s in sources]
    total = None
    for scale in range(n):
        disp = disparities[scale]
        up = ops.resize_bilinear(disp, (h, w))
        depth = disp_to_depth(up, cfg.min_depth, cfg.max_depth)
        synths, masks = [], []
        for src, pose in zip(sources, poses):
            img, valid = geometry.view_synthesis(src, depth, k, pose)
            synths.append(img)
            masks.append(valid)
        term = min_reprojection_with_automask(target, synths, sources, masks, cfg, identity_errors=id_err)
        if cfg.smooth_weight > 0:
            factor = 2**scale
            img_s = downscale_image(target, factor) if disp.shape != (h, w) else target
            term = term + smoothness(disp, img_s) * (cfg.smooth_weight / factor)
        total = term if total is None else total + term
    return total * (1.0 / n)
