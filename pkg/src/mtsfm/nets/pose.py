"""Ego-motion decoder shared by both encoders, with the intrinsics branch."""
from __future__ import annotations

import numpy as np

from ..ndiff import Tensor, ops
from .dpt import Reassemble
from .layers import Conv2d, Module
from .transformer import TransformerEncoder

POSE_SCALE = 0.01
# damping on the raw intrinsics outputs; a single Adam step on the
# undamped branch moves fx/cx by several pixels and swamps depth learning
INTRINSICS_SCALE = 0.1


class PoseDecoder(Module):
    """squeeze 1x1 -> 3x3 -> 3x3 (penultimate) -> 1x1 to 6, spatial mean, x0.01.

    The intrinsics branch takes the penultimate pre-activation features,
    global-average-pools them and applies two pointwise convolutions:
    softplus for (fx, fy), identity for (cx, cy); both scaled by (W, H).
    """

    def __init__(self, in_channels, channels, rng, predict_intrinsics=False):
        super().__init__()
        self.squeeze = Conv2d(in_channels, channels, 1, rng=rng)
        self.pose0 = Conv2d(channels, channels, 3, padding=1, rng=rng)
        self.pose1 = Conv2d(channels, channels, 3, padding=1, rng=rng)
        self.pose2 = Conv2d(channels, 6, 1, rng=rng)
        self.pose2.weight.data[...] = 0
        self.pose2.bias.data[...] = 0
        self.predict_intrinsics = predict_intrinsics
        self.focal = self.principal = None
        if predict_intrinsics:
            self.focal = Conv2d(channels, 2, 1, rng=rng)
            self.principal = Conv2d(channels, 2, 1, rng=rng)
            # start at fx = softplus(0) * W and the image centre
            self.focal.weight.data[...] = 0
            self.focal.bias.data[...] = 0
            self.principal.weight.data[...] = 0
            self.principal.bias.data[...] = 0

    def forward(self, feat: Tensor, image_size, want_intrinsics: bool = None):
        want = self.predict_intrinsics if want_intrinsics is None else want_intrinsics
        if want and not self.predict_intrinsics:
            raise RuntimeError("intrinsics requested but the decoder has no intrinsics branch")
        x = ops.relu(self.squeeze(feat))
        x = ops.relu(self.pose0(x))
        pre = self.pose1(x)
        out = self.pose2(ops.relu(pre))
        n = out.shape[0]
        pose = out.mean(axis=(2, 3)).reshape(n, 6) * POSE_SCALE
        if not want:
            return pose, None
        h, w = image_size
        pooled = pre.mean(axis=(2, 3), keepdims=True)
        scale = Tensor(np.array([w, h], dtype=pre.dtype).reshape(1, 2))
        focal = ops.softplus(self.focal(pooled) * INTRINSICS_SCALE).reshape(n, 2) * scale
        centre = (self.principal(pooled) * INTRINSICS_SCALE + 0.5).reshape(n, 2) * scale
        return pose, ops.concat([focal, centre], axis=1)


class EgoTransformer(Module):
    """Pose (and optionally intrinsics) from two frames stacked on channels."""

    kind = "T"

    def __init__(self, cfg, rng=None, predict_intrinsics=False):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(1)
        self.cfg = cfg
        self.encoder = TransformerEncoder(cfg, 6, rng)
        grid = (cfg.height // cfg.patch_size, cfg.width // cfg.patch_size)
        self.reassemble = Reassemble("EN", cfg.embed_dim, cfg.ego_channels, cfg.patch_size, grid, rng)
        self.decoder = PoseDecoder(cfg.ego_channels, cfg.pose_channels, rng, predict_intrinsics)

    @property
    def predict_intrinsics(self):
        return self.decoder.predict_intrinsics

    def features(self, pair: Tensor) -> Tensor:
        grid = (pair.shape[2] // self.cfg.patch_size, pair.shape[3] // self.cfg.patch_size)
        return self.reassemble(self.encoder(pair)[-1], grid)

    def forward(self, pair: Tensor, want_intrinsics: bool = None):
        return self.decoder(self.features(pair), pair.shape[2:], want_intrinsics)
