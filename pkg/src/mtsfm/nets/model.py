"""Depth + ego-motion network pair in any of the four architecture combinations."""
from __future__ import annotations

import numpy as np

from ..ndiff import Tensor, no_grad, ops
from .checkpoint import load_checkpoint, save_checkpoint
from .common import disp_to_depth, stack_pair, to_nchw
from .config import NetConfig
from .conv import DepthCNN, EgoCNN
from .dpt import DepthTransformer
from .pose import EgoTransformer

ARCHES = ("cc", "ct", "tc", "tt")


def parse_arch(arch: str) -> str:
    a = arch.lower().replace(",", "").replace(" ", "").strip("()")
    if a not in ARCHES:
        raise ValueError(f"architecture must be one of {ARCHES} (depth, ego), got {arch!r}")
    return a


def build_depth_net(kind: str, cfg: NetConfig, seed: int = 0):
    rng = np.random.default_rng(seed)
    return DepthTransformer(cfg, rng) if kind.lower() == "t" else DepthCNN(cfg, rng)


def build_ego_net(kind: str, cfg: NetConfig, seed: int = 1, predict_intrinsics: bool = False):
    rng = np.random.default_rng(seed)
    cls = EgoTransformer if kind.lower() == "t" else EgoCNN
    return cls(cfg, rng, predict_intrinsics=predict_intrinsics)


class SfMModel:
    def __init__(self, cfg: NetConfig, arch: str = "tt", learn_intrinsics: bool = False, seed: int = 0):
        self.cfg = cfg
        self.arch = parse_arch(arch)
        self.learn_intrinsics = bool(learn_intrinsics)
        self.seed = seed
        self.depth = build_depth_net(self.arch[0], cfg, seed)
        self.ego = build_ego_net(self.arch[1], cfg, seed + 1, learn_intrinsics)

    # -- parameters ---------------------------------------------------------
    def parameters(self) -> list:
        return self.depth.parameters() + self.ego.parameters()

    def named_state(self) -> dict:
        out = {}
        for prefix, net in (("depth.", self.depth), ("ego.", self.ego)):
            for k, v in net.state().items():
                out[prefix + k] = v
        return out

    def train(self, mode: bool = True):
        self.depth.train(mode)
        self.ego.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        self.depth.zero_grad()
        self.ego.zero_grad()

    # -- forward ------------------------------------------------------------
    def disparities(self, image) -> list:
        """Disparity pyramid for one (H, W, 3) image as (H/2^s, W/2^s) tensors."""
        out = self.depth(to_nchw(image))
        return [d.reshape(d.shape[2], d.shape[3]) for d in out]

    def pose(self, first, second, want_intrinsics: bool = None):
        pose, k = self.ego(stack_pair(first, second), want_intrinsics)
        return pose.reshape(6), (None if k is None else k.reshape(4))

    def disparities_batch(self, images) -> list:
        """Per-sample disparity pyramids for a list of (H, W, 3) images, one forward pass."""
        x = ops.concat([to_nchw(im) for im in images], axis=0) if len(images) > 1 else to_nchw(images[0])
        out = self.depth(x)
        return [[d[i, 0] for d in out] for i in range(len(images))]

    def pose_batch(self, firsts, seconds, want_intrinsics: bool = None):
        x = ops.concat([stack_pair(a, b) for a, b in zip(firsts, seconds)], axis=0)
        pose, k = self.ego(x, want_intrinsics)
        return [pose[i] for i in range(len(firsts))], (None if k is None else [k[i] for i in range(len(firsts))])

    def depth_tensor(self, image) -> Tensor:
        """Full-resolution depth (H, W), differentiable w.r.t. the image."""
        return disp_to_depth(self.disparities(image)[0], self.cfg.min_depth, self.cfg.max_depth)

    def predict_depth(self, image: np.ndarray) -> np.ndarray:
        was = self.depth.training
        self.depth.eval()
        try:
            with no_grad():
                return np.array(self.depth_tensor(np.asarray(image)).data)
        finally:
            self.depth.train(was)

    __call__ = predict_depth

    # -- persistence --------------------------------------------------------
    def manifest(self) -> str:
        head = f"arch={self.arch}\nlearn_intrinsics={int(self.learn_intrinsics)}\nseed={self.seed}\n"
        return head + self.cfg.to_text()

    def save(self, path) -> None:
        save_checkpoint(path, self.named_state(), self.manifest())

    @classmethod
    def load(cls, path) -> "SfMModel":
        entries, manifest = load_checkpoint(path)
        meta = dict(line.split("=", 1) for line in manifest.splitlines() if "=" in line)
        cfg = NetConfig.from_text(manifest)
        model = cls(cfg, meta.get("arch", "tt"), bool(int(meta.get("learn_intrinsics", "0"))), int(meta.get("seed", 0)))
        depth = {k[len("depth."):]: v for k, v in entries.items() if k.startswith("depth.")}
        ego = {k[len("ego."):]: v for k, v in entries.items() if k.startswith("ego.")}
        model.depth.load_state(depth)
        model.ego.load_state(ego)
        return model
