"""Patch embedding and pre-norm transformer encoder."""
from __future__ import annotations

import numpy as np

from ..ndiff import Tensor, ops
from .layers import Conv2d, LayerNorm, Linear, Module, _param


class PatchEmbed(Module):
    """p x p stride-p convolution to tokens, readout token prepended, learned positions added.

    Position embeddings are learned for the construction-time grid and
    bilinearly resized when the input grid differs.
    """

    def __init__(self, in_channels, dim, patch, grid, rng, duplicate_from: int = None):
        super().__init__()
        self.patch = patch
        self.grid = tuple(grid)
        self.proj = Conv2d(in_channels, dim, patch, stride=patch, rng=rng)
        if duplicate_from:
            # multi-frame input: repeat a single-frame kernel, scaled to keep activations comparable
            reps = in_channels // duplicate_from
            base = self.proj.weight.data[:, :duplicate_from]
            self.proj.weight.data = np.concatenate([base] * reps, axis=1) / reps
        self.readout = _param(rng.normal(0, 0.02, size=(1, 1, dim)))
        self.pos = _param(rng.normal(0, 0.02, size=(1, grid[0] * grid[1] + 1, dim)))

    def patch_tokens(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        if h % self.patch or w % self.patch:
            raise ValueError(f"patch size {self.patch} does not divide {h}x{w}")
        f = self.proj(x)
        d = f.shape[1]
        return f.reshape(n, d, -1).permute(0, 2, 1)

    def positions(self, gh: int, gw: int) -> Tensor:
        if (gh, gw) == self.grid:
            return self.pos
        d = self.pos.shape[-1]
        read = self.pos[:, 0:1, :]
        grid = self.pos[:, 1:, :].reshape(self.grid[0], self.grid[1], d).permute(2, 0, 1)
        grid = ops.resize_bilinear(grid, (gh, gw))
        grid = grid.permute(1, 2, 0).reshape(1, gh * gw, d)
        return ops.concat([read, grid], axis=1)

    def forward(self, x: Tensor) -> Tensor:
        n, _, h, w = x.shape
        tok = self.patch_tokens(x)
        d = tok.shape[-1]
        read = ops.expand(self.readout, (n, 1, d))
        tok = ops.concat([read, tok], axis=1)
        pos = self.positions(h // self.patch, w // self.patch)
        return tok + ops.expand(pos, tok.shape)


class Attention(Module):
    def __init__(self, dim, heads, rng):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.qkv = Linear(dim, 3 * dim, rng=rng)
        self.proj = Linear(dim, dim, rng=rng)
        self.last_attn = None

    def forward(self, x: Tensor) -> Tensor:
        n, t, d = x.shape
        h = self.heads
        dh = d // h
        qkv = self.qkv(x).reshape(n, t, 3, h, dh).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = (q.reshape(n * h, t, dh) @ ops.transpose_last(k.reshape(n * h, t, dh))) * (dh**-0.5)
        attn = ops.softmax(scores, axis=-1)
        self.last_attn = attn.data.reshape(n, h, t, t)
        out = (attn @ v.reshape(n * h, t, dh)).reshape(n, h, t, dh).permute(0, 2, 1, 3).reshape(n, t, d)
        return self.proj(out)


class Block(Module):
    def __init__(self, dim, heads, mlp_ratio, rng):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = Attention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(dim, dim * mlp_ratio, rng=rng)
        self.fc2 = Linear(dim * mlp_ratio, dim, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.fc2(ops.gelu(self.fc1(self.norm2(x))))


class TransformerEncoder(Module):
    def __init__(self, cfg, in_channels, rng):
        super().__init__()
        grid = (cfg.height // cfg.patch_size, cfg.width // cfg.patch_size)
        dup = 3 if in_channels > 3 and in_channels % 3 == 0 else None
        self.embed = PatchEmbed(in_channels, cfg.embed_dim, cfg.patch_size, grid, rng, duplicate_from=dup)
        self.blocks = [Block(cfg.embed_dim, cfg.num_heads, cfg.mlp_ratio, rng) for _ in range(cfg.num_layers)]

    def encode(self, tokens: Tensor) -> list:
        outs = []
        x = tokens
        for blk in self.blocks:
            x = blk(x)
            outs.append(x)
        return outs

    def forward(self, image: Tensor) -> list:
        """All per-layer outputs, index i holding layer i+1."""
        return self.encode(self.embed(image))
