"""Analytic ground-truth scenes: a textured surface seen by three cameras.

The surface is the heightfield Z = Z0 + a*Y + bumps(X, Y) in frame-0 camera
coordinates; a = 0 and no bumps gives a fronto-parallel plane. Each frame is
rendered by casting its pixel rays onto the surface and evaluating a smooth
procedural texture at the hit point, so the three frames are photometrically
consistent without any resampling.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from ..geometry import EDGE_TOL, Intrinsics, Pose, pixel_grid
from .types import ImageTriplet


def _rotation_matrix(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    th = np.linalg.norm(r)
    k = np.array([[0, -r[2], r[1]], [r[2], 0, -r[0]], [-r[1], r[0], 0]])
    if th < 1e-12:
        return np.eye(3) + k
    return np.eye(3) + np.sin(th) / th * k + (1 - np.cos(th)) / th**2 * (k @ k)


@dataclass
class SceneConfig:
    height: int = 64
    width: int = 64
    texture_seed: int = 0
    depth_near: float = 4.0  # frame-0 depth along the bottom row
    depth_far: float = 8.0  # frame-0 depth along the top row
    motion: Tuple[float, float, float] = (0.05, 0.0, 0.2)  # camera translation per frame
    rotation: Tuple[float, float, float] = (0.0, 0.0, 0.0)  # camera axis-angle per frame
    texture_wavelength: float = 32.0  # typical texture period in frame-0 pixels at mid depth
    bumps: int = 0
    bump_height: float = 1.0
    intrinsics: Optional[Intrinsics] = None
    min_in_view: float = 0.8

    def __post_init__(self):
        if self.intrinsics is None:
            self.intrinsics = Intrinsics(float(self.width), float(self.width), (self.width - 1) / 2, (self.height - 1) / 2)
        if not 0 < self.depth_near <= self.depth_far:
            raise ValueError("need 0 < depth_near <= depth_far")


class Surface:
    def __init__(self, cfg: SceneConfig):
        k = cfg.intrinsics
        yn_top = (0 - k.cy) / k.fy
        yn_bot = (cfg.height - 1 - k.cy) / k.fy
        # inverse depth is affine in the normalised row coordinate on a plane
        if abs(yn_bot - yn_top) < 1e-12 or cfg.depth_near == cfg.depth_far:
            inv_a, inv_b = 1.0 / cfg.depth_near, 0.0
        else:
            inv_b = (1 / cfg.depth_near - 1 / cfg.depth_far) / (yn_bot - yn_top)
            inv_a = 1 / cfg.depth_far - inv_b * yn_top
        self.z0 = 1.0 / inv_a
        self.slope = -inv_b / inv_a
        rng = np.random.default_rng(cfg.texture_seed + 7919)
        mid = 0.5 * (cfg.depth_near + cfg.depth_far)
        half_w = 0.5 * cfg.width / k.fx * mid
        half_h = 0.5 * cfg.height / k.fy * mid
        self.bumps = [
            (
                rng.uniform(-0.6, 0.6) * half_w,
                rng.uniform(-0.6, 0.6) * half_h,
                rng.uniform(0.25, 0.45) * min(half_w, half_h),
                -cfg.bump_height * rng.uniform(0.6, 1.0),
            )
            for _ in range(cfg.bumps)
        ]

    def height(self, x, y):
        z = self.z0 + self.slope * y
        dzdx = np.zeros_like(x)
        dzdy = np.full_like(y, self.slope)
        for bx, by, s, amp in self.bumps:
            g = amp * np.exp(-((x - bx) ** 2 + (y - by) ** 2) / (2 * s * s))
            z = z + g
            dzdx = dzdx - g * (x - bx) / (s * s)
            dzdy = dzdy - g * (y - by) / (s * s)
        return z, dzdx, dzdy

    def intersect(self, origin, dirs, iters: int = 30):
        """Ray parameter lambda with origin + lambda * dir on the surface."""
        ox, oy, oz = origin
        dx, dy, dz = dirs
        lam = (self.z0 + self.slope * oy - oz) / np.maximum(dz - self.slope * dy, 1e-6)
        for _ in range(iters):
            x, y = ox + lam * dx, oy + lam * dy
            z, zx, zy = self.height(x, y)
            f = z - (oz + lam * dz)
            df = zx * dx + zy * dy - dz
            lam = lam - f / df
        return lam


class Texture:
    """Sum of random oriented sinusoids over surface coordinates (X, Y)."""

    def __init__(self, seed: int, scale: float, n: int = 10):
        rng = np.random.default_rng(seed)
        ang = rng.uniform(0, np.pi, n)
        wavelength = scale * rng.uniform(0.8, 2.5, n)
        self.freq = np.stack([np.cos(ang), np.sin(ang)], 1) * (2 * np.pi / wavelength)[:, None]
        self.phase = rng.uniform(0, 2 * np.pi, n)
        self.mix = rng.uniform(0.3, 1.0, (n, 3)) / n * 1.6

    def __call__(self, x, y):
        arg = x[..., None] * self.freq[:, 0] + y[..., None] * self.freq[:, 1] + self.phase
        s = np.sin(arg)
        rgb = 0.5 + np.einsum("...n,nc->...c", s, self.mix) * 0.5
        return np.clip(rgb, 0.0, 1.0)


def _render(surface, texture, k: Intrinsics, h, w, rot, centre):
    xs, ys = pixel_grid(h, w)
    rays = np.stack([(xs - k.cx) / k.fx, (ys - k.cy) / k.fy, np.ones_like(xs)])
    r = _rotation_matrix(rot)
    dirs = r.T @ rays
    lam = surface.intersect(centre, dirs)
    pts = np.asarray(centre)[:, None] + lam * dirs
    img = texture(pts[0], pts[1]).reshape(h, w, 3)
    return img, lam.reshape(h, w)


def synth_scene(cfg: SceneConfig = None) -> ImageTriplet:
    cfg = cfg or SceneConfig()
    k = cfg.intrinsics
    h, w = cfg.height, cfg.width
    surface = Surface(cfg)
    mid = 0.5 * (cfg.depth_near + cfg.depth_far)
    texture = Texture(cfg.texture_seed, scale=cfg.texture_wavelength * mid / k.fx)
    motion = np.asarray(cfg.motion, dtype=float)
    rot = np.asarray(cfg.rotation, dtype=float)
    frames, poses = [], []
    for sign in (-1, 0, 1):
        centre = sign * motion
        img, depth = _render(surface, texture, k, h, w, sign * rot, centre)
        frames.append(img)
        if sign == 0:
            gt = depth
        else:
            r = _rotation_matrix(sign * rot)
            poses.append(Pose(tuple(sign * rot), tuple(-(r @ centre))))
    trip = ImageTriplet(frames[0], frames[1], frames[2], depth=gt, intrinsics=k, poses=tuple(poses), name=f"synth{cfg.texture_seed}")
    frac = in_view_fraction(trip)
    if frac < cfg.min_in_view:
        raise ValueError(f"camera motion leaves only {frac:.0%} of pixels in view")
    return trip


def in_view_fraction(trip: ImageTriplet) -> float:
    """Worst-case share of target pixels that project inside each source."""
    k = trip.intrinsics
    h, w = trip.depth.shape
    xs, ys = pixel_grid(h, w)
    d = trip.depth.reshape(-1)
    pts = np.stack([(xs - k.cx) / k.fx * d, (ys - k.cy) / k.fy * d, d])
    worst = 1.0
    for pose in trip.poses:
        q = _rotation_matrix(pose.rotation) @ pts + np.asarray(pose.translation)[:, None]
        u = k.fx * q[0] / q[2] + k.cx
        v = k.fy * q[1] / q[2] + k.cy
        tol = EDGE_TOL
        ok = (q[2] > 0) & (u >= -tol) & (u <= w - 1 + tol) & (v >= -tol) & (v <= h - 1 + tol)
        worst = min(worst, float(ok.mean()))
    return worst


def synth_dataset(n: int, base: SceneConfig = None, seed: int = 0) -> list:
    """``n`` scenes sharing geometry settings but with distinct textures."""
    base = base or SceneConfig()
    out = []
    for i in range(n):
        cfg = SceneConfig(**{**base.__dict__, "texture_seed": seed * 1000 + i})
        out.append(synth_scene(cfg))
    return out
