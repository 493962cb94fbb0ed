"""Pinhole camera, SE(3) poses and differentiable view synthesis.

Pixel (i, j) sits at continuous coordinates (x=j, y=i). Coordinates outside
the image are clamped when sampling and flagged in the validity mask.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .ndiff import Tensor, ops

SMALL_ANGLE = 1e-7
MIN_Z = 1e-8
EDGE_TOL = 1e-6  # rounding slack for the in-frame test, in pixels


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise ValueError("principal point must be finite")

    def scaled(self, sx: float, sy: float) -> "Intrinsics":
        """Intrinsics for an image resized by (sx, sy) along (x, y)."""
        return Intrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1 / self.fx, 0, -self.cx / self.fx],
                [0, 1 / self.fy, -self.cy / self.fy],
                [0, 0, 1.0],
            ]
        )

    def as_tuple(self) -> tuple:
        return (self.fx, self.fy, self.cx, self.cy)


@dataclass(frozen=True)
class Pose:
    rotation: Tuple[float, float, float]
    translation: Tuple[float, float, float]

    def __post_init__(self):
        if len(self.rotation) != 3 or len(self.translation) != 3:
            raise ValueError("pose needs three rotation and three translation components")
        if np.linalg.norm(self.rotation) >= math.pi:
            raise ValueError("axis-angle rotation outside the principal branch")

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "Pose":
        v = [float(a) for a in v]
        return cls(tuple(v[:3]), tuple(v[3:6]))

    def vector(self) -> np.ndarray:
        return np.array(list(self.rotation) + list(self.translation), dtype=float)


KLike = Union[Intrinsics, Sequence[Tensor], Tensor]
PoseLike = Union[Pose, Tensor, Sequence[float]]


def intrinsic_tensors(k: KLike) -> tuple:
    """(fx, fy, cx, cy) as scalar tensors; differentiable if given as tensors."""
    if isinstance(k, Intrinsics):
        return tuple(Tensor(np.array(v)) for v in k.as_tuple())
    if isinstance(k, Tensor):
        if k.size != 4:
            raise ValueError("intrinsics tensor must hold (fx, fy, cx, cy)")
        flat = k.reshape(4)
        return tuple(flat[i] for i in range(4))
    parts = tuple(p if isinstance(p, Tensor) else Tensor(np.array(p)) for p in k)
    if len(parts) != 4:
        raise ValueError("intrinsics need (fx, fy, cx, cy)")
    return parts


def intrinsics_matrix(k: KLike) -> Tensor:
    fx, fy, cx, cy = intrinsic_tensors(k)
    if np.any(fx.data <= 0) or np.any(fy.data <= 0):
        raise ValueError("focal lengths must be positive")
    zero = Tensor(np.zeros((), dtype=fx.dtype))
    one = Tensor(np.ones((), dtype=fx.dtype))
    return ops.stack([fx, zero, cx, zero, fy, cy, zero, zero, one]).reshape(3, 3)


def _pose_tensor(p: PoseLike) -> Tensor:
    if isinstance(p, Pose):
        return Tensor(p.vector())
    if isinstance(p, Tensor):
        return p.reshape(6)
    return Tensor(np.asarray(p, dtype=float).reshape(6))


def rodrigues(r: Tensor) -> Tensor:
    """Axis-angle (3,) to rotation matrix (3, 3); Taylor form near zero."""
    rx, ry, rz = r[0], r[1], r[2]
    zero = Tensor(np.zeros((), dtype=r.dtype))
    skew = ops.stack([zero, -rz, ry, rz, zero, -rx, -ry, rx, zero]).reshape(3, 3)
    skew2 = skew @ skew
    eye = Tensor(np.eye(3, dtype=r.dtype))
    theta_sq = float(np.sum(r.data**2))
    if math.sqrt(theta_sq) >= math.pi:
        raise ValueError("axis-angle rotation outside the principal branch")
    if math.sqrt(theta_sq) < SMALL_ANGLE:
        return eye + skew + skew2 * 0.5
    theta = (r * r).sum().sqrt()
    a = ops.sin(theta) / theta
    b = (1.0 - ops.cos(theta)) / (theta * theta)
    return eye + skew * a + skew2 * b


def invert_pose(p: PoseLike) -> Tensor:
    """6-vector of the inverse transform: rotation -r, translation -R^T t."""
    v = _pose_tensor(p)
    r = -v[0:3]
    t = rodrigues(r) @ v[3:6].reshape(3, 1)
    return ops.concat([r, -t.reshape(3)], axis=0)


def pose_to_transform(p: PoseLike) -> Tensor:
    v = _pose_tensor(p)
    rot = rodrigues(v[0:3])
    t = v[3:6].reshape(3, 1)
    top = ops.concat([rot, t], axis=1)
    bottom = Tensor(np.array([[0, 0, 0, 1.0]], dtype=v.dtype))
    return ops.concat([top, bottom], axis=0)


def pixel_grid(h: int, w: int, dtype=np.float64) -> tuple:
    ys, xs = np.meshgrid(np.arange(h, dtype=dtype), np.arange(w, dtype=dtype), indexing="ij")
    return xs.reshape(-1), ys.reshape(-1)


def backproject(depth: Tensor, k: KLike, xs=None, ys=None) -> Tensor:
    """Camera-frame points (3, N) for pixels (xs, ys) at the given depths.

    ``depth`` has shape (H, W) (then xs, ys default to the full grid) or (N,).
    """
    fx, fy, cx, cy = intrinsic_tensors(k)
    if xs is None:
        h, w = depth.shape
        xs, ys = pixel_grid(h, w, depth.dtype)
    d = depth.reshape(-1)
    xn = (Tensor(xs.astype(depth.dtype)) - cx) / fx
    yn = (Tensor(ys.astype(depth.dtype)) - cy) / fy
    return ops.stack([d * xn, d * yn, d], axis=0)


def project(points: Tensor, k: KLike) -> tuple:
    """Pixel coordinates (2, N) of camera-frame points, plus a validity vector for z."""
    fx, fy, cx, cy = intrinsic_tensors(k)
    z = points[2]
    ok = z.data > MIN_Z
    m = ok.astype(points.dtype)
    z_safe = z * Tensor(m) + Tensor(1.0 - m)
    u = points[0] / z_safe * fx + cx
    v = points[1] / z_safe * fy + cy
    return ops.stack([u, v], axis=0), ok


def transform_points(points: Tensor, pose: PoseLike) -> Tensor:
    v = _pose_tensor(pose)
    rot = rodrigues(v[0:3])
    return rot @ points + v[3:6].reshape(3, 1)


def warp_coordinates(depth: Tensor, k_t: KLike, k_s: KLike, pose: PoseLike) -> tuple:
    """Source-image coordinates for every target pixel.

    Returns ``(coords, valid)``: coords is (H, W, 2) holding (x, y); valid is
    a boolean (H, W) array, False where the point lands behind the source
    camera or outside [0, W-1] x [0, H-1].
    """
    depth = depth if isinstance(depth, Tensor) else Tensor(depth)
    if np.any(depth.data <= 0):
        raise ValueError("depth must be positive")
    h, w = depth.shape
    pts = backproject(depth, k_t)
    pts_s = transform_points(pts, pose)
    uv, in_front = project(pts_s, k_s)
    coords = uv.permute(1, 0).reshape(h, w, 2)
    u, v = coords.data[..., 0], coords.data[..., 1]
    tol = EDGE_TOL
    valid = in_front.reshape(h, w) & (u >= -tol) & (u <= w - 1 + tol) & (v >= -tol) & (v <= h - 1 + tol)
    return coords, valid


def bilinear_sample(image: Tensor, coords: Tensor) -> Tensor:
    """Sample ``image`` (H, W, C) at ``coords`` (H', W', 2) with clamp-to-edge."""
    image = image if isinstance(image, Tensor) else Tensor(image)
    h, w, c = image.shape
    img = image.data
    cd = coords.data
    out_shape = cd.shape[:-1] + (c,)
    x = cd[..., 0].reshape(-1)
    y = cd[..., 1].reshape(-1)
    xc = np.clip(x, 0, w - 1)
    yc = np.clip(y, 0, h - 1)
    x0 = np.clip(np.floor(xc), 0, max(w - 2, 0)).astype(np.int64)
    y0 = np.clip(np.floor(yc), 0, max(h - 2, 0)).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = (xc - x0)[:, None]
    ay = (yc - y0)[:, None]
    flat = img.reshape(h * w, c)
    i00, i01, i10, i11 = y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1
    v00, v01, v10, v11 = flat[i00], flat[i01], flat[i10], flat[i11]
    top = v00 * (1 - ax) + v01 * ax
    bot = v10 * (1 - ax) + v11 * ax
    out = top * (1 - ay) + bot * ay
    inside_x = ((x >= 0) & (x <= w - 1))[:, None]
    inside_y = ((y >= 0) & (y <= h - 1))[:, None]

    def bw(g):
        g = g.reshape(-1, c)
        gimg = gcoord = None
        if image.requires_grad:
            idx = np.concatenate([i00, i01, i10, i11])
            wts = np.concatenate([(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay])[:, 0]
            gflat = np.empty((h * w, c), dtype=img.dtype)
            for ch in range(c):
                gg = np.tile(g[:, ch], 4)
                gflat[:, ch] = np.bincount(idx, weights=gg * wts, minlength=h * w)
            gimg = gflat.reshape(h, w, c)
        if coords.requires_grad:
            dx = ((v01 - v00) * (1 - ay) + (v11 - v10) * ay) * inside_x
            dy = (bot - top) * inside_y
            gcoord = np.stack([(g * dx).sum(axis=1), (g * dy).sum(axis=1)], axis=-1).reshape(cd.shape)
        return gimg, gcoord

    return ops.custom_op(out.reshape(out_shape), (image, coords), bw, "bilinear_sample")


def view_synthesis(source, depth: Tensor, k: KLike, pose: PoseLike, k_source: KLike = None) -> tuple:
    """Reconstruct the target view from ``source`` (H, W, C); returns (image, valid)."""
    coords, valid = warp_coordinates(depth, k, k if k_source is None else k_source, pose)
    return bilinear_sample(source, coords), valid
