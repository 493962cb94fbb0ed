"""Fifteen common image corruptions (noise, blur, weather, digital) at
severities 1-5, numpy/scipy only. Parameters live in corruption_params.txt."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy import fft, ndimage

CORRUPTIONS = (
    "gaussian_noise",
    "shot_noise",
    "impulse_noise",
    "defocus_blur",
    "glass_blur",
    "motion_blur",
    "zoom_blur",
    "snow",
    "frost",
    "fog",
    "brightness",
    "contrast",
    "elastic",
    "pixelate",
    "jpeg",
)
# corruptions whose output does not depend on the seed
DETERMINISTIC = frozenset({"defocus_blur", "zoom_blur", "brightness", "contrast", "pixelate", "jpeg"})


@dataclass(frozen=True)
class CorruptionSpec:
    name: str
    severity: int = 5

    def __post_init__(self):
        if self.name not in CORRUPTIONS:
            raise ValueError(f"unknown corruption {self.name!r}")
        if not 1 <= int(self.severity) <= 5:
            raise ValueError("severity must lie in 1..5")


def parse_param_table(text: str) -> dict:
    """``name.param = v1 .. v5`` lines -> {name: {param: [5 floats]}}; plus 'version'."""
    table: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.split()
        if key == "version":
            table["version"] = int(val[0])
            continue
        name, _, param = key.partition(".")
        if len(val) != 5:
            raise ValueError(f"{key}: expected 5 severities, got {len(val)}")
        table.setdefault(name, {})[param] = [float(v) for v in val]
    return table


@lru_cache(maxsize=1)
def param_table() -> dict:
    text = resources.files(__package__).joinpath("corruption_params.txt").read_text()
    return parse_param_table(text)


def params(name: str, severity: int = 5) -> dict:
    spec = CorruptionSpec(name, severity)
    return {k: v[spec.severity - 1] for k, v in param_table()[name].items()}


# -- helpers ------------------------------------------------------------------
def _per_channel(fn, x):
    return np.stack([fn(x[..., c]) for c in range(x.shape[2])], axis=-1)


def disk_kernel(radius: float, alias_sigma: float = 0.5) -> np.ndarray:
    r = int(np.ceil(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    k = (xx**2 + yy**2 <= radius**2).astype(float)
    k = ndimage.gaussian_filter(k, alias_sigma)
    return k / k.sum()


def line_kernel(length: int, angle: float) -> np.ndarray:
    """Normalised 1-px line of ``length`` pixels through the centre at ``angle`` radians."""
    n = int(length) | 1
    k = np.zeros((n, n))
    c = n // 2
    for s in np.linspace(-(length - 1) / 2, (length - 1) / 2, 4 * n):
        x, y = c + s * np.cos(angle), c + s * np.sin(angle)
        k[int(round(y)), int(round(x))] = 1.0
    return k / k.sum()


def diamond_square(size: int, rng, decay: float = 2.0) -> np.ndarray:
    """Plasma fractal on a (size, size) grid, size a power of two, scaled to [0, 1]."""
    n = size + 1
    f = np.zeros((n, n))
    f[:: size, :: size] = rng.uniform(0, 1, (2, 2))
    step, amp = size, 1.0
    while step > 1:
        half = step // 2
        # diamond: centres of squares
        sq = (f[0:-1:step, 0:-1:step] + f[step::step, 0:-1:step] + f[0:-1:step, step::step] + f[step::step, step::step]) / 4
        f[half::step, half::step] = sq + amp * rng.uniform(-0.5, 0.5, sq.shape)
        # square: edge midpoints, wrapping at the borders
        for oy, ox in ((0, half), (half, 0)):
            ys, xs = np.mgrid[oy:n:step, ox:n:step]
            acc = np.zeros(ys.shape)
            cnt = np.zeros(ys.shape)
            for dy, dx in ((-half, 0), (half, 0), (0, -half), (0, half)):
                yy, xx = ys + dy, xs + dx
                ok = (yy >= 0) & (yy < n) & (xx >= 0) & (xx < n)
                acc[ok] += f[yy[ok], xx[ok]]
                cnt[ok] += 1
            f[ys, xs] = acc / cnt + amp * rng.uniform(-0.5, 0.5, ys.shape)
        step = half
        amp /= decay
    f = f[:size, :size]
    f -= f.min()
    return f / max(f.max(), 1e-12)


def _field(h, w, rng, decay=2.0):
    size = 1 << int(np.ceil(np.log2(max(h, w, 2))))
    return diamond_square(size, rng, decay)[:h, :w]


def _resize_nearest(x, h, w):
    ys = np.minimum((np.arange(h) * x.shape[0] / h).astype(int), x.shape[0] - 1)
    xs = np.minimum((np.arange(w) * x.shape[1] / w).astype(int), x.shape[1] - 1)
    return x[ys][:, xs]


def _zoom_centre(x, z):
    """Centre crop of size 1/z resampled back to the full frame (bilinear)."""
    h, w = x.shape[:2]
    cy, cx = (h - 1) / 2, (w - 1) / 2
    ys = cy + (np.arange(h) - cy) / z
    xs = cx + (np.arange(w) - cx) / z
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return _per_channel(lambda ch: ndimage.map_coordinates(ch, [yy, xx], order=1, mode="nearest"), x)


# JPEG luminance/chrominance base tables
_Q_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=float,
)
_Q_CHROMA = np.full((8, 8), 99.0)
_Q_CHROMA[:4, :4] = [[17, 18, 24, 47], [18, 21, 26, 66], [24, 26, 56, 99], [47, 66, 99, 99]]


def quality_table(base: np.ndarray, quality: float) -> np.ndarray:
    q = max(1.0, min(100.0, quality))
    s = 5000.0 / q if q < 50 else 200.0 - 2 * q
    return np.clip(np.floor((base * s + 50) / 100), 1, 255)


def jpeg_roundtrip(x: np.ndarray, quality: float) -> np.ndarray:
    """8x8 block DCT, quantise with quality-scaled tables, invert (YCbCr, no subsampling)."""
    h, w = x.shape[:2]
    v = x * 255.0
    y = 0.299 * v[..., 0] + 0.587 * v[..., 1] + 0.114 * v[..., 2]
    cb = 128 - 0.168736 * v[..., 0] - 0.331264 * v[..., 1] + 0.5 * v[..., 2]
    cr = 128 + 0.5 * v[..., 0] - 0.418688 * v[..., 1] - 0.081312 * v[..., 2]
    ph, pw = -h % 8, -w % 8
    out = []
    for ch, base in ((y, _Q_LUMA), (cb, _Q_CHROMA), (cr, _Q_CHROMA)):
        q = quality_table(base, quality)
        c = np.pad(ch, ((0, ph), (0, pw)), mode="edge") - 128
        hb, wb = c.shape[0] // 8, c.shape[1] // 8
        blocks = c.reshape(hb, 8, wb, 8).transpose(0, 2, 1, 3)
        coef = fft.dctn(blocks, axes=(2, 3), norm="ortho")
        coef = np.round(coef / q) * q
        rec = fft.idctn(coef, axes=(2, 3), norm="ortho").transpose(0, 2, 1, 3).reshape(c.shape) + 128
        out.append(rec[:h, :w])
    y, cb, cr = out
    r = y + 1.402 * (cr - 128)
    g = y - 0.344136 * (cb - 128) - 0.714136 * (cr - 128)
    b = y + 1.772 * (cb - 128)
    return np.stack([r, g, b], -1) / 255.0


# -- the corruptions ----------------------------------------------------------
def gaussian_noise(x, p, rng):
    return x + rng.normal(0, p["sigma"], x.shape)


def shot_noise(x, p, rng):
    lam = p["photons"]
    return rng.poisson(x * lam) / lam


def impulse_noise(x, p, rng):
    out = x.copy()
    u = rng.uniform(size=x.shape)
    a = p["amount"]
    out[u < a / 2] = 0.0
    out[(u >= a / 2) & (u < a)] = 1.0
    return out


def defocus_blur(x, p, rng):
    k = disk_kernel(p["radius"], p["alias_sigma"])
    return _per_channel(lambda c: ndimage.convolve(c, k, mode="reflect"), x)


def glass_blur(x, p, rng):
    s = p["sigma"]
    h, w = x.shape[:2]
    out = _per_channel(lambda c: ndimage.gaussian_filter(c, s, mode="reflect"), x)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(int(p["iterations"])):
        jy = np.clip(yy + np.rint(rng.normal(0, s, (h, w))).astype(int), 0, h - 1)
        jx = np.clip(xx + np.rint(rng.normal(0, s, (h, w))).astype(int), 0, w - 1)
        out = out[jy, jx]
    return _per_channel(lambda c: ndimage.gaussian_filter(c, s, mode="reflect"), out)


def motion_blur(x, p, rng):
    k = line_kernel(int(p["length"]), rng.uniform(-np.pi / 4, np.pi / 4))
    return _per_channel(lambda c: ndimage.convolve(c, k, mode="nearest"), x)


def zoom_blur(x, p, rng):
    zooms = np.arange(1.0, p["max_zoom"], p["step"])[1:]
    acc = x.copy()
    for z in zooms:
        acc += _zoom_centre(x, z)
    return acc / (len(zooms) + 1)


def snow(x, p, rng):
    h, w = x.shape[:2]
    flakes = (rng.uniform(size=(h, w)) < p["density"]).astype(float)
    k = line_kernel(int(p["length"]), np.pi / 2 + rng.uniform(-0.4, 0.4))
    streaks = np.clip(ndimage.convolve(flakes, k, mode="wrap") * 3.0, 0, 1)
    lift = p["lift"]
    base = x * (1 - lift) + lift
    return base + streaks[..., None]


def frost(x, p, rng):
    h, w = x.shape[:2]
    coarse = _field(h, w, rng, decay=1.6)
    fine = _field(h, w, rng, decay=1.2)
    ice = np.clip(0.55 * coarse + 0.45 * fine ** 2 * 1.5, 0, 1)
    tint = np.array([0.85, 0.92, 1.0])
    return p["image_weight"] * x + p["blend"] * ice[..., None] * tint


def fog(x, p, rng):
    h, w = x.shape[:2]
    f = _field(h, w, rng, decay=p["decay"])[..., None]
    b = p["blend"]
    return x * (1 - b * f) + b * f


def brightness(x, p, rng):
    """Shift the HSV value channel; hue and saturation are untouched, so every
    channel scales by V'/V (black pixels turn grey)."""
    v = x.max(axis=2, keepdims=True)
    v2 = np.clip(v + p["shift"], 0, 1)
    scale = np.divide(v2, v, out=np.zeros_like(v), where=v > 0)
    return np.where(v > 0, x * scale, v2)


def contrast(x, p, rng):
    m = x.mean(axis=(0, 1), keepdims=True)
    return (x - m) * p["factor"] + m


def elastic(x, p, rng):
    h, w = x.shape[:2]
    s = p["sigma"]
    d = [ndimage.gaussian_filter(rng.uniform(-1, 1, (h, w)), s, mode="reflect") for _ in range(2)]
    peak = max(np.abs(d[0]).max(), np.abs(d[1]).max(), 1e-12)
    dy, dx = (c / peak * p["magnitude"] for c in d)
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    return _per_channel(lambda c: ndimage.map_coordinates(c, [yy + dy, xx + dx], order=1, mode="reflect"), x)


def pixelate(x, p, rng):
    h, w = x.shape[:2]
    sh, sw = max(1, int(round(h * p["factor"]))), max(1, int(round(w * p["factor"])))
    # box-average each source cell, then nearest upsample
    ys = (np.arange(h) * sh // h)
    xs = (np.arange(w) * sw // w)
    sums = np.zeros((sh, sw, x.shape[2]))
    np.add.at(sums, (ys[:, None], xs[None, :]), x)
    counts = np.bincount(ys, minlength=sh)[:, None] * np.bincount(xs, minlength=sw)[None, :]
    small = sums / counts[..., None]
    return small[ys][:, xs]


def jpeg(x, p, rng):
    return jpeg_roundtrip(x, p["quality"])


_FUNCS = {name: globals()[name] for name in CORRUPTIONS}


def corrupt(image, spec, seed: int = 0) -> np.ndarray:
    """Apply a corruption to an (H, W, 3) image in [0, 1]; output clamped to [0, 1].

    ``spec`` is a CorruptionSpec or a corruption name (severity 5).
    """
    if isinstance(spec, str):
        spec = CorruptionSpec(spec)
    x = np.asarray(image, dtype=float)
    if x.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got {x.shape}")
    if x.min() < 0 or x.max() > 1:
        raise ValueError("image values must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    out = _FUNCS[spec.name](x, params(spec.name, spec.severity), rng)
    return np.clip(out, 0.0, 1.0)
