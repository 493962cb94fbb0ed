"""Image I/O: PNG (8/16-bit) through Pillow, binary PPM/PGM by hand."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def _read_token(buf: bytes, pos: int):
    while True:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        break
    start = pos
    while pos < len(buf) and not buf[pos : pos + 1].isspace():
        pos += 1
    return buf[start:pos], pos


def read_pnm(path) -> np.ndarray:
    """Binary P5/P6 file -> (H, W) or (H, W, 3) integer array."""
    buf = Path(path).read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported PNM magic {magic!r}")
    w, pos = _read_token(buf, pos)
    h, pos = _read_token(buf, pos)
    maxval, pos = _read_token(buf, pos)
    w, h, maxval = int(w), int(h), int(maxval)
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    ch = 3 if magic == b"P6" else 1
    n = w * h * ch
    data = np.frombuffer(buf, dtype=dtype, count=n, offset=pos)
    arr = data.reshape(h, w, ch) if ch == 3 else data.reshape(h, w)
    return arr.astype(np.uint16 if maxval > 255 else np.uint8)


def write_pnm(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    elif arr.ndim == 2:
        magic = b"P5"
    else:
        raise ValueError(f"cannot write shape {arr.shape} as PNM")
    if arr.dtype == np.uint16:
        maxval, body = 65535, arr.astype(">u2").tobytes()
    else:
        maxval, body = 255, arr.astype(np.uint8).tobytes()
    h, w = arr.shape[:2]
    Path(path).write_bytes(magic + f"\n{w} {h}\n{maxval}\n".encode() + body)


def read_image(path) -> np.ndarray:
    """RGB image as float (H, W, 3) in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm", ".pgm"):
        raw = read_pnm(path)
    else:
        with Image.open(path) as im:
            raw = np.asarray(im.convert("RGB") if im.mode not in ("I;16", "I") else im)
    scale = 65535.0 if raw.dtype == np.uint16 or raw.max(initial=0) > 255 else 255.0
    img = raw.astype(float) / scale
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    return img


def write_image(path, image: np.ndarray) -> None:
    """Save an (H, W, 3) float image in [0, 1] as 8-bit PNG or PPM by suffix."""
    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        write_pnm(path, arr)
    else:
        Image.fromarray(arr).save(str(path))


def resize_image(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a float (H, W, C) image."""
    if image.shape[:2] == (height, width):
        return image
    chans = [np.asarray(Image.fromarray(image[..., c].astype(np.float32), mode="F").resize((width, height), Image.BILINEAR)) for c in range(image.shape[2])]
    return np.clip(np.stack(chans, -1).astype(float), 0.0, 1.0)


def resize_sparse_depth(depth: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour resize; keeps invalid (0) pixels invalid."""
    h, w = depth.shape
    ys = np.minimum((np.arange(height) + 0.5) * h / height, h - 1).astype(int)
    xs = np.minimum((np.arange(width) + 0.5) * w / width, w - 1).astype(int)
    return depth[ys][:, xs]
