"""KITTI raw-layout loader: <root>/<date>/<drive>/image_02/data/<frame>.png.

Split lines are either an image path relative to the root or the common
"<date>/<drive> <frame index> [side]" form. Calibration comes from
<date>/calib_cam_to_cam.txt (P_rect_02) or <drive>/calib.txt (P2). Optional
ground truth is read from <drive>/depth_02/<frame>.png (uint16, depth*256).
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import numpy as np

from ..geometry import Intrinsics
from .imageio import read_image, resize_image, resize_sparse_depth
from .types import ImageTriplet

log = logging.getLogger(__name__)

IMAGE_EXTS = (".png", ".ppm", ".jpg")


class CalibrationError(ValueError):
    pass


def parse_calibration(text: str, keys=("P_rect_02", "P2")) -> Intrinsics:
    """fx, fy, cx, cy from the first 3x4 projection matrix found under ``keys``."""
    entries = {}
    for line in text.splitlines():
        if ":" not in line:
            continue
        k, _, v = line.partition(":")
        entries[k.strip()] = v
    for key in keys:
        if key in entries:
            try:
                vals = [float(x) for x in entries[key].split()]
            except ValueError as e:
                raise CalibrationError(f"{key}: non-numeric entry") from e
            if len(vals) != 12:
                raise CalibrationError(f"{key}: expected 12 values, got {len(vals)}")
            p = np.array(vals).reshape(3, 4)
            return Intrinsics(p[0, 0], p[1, 1], p[0, 2], p[1, 2])
    raise CalibrationError(f"none of {keys} found in calibration")


def _find_calibration(drive_dir: Path) -> Intrinsics:
    for cand in (drive_dir / "calib.txt", drive_dir.parent / "calib_cam_to_cam.txt", drive_dir / "calib_cam_to_cam.txt"):
        if cand.exists():
            return parse_calibration(cand.read_text())
    raise CalibrationError(f"no calibration file for {drive_dir}")


def _frame_path(drive_dir: Path, index: int, width: int) -> Optional[Path]:
    for ext in IMAGE_EXTS:
        p = drive_dir / "image_02" / "data" / f"{index:0{width}d}{ext}"
        if p.exists():
            return p
    return None


def parse_split_line(root: Path, line: str):
    """-> (drive_dir, frame index, zero-pad width)."""
    parts = line.split()
    if len(parts) >= 2 and parts[1].isdigit():
        return root / parts[0], int(parts[1]), 10
    p = Path(parts[0])
    drive = (root / p).parent.parent.parent
    return drive, int(p.stem), len(p.stem)


def load_kitti_layout(
    root,
    split_file,
    height: int,
    width: int,
    exclude_file=None,
    allow_boundary: bool = False,
) -> list:
    root = Path(root)
    lines = [l.strip() for l in Path(split_file).read_text().splitlines() if l.strip() and not l.startswith("#")]
    excluded = set()
    if exclude_file:
        for l in Path(exclude_file).read_text().splitlines():
            if l.strip():
                d, i, _ = parse_split_line(root, l.strip())
                excluded.add((d.resolve(), i))
    calib_cache: dict = {}
    out = []
    for line in lines:
        drive, idx, pad = parse_split_line(root, line)
        if (drive.resolve(), idx) in excluded:
            log.info("excluded frame %s %d", drive, idx)
            continue
        centre = _frame_path(drive, idx, pad)
        if centre is None:
            log.warning("missing frame %s %d, skipped", drive, idx)
            continue
        nbrs = [_frame_path(drive, idx - 1, pad), _frame_path(drive, idx + 1, pad)]
        if not allow_boundary and any(n is None for n in nbrs):
            log.info("frame %s %d lacks a neighbour, skipped", drive, idx)
            continue
        if all(n is None for n in nbrs):
            log.warning("frame %s %d has no neighbours, skipped", drive, idx)
            continue
        if drive not in calib_cache:
            calib_cache[drive] = _find_calibration(drive)
        raw = read_image(centre)
        h0, w0 = raw.shape[:2]
        k = calib_cache[drive].scaled(width / w0, height / h0)
        frames = [resize_image(read_image(n), height, width) if n is not None else None for n in nbrs]
        depth = None
        gt_path = drive / "depth_02" / f"{idx:0{pad}d}.png"
        if gt_path.exists():
            from ..evaluation import read_depth_png

            depth = resize_sparse_depth(read_depth_png(gt_path), height, width)
        out.append(
            ImageTriplet(frames[0], resize_image(raw, height, width), frames[1], depth=depth, intrinsics=k, name=f"{drive.name}/{idx:0{pad}d}")
        )
    return out
