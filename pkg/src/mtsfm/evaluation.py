"""Depth metrics with per-image median scaling and an 80 m cap, the two
online-benchmark errors (SILog, SqErrRel), aggregation and report export."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

METRIC_NAMES = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3", "silog", "sq_err_rel")


class EvaluationError(ValueError):
    pass


@dataclass
class MetricsReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    silog: float
    sq_err_rel: float
    n_pixels: int

    def as_dict(self) -> dict:
        return asdict(self)


def garg_crop_mask(h: int, w: int) -> np.ndarray:
    """Boolean mask of the customary crop (rows 40.8%-99.2%, cols 3.6%-96.4%)."""
    m = np.zeros((h, w), dtype=bool)
    m[int(0.40810811 * h) : int(0.99189189 * h), int(0.03594771 * w) : int(0.96405229 * w)] = True
    return m


def median_scale(pred, gt) -> np.ndarray:
    """Scale ``pred`` by median(gt) / median(pred) over gt-valid (gt > 0) pixels."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    valid = gt > 0
    if not valid.any():
        raise EvaluationError("no valid ground-truth pixels")
    return pred * (np.median(gt[valid]) / np.median(pred[valid]))


def depth_metrics(pred, gt, cap: float = 80.0, min_depth: float = 1e-3, crop: bool = False) -> MetricsReport:
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise EvaluationError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    valid = (gt > 0) & (gt <= cap)
    if crop:
        valid &= garg_crop_mask(*gt.shape[-2:])
    if not valid.any():
        raise EvaluationError("empty valid mask")
    p = np.clip(pred[valid], min_depth, cap)
    g = gt[valid]
    ratio = np.maximum(p / g, g / p)
    e = np.log(p) - np.log(g)
    diff = p - g
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff**2 / g)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean(e**2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        silog=float(np.sqrt(np.mean((e - e.mean()) ** 2)) * 100),  # two-pass form of mean(e^2) - mean(e)^2
        sq_err_rel=float(100 * np.mean(diff**2 / g**2)),
        n_pixels=int(valid.sum()),
    )


def aggregate(reports: Iterable[MetricsReport]) -> MetricsReport:
    reports = list(reports)
    if not reports:
        raise EvaluationError("nothing to aggregate")
    vals = {k: float(np.mean([getattr(r, k) for r in reports])) for k in METRIC_NAMES}
    return MetricsReport(**vals, n_pixels=int(sum(r.n_pixels for r in reports)))


def evaluate_predictions(preds, gts, mode: str = "scaled", cap: float = 80.0, crop: bool = False) -> MetricsReport:
    if mode not in ("scaled", "unscaled"):
        raise ValueError("mode must be 'scaled' or 'unscaled'")
    reports = []
    for p, g in zip(preds, gts):
        if mode == "scaled":
            p = median_scale(p, g)
        reports.append(depth_metrics(p, g, cap=cap, crop=crop))
    return aggregate(reports)


def evaluate(model: Callable, dataset, mode: str = "scaled", cap: float = 80.0, crop: bool = False) -> MetricsReport:
    """Per-image metrics averaged over ``dataset`` (items with ``target`` and ``depth``).

    ``model`` maps an (H, W, 3) image to an (H, W) depth map.
    """
    items = [t for t in dataset if t.depth is not None]
    if not items:
        raise EvaluationError("dataset has no ground-truth depth")
    preds = [model(t.target) for t in items]
    return evaluate_predictions(preds, [t.depth for t in items], mode, cap, crop)


# -- export -----------------------------------------------------------------
def write_depth_png(path, depth) -> None:
    """16-bit single-channel PNG of depth * 256 (0 = invalid)."""
    from PIL import Image

    d = np.nan_to_num(np.asarray(depth, dtype=float), nan=0.0, posinf=0.0)
    arr = np.clip(np.round(d * 256.0), 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(str(path))


def read_depth_png(path) -> np.ndarray:
    from PIL import Image

    return np.asarray(Image.open(str(path))).astype(float) / 256.0


def report_csv(rows: dict, path=None) -> str:
    """CSV with one row per named report, columns in METRIC_NAMES order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", *METRIC_NAMES, "n_pixels"])
    for name, r in rows.items():
        w.writerow([name, *[repr(getattr(r, k)) for k in METRIC_NAMES], r.n_pixels])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def report_table(rows: dict) -> str:
    head = ["name", *METRIC_NAMES]
    body = [[name, *[f"{getattr(r, k):.4f}" for k in METRIC_NAMES]] for name, r in rows.items()]
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
    line = lambda cells: "  ".join(str(c).rjust(wd) for c, wd in zip(cells, widths))
    return "\n".join([line(head), line(["-" * wd for wd in widths])] + [line(b) for b in body])
