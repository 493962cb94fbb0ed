"""Mean median-scaled RMSE over a dataset for each corruption / attack condition."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from ..evaluation import evaluate
from .attacks import AttackConfig, flip_attack, pgd_attack
from .corruptions import CORRUPTIONS, CorruptionSpec, corrupt

CSV_HEADER = ("condition", "name", "epsilon", "severity", "mean_rmse", "n_images")


@dataclass(frozen=True)
class Condition:
    condition: str  # clean | corruption | pgd | flip_h | flip_v
    name: str = ""
    epsilon: float = 0.0
    severity: int = 0


def default_suite(severity: int = 5, pgd_eps=(0.25, 0.5, 1, 2, 4, 8, 16, 32), flip_eps=(1, 2, 4)) -> list:
    suite = [Condition("clean", "clean")]
    suite += [Condition("corruption", n, 0.0, severity) for n in CORRUPTIONS]
    suite += [Condition("pgd", "training_loss", float(e)) for e in pgd_eps]
    suite += [Condition(f"flip_{d}", f"flip_{d}", float(e)) for d in ("h", "v") for e in flip_eps]
    return suite


def perturb(model, dataset: list, cond: Condition, seed: int = 0, **attack_kw) -> list:
    if cond.condition == "clean":
        return dataset
    out = []
    for i, t in enumerate(dataset):
        if cond.condition == "corruption":
            img = corrupt(t.target, CorruptionSpec(cond.name, cond.severity), seed=seed + i)
            out.append(t.with_frames(t.prev, img, t.next))
        elif cond.condition == "pgd":
            out.append(pgd_attack(model, t, AttackConfig(cond.epsilon), **attack_kw))
        elif cond.condition in ("flip_h", "flip_v"):
            direction = "horizontal" if cond.condition == "flip_h" else "vertical"
            cfg = AttackConfig(cond.epsilon, loss_source=f"flip_rmse_{cond.condition[-1]}")
            out.append(t.with_frames(t.prev, flip_attack(model, t.target, direction, cfg), t.next))
        else:
            raise ValueError(f"unknown condition {cond.condition!r}")
    return out


def robustness_sweep(model, dataset, suite: Optional[Iterable[Condition]] = None, seed: int = 0, csv_path=None, **attack_kw) -> list:
    """Rows of (condition, name, epsilon, severity, mean_rmse, n_images), in suite order."""
    dataset = list(dataset)
    suite = list(suite) if suite is not None else default_suite()
    rows = []
    for cond in suite:
        data = perturb(model, dataset, cond, seed, **attack_kw)
        report = evaluate(model.predict_depth, data, mode="scaled")
        rows.append((cond.condition, cond.name, cond.epsilon, cond.severity, report.rmse, len(data)))
    if csv_path is not None:
        Path(csv_path).write_text(rows_to_csv(rows))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for cond, name, eps, sev, rmse, n in rows:
        w.writerow([cond, name, f"{eps:g}", sev, repr(float(rmse)), n])
    return buf.getvalue()
