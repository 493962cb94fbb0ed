"""Natural corruptions, adversarial attacks and the RMSE robustness sweep."""
from .attacks import (
    FLIP_EPSILONS,
    PGD_EPSILONS,
    AttackConfig,
    flip,
    flip_attack,
    flip_loss_fn,
    flip_rmse,
    pgd,
    pgd_attack,
    pgd_iterations,
    training_loss_fn,
)
from .corruptions import CORRUPTIONS, DETERMINISTIC, CorruptionSpec, corrupt, param_table, params
from .sweep import CSV_HEADER, Condition, default_suite, robustness_sweep, rows_to_csv

__all__ = [
    "AttackConfig",
    "CORRUPTIONS",
    "CSV_HEADER",
    "Condition",
    "CorruptionSpec",
    "DETERMINISTIC",
    "FLIP_EPSILONS",
    "PGD_EPSILONS",
    "corrupt",
    "default_suite",
    "flip",
    "flip_attack",
    "flip_loss_fn",
    "flip_rmse",
    "param_table",
    "params",
    "pgd",
    "pgd_attack",
    "pgd_iterations",
    "robustness_sweep",
    "rows_to_csv",
    "training_loss_fn",
]
