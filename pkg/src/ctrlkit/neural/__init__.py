from ctrlkit.neural.adam import Adam
from ctrlkit.neural.cg import CgResult, conjugate_gradient
from ctrlkit.neural.checkpoint import (
    load_checkpoint,
    load_policy,
    load_value,
    save_checkpoint,
    save_policy,
    save_value,
)
from ctrlkit.neural.fit import FIT_BATCH, FIT_EPOCHS, FitReport, mse_loss, value_fit
from ctrlkit.neural.mlp import Mlp, param_count
from ctrlkit.neural.policy import DiagGaussianPolicy

__all__ = [
    "Adam",
    "CgResult",
    "conjugate_gradient",
    "Mlp",
    "param_count",
    "DiagGaussianPolicy",
    "FitReport",
    "FIT_BATCH",
    "FIT_EPOCHS",
    "mse_loss",
    "value_fit",
    "load_checkpoint",
    "load_policy",
    "load_value",
    "save_checkpoint",
    "save_policy",
    "save_value",
]
