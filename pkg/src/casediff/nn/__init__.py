from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, check_gradient, finite_diff_check, numerical_gradient
from .losses import TripletLossParams, mae, mse_loss, triplet_margin_loss
from .network import DEFAULT_INNER_WIDTHS, HiddenLayer, MlpModel, NetworkSpec, hidden_stack
from .optim import AdamState, adam_step
from .training import EpochRecord, TrainingConfig, TrainingLog, fit

__all__ = [
    "AdamState",
    "DEFAULT_INNER_WIDTHS",
    "EpochRecord",
    "GradCheckReport",
    "HiddenLayer",
    "MlpModel",
    "NetworkSpec",
    "TrainingConfig",
    "TrainingLog",
    "TripletLossParams",
    "adam_step",
    "check_gradient",
    "finite_diff_check",
    "fit",
    "hidden_stack",
    "load_checkpoint",
    "mae",
    "mse_loss",
    "numerical_gradient",
    "save_checkpoint",
    "triplet_margin_loss",
]
