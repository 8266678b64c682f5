"""Kernel discriminator fields, generator losses, training and Langevin sampling."""

from .field import DiscriminatorField, disc_eval, disc_grad, flow_residual, mean_kernel, mean_kernel_grad
from .langevin import LangevinDiverged, LangevinSchedule, langevin_run, schedule_alpha, schedule_gamma
from .losses import flowgan_drift, flowgan_drift_potential, flowgan_loss, scoregan_loss, scoregan_value
from .train import TrainConfig, TrainingDiverged, TrainResult, train

__all__ = [
    "DiscriminatorField", "disc_eval", "disc_grad", "flow_residual", "mean_kernel", "mean_kernel_grad",
    "LangevinDiverged", "LangevinSchedule", "langevin_run", "schedule_alpha", "schedule_gamma",
    "flowgan_drift", "flowgan_drift_potential", "flowgan_loss", "scoregan_loss", "scoregan_value",
    "TrainConfig", "TrainingDiverged", "TrainResult", "train",
]
