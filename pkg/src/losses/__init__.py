from .local import (
    DEFAULT_ASR_K,
    DEFAULT_ETA_BAL,
    DEFAULT_KAPPA,
    DEFAULT_LAMBDA_DET,
    DEFAULT_MU,
    avg_success_rate,
    combined_local_loss,
    desc_loss,
    desc_loss_grad,
    det_loss,
    det_loss_grad,
    det_point_losses,
    feature_distances,
    feature_distances_backward,
    success_rates,
)
from .retrieval import DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_GAMMA, lazy_quadruplet_loss, weak_triplet_loss

__all__ = [
    "DEFAULT_ALPHA",
    "DEFAULT_ASR_K",
    "DEFAULT_BETA",
    "DEFAULT_ETA_BAL",
    "DEFAULT_GAMMA",
    "DEFAULT_KAPPA",
    "DEFAULT_LAMBDA_DET",
    "DEFAULT_MU",
    "avg_success_rate",
    "combined_local_loss",
    "desc_loss",
    "desc_loss_grad",
    "det_loss",
    "det_loss_grad",
    "det_point_losses",
    "feature_distances",
    "feature_distances_backward",
    "lazy_quadruplet_loss",
    "success_rates",
    "weak_triplet_loss",
]
