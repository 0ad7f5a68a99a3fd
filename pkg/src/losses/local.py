"""Local descriptor and detector objectives.

The description loss pulls corresponding descriptors together and pushes
every non-corresponding pair beyond the margin mu. The detector loss rewards
saliency on points whose descriptor retrieves a correct correspondence early
(average successful rate) and penalizes it on the rest.
"""

import numpy as np
from scipy.spatial.distance import cdist

from ..config import LossConfig
from ..errors import DegenerateBatchError, InvalidArgumentError

DEFAULT_MU = 0.5
DEFAULT_ETA_BAL = 1.0
DEFAULT_KAPPA = 0.6
DEFAULT_ASR_K = 5
DEFAULT_LAMBDA_DET = 1.0


def feature_distances(x: np.ndarray, x2: np.ndarray):
    """D[i, j] = ‖x_i − x'_j‖ plus the cache for :func:`feature_distances_backward`."""
    if x.ndim != 2 or x2.ndim != 2 or x.shape[1] != x2.shape[1]:
        raise InvalidArgumentError(f"descriptor maps must be (N, D) and (N', D), got {x.shape} and {x2.shape}")
    d = cdist(x.astype(np.float64, copy=False), x2.astype(np.float64, copy=False))
    return d, (x, x2, d)


def feature_distances_backward(d_dist: np.ndarray, cache):
    """Gradients w.r.t. both descriptor maps. Zero distances contribute nothing."""
    x, x2, d = cache
    x = x.astype(np.float64, copy=False)
    x2 = x2.astype(np.float64, copy=False)
    w = np.divide(d_dist, d, out=np.zeros_like(d), where=d > 0)
    d_x = x * w.sum(axis=1, keepdims=True) - w @ x2
    d_x2 = x2 * w.sum(axis=0)[:, None] - w.T @ x
    return d_x, d_x2


def _pair_counts(dist: np.ndarray, corr: np.ndarray) -> tuple[float, float]:
    if dist.shape != corr.shape:
        raise InvalidArgumentError(f"distance matrix {dist.shape} and correspondences {corr.shape} differ")
    positives = float(np.sum(corr))
    negatives = float(corr.size) - positives
    if positives == 0:
        raise DegenerateBatchError("batch has no corresponding pairs")
    if negatives == 0:
        raise DegenerateBatchError("batch has no non-corresponding pairs")
    return positives, negatives


def desc_loss(dist: np.ndarray, corr: np.ndarray, cfg: LossConfig | None = None) -> float:
    """Mean positive distance plus eta_bal times the mean negative hinge."""
    cfg = cfg or LossConfig()
    positives, negatives = _pair_counts(dist, corr)
    m = corr.astype(np.float64)
    pull = np.sum(m * dist) / positives
    push = np.sum((1.0 - m) * np.maximum(cfg.mu - dist, 0.0)) / negatives
    return float(pull + cfg.eta_bal * push)


def desc_loss_grad(dist: np.ndarray, corr: np.ndarray, cfg: LossConfig | None = None) -> np.ndarray:
    cfg = cfg or LossConfig()
    positives, negatives = _pair_counts(dist, corr)
    m = corr.astype(np.float64)
    active = (cfg.mu - dist) > 0
    return m / positives - cfg.eta_bal * (1.0 - m) * active / negatives


def avg_success_rate(d_row: np.ndarray, correct, k: int = DEFAULT_ASR_K) -> float:
    """Mean over j = 1..k of "a correct index is among the j nearest"."""
    d_row = np.asarray(d_row, dtype=np.float64).reshape(-1)
    if not 1 <= k <= d_row.shape[0]:
        raise InvalidArgumentError(f"k must be in [1, {d_row.shape[0]}], got {k}")
    correct = np.asarray(list(correct), dtype=np.int64)
    if correct.size == 0:
        return 0.0
    ranked = np.argsort(d_row, kind="stable")[:k]
    hits = np.maximum.accumulate(np.isin(ranked, correct))
    return float(hits.mean())


def success_rates(dist: np.ndarray, corr: np.ndarray, k: int = DEFAULT_ASR_K) -> np.ndarray:
    """Average successful rate of every row of ``dist`` against the columns marked in ``corr``."""
    if dist.shape != corr.shape:
        raise InvalidArgumentError(f"distance matrix {dist.shape} and correspondences {corr.shape} differ")
    if not 1 <= k <= dist.shape[1]:
        raise InvalidArgumentError(f"k must be in [1, {dist.shape[1]}], got {k}")
    ranked = np.argsort(dist, axis=1, kind="stable")[:, :k]
    hits = np.take_along_axis(corr, ranked, axis=1) > 0
    return np.maximum.accumulate(hits, axis=1).mean(axis=1)


def _saliency_rates(saliency: np.ndarray, asr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(saliency, dtype=np.float64)
    ar = np.asarray(asr, dtype=np.float64)
    if s.ndim == 2 and s.shape[1] == 1:
        s = s[:, 0]
    if s.ndim != 1 or s.shape != ar.shape:
        raise InvalidArgumentError(f"saliency {np.shape(saliency)} does not match rates {np.shape(asr)}")
    return s, ar


def det_point_losses(saliency: np.ndarray, asr: np.ndarray, cfg: LossConfig | None = None) -> np.ndarray:
    cfg = cfg or LossConfig()
    s, ar = _saliency_rates(saliency, asr)
    return 1.0 - cfg.kappa * (1.0 - s) - s * ar


def det_loss(saliency: np.ndarray, asr: np.ndarray, cfg: LossConfig | None = None) -> float:
    return float(det_point_losses(saliency, asr, cfg).mean())


def det_loss_grad(saliency: np.ndarray, asr: np.ndarray, cfg: LossConfig | None = None, mean: bool = True) -> np.ndarray:
    """∂loss/∂s_i. Per point this is kappa − ar_i; ``mean`` divides by N as in :func:`det_loss`."""
    cfg = cfg or LossConfig()
    s, ar = _saliency_rates(saliency, asr)
    grad = cfg.kappa - ar
    return grad / s.shape[0] if mean else grad


def combined_local_loss(desc: float, det: float, lambda_det: float = DEFAULT_LAMBDA_DET) -> float:
    if lambda_det < 0:
        raise InvalidArgumentError(f"lambda_det must be non-negative, got {lambda_det}")
    return float(desc + lambda_det * det)
