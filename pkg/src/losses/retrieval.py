"""Place-level objectives: the lazy quadruplet loss over global descriptors
and the weakly supervised triplet loss over local descriptor sets."""

import numpy as np
from scipy.spatial.distance import cdist

from ..config import LossConfig
from ..errors import DegenerateBatchError, InvalidArgumentError

DEFAULT_ALPHA = 0.5
DEFAULT_BETA = 0.2
DEFAULT_GAMMA = 0.2


def _unit_step(diff: np.ndarray, dist) -> np.ndarray:
    """∂‖diff‖/∂diff, zero at the origin."""
    dist = np.asarray(dist, dtype=np.float64)[..., None]
    return np.divide(diff, dist, out=np.zeros_like(diff), where=dist > 0)


def lazy_quadruplet_loss(
    anchor: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    negstar: np.ndarray,
    cfg: LossConfig | None = None,
    with_grads: bool = False,
):
    """max_j [α + δ_pos − δ_neg,j]₊ + max_j [β + δ_pos − δ*_j]₊ with the best
    positive δ_pos and δ*_j the distance from neg* to negative j.

    With ``with_grads`` returns ``(loss, grads)``; grads holds arrays for
    ``anchor``, ``positives``, ``negatives`` and ``negstar``.
    """
    cfg = cfg or LossConfig()
    a = np.asarray(anchor, dtype=np.float64).reshape(-1)
    pos = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    neg = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    star = np.asarray(negstar, dtype=np.float64).reshape(-1)
    if np.asarray(positives).size == 0:
        raise DegenerateBatchError("quadruplet has no positives")
    if np.asarray(negatives).size == 0:
        raise DegenerateBatchError("quadruplet has no negatives")
    if not (pos.shape[1] == neg.shape[1] == a.shape[0] == star.shape[0]):
        raise InvalidArgumentError("quadruplet descriptors differ in dimension")

    d_pos = np.linalg.norm(a - pos, axis=1)
    d_neg = np.linalg.norm(a - neg, axis=1)
    d_star = np.linalg.norm(star - neg, axis=1)
    best = np.argmin(d_pos)
    hardest = np.argmin(d_neg)
    closest = np.argmin(d_star)
    first = max(cfg.alpha + d_pos[best] - d_neg[hardest], 0.0)
    second = max(cfg.beta + d_pos[best] - d_star[closest], 0.0)
    loss = float(first + second)
    if not with_grads:
        return loss

    grads = {
        "anchor": np.zeros_like(a),
        "positives": np.zeros_like(pos),
        "negatives": np.zeros_like(neg),
        "negstar": np.zeros_like(star),
    }
    u_pos = _unit_step(a - pos[best], d_pos[best])
    active = int(first > 0) + int(second > 0)
    grads["anchor"] += active * u_pos
    grads["positives"][best] -= active * u_pos
    if first > 0:
        u_neg = _unit_step(a - neg[hardest], d_neg[hardest])
        grads["anchor"] -= u_neg
        grads["negatives"][hardest] += u_neg
    if second > 0:
        u_star = _unit_step(star - neg[closest], d_star[closest])
        grads["negstar"] -= u_star
        grads["negatives"][closest] += u_star
    return loss, grads


def weak_triplet_loss(
    anchor_feats: np.ndarray,
    pos_feats: np.ndarray,
    neg_feats: np.ndarray,
    gamma: float = DEFAULT_GAMMA,
    with_grads: bool = False,
):
    """Σ_n [min_i ‖x_n − x⁺_i‖ − min_j ‖x_n − x⁻_j‖ + γ]₊ over anchor descriptors x_n."""
    x = np.asarray(anchor_feats, dtype=np.float64)
    xp = np.asarray(pos_feats, dtype=np.float64)
    xn = np.asarray(neg_feats, dtype=np.float64)
    if min(x.shape[0], xp.shape[0], xn.shape[0]) == 0:
        raise InvalidArgumentError("weak triplet loss needs non-empty anchor, positive and negative sets")
    dp = cdist(x, xp)
    dn = cdist(x, xn)
    ip = np.argmin(dp, axis=1)
    i_n = np.argmin(dn, axis=1)
    rows = np.arange(x.shape[0])
    margins = dp[rows, ip] - dn[rows, i_n] + gamma
    active = margins > 0
    loss = float(np.sum(np.maximum(margins, 0.0)))
    if not with_grads:
        return loss

    u_pos = _unit_step(x - xp[ip], dp[rows, ip]) * active[:, None]
    u_neg = _unit_step(x - xn[i_n], dn[rows, i_n]) * active[:, None]
    d_pos = np.zeros_like(xp)
    d_neg = np.zeros_like(xn)
    np.add.at(d_pos, ip, -u_pos)
    np.add.at(d_neg, i_n, u_neg)
    return loss, {"anchor": u_pos - u_neg, "positives": d_pos, "negatives": d_neg}
