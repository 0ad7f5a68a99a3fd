"""RANSAC over descriptor matches with a 3-point minimal solver.

Hypotheses are evaluated in a fixed, seeded order and only a strictly
better inlier count replaces the best model, so ties keep the earliest
hypothesis. The loop stops once enough hypotheses have been drawn to
reach ``confidence`` given the best inlier ratio w, i.e. after
⌈log(1 − confidence) / log(1 − w³)⌉ iterations.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateSampleError, InsufficientMatchesError
from ..geometry import PointCloud, RigidTransform
from ..utils.log import log
from .matching import MatchSet
from .solver import rigid_solve

DEFAULT_INLIER_THRESHOLD = 0.5
DEFAULT_MAX_ITER = 10000
DEFAULT_CONFIDENCE = 0.99
SAMPLE_SIZE = 3


@dataclass
class RegistrationResult:
    transform: RigidTransform
    inliers: int
    iterations: int
    converged: bool
    inlier_mask: np.ndarray | None = None


def required_iterations(inlier_ratio: float, confidence: float = DEFAULT_CONFIDENCE) -> float:
    if inlier_ratio >= 1.0:
        return 1
    p_good = inlier_ratio**SAMPLE_SIZE
    if p_good <= 0.0:
        return math.inf
    return math.ceil(math.log(1.0 - confidence) / math.log(1.0 - p_good))


def _coords(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)


def _inliers(transform: RigidTransform, a: np.ndarray, b: np.ndarray, threshold: float) -> np.ndarray:
    return np.linalg.norm(transform.apply_points(a) - b, axis=1) < threshold


def ransac_register(
    matches: MatchSet,
    cloud_a,
    cloud_b,
    inlier_threshold: float = DEFAULT_INLIER_THRESHOLD,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    confidence: float = DEFAULT_CONFIDENCE,
    weights: np.ndarray | None = None,
) -> RegistrationResult:
    """Transform mapping ``cloud_a`` onto ``cloud_b`` from the matched rows.

    ``weights`` (one per match, e.g. keypoint saliency) only affect the
    final refit on the inlier set.
    """
    if len(matches) < SAMPLE_SIZE:
        raise InsufficientMatchesError(f"RANSAC needs at least {SAMPLE_SIZE} matches, got {len(matches)}")
    a = _coords(cloud_a)[matches.index_a]
    b = _coords(cloud_b)[matches.index_b]
    n = a.shape[0]
    rng = np.random.default_rng(seed)

    best_transform, best_mask, best_count = None, None, -1
    needed = math.inf
    iterations = 0
    while iterations < max_iter and iterations < needed:
        iterations += 1
        sample = rng.choice(n, size=SAMPLE_SIZE, replace=False)
        try:
            candidate = rigid_solve(a[sample], b[sample])
        except DegenerateSampleError:
            continue
        mask = _inliers(candidate, a, b, inlier_threshold)
        count = int(mask.sum())
        if count > best_count:
            best_transform, best_mask, best_count = candidate, mask, count
            needed = required_iterations(count / n, confidence)

    if best_transform is None:
        raise InsufficientMatchesError(f"every sampled triple of {n} matches was degenerate")
    converged = iterations >= needed

    if best_count >= SAMPLE_SIZE:
        w = None if weights is None else np.asarray(weights, dtype=np.float64)[best_mask]
        try:
            refit = rigid_solve(a[best_mask], b[best_mask], w)
            refit_mask = _inliers(refit, a, b, inlier_threshold)
            if refit_mask.sum() >= best_count:
                best_transform, best_mask, best_count = refit, refit_mask, int(refit_mask.sum())
        except DegenerateSampleError:
            pass

    log.logger.debug(f"RANSAC: {best_count}/{n} inliers after {iterations} iterations (converged={converged})")
    return RegistrationResult(best_transform, best_count, iterations, converged, best_mask)
