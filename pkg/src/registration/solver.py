"""Weighted least-squares rigid alignment (cross-covariance SVD)."""

import numpy as np

from ..errors import DegenerateSampleError, InvalidArgumentError
from ..geometry import RigidTransform

MIN_SAMPLE_AREA = 1e-6


def spread_area(points: np.ndarray) -> float:
    """(√3/2)·σ₁·σ₂ of the centered points; equals the triangle area for three points."""
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return float(np.sqrt(3.0) / 2.0 * s[0] * s[1]) if s.shape[0] > 1 else 0.0


def rigid_solve(points_a, points_b, weights=None) -> RigidTransform:
    """T minimizing Σ w_i ‖T·a_i − b_i‖², with det(R) = +1."""
    a = np.asarray(points_a, dtype=np.float64)
    b = np.asarray(points_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise InvalidArgumentError(f"point sets must both be (n, 3), got {a.shape} and {b.shape}")
    if a.shape[0] < 3:
        raise DegenerateSampleError(f"need at least 3 pairs, got {a.shape[0]}")
    if spread_area(a) < MIN_SAMPLE_AREA or spread_area(b) < MIN_SAMPLE_AREA:
        raise DegenerateSampleError("sample is collinear")
    w = np.ones(a.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != a.shape[0] or np.any(w < 0) or not w.sum() > 0:
        raise InvalidArgumentError("weights must be non-negative, one per pair, with a positive sum")

    w = w / w.sum()
    centroid_a = w @ a
    centroid_b = w @ b
    h = (a - centroid_a).T @ ((b - centroid_b) * w[:, None])
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, d if d != 0 else 1.0]) @ u.T
    return RigidTransform(rotation, centroid_b - rotation @ centroid_a)
