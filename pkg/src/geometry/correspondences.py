import numpy as np
from scipy.spatial.distance import cdist

from ..errors import InvalidArgumentError
from .cloud import PointCloud, RigidTransform

DEFAULT_TAU = 0.5


def gt_correspondences(
    cloud: PointCloud,
    other: PointCloud,
    transform: RigidTransform,
    tau: float = DEFAULT_TAU,
) -> np.ndarray:
    """Binary matrix M with M[i, j] = 1 iff ‖p_i − T·p'_j‖ < tau."""
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    mapped = transform.apply_points(other.points)
    return (cdist(cloud.points, mapped) < tau).astype(np.uint8)
