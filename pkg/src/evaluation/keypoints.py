from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InvalidArgumentError
from ..geometry import NeighborIndex, PointCloud, RigidTransform
from ..utils.log import log

DEFAULT_KEYPOINTS = 256
DEFAULT_NMS_RADIUS = 0.5
DEFAULT_REPEATABILITY_RADIUS = 0.5
ETH_REPEATABILITY_RADIUS = 0.3


@dataclass
class KeypointSet:
    """Selected point indices in descending score order, with their coordinates."""

    indices: np.ndarray
    scores: np.ndarray
    positions: np.ndarray

    def __len__(self):
        return self.indices.shape[0]


def select_keypoints(saliency: np.ndarray, cloud: PointCloud, m: int = DEFAULT_KEYPOINTS, nms_radius: float = DEFAULT_NMS_RADIUS) -> KeypointSet:
    """Greedy non-maximum suppression over scores; ``nms_radius = 0`` is plain top-m."""
    scores = np.asarray(saliency, dtype=np.float64).reshape(-1)
    n = cloud.count
    if scores.shape[0] != n:
        raise InvalidArgumentError(f"{scores.shape[0]} scores for {n} points")
    if m < 1:
        raise InvalidArgumentError(f"keypoint count must be >= 1, got {m}")
    if nms_radius < 0:
        raise InvalidArgumentError(f"nms radius must be non-negative, got {nms_radius}")
    if m > n:
        log.logger.warning(f"Requested {m} keypoints from a cloud of {n} points; returning all of them.")
        m = n

    order = np.lexsort((np.arange(n), -scores))
    if nms_radius == 0:
        chosen = order[:m]
    else:
        tree = cKDTree(cloud.points)
        suppressed = np.zeros(n, dtype=bool)
        picked = []
        for i in order:
            if suppressed[i]:
                continue
            picked.append(i)
            if len(picked) == m:
                break
            near = np.asarray(tree.query_ball_point(cloud.points[i], nms_radius), dtype=np.int64)
            near = near[np.linalg.norm(cloud.points[near] - cloud.points[i], axis=1) < nms_radius]
            suppressed[near] = True
        chosen = np.asarray(picked, dtype=np.int64)
    return KeypointSet(chosen, scores[chosen], cloud.points[chosen])


def relative_repeatability(
    keypoints: KeypointSet,
    other: KeypointSet,
    transform: RigidTransform,
    radius: float = DEFAULT_REPEATABILITY_RADIUS,
) -> float:
    """Fraction of ``keypoints`` that land, under ``transform``, closer than
    ``radius`` to some keypoint of ``other``."""
    if len(keypoints) == 0 or len(other) == 0:
        raise InvalidArgumentError("repeatability needs two non-empty keypoint sets")
    _, dist = NeighborIndex(other.positions).nearest(transform.apply_points(keypoints.positions))
    return float(np.mean(dist < radius))
