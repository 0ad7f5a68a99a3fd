import numpy as np

from ..geometry import RigidTransform

RTE_THRESHOLD = 2.0
RRE_THRESHOLD = 5.0


def rotation_angle(rotation: np.ndarray) -> float:
    """Geodesic angle of a rotation in degrees; atan2 keeps it accurate near 0° and 180°."""
    skew = rotation - rotation.T
    sin = np.linalg.norm([skew[2, 1], skew[0, 2], skew[1, 0]]) / 2.0
    cos = (np.trace(rotation) - 1.0) / 2.0
    return float(np.degrees(np.arctan2(sin, cos)))


def rte_rre(estimate: RigidTransform, truth: RigidTransform) -> tuple[float, float]:
    """(translation error in meters, rotation error in degrees)."""
    rte = float(np.linalg.norm(estimate.translation - truth.translation))
    error = truth.inverse().compose(estimate)
    return rte, rotation_angle(error.rotation)


def registration_success(rte: float, rre: float, rte_threshold: float = RTE_THRESHOLD, rre_threshold: float = RRE_THRESHOLD) -> bool:
    return rte < rte_threshold and rre < rre_threshold
