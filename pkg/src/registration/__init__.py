from .matching import MatchSet, match_descriptors
from .metrics import RRE_THRESHOLD, RTE_THRESHOLD, registration_success, rotation_angle, rte_rre
from .ransac import (
    DEFAULT_CONFIDENCE,
    DEFAULT_INLIER_THRESHOLD,
    DEFAULT_MAX_ITER,
    RegistrationResult,
    ransac_register,
    required_iterations,
)
from .solver import MIN_SAMPLE_AREA, rigid_solve

__all__ = [
    "DEFAULT_CONFIDENCE",
    "DEFAULT_INLIER_THRESHOLD",
    "DEFAULT_MAX_ITER",
    "MIN_SAMPLE_AREA",
    "MatchSet",
    "RRE_THRESHOLD",
    "RTE_THRESHOLD",
    "RegistrationResult",
    "match_descriptors",
    "ransac_register",
    "registration_success",
    "required_iterations",
    "rigid_solve",
    "rotation_angle",
    "rte_rre",
]
