from .extraction import CloudDescription, describe_cloud, minimum_points, register_descriptions
from .keypoints import (
    DEFAULT_KEYPOINTS,
    DEFAULT_NMS_RADIUS,
    DEFAULT_REPEATABILITY_RADIUS,
    ETH_REPEATABILITY_RADIUS,
    KeypointSet,
    relative_repeatability,
    select_keypoints,
)
from .retrieval import (
    DEFAULT_POSITIVE_RADIUS,
    DEFAULT_TOP_N,
    DescriptorDatabase,
    RetrievalResult,
    query_topk,
    recall_at_n,
    recall_at_one_percent,
    recall_curve,
)
from .robustness import (
    Perturbation,
    evaluate_local,
    evaluate_retrieval,
    one_factor_sweep,
    perturb_cloud,
)

__all__ = [
    "CloudDescription",
    "DEFAULT_KEYPOINTS",
    "DEFAULT_NMS_RADIUS",
    "DEFAULT_POSITIVE_RADIUS",
    "DEFAULT_REPEATABILITY_RADIUS",
    "DEFAULT_TOP_N",
    "DescriptorDatabase",
    "ETH_REPEATABILITY_RADIUS",
    "KeypointSet",
    "Perturbation",
    "RetrievalResult",
    "describe_cloud",
    "evaluate_local",
    "evaluate_retrieval",
    "minimum_points",
    "one_factor_sweep",
    "perturb_cloud",
    "query_topk",
    "recall_at_n",
    "recall_at_one_percent",
    "recall_curve",
    "register_descriptions",
    "relative_repeatability",
    "select_keypoints",
]
