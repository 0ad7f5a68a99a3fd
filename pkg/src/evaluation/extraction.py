"""One-pass description of a cloud and descriptor-based registration of two
described clouds."""

from dataclasses import dataclass

import numpy as np

from ..config import ArchitectureConfig, EvalConfig
from ..errors import InsufficientDataError
from ..geometry import PointCloud, center_cloud
from ..net.model import extract
from ..net.params import ModelParams
from ..registration import RegistrationResult, match_descriptors, ransac_register
from .keypoints import KeypointSet, select_keypoints


@dataclass
class CloudDescription:
    cloud: PointCloud
    centroid: np.ndarray
    descriptors: np.ndarray
    saliency: np.ndarray
    keypoints: KeypointSet
    global_descriptor: np.ndarray | None = None
    degenerate: bool = False


def minimum_points(arch: ArchitectureConfig) -> int:
    return max(max(arch.flex_k), arch.projection_k, arch.aggregate_points or 1)


def describe_cloud(
    cloud: PointCloud,
    model: ModelParams,
    keypoints: int = 256,
    nms_radius: float = 0.5,
    with_global: bool = True,
) -> CloudDescription:
    """Centers the cloud, runs the network once and selects keypoints.
    Keypoint positions are reported in the input frame."""
    needed = minimum_points(model.arch)
    if cloud.count < needed:
        raise InsufficientDataError(f"cloud has {cloud.count} points; the network needs at least {needed}")
    centered, centroid = center_cloud(cloud)
    forward = extract(centered, model, with_global=with_global)
    selected = select_keypoints(forward.local.saliency, cloud, keypoints, nms_radius)
    global_ = forward.global_
    return CloudDescription(
        cloud=cloud,
        centroid=centroid,
        descriptors=forward.local.x,
        saliency=forward.local.saliency,
        keypoints=selected,
        global_descriptor=None if global_ is None else global_.descriptor,
        degenerate=False if global_ is None else global_.degenerate,
    )


def register_descriptions(
    source: CloudDescription,
    target: CloudDescription,
    cfg: EvalConfig,
    seed: int | None = None,
    saliency_weighted: bool = False,
) -> RegistrationResult:
    """Keypoint descriptors → matches → RANSAC; the transform maps ``source`` onto ``target``."""
    matches = match_descriptors(
        source.descriptors[source.keypoints.indices],
        target.descriptors[target.keypoints.indices],
        cfg.match_mode,
    )
    weights = None
    if saliency_weighted:
        weights = source.keypoints.scores[matches.index_a] * target.keypoints.scores[matches.index_b]
    return ransac_register(
        matches,
        source.keypoints.positions,
        target.keypoints.positions,
        inlier_threshold=cfg.inlier_threshold,
        max_iter=cfg.ransac_max_iter,
        seed=cfg.seed if seed is None else seed,
        confidence=cfg.ransac_confidence,
        weights=weights,
    )
