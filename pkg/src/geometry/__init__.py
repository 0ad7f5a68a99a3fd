from .cloud import (
    DEFAULT_NETWORK_POINTS,
    DEFAULT_SIGMA_NOISE,
    DEFAULT_VOXEL_GRID,
    PointCloud,
    RigidTransform,
    apply_transform,
    canonical_subsample,
    center_cloud,
    random_sample,
    synth_pair,
    voxel_downsample,
)
from .correspondences import DEFAULT_TAU, gt_correspondences
from .neighbors import NeighborIndex, dilated_neighborhoods, knn

__all__ = [
    "DEFAULT_NETWORK_POINTS",
    "DEFAULT_SIGMA_NOISE",
    "DEFAULT_TAU",
    "DEFAULT_VOXEL_GRID",
    "NeighborIndex",
    "PointCloud",
    "RigidTransform",
    "apply_transform",
    "canonical_subsample",
    "center_cloud",
    "dilated_neighborhoods",
    "gt_correspondences",
    "knn",
    "random_sample",
    "synth_pair",
    "voxel_downsample",
]
