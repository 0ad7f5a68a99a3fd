"""Batch assembly for both training phases.

Local batches pair each prepared cloud with a yawed, noisy copy of itself;
correspondences are computed against the noiseless copy. Global batches pick
place-recognition tuples from scene positions: positives within
``positive_distance`` of the anchor, negatives beyond ``negative_distance``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ..config import TrainingConfig
from ..errors import ConfigurationError, DegenerateBatchError, InsufficientDataError
from ..geometry import (
    PointCloud,
    RigidTransform,
    center_cloud,
    gt_correspondences,
    random_sample,
    synth_pair,
    voxel_downsample,
)
from ..utils.log import log


def prepare_cloud(cloud: PointCloud, cfg: TrainingConfig, seed: int) -> PointCloud:
    """Voxel filter, random sample to the network size, center."""
    filtered = voxel_downsample(cloud, cfg.voxel_grid)
    if filtered.count < cfg.anchors_per_pair:
        raise InsufficientDataError(
            f"cloud keeps {filtered.count} points after voxel filtering, fewer than {cfg.anchors_per_pair} anchors"
        )
    sampled, _ = random_sample(filtered, min(cfg.points_per_cloud, filtered.count), seed)
    return center_cloud(sampled)[0]


@dataclass
class LocalPair:
    cloud: PointCloud
    other: PointCloud
    # Maps ``cloud`` onto the noiseless, centered ``other``.
    transform: RigidTransform
    anchors: np.ndarray
    anchors_other: np.ndarray
    correspondences: np.ndarray
    source: int = -1


@dataclass
class LocalBatch:
    pairs: list[LocalPair]

    @property
    def combinations(self) -> int:
        return sum(p.correspondences.size for p in self.pairs)


def make_local_pair(cloud: PointCloud, cfg: TrainingConfig, seed: int) -> LocalPair:
    """Anchors are drawn among points with at least one correspondent; each
    anchor's partner is its closest correspondent in the other cloud."""
    rng = np.random.default_rng(seed)
    noisy, yaw = synth_pair(cloud, cfg.max_yaw, cfg.sigma_noise, int(rng.integers(2**31)))
    other, centroid = center_cloud(noisy)
    transform = RigidTransform(yaw.rotation, -centroid)
    noiseless = PointCloud(yaw.apply_points(cloud.points))
    full = gt_correspondences(cloud, noiseless, yaw.inverse(), cfg.tau)

    candidates = np.flatnonzero(full.any(axis=1))
    if candidates.size < 2:
        raise DegenerateBatchError("fewer than two points have a correspondent")
    n_anchors = min(cfg.anchors_per_pair, candidates.size)
    anchors = np.sort(rng.choice(candidates, size=n_anchors, replace=False))
    dist = cdist(cloud.points[anchors], yaw.inverse().apply_points(noiseless.points))
    dist = np.where(full[anchors] > 0, dist, np.inf)
    partners = np.argmin(dist, axis=1)
    corr = full[np.ix_(anchors, partners)]
    if corr.all():
        raise DegenerateBatchError("every sampled anchor pair corresponds; no negatives")
    return LocalPair(cloud, other, transform, anchors, partners, corr)


def sample_local_batch(clouds: list[PointCloud], cfg: TrainingConfig, rng: np.random.Generator) -> LocalBatch:
    pairs = []
    for _ in range(cfg.pairs_per_batch):
        index = int(rng.integers(len(clouds)))
        seed = int(rng.integers(2**31))
        try:
            pair = make_local_pair(clouds[index], cfg, seed)
            pair.source = index
            pairs.append(pair)
        except DegenerateBatchError as e:
            log.logger.warning(f"Skipping pair from cloud {index}: {e}")
    if not pairs:
        raise DegenerateBatchError("no usable pair in the batch")
    return LocalBatch(pairs)


@dataclass
class GlobalBatch:
    anchor: int
    positives: list[int]
    negatives: list[int]
    negstar: int

    @property
    def members(self) -> list[int]:
        return [self.anchor, *self.positives, *self.negatives, self.negstar]


def _planar(positions) -> np.ndarray:
    return np.asarray(positions, dtype=np.float64)[:, :2]


def quadruplet_anchors(positions, cfg: TrainingConfig) -> np.ndarray:
    """Scenes with enough positives, and enough negatives to also draw a neg*."""
    d = cdist(_planar(positions), _planar(positions))
    np.fill_diagonal(d, np.inf)
    n_pos = np.sum(d <= cfg.positive_distance, axis=1)
    n_neg = np.sum((d >= cfg.negative_distance) & np.isfinite(d), axis=1)
    return np.flatnonzero((n_pos >= cfg.positives) & (n_neg >= cfg.negatives + 1))


def sample_global_batch(positions, cfg: TrainingConfig, rng: np.random.Generator) -> GlobalBatch:
    valid = quadruplet_anchors(positions, cfg)
    if valid.size == 0:
        raise ConfigurationError(
            f"no scene has {cfg.positives} positives within {cfg.positive_distance} m and "
            f"{cfg.negatives + 1} negatives beyond {cfg.negative_distance} m"
        )
    d = cdist(_planar(positions), _planar(positions))
    anchor = int(rng.choice(valid))
    others = np.arange(d.shape[0]) != anchor
    positives = np.flatnonzero(others & (d[anchor] <= cfg.positive_distance))
    far = np.flatnonzero(d[anchor] >= cfg.negative_distance)
    chosen_pos = np.sort(rng.choice(positives, size=cfg.positives, replace=False))
    chosen_neg = np.sort(rng.choice(far, size=cfg.negatives, replace=False))
    rest = np.setdiff1d(far, chosen_neg)
    # neg* should be far from the anchor and from every chosen negative.
    isolated = rest[np.all(d[np.ix_(rest, chosen_neg)] >= cfg.negative_distance, axis=1)]
    negstar = int(rng.choice(isolated if isolated.size else rest))
    return GlobalBatch(anchor, chosen_pos.tolist(), chosen_neg.tolist(), negstar)
