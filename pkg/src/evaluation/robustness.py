"""Robustness sweeps over noise, yaw rotation and downsampling.

Every sweep point perturbs each scene with one (σ, yaw, α) setting and
scores the perturbed copy against the clean scene: keypoint repeatability
and registration for the local task, place recognition for the global one.
Factors are swept one at a time around the unperturbed setting.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from ..config import EvalConfig
from ..errors import InsufficientMatchesError, InvalidArgumentError
from ..fileio.dataset import Scene
from ..geometry import PointCloud, RigidTransform, random_sample
from ..net.params import ModelParams
from ..registration import registration_success, rte_rre
from ..utils.log import log
from .extraction import CloudDescription, describe_cloud, register_descriptions
from .keypoints import relative_repeatability
from .retrieval import DescriptorDatabase, recall_at_n, recall_at_one_percent

SWEEP_NOISE = [0.0, 0.05, 0.1, 0.15, 0.2]
SWEEP_ROTATION = [0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0]
SWEEP_DOWNSAMPLE = [1.0, 2.0, 4.0, 8.0]

SWEEP_COLUMNS = ["noise", "rotation", "downsample"]
REPEATABILITY_COLUMNS = SWEEP_COLUMNS + ["pairs", "repeatability"]
REGISTRATION_COLUMNS = SWEEP_COLUMNS + ["pairs", "success_rate", "rte", "rre", "iterations", "inliers"]
RETRIEVAL_COLUMNS = SWEEP_COLUMNS + ["queries", "recall_at_1", "recall_at_1pct"]


@dataclass(frozen=True)
class Perturbation:
    noise: float = 0.0
    rotation: float = 0.0
    downsample: float = 1.0

    def __post_init__(self):
        if self.noise < 0:
            raise InvalidArgumentError(f"noise must be non-negative, got {self.noise}")
        if self.downsample < 1:
            raise InvalidArgumentError(f"downsample factor must be >= 1, got {self.downsample}")

    def row(self) -> dict:
        return {"noise": self.noise, "rotation": self.rotation, "downsample": self.downsample}


def one_factor_sweep(
    noise: Iterable[float] = (),
    rotation: Iterable[float] = (),
    downsample: Iterable[float] = (),
) -> list[Perturbation]:
    """The unperturbed setting followed by each factor varied on its own."""
    points = [Perturbation()]
    points += [Perturbation(noise=v) for v in noise]
    points += [Perturbation(rotation=v) for v in rotation]
    points += [Perturbation(downsample=v) for v in downsample]
    return list(dict.fromkeys(points))


def perturb_cloud(cloud: PointCloud, perturbation: Perturbation, seed: int) -> tuple[PointCloud, RigidTransform]:
    """Downsample (keep N/α uniformly), yaw about the origin, add noise.
    The transform maps the input onto the noiseless perturbed points."""
    rng = np.random.default_rng(seed)
    if perturbation.downsample > 1:
        keep = max(1, int(round(cloud.count / perturbation.downsample)))
        cloud, _ = random_sample(cloud, keep, int(rng.integers(2**31)))
    truth = RigidTransform.from_yaw(perturbation.rotation)
    points = truth.apply_points(cloud.points)
    if perturbation.noise > 0:
        points = points + rng.normal(0.0, perturbation.noise, size=points.shape)
    return PointCloud(points), truth


def _describe(cloud: PointCloud, model: ModelParams, cfg: EvalConfig, with_global: bool) -> CloudDescription:
    return describe_cloud(cloud, model, cfg.keypoints, cfg.nms_radius, with_global)


def evaluate_local(
    scenes: Sequence[Scene],
    model: ModelParams,
    cfg: EvalConfig,
    perturbations: Sequence[Perturbation],
    tasks: Sequence[str] = ("repeatability", "registration"),
    radius: float | None = None,
    seed: int | None = None,
    saliency_weighted: bool = False,
) -> list[dict]:
    """One row per sweep point with the requested task metrics."""
    seed = cfg.seed if seed is None else seed
    radius = cfg.repeatability_radius if radius is None else radius
    clean = [_describe(s.cloud, model, cfg, with_global=False) for s in scenes]
    rows = []
    for p_index, perturbation in enumerate(perturbations):
        repeat, successes, rtes, rres, iterations, inliers = [], [], [], [], [], []
        for s_index, (scene, source) in enumerate(zip(scenes, clean)):
            cloud, truth = perturb_cloud(scene.cloud, perturbation, seed + 1000 * p_index + s_index)
            target = _describe(cloud, model, cfg, with_global=False)
            if "repeatability" in tasks:
                repeat.append(relative_repeatability(source.keypoints, target.keypoints, truth, radius))
            if "registration" in tasks:
                try:
                    result = register_descriptions(source, target, cfg, seed + s_index, saliency_weighted)
                except InsufficientMatchesError as e:
                    log.logger.warning(f"{scene.id} under {perturbation}: registration failed ({e})")
                    successes.append(False)
                    continue
                rte, rre = rte_rre(result.transform, truth)
                successes.append(registration_success(rte, rre, cfg.rte_threshold, cfg.rre_threshold))
                rtes.append(rte)
                rres.append(rre)
                iterations.append(result.iterations)
                inliers.append(result.inliers)
        row = {**perturbation.row(), "pairs": len(scenes)}
        if "repeatability" in tasks:
            row["repeatability"] = float(np.mean(repeat))
        if "registration" in tasks:
            row.update(
                success_rate=100.0 * float(np.mean(successes)),
                rte=float(np.mean(rtes)) if rtes else float("nan"),
                rre=float(np.mean(rres)) if rres else float("nan"),
                iterations=float(np.mean(iterations)) if iterations else float("nan"),
                inliers=float(np.mean(inliers)) if inliers else float("nan"),
            )
        log.logger.info(f"Sweep point {perturbation}: {row}")
        rows.append(row)
    return rows


def evaluate_retrieval(
    scenes: Sequence[Scene],
    model: ModelParams,
    cfg: EvalConfig,
    perturbations: Sequence[Perturbation],
    seed: int | None = None,
    leave_one_out: bool = False,
) -> list[dict]:
    """Clean scenes form the database; their perturbed copies are the queries.
    With ``leave_one_out`` each query is scored against a database without
    its own source scene."""
    seed = cfg.seed if seed is None else seed
    clean = [_describe(s.cloud, model, cfg, with_global=True) for s in scenes]
    descriptors = np.stack([c.global_descriptor for c in clean])
    positions = np.stack([s.position for s in scenes])
    ids = [s.id for s in scenes]
    db = DescriptorDatabase(descriptors, positions, ids)
    rows = []
    for p_index, perturbation in enumerate(perturbations):
        queries = np.stack([
            _describe(perturb_cloud(s.cloud, perturbation, seed + 1000 * p_index + i)[0], model, cfg, True).global_descriptor
            for i, s in enumerate(scenes)
        ])
        if leave_one_out:
            hits_1, hits_pct = [], []
            for i in range(len(scenes)):
                keep = np.arange(len(scenes)) != i
                sub = DescriptorDatabase(descriptors[keep], positions[keep], [d for d, k in zip(ids, keep) if k])
                hits_1.append(recall_at_n(queries[i:i + 1], positions[i:i + 1], sub, 1, cfg.positive_radius))
                hits_pct.append(recall_at_one_percent(queries[i:i + 1], positions[i:i + 1], sub, cfg.positive_radius))
            at_1, at_pct = float(np.mean(hits_1)), float(np.mean(hits_pct))
        else:
            at_1 = recall_at_n(queries, positions, db, 1, cfg.positive_radius)
            at_pct = recall_at_one_percent(queries, positions, db, cfg.positive_radius)
        row = {**perturbation.row(), "queries": len(scenes), "recall_at_1": at_1, "recall_at_1pct": at_pct}
        log.logger.info(f"Sweep point {perturbation}: {row}")
        rows.append(row)
    return rows
