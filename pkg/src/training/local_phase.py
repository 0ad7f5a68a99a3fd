"""Phase 1: encoder and detector trained on synthetic pairs.

Each step draws a batch of pairs, evaluates desc + λ·det per pair,
averages over the batch and takes one Adam step. The detector loss is
applied to both clouds of a pair, with success rates read off the rows
and the columns of the same distance matrix. Under weak supervision the
encoder is trained with the submap-level triplet loss instead and the
detector is left untouched.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from ..config import LossConfig, PipelineConfig, TrainingConfig
from ..errors import ConfigurationError, DegenerateBatchError, NumericError
from ..fileio.dataset import Scene
from ..geometry import PointCloud
from ..losses import (
    combined_local_loss,
    desc_loss,
    desc_loss_grad,
    det_loss,
    det_loss_grad,
    feature_distances,
    feature_distances_backward,
    success_rates,
    weak_triplet_loss,
)
from ..net.encoder import encoder_geometry
from ..net.model import ForwardPass, Gradients, backward, local_run
from ..net.params import ModelParams
from ..utils.log import log
from .batches import GlobalBatch, LocalPair, prepare_cloud, sample_global_batch, sample_local_batch
from .history import LossRecord, TrainingResult
from .optim import AdamState, adam_step
from .schedules import lr_schedule_local


@dataclass
class LocalObjective:
    loss: float
    desc: float
    det: float


def _scatter(shape, rows: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.zeros(shape, dtype=np.float64)
    np.add.at(out, rows, values)
    return out


def local_pair_objective(
    model: ModelParams,
    pair: LocalPair,
    cfg: LossConfig,
    grads: Gradients | None = None,
    scale: float = 1.0,
    geometry=None,
) -> LocalObjective:
    """Loss of one pair; with ``grads`` also accumulates ``scale`` × its gradient."""
    first = local_run(pair.cloud, model, geometry)
    second = local_run(pair.other, model)
    dist, dist_cache = feature_distances(first.x[pair.anchors], second.x[pair.anchors_other])
    corr = pair.correspondences
    desc = desc_loss(dist, corr, cfg)

    k = min(cfg.asr_k, dist.shape[0], dist.shape[1])
    asr_first = success_rates(dist, corr, k)
    asr_second = success_rates(dist.T, corr.T, k)
    s_first = first.saliency[pair.anchors, 0]
    s_second = second.saliency[pair.anchors_other, 0]
    det = 0.5 * (det_loss(s_first, asr_first, cfg) + det_loss(s_second, asr_second, cfg))
    loss = combined_local_loss(desc, det, cfg.lambda_det)
    if grads is None:
        return LocalObjective(loss, desc, det)

    d_first, d_second = feature_distances_backward(desc_loss_grad(dist, corr, cfg), dist_cache)
    d_sal_first = d_sal_second = None
    if cfg.lambda_det > 0:
        weight = 0.5 * cfg.lambda_det * scale
        d_sal_first = _scatter(first.saliency.shape, pair.anchors, weight * det_loss_grad(s_first, asr_first, cfg)[:, None])
        d_sal_second = _scatter(
            second.saliency.shape, pair.anchors_other, weight * det_loss_grad(s_second, asr_second, cfg)[:, None]
        )
    backward(
        ForwardPass(first), model, d_x=scale * _scatter(first.x.shape, pair.anchors, d_first),
        d_saliency=d_sal_first, grads=grads,
    )
    backward(
        ForwardPass(second), model, d_x=scale * _scatter(second.x.shape, pair.anchors_other, d_second),
        d_saliency=d_sal_second, grads=grads,
    )
    return LocalObjective(loss, desc, det)


def weak_objective(
    model: ModelParams,
    clouds: Sequence[PointCloud],
    batch: GlobalBatch,
    cfg: TrainingConfig,
    gamma: float,
    rng: np.random.Generator,
    grads: Gradients | None = None,
    geometries: dict | None = None,
) -> float:
    """Triplet loss of sampled anchor-cloud descriptors against all descriptors
    of the positive and of the negative clouds."""
    geometries = geometries if geometries is not None else {}
    members = [batch.anchor, *batch.positives, *batch.negatives]
    runs = {i: local_run(clouds[i], model, geometries.get(i)) for i in members}
    anchor = runs[batch.anchor]
    n = anchor.x.shape[0]
    rows = np.sort(rng.choice(n, size=min(cfg.anchors_per_pair, n), replace=False))
    positives = np.concatenate([runs[i].x for i in batch.positives])
    negatives = np.concatenate([runs[i].x for i in batch.negatives])
    loss, g = weak_triplet_loss(anchor.x[rows], positives, negatives, gamma, with_grads=True)
    if grads is None:
        return loss

    backward(ForwardPass(anchor), model, d_x=_scatter(anchor.x.shape, rows, g["anchor"]), grads=grads)
    for role in ("positives", "negatives"):
        indices = getattr(batch, role)
        sizes = np.cumsum([runs[i].x.shape[0] for i in indices])[:-1]
        for i, d_x in zip(indices, np.split(g[role], sizes)):
            backward(ForwardPass(runs[i]), model, d_x=d_x, grads=grads)
    return loss


def _clouds_and_positions(dataset: Sequence[PointCloud | Scene]):
    clouds = [item.cloud if isinstance(item, Scene) else item for item in dataset]
    positions = None
    if dataset and all(isinstance(item, Scene) for item in dataset):
        positions = np.stack([item.position[:2] for item in dataset])
    return clouds, positions


def train_local(
    dataset: Sequence[PointCloud | Scene],
    config: PipelineConfig,
    seed: int | None = None,
    model: ModelParams | None = None,
    on_checkpoint: Callable[[int, ModelParams], None] | None = None,
) -> TrainingResult:
    cfg = config.training
    loss_cfg = config.loss
    seed = cfg.seed if seed is None else seed
    dtype = np.float64 if cfg.double_precision else np.float32
    if not dataset:
        raise ConfigurationError("local training needs at least one cloud")
    model = model.astype(dtype) if model is not None else ModelParams.initialize(config.architecture, seed, dtype)

    clouds, positions = _clouds_and_positions(dataset)
    weak = cfg.supervision == "weak"
    if weak and positions is None:
        raise ConfigurationError("weak supervision needs scenes with positions")
    prepared = [prepare_cloud(c, cfg, seed + i) for i, c in enumerate(clouds)]
    geometries = {}

    trainable = model.names("encoder") if weak else model.names("encoder") + model.names("detector")
    state = AdamState(lr=cfg.local_lr, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    rng = np.random.default_rng(seed)
    result = TrainingResult(model)
    log.logger.info(
        f"Local training: {len(prepared)} clouds, {cfg.local_steps} steps, "
        f"{'weak' if weak else 'synthetic'} supervision, lambda_det={loss_cfg.lambda_det}"
    )

    for step in range(1, cfg.local_steps + 1):
        epoch = (step - 1) // cfg.local_steps_per_epoch
        state.lr = lr_schedule_local(epoch, cfg.local_lr, cfg.local_halving_epochs)
        grads = Gradients(model, trainable)
        try:
            if weak:
                batch = sample_global_batch(positions, cfg, rng)
                for i in batch.members:
                    if i not in geometries:
                        geometries[i] = encoder_geometry(prepared[i].points, model)
                loss = weak_objective(model, prepared, batch, cfg, loss_cfg.gamma, rng, grads, geometries)
                objective = LocalObjective(loss, loss, 0.0)
            else:
                batch = sample_local_batch(prepared, cfg, rng)
                scale = 1.0 / len(batch.pairs)
                parts = []
                for pair in batch.pairs:
                    if pair.source not in geometries:
                        geometries[pair.source] = encoder_geometry(pair.cloud.points, model)
                    parts.append(local_pair_objective(model, pair, loss_cfg, grads, scale, geometries[pair.source]))
                means = np.mean([[p.loss, p.desc, p.det] for p in parts], axis=0)
                objective = LocalObjective(*(float(v) for v in means))
        except DegenerateBatchError as e:
            log.logger.warning(f"Step {step}: skipping degenerate batch ({e})")
            result.skipped += 1
            continue

        if not np.isfinite(objective.loss):
            log.logger.error(f"Step {step}: non-finite loss (desc={objective.desc}, det={objective.det})")
            raise NumericError(f"non-finite loss at step {step}")
        adam_step(model, grads, state)
        result.history.append(LossRecord(step, epoch, state.lr, objective.loss, objective.desc, objective.det))
        log.logger.debug(
            f"step {step} epoch {epoch} lr {state.lr:.3g} loss {objective.loss:.6f} "
            f"desc {objective.desc:.6f} det {objective.det:.6f}"
        )
        if on_checkpoint is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            on_checkpoint(step, model)
            log.logger.info(f"Checkpoint at step {step} (loss {objective.loss:.6f})")

    log.logger.info(f"Local training finished: {len(result.history)} steps, {result.skipped} skipped")
    return result
