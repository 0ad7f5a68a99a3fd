"""Phase 2: the encoder is frozen and only the assembler (projection,
attention, NetVLAD or pooling, FC) learns, from lazy quadruplets.

Local descriptors of every scene are computed once up front; with the
encoder frozen they cannot change during this phase.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from ..config import LossConfig, PipelineConfig
from ..errors import ConfigurationError, DegenerateBatchError, NumericError, ToolkitError
from ..fileio.dataset import Scene
from ..geometry import PointCloud
from ..losses import lazy_quadruplet_loss
from ..net.model import Gradients, global_backward, global_run, local_run, projection_neighborhoods
from ..net.params import ModelParams
from ..utils.log import log
from .batches import GlobalBatch, prepare_cloud, quadruplet_anchors, sample_global_batch
from .history import LossRecord, TrainingResult
from .optim import AdamState, adam_step
from .schedules import lr_schedule_global


@dataclass
class SceneFeatures:
    points: np.ndarray
    x: np.ndarray
    neighborhoods: np.ndarray | None = None


def scene_features(cloud: PointCloud, model: ModelParams) -> SceneFeatures:
    local = local_run(cloud, model)
    neighborhoods = projection_neighborhoods(cloud.points, model) if model.arch.aggregator == "netvlad" else None
    return SceneFeatures(cloud.points, local.x, neighborhoods)


def quadruplet_objective(
    model: ModelParams,
    features: Sequence[SceneFeatures],
    batch: GlobalBatch,
    cfg: LossConfig,
    grads: Gradients | None = None,
) -> float:
    passes = {}
    for i in dict.fromkeys(batch.members):
        f = features[i]
        passes[i] = global_run(f.points, f.x, model, f.neighborhoods)
        if passes[i].degenerate:
            raise DegenerateBatchError(f"scene {i} produced a degenerate global descriptor")
    loss, g = lazy_quadruplet_loss(
        passes[batch.anchor].descriptor,
        np.stack([passes[i].descriptor for i in batch.positives]),
        np.stack([passes[i].descriptor for i in batch.negatives]),
        passes[batch.negstar].descriptor,
        cfg,
        with_grads=True,
    )
    if grads is None:
        return loss

    upstream: dict[int, np.ndarray] = {}

    def add(i, d):
        upstream[i] = upstream[i] + d if i in upstream else d

    add(batch.anchor, g["anchor"])
    add(batch.negstar, g["negstar"])
    for i, d in zip(batch.positives, g["positives"]):
        add(i, d)
    for i, d in zip(batch.negatives, g["negatives"]):
        add(i, d)
    for i, d in upstream.items():
        if np.any(d):
            assembler_grads, _ = global_backward(passes[i], d.astype(model.dtype))
            grads.accumulate(assembler_grads)
    grads.check_finite()
    return loss


def train_global(
    dataset: Sequence[Scene],
    model: ModelParams | None,
    config: PipelineConfig,
    seed: int | None = None,
    on_checkpoint: Callable[[int, ModelParams], None] | None = None,
) -> TrainingResult:
    cfg = config.training
    seed = cfg.seed if seed is None else seed
    if model is None:
        raise ConfigurationError("global training needs a phase-1 model")
    if not all(isinstance(s, Scene) for s in dataset):
        raise ConfigurationError("global training needs scenes with positions")
    positions = np.stack([s.position[:2] for s in dataset]) if dataset else np.zeros((0, 2))
    if quadruplet_anchors(positions, cfg).size == 0:
        raise ConfigurationError(
            f"dataset has no valid quadruplet ({cfg.positives} positives within {cfg.positive_distance} m, "
            f"{cfg.negatives + 1} scenes beyond {cfg.negative_distance} m)"
        )

    model = model.astype(np.float64 if cfg.double_precision else np.float32)
    frozen = model.digest("encoder")
    log.logger.info(f"Encoder digest before global training: {frozen}")
    features = [scene_features(prepare_cloud(s.cloud, cfg, seed + i), model) for i, s in enumerate(dataset)]

    trainable = model.names("assembler")
    state = AdamState(lr=cfg.global_lr, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    rng = np.random.default_rng(seed)
    result = TrainingResult(model)
    log.logger.info(f"Global training: {len(features)} scenes, {cfg.global_steps} steps, aggregator {model.arch.aggregator}")

    for step in range(1, cfg.global_steps + 1):
        epoch = (step - 1) // cfg.global_steps_per_epoch
        state.lr = lr_schedule_global(epoch, cfg.global_lr, cfg.global_decay, cfg.global_decay_epochs, cfg.global_lr_min)
        batch = sample_global_batch(positions, cfg, rng)
        grads = Gradients(model, trainable)
        try:
            loss = quadruplet_objective(model, features, batch, config.loss, grads)
        except DegenerateBatchError as e:
            log.logger.warning(f"Step {step}: skipping degenerate batch ({e})")
            result.skipped += 1
            continue
        if not np.isfinite(loss):
            log.logger.error(f"Step {step}: non-finite quadruplet loss")
            raise NumericError(f"non-finite loss at step {step}")
        adam_step(model, grads, state)
        result.history.append(LossRecord(step, epoch, state.lr, loss))
        log.logger.debug(f"step {step} epoch {epoch} lr {state.lr:.3g} loss {loss:.6f}")
        if on_checkpoint is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            on_checkpoint(step, model)
            log.logger.info(f"Checkpoint at step {step} (loss {loss:.6f})")

    after = model.digest("encoder")
    if after != frozen:
        raise ToolkitError("encoder parameters changed during global training")
    log.logger.info(f"Encoder digest unchanged after global training: {after}")
    return result
