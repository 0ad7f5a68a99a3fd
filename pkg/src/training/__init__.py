from .batches import GlobalBatch, LocalBatch, LocalPair, make_local_pair, prepare_cloud, sample_global_batch, sample_local_batch
from .global_phase import quadruplet_objective, scene_features, train_global
from .gradcheck import BlockReport, run_gradcheck
from .history import GLOBAL_LOG_COLUMNS, LOCAL_LOG_COLUMNS, LossRecord, TrainingResult, write_loss_log
from .local_phase import local_pair_objective, train_local, weak_objective
from .optim import AdamState, adam_step
from .schedules import lr_schedule_global, lr_schedule_local

__all__ = [
    "AdamState",
    "BlockReport",
    "GLOBAL_LOG_COLUMNS",
    "GlobalBatch",
    "LOCAL_LOG_COLUMNS",
    "LocalBatch",
    "LocalPair",
    "LossRecord",
    "TrainingResult",
    "adam_step",
    "local_pair_objective",
    "lr_schedule_global",
    "lr_schedule_local",
    "make_local_pair",
    "prepare_cloud",
    "quadruplet_objective",
    "run_gradcheck",
    "sample_global_batch",
    "sample_local_batch",
    "scene_features",
    "train_global",
    "train_local",
    "weak_objective",
    "write_loss_log",
]
