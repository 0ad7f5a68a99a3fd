import csv
from dataclasses import dataclass, field

from ..net.params import ModelParams

LOCAL_LOG_COLUMNS = ["step", "epoch", "lr", "loss", "desc", "det"]
GLOBAL_LOG_COLUMNS = ["step", "epoch", "lr", "loss"]


@dataclass
class LossRecord:
    step: int
    epoch: int
    lr: float
    loss: float
    desc: float | None = None
    det: float | None = None

    def row(self, columns: list[str]) -> list[str]:
        return [repr(getattr(self, c)) if isinstance(getattr(self, c), float) else str(getattr(self, c)) for c in columns]


@dataclass
class TrainingResult:
    model: ModelParams
    history: list[LossRecord] = field(default_factory=list)
    skipped: int = 0

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.history]


def write_loss_log(path: str, history: list[LossRecord], columns: list[str]):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for record in history:
            writer.writerow(record.row(columns))
