from ..errors import InvalidArgumentError

LOCAL_BASE_LR = 1e-4
LOCAL_HALVING_EPOCHS = 5
GLOBAL_BASE_LR = 5e-4
GLOBAL_DECAY = 0.5
GLOBAL_DECAY_EPOCHS = 10
GLOBAL_MIN_LR = 1e-5


def _check_epoch(epoch: int):
    if epoch < 0:
        raise InvalidArgumentError(f"epoch must be non-negative, got {epoch}")


def lr_schedule_local(epoch: int, base: float = LOCAL_BASE_LR, halving_epochs: int = LOCAL_HALVING_EPOCHS) -> float:
    """base · 0.5^⌊epoch / halving_epochs⌋"""
    _check_epoch(epoch)
    return base * 0.5 ** (epoch // halving_epochs)


def lr_schedule_global(
    epoch: int,
    base: float = GLOBAL_BASE_LR,
    decay: float = GLOBAL_DECAY,
    decay_epochs: int = GLOBAL_DECAY_EPOCHS,
    floor: float = GLOBAL_MIN_LR,
) -> float:
    """base · decay^⌊epoch / decay_epochs⌋, never below ``floor``."""
    _check_epoch(epoch)
    return max(base * decay ** (epoch // decay_epochs), floor)
