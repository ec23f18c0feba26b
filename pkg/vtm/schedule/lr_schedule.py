"""Step-decay learning-rate schedule used by both training stages."""

from transformers.utils import logging

from ..errors import ConfigError

logger = logging.get_logger(__name__)


class StepDecaySchedule:
    """Learning rate multiplied by ``decay`` every ``every`` epochs (epochs count from 0)."""

    def __init__(self, base_lr: float = 1e-4, decay: float = 0.5, every: int = 100):
        if base_lr <= 0 or decay <= 0 or every < 1:
            raise ConfigError(f"invalid schedule: base_lr={base_lr}, decay={decay}, every={every}")
        self.base_lr = base_lr
        self.decay = decay
        self.every = every
        logger.debug(f"lr {base_lr} x{decay} every {every} epochs")

    def lr_at(self, epoch: int) -> float:
        if epoch < 0:
            raise ConfigError(f"epoch must be non-negative, got {epoch}")
        return self.base_lr * self.decay ** (epoch // self.every)

    def __call__(self, epoch: int) -> float:
        return self.lr_at(epoch)


__all__ = ["StepDecaySchedule"]
