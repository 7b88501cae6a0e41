import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import torch

from ..errors import DivergenceError, PreconditionError
from ..geometry import nnec_radii
from ..preprocess.scene import SyntheticScene
from ..segmenter import EnergyConfig
from .callbacks import Callback
from .losses import DiscriminativeConfig, discriminative_loss
from .meter import AverageMeter

logger = logging.getLogger(__name__)


@dataclass
class OptimizeConfig:
    steps: int = 500
    # the loss averages over instances and disk pixels, so per-entry gradients are O(1e-4)
    learning_rate: float = 50.0
    channels: int = 8
    init_scale: float = 0.5
    disc: DiscriminativeConfig = field(default_factory=DiscriminativeConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    max_lr_halvings: int = 8

    def __post_init__(self):
        if self.steps < 1:
            raise PreconditionError(f"steps must be >= 1, got {self.steps}")
        if self.learning_rate < 0:
            raise PreconditionError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.channels < 1:
            raise PreconditionError(f"channels must be >= 1, got {self.channels}")


def init_field(scene: SyntheticScene, cfg: OptimizeConfig) -> torch.Tensor:
    """Seeded normal field scaled by init_scale"""
    generator = torch.Generator().manual_seed(scene.seed)
    shape = (cfg.channels,) + tuple(scene.dims)
    return torch.randn(shape, generator=generator, dtype=torch.float64) * cfg.init_scale


class EmbeddingTrainer:
    """
    Plain gradient descent of a free embedding field on the discriminative loss of one scene.
    A step whose update turns non-finite is retried with half the learning rate.
    """

    def __init__(self, scene: SyntheticScene, cfg: OptimizeConfig, field: torch.Tensor = None):
        self.scene = scene
        self.cfg = cfg
        self.field = init_field(scene, cfg) if field is None else field.clone()
        self.radii = nnec_radii(scene.points, scene.dims)
        self.lr = cfg.learning_rate
        self.history: List[float] = []

    def loss(self, field: torch.Tensor, with_grad=True):
        return discriminative_loss(field, self.scene.points, self.scene.labels, self.radii, self.cfg.disc,
                                   with_grad=with_grad)

    def train_one_step(self, step: int) -> float:
        result = self.loss(self.field)
        if not math.isfinite(result.value):
            raise DivergenceError(step)
        for _ in range(self.cfg.max_lr_halvings + 1):
            candidate = self.field - self.lr * result.gradient
            if bool(torch.isfinite(candidate).all()):
                self.field = candidate
                return result.value
            self.lr /= 2
            logger.warning("non-finite update at step %d, learning rate halved to %g", step, self.lr)
        raise DivergenceError(step)

    def train(self, steps: int = None, callback: Callback = None) -> List[float]:
        """
        :return: loss history, one value before every step plus the final loss
        """
        if steps is None:
            steps = self.cfg.steps
        if steps < 0:
            raise PreconditionError(f"steps must be >= 0, got {steps}")
        callback = callback or Callback()
        loss_meter = AverageMeter('disc_loss')
        callback.on_train_begin(steps)
        for step in range(steps):
            value = self.train_one_step(step)
            self.history.append(value)
            loss_meter(value)
            callback.on_step_end(step, value, self.lr)
        final = self.loss(self.field, with_grad=False).value
        if not math.isfinite(final):
            raise DivergenceError(steps)
        self.history.append(final)
        callback.on_train_end(self.history)
        logger.info("%s over %d steps, final %.6f", loss_meter, steps, final)
        return self.history


def optimize_embedding(scene: SyntheticScene, cfg: OptimizeConfig = None,
                       callback: Callback = None) -> Tuple[torch.Tensor, List[float]]:
    """
    Optimise a free (D, H, W) field for `cfg.steps` gradient steps on the scene's discriminative loss
    :return: (optimised field, loss history)
    """
    trainer = EmbeddingTrainer(scene, cfg or OptimizeConfig())
    history = trainer.train(callback=callback)
    return trainer.field, history
