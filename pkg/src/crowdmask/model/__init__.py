import random

import numpy as np
import torch

from .callbacks import Callback, ProgressCallback
from .ema import EmaConfig, ema_update, ema_update_module
from .embedding_trainer import EmbeddingTrainer, OptimizeConfig, init_field, optimize_embedding
from .losses import (DiscriminativeConfig, ForegroundConfig, LossResult, background_penalty,
                     discriminative_loss, finite_diff_gradient, foreground_constraint, max_relative_error)
from .meter import AverageMeter


def set_reproducible(seed):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
