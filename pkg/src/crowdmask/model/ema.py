from dataclasses import dataclass

import torch

from ..errors import InputError, PreconditionError


@dataclass
class EmaConfig:
    momentum: float = 0.999

    def __post_init__(self):
        # the endpoints are accepted: 1 freezes the teacher, 0 copies the student
        if not 0.0 <= self.momentum <= 1.0:
            raise PreconditionError(f"EMA momentum must lie in [0, 1], got {self.momentum}")


def ema_update(teacher, student, cfg: EmaConfig = None) -> torch.Tensor:
    """
    out = momentum * teacher + (1 - momentum) * student, elementwise
    :param teacher: parameter vector (tensor or sequence)
    :param student: parameter vector of the same length
    """
    cfg = cfg or EmaConfig()
    teacher = torch.as_tensor(teacher, dtype=torch.float64)
    student = torch.as_tensor(student, dtype=torch.float64)
    if teacher.shape != student.shape:
        raise InputError(f"teacher has shape {tuple(teacher.shape)}, student {tuple(student.shape)}")
    return cfg.momentum * teacher + (1.0 - cfg.momentum) * student


@torch.no_grad()
def ema_update_module(teacher: torch.nn.Module, student: torch.nn.Module, cfg: EmaConfig = None):
    """
    In-place mean-teacher update of every floating parameter and buffer; integer buffers
    (e.g. batch-norm counters) are copied from the student.
    """
    cfg = cfg or EmaConfig()
    t_state, s_state = teacher.state_dict(), student.state_dict()
    if t_state.keys() != s_state.keys():
        raise InputError("teacher and student modules have different state layouts")
    for name, t in t_state.items():
        s = s_state[name]
        if t.shape != s.shape:
            raise InputError(f"{name}: teacher shape {tuple(t.shape)} vs student {tuple(s.shape)}")
        if t.is_floating_point():
            t.mul_(cfg.momentum).add_(s, alpha=1.0 - cfg.momentum)
        else:
            t.copy_(s)
    return teacher
