"""
Mask losses with hand-derived gradients.

discriminative_loss  pull/push hinge inside each NNEC disk, differentiated w.r.t. the raw field
background_penalty   positive response on background pixels
foreground_constraint  one-positive-pixel / unit-mass constraint per valid pseudo-mask
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
import torch

from ..errors import InputError, PreconditionError
from ..field import (GaussianKernel, check_sampling, depthwise_gaussian_smooth, gaussian_kernel_1d, sample_center,
                     sample_center_adjoint, smooth_adjoint)
from ..geometry import PointSet, disk_window, instance_label, partition_region, window_sq_distance

logger = logging.getLogger(__name__)


@dataclass
class DiscriminativeConfig:
    tau: float = 0.6
    delta: float = 0.1
    kernel: GaussianKernel = field(default_factory=lambda: gaussian_kernel_1d(7, 3.0))
    # prototype extraction: 'bilinear' or 'nearest'
    sampling: str = 'bilinear'

    def __post_init__(self):
        if not 0 < self.delta < self.tau:
            raise PreconditionError(f"need 0 < delta < tau, got delta={self.delta}, tau={self.tau}")
        check_sampling(self.sampling)


@dataclass
class ForegroundConfig:
    lambda_fg: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lambda_fg) and self.lambda_fg >= 0):
            raise PreconditionError(f"lambda_fg must be finite and >= 0, got {self.lambda_fg}")


@dataclass
class LossResult:
    value: float
    gradient: torch.Tensor = None


def _check_same_dims(a: torch.Tensor, b: torch.Tensor, what: str):
    if tuple(a.shape[-2:]) != tuple(b.shape[-2:]):
        raise InputError(f"{what}: dims {tuple(a.shape[-2:])} and {tuple(b.shape[-2:])} differ")


def discriminative_loss(raw_fmap: torch.Tensor, points: PointSet, labels: torch.Tensor, radii,
                        cfg: DiscriminativeConfig, with_grad: bool = True) -> LossResult:
    """
    Pull/push hinge loss of the smoothed embedding around each instance prototype.

    Per instance i with disk R_i, prototype c_i sampled from the smoothed field and distance
    d = ||Ẽ(y,x) - c_i||, positives pay [d - (τ - δ)]₊ and negatives pay [(τ + δ) - d]₊, averaged
    over R_i. The loss is the mean over the remaining instances once orphans and disks without a
    pixel centre are skipped. The gradient is taken w.r.t. the raw field through both the pixel
    path and the prototype path and through the smoothing adjoint.

    :param raw_fmap: (D, H, W) float64 field before smoothing
    :param points: instance points in grid coordinates
    :param labels: (H, W) instance label map, 0 = background
    :param radii: NNEC radii aligned with `points`
    :param cfg: thresholds and smoothing kernel
    :param with_grad: skip the backward pass when False
    """
    _check_same_dims(raw_fmap, labels, "feature map vs label map")
    if len(radii) != len(points):
        raise InputError(f"{len(radii)} radii for {len(points)} points")
    dims = tuple(labels.shape)
    smoothed = depthwise_gaussian_smooth(raw_fmap, cfg.kernel)
    grad_smoothed = torch.zeros_like(smoothed) if with_grad else None

    terms = []
    # instance-id order keeps the reduction bit-reproducible
    for k in sorted(range(len(points)), key=lambda j: points[j].id):
        p, r = points[k], float(radii[k])
        window = disk_window((p.y, p.x), r, dims)
        region = window_sq_distance((p.y, p.x), window).sqrt() <= r
        n_region = int(region.sum())
        if n_region == 0:
            logger.warning("disk of instance %d (radius %.4g) covers no pixel centre, skipping it", p.id, r)
            continue
        part = partition_region(region, labels[window], p.id, instance_label(labels, p))
        if part is None:
            continue

        center = sample_center(smoothed, (p.y, p.x), cfg.sampling)
        diff = smoothed[(slice(None),) + window] - center.view(-1, 1, 1)
        dist = diff.pow(2).sum(dim=0).sqrt()

        alpha = torch.where(part.positive, 1.0, -1.0).to(dist.dtype)
        hinge = alpha * (dist - (cfg.tau - alpha * cfg.delta))
        active = region & (hinge > 0)
        terms.append(float(hinge[active].sum()) / n_region)

        if with_grad:
            weight = alpha * active.to(dist.dtype) / n_region
            # subgradient 0 where the pixel sits exactly on its prototype
            unit = torch.where(dist > 0, diff / torch.where(dist > 0, dist, 1.0), torch.zeros_like(diff))
            pixel_grad = weight * unit
            grad_smoothed[(slice(None),) + window] += pixel_grad
            grad_smoothed += sample_center_adjoint(tuple(smoothed.shape), (p.y, p.x), -pixel_grad.sum(dim=(1, 2)),
                                                   cfg.sampling)

    if not terms:
        raise PreconditionError("no supervisable instances")

    n = len(terms)
    value = 0.0
    for t in terms:
        value += t
    value /= n
    if not with_grad:
        return LossResult(value)
    return LossResult(value, smooth_adjoint(grad_smoothed / n, cfg.kernel))


def background_penalty(pred: torch.Tensor, labels: torch.Tensor) -> LossResult:
    """
    Mean positive response over background pixels; zero with zero gradient when the label map has
    no background.
    :param pred: (H, W) prediction field at label resolution
    """
    _check_same_dims(pred, labels, "prediction vs label map")
    background = labels == 0
    n = int(background.sum())
    if n == 0:
        return LossResult(0.0, torch.zeros_like(pred))
    value = float(pred[background].clamp(min=0).sum()) / n
    return LossResult(value, (background & (pred > 0)).to(pred.dtype) / n)


def foreground_constraint(pred: torch.Tensor, labels: torch.Tensor, valid_ids: Iterable[int],
                          cfg: ForegroundConfig = None) -> LossResult:
    """
    Mean over valid instances k of |N_k - 1| + λ|S_k - 1|, where S_k is the positive mass of the
    prediction inside mask k and N_k its count of positive pixels. N_k is piecewise constant and
    contributes no gradient.
    """
    cfg = cfg or ForegroundConfig()
    _check_same_dims(pred, labels, "prediction vs label map")
    valid_ids = sorted(set(int(k) for k in valid_ids))
    if not valid_ids:
        raise PreconditionError("no valid pseudo-masks")

    grad = torch.zeros_like(pred)
    value = 0.0
    for k in valid_ids:
        omega = labels == k
        if not bool(omega.any()):
            raise PreconditionError(f"valid id {k} is absent from the label map")
        positive = omega & (pred > 0)
        n_pos = int(positive.sum())
        mass = float(pred[positive].sum())
        value += abs(n_pos - 1) + cfg.lambda_fg * abs(mass - 1.0)
        grad[positive] += cfg.lambda_fg * float(np.sign(mass - 1.0))
    n = len(valid_ids)
    return LossResult(value / n, grad / n)


def finite_diff_gradient(loss_fn: Callable[[torch.Tensor], float], field: torch.Tensor,
                         h: float = 1e-5) -> torch.Tensor:
    """
    Central-difference gradient (L(x + h e) - L(x - h e)) / 2h of a scalar functional, entry by entry
    :param loss_fn: pure function of the field returning a float
    """
    if not h > 0:
        raise PreconditionError(f"step h must be positive, got {h}")
    x = field.detach().clone()
    flat = x.view(-1)
    grad = torch.zeros_like(flat)
    for i in range(flat.numel()):
        orig = float(flat[i])
        flat[i] = orig + h
        plus = float(loss_fn(x))
        flat[i] = orig - h
        minus = float(loss_fn(x))
        flat[i] = orig
        grad[i] = (plus - minus) / (2 * h)
    return grad.view_as(field)


def max_relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    """Largest entry-wise deviation relative to the largest gradient magnitude"""
    scale = max(float(analytic.abs().max()), float(numeric.abs().max()))
    if scale == 0.0:
        return 0.0
    return float((analytic - numeric).abs().max()) / scale
