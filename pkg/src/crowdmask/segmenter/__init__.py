"""
Instance mask generation from an embedding field and points.

Each point gets a joint energy over its NNEC disk, the sum of the embedding distance to its
prototype and the radius-normalised squared distance to the point. A pixel goes to the instance of
lowest energy among those below τ_g (smallest id on ties); instances left without pixels may fall
back to a shrunken NNEC disk over background.
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Set, Tuple

import torch

from ..errors import InputError, PreconditionError
from ..field import GaussianKernel, check_sampling, depthwise_gaussian_smooth, distance_field, sample_center
from ..geometry import (Dims, Point, PointSet, Window, disk_window, nearest_point_owner, nnec_radii,
                        window_sq_distance)

logger = logging.getLogger(__name__)


@dataclass
class EnergyConfig:
    lambda_geo: float = 1.0
    tau_g: float = 0.8
    epsilon: float = 1e-6
    nnec_fallback: bool = True
    fallback_scale: float = 0.5
    # prototype extraction: 'bilinear' or 'nearest'
    sampling: str = 'bilinear'

    def __post_init__(self):
        check_sampling(self.sampling)
        if not self.lambda_geo >= 0:
            raise PreconditionError(f"lambda_geo must be >= 0, got {self.lambda_geo}")
        if not self.epsilon > 0:
            raise PreconditionError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 < self.fallback_scale <= 1:
            raise PreconditionError(f"fallback_scale must lie in (0, 1], got {self.fallback_scale}")


@dataclass
class PseudoMaskFilter:
    low_threshold: float = 0.1
    high_threshold: float = 0.95

    def __post_init__(self):
        if not 0 <= self.low_threshold < self.high_threshold <= 1:
            raise PreconditionError(
                f"need 0 <= low < high <= 1, got ({self.low_threshold}, {self.high_threshold})")


@dataclass(frozen=True)
class EnergyField:
    instance_id: int
    dims: Dims
    window: Window
    values: torch.Tensor

    def dense(self) -> torch.Tensor:
        """Energy over the whole field, +inf outside the disk"""
        out = torch.full(self.dims, math.inf, dtype=self.values.dtype)
        out[self.window] = self.values
        return out


def energy_field(smoothed: torch.Tensor, point: Point, radius: float, cfg: EnergyConfig) -> EnergyField:
    """
    E_i = ||Ẽ - c_i|| + λ ||G - p_i||² / (r_i + ε)² inside the NNEC disk, +inf outside
    :param smoothed: (D, H, W) smoothed embedding
    :param point: instance point in grid coordinates
    :param radius: its NNEC radius
    """
    if not radius > 0:
        raise PreconditionError(f"radius of point {point.id} must be positive, got {radius}")
    dims = tuple(smoothed.shape[-2:])
    center = sample_center(smoothed, (point.y, point.x), cfg.sampling)
    window = disk_window((point.y, point.x), radius, dims)
    sq_dist = window_sq_distance((point.y, point.x), window, dtype=smoothed.dtype)
    energy = (distance_field(smoothed[(slice(None),) + window], center)
              + cfg.lambda_geo * sq_dist / (radius + cfg.epsilon) ** 2)
    values = torch.where(sq_dist.sqrt() <= radius, energy, torch.full_like(energy, math.inf))
    return EnergyField(point.id, dims, window, values)


def assign_labels(energies: Sequence[EnergyField], tau_g: float, dims: Dims = None) -> torch.Tensor:
    """
    Per pixel, the id of lowest energy among instances below `tau_g`; 0 when none qualifies.
    Instances are visited in ascending id with a strict comparison, so ties go to the smaller id.
    """
    if dims is None:
        if not energies:
            raise InputError("dims are required when there are no energy fields")
        dims = energies[0].dims
    if any(e.dims != tuple(dims) for e in energies):
        raise InputError("energy fields do not share dims")
    labels = torch.zeros(dims, dtype=torch.int64)
    best = torch.full(dims, math.inf, dtype=torch.float64)
    for e in sorted(energies, key=lambda f: f.instance_id):
        w = e.window
        claim = (e.values < tau_g) & (e.values < best[w])
        best[w] = torch.where(claim, e.values.to(best.dtype), best[w])
        labels[w] = torch.where(claim, torch.tensor(e.instance_id), labels[w])
    return labels


def _apply_fallback(labels: torch.Tensor, points: PointSet, radii, scale: float):
    present = set(torch.unique(labels).tolist())
    dims = tuple(labels.shape)
    rescued = 0
    for k in sorted(range(len(points)), key=lambda j: points[j].id):
        p = points[k]
        if p.id in present:
            continue
        radius = scale * float(radii[k])
        window = disk_window((p.y, p.x), radius, dims)
        disk = window_sq_distance((p.y, p.x), window).sqrt() <= radius
        free = disk & (labels[window] == 0)
        if not bool(free.any()):
            logger.warning("instance %d keeps no pixel: its fallback disk (radius %.4g) holds no free pixel centre",
                           p.id, radius)
            continue
        labels[window] = torch.where(free, torch.tensor(p.id), labels[window])
        rescued += 1
    if rescued:
        logger.info("NNEC fallback rescued %d of %d instances", rescued, len(points))
    return labels


def segment(raw_fmap: torch.Tensor, points: PointSet, cfg: EnergyConfig, kernel: GaussianKernel,
            nnec_scale: float = 1.0) -> torch.Tensor:
    """
    smooth → prototypes → NNEC radii → energies → assignment (→ fallback disks)
    :param raw_fmap: (D, H, W) embedding field
    :param points: points in grid coordinates, in bounds and non-coincident
    :return: (H, W) int64 segmentation label map
    """
    dims = tuple(raw_fmap.shape[-2:])
    points.check_bounds(dims)
    smoothed = depthwise_gaussian_smooth(raw_fmap, kernel)
    radii = nnec_radii(points, dims, nnec_scale)
    energies = [energy_field(smoothed, p, r, cfg) for p, r in zip(points, radii)]
    for e, r in zip(energies, radii):
        if not bool(torch.isfinite(e.values).any()):
            logger.warning("disk of instance %d (radius %.4g) covers no pixel centre", e.instance_id, r)
    labels = assign_labels(energies, cfg.tau_g, dims)
    if cfg.nnec_fallback:
        _apply_fallback(labels, points, radii, cfg.fallback_scale)
    return labels


def filter_pseudo_masks(points: PointSet, seg: torch.Tensor,
                        filt: PseudoMaskFilter = None) -> Tuple[Set[int], torch.Tensor]:
    """
    Dual-threshold filter: masks of points scored >= high are valid for the mask-constraint
    losses, masks scored in [low, high) stay in the map as reliable extent, masks below low are
    erased.
    :return: (valid ids, filtered label map)
    """
    filt = filt or PseudoMaskFilter()
    filtered = seg.clone()
    valid, erased = set(), []
    for i in sorted(int(v) for v in torch.unique(seg).tolist() if v != 0):
        try:
            score = points.by_id(i).score
        except KeyError:
            raise PreconditionError(f"mask {i} has no matching point")
        if score is None:
            raise PreconditionError(f"point {i} carries no score")
        if score >= filt.high_threshold:
            valid.add(i)
        elif score < filt.low_threshold:
            filtered[filtered == i] = 0
            erased.append(i)
    logger.debug("pseudo-mask filter: %d valid, %d erased", len(valid), len(erased))
    return valid, filtered


def circle_baseline(points: PointSet, dims: Dims, nnec_scale: float = 1.0) -> torch.Tensor:
    """Every instance takes its NNEC disk; overlaps go to the nearest point, then the smallest id"""
    radii = nnec_radii(points, dims, nnec_scale)
    masks = []
    for p, r in zip(points, radii):
        window = disk_window((p.y, p.x), float(r), dims)
        masks.append((window, window_sq_distance((p.y, p.x), window).sqrt() <= r))
    return nearest_point_owner(points, masks, dims)
