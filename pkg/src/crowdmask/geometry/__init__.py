"""
Point-set geometry: pairwise distances, nearest-neighbour exclusion circles (NNEC), coordinate
grids, disk regions and positive/negative region partitions.

Pixel (y, x) sits at coordinate (y, x); there is no half-pixel offset.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch

from ..errors import InputError, PreconditionError

logger = logging.getLogger(__name__)

Dims = Tuple[int, int]
Window = Tuple[slice, slice]


@dataclass(frozen=True)
class Point:
    id: int
    y: float
    x: float
    score: Optional[float] = None

    def rounded(self) -> Tuple[int, int]:
        return int(round(self.y)), int(round(self.x))


@dataclass(frozen=True)
class PointSet:
    """Annotated or predicted head locations, kept in the order they were given."""
    points: Tuple[Point, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, 'points', tuple(self.points))
        ids = [p.id for p in self.points]
        if any(i <= 0 for i in ids):
            raise InputError(f"point ids must be strictly positive, got {sorted(i for i in ids if i <= 0)}")
        if len(set(ids)) != len(ids):
            raise InputError("point ids must be unique")
        for p in self.points:
            if p.score is not None and not 0.0 <= p.score <= 1.0:
                raise InputError(f"score of point {p.id} must lie in [0, 1], got {p.score}")

    @classmethod
    def from_coords(cls, coords, scores=None, ids=None) -> 'PointSet':
        coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
        ids = list(ids) if ids is not None else list(range(1, len(coords) + 1))
        scores = list(scores) if scores is not None else [None] * len(coords)
        return cls(tuple(Point(int(i), float(y), float(x), None if s is None else float(s))
                         for i, (y, x), s in zip(ids, coords, scores)))

    def __len__(self):
        return len(self.points)

    def __iter__(self) -> Iterator[Point]:
        return iter(self.points)

    def __getitem__(self, index) -> Point:
        return self.points[index]

    @property
    def ids(self) -> List[int]:
        return [p.id for p in self.points]

    def coords(self) -> np.ndarray:
        """(N, 2) float64 array of (y, x)"""
        return np.array([(p.y, p.x) for p in self.points], dtype=np.float64).reshape(-1, 2)

    def by_id(self, point_id) -> Point:
        for p in self.points:
            if p.id == point_id:
                return p
        raise KeyError(point_id)

    def scaled(self, factor: float) -> 'PointSet':
        """Same points with coordinates multiplied by `factor` (image → feature grid when factor = 1/stride)"""
        return PointSet(tuple(Point(p.id, p.y * factor, p.x * factor, p.score) for p in self.points))

    def with_default_score(self, score: float = 1.0) -> 'PointSet':
        """Unscored points take `score`, scored points keep theirs"""
        return PointSet(tuple(p if p.score is not None else Point(p.id, p.y, p.x, score) for p in self.points))

    def sorted_by_id(self) -> 'PointSet':
        return PointSet(tuple(sorted(self.points, key=lambda p: p.id)))

    def check_bounds(self, dims: Dims):
        h, w = dims
        for p in self.points:
            if not (0 <= p.y < h and 0 <= p.x < w):
                raise InputError(f"point {p.id} at ({p.y}, {p.x}) lies outside field bounds {dims}")


@dataclass(frozen=True)
class RegionPartition:
    instance_id: int
    label: int
    positive: torch.Tensor
    negative: torch.Tensor

    @property
    def n_positive(self) -> int:
        return int(self.positive.sum())

    @property
    def n_negative(self) -> int:
        return int(self.negative.sum())


def pairwise_distances(points: PointSet) -> np.ndarray:
    """
    Exact Euclidean distance matrix of a point set
    :param points: N >= 1 points
    :return: (N, N) float64 symmetric matrix with a zero diagonal
    """
    if len(points) == 0:
        raise PreconditionError("no points")
    p = points.coords()
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt(diff[..., 0] ** 2 + diff[..., 1] ** 2)


def nnec_radii(points: PointSet, dims: Dims, scale: float = 1.0) -> np.ndarray:
    """
    Nearest-neighbour exclusion circle radius of every point.

    For N >= 2 the radius is the distance to the closest other point (times `scale`, 0.5 giving
    disjoint circles); a lone point gets half the shorter side of the field.
    :param points: N >= 1 non-coincident points
    :param dims: (H, W) of the field the points live in
    :param scale: multiplier of the nearest-neighbour distance
    :return: (N,) float64 radii aligned with the point order
    """
    h, w = dims
    if h <= 0 or w <= 0:
        raise PreconditionError(f"field dims must be positive, got {dims}")
    if scale <= 0:
        raise PreconditionError(f"nnec scale must be positive, got {scale}")
    d = pairwise_distances(points)
    if len(points) == 1:
        return np.array([0.5 * min(h, w)], dtype=np.float64)

    np.fill_diagonal(d, np.inf)
    radii = d.min(axis=1)
    if np.any(radii == 0):
        i = int(np.argmin(radii))
        raise PreconditionError(f"coincident points: point {points[i].id} shares its location with another point")
    return radii * scale


def coordinate_grid(dims: Dims, dtype=torch.float64, window: Window = None) -> torch.Tensor:
    """
    (H, W, 2) grid whose entry (y, x) holds (y, x)
    :param window: restrict the grid to these rows and columns; entries keep their field coordinates
    """
    h, w = dims
    sy, sx = window if window is not None else (slice(0, h), slice(0, w))
    if sy.stop > h or sx.stop > w:
        raise InputError(f"window {window} exceeds field dims {dims}")
    ys = torch.arange(sy.start, sy.stop, dtype=dtype)
    xs = torch.arange(sx.start, sx.stop, dtype=dtype)
    gy, gx = torch.meshgrid(ys, xs, indexing='ij')
    return torch.stack([gy, gx], dim=-1)


def disk_window(center: Tuple[float, float], radius: float, dims: Dims) -> Window:
    """Bounding box of the disk, clipped to the field. Empty slices when the disk misses the field."""
    h, w = dims
    cy, cx = center
    y0 = max(0, math.ceil(cy - radius))
    y1 = min(h, math.floor(cy + radius) + 1)
    x0 = max(0, math.ceil(cx - radius))
    x1 = min(w, math.floor(cx + radius) + 1)
    return slice(y0, max(y0, y1)), slice(x0, max(x0, x1))


def window_sq_distance(center: Tuple[float, float], window: Window, dtype=torch.float64) -> torch.Tensor:
    """Squared distance from `center` of every pixel inside `window`"""
    sy, sx = window
    grid = coordinate_grid((sy.stop, sx.stop), dtype, window)
    return (grid - torch.tensor(center, dtype=dtype)).pow(2).sum(dim=-1)


def disk_region(center: Tuple[float, float], radius: float, dims: Dims) -> torch.Tensor:
    """
    Boolean (H, W) membership of the closed disk ||(y, x) - center|| <= radius
    """
    if radius <= 0:
        raise PreconditionError(f"disk radius must be positive, got {radius}")
    region = torch.zeros(dims, dtype=torch.bool)
    window = disk_window(center, radius, dims)
    region[window] = window_sq_distance(center, window).sqrt() <= radius
    return region


def instance_label(labels: torch.Tensor, point: Point) -> int:
    """Label-map value under the rounded point coordinate, clamped to the map"""
    h, w = labels.shape
    y, x = point.rounded()
    return int(labels[min(max(y, 0), h - 1), min(max(x, 0), w - 1)])


def partition_region(region: torch.Tensor, labels: torch.Tensor, instance_id: int,
                     label: int) -> Optional[RegionPartition]:
    """
    Split a disk into pixels carrying the instance label and all the others.
    :param region: boolean disk membership
    :param labels: instance label map of the same dims
    :param instance_id: id of the point that owns the disk
    :param label: the instance label read under the point; 0 marks an orphan
    :return: the partition, or None for an orphan instance (the caller skips it)
    """
    if region.shape != labels.shape:
        raise InputError(f"region dims {tuple(region.shape)} differ from label dims {tuple(labels.shape)}")
    if label == 0:
        logger.warning("instance %d sits on background, skipping it", instance_id)
        return None
    same = labels == label
    return RegionPartition(instance_id, label, region & same, region & ~same)


def nearest_point_owner(points: PointSet, masks: Sequence[Tuple[Window, torch.Tensor]],
                        dims: Dims) -> torch.Tensor:
    """
    Rasterise per-point masks into one label map, a pixel claimed by several masks going to the
    nearest point and then to the smallest id.
    :param masks: (window, boolean mask over that window) aligned with `points`
    """
    assert len(masks) == len(points)
    out = torch.zeros(dims, dtype=torch.int64)
    best = torch.full(dims, math.inf, dtype=torch.float64)
    order = sorted(range(len(points)), key=lambda k: points[k].id)
    for k in order:
        p = points[k]
        window, mask = masks[k]
        if mask.numel() == 0:
            continue
        d2 = window_sq_distance((p.y, p.x), window)
        claim = mask & (d2 < best[window])
        best[window] = torch.where(claim, d2, best[window])
        out[window] = torch.where(claim, torch.tensor(p.id, dtype=torch.int64), out[window])
    return out
