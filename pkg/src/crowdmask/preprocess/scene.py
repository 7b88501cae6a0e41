import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import torch
from torch.utils.data import Dataset

from ..errors import PreconditionError
from ..geometry import Dims, PointSet, disk_window, nnec_radii

# ellipse semi-axes, as fractions of the distance to the nearest other centre
AXIS_RANGE = (0.35, 0.45)


@dataclass(frozen=True)
class SyntheticScene:
    dims: Dims
    points: PointSet
    labels: torch.Tensor
    seed: int

    @property
    def n_instances(self) -> int:
        return len(self.points)


def _sample_centers(rng, n, dims, min_separation, max_tries):
    h, w = dims
    centers = np.zeros((0, 2), dtype=np.float64)
    tries = 0
    while len(centers) < n:
        tries += 1
        if tries > max_tries:
            raise PreconditionError(
                f"packing failure: placed {len(centers)} of {n} points with separation {min_separation} "
                f"in {h}x{w} after {max_tries} tries")
        c = rng.uniform((0.0, 0.0), (h - 1.0, w - 1.0))
        if len(centers) and np.sqrt(((centers - c) ** 2).sum(axis=1)).min() < min_separation:
            continue
        centers = np.vstack([centers, c])
    return centers


def synth_scene(n_instances: int, dims: Dims, min_separation: float, seed: int,
                max_tries_per_point: int = 1000) -> SyntheticScene:
    """
    Rejection-sample n centres at least `min_separation` apart and draw an axis-aligned ellipse
    around each. Semi-axes scale with the distance to the nearest other centre, so every mask stays
    inside half of its NNEC disk and masks never touch.
    :param n_instances: number of instances, ids 1..n
    :param dims: (H, W)
    :param min_separation: minimum pairwise centre distance, >= 3 so that every point lands in its mask
    :param seed: numpy generator seed, the scene is a pure function of the arguments
    """
    h, w = dims
    if n_instances < 1:
        raise PreconditionError(f"need at least one instance, got {n_instances}")
    if min_separation < 3:
        raise PreconditionError(f"min_separation must be >= 3, got {min_separation}")
    if n_instances * math.pi * (min_separation / 2) ** 2 >= h * w:
        raise PreconditionError(f"cannot pack {n_instances} instances {min_separation} apart in {h}x{w}")

    rng = np.random.default_rng(seed)
    centers = _sample_centers(rng, n_instances, dims, min_separation, max_tries_per_point * n_instances)
    points = PointSet.from_coords(centers, scores=[1.0] * n_instances)
    spacing = nnec_radii(points, dims)
    axes = rng.uniform(*AXIS_RANGE, size=(n_instances, 2)) * spacing[:, None]
    axes = np.maximum(axes, 1.0)

    labels = torch.zeros(dims, dtype=torch.int64)
    for p, (ay, ax) in zip(points, axes):
        window = disk_window((p.y, p.x), max(ay, ax), dims)
        ys = torch.arange(window[0].start, window[0].stop, dtype=torch.float64)[:, None]
        xs = torch.arange(window[1].start, window[1].stop, dtype=torch.float64)[None, :]
        inside = ((ys - p.y) / ay) ** 2 + ((xs - p.x) / ax) ** 2 <= 1.0
        labels[window] = torch.where(inside, torch.tensor(p.id), labels[window])
    return SyntheticScene(tuple(dims), points, labels, seed)


def ideal_field(scene: SyntheticScene, channels: int, amplitude: float = 2.0) -> torch.Tensor:
    """
    Constructed embedding: instance k writes `amplitude` into channel (k - 1) mod D over its mask,
    zero elsewhere. With D >= n every prototype sits at distance `amplitude` from the background and
    sqrt(2)·amplitude from every other instance.
    """
    field = torch.zeros((channels,) + tuple(scene.dims), dtype=torch.float64)
    for p in scene.points:
        field[(p.id - 1) % channels][scene.labels == p.id] = amplitude
    return field


class SyntheticSceneDataset(Dataset):
    """
    Seeded scenes of a fixed size; item i is the scene of seed `base_seed + i`
    """

    def __init__(self, n_scenes: int, n_instances: int, dims: Dims, min_separation: float, base_seed: int = 0):
        assert n_scenes >= 1
        self.n_scenes = n_scenes
        self.n_instances = n_instances
        self.dims = tuple(dims)
        self.min_separation = min_separation
        self.base_seed = base_seed

    def __len__(self):
        return self.n_scenes

    def __getitem__(self, index) -> SyntheticScene:
        if not 0 <= index < self.n_scenes:
            raise IndexError(f"Index is out of range {index}")
        return synth_scene(self.n_instances, self.dims, self.min_separation, self.base_seed + index)
