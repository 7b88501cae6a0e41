"""
Exclusion-constrained mask construction.

Points (plus the superpixel each one falls in) prompt an external promptable segmenter, abstracted
here as a CandidateProvider. The smallest candidate covering a point is clipped to the point's NNEC
disk; points without coverage, or whose clipped candidate is empty, take the disk itself.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
from scipy import ndimage
from skimage.color import rgb2lab

from ..errors import InputError, PreconditionError
from ..geometry import (Dims, Point, PointSet, Window, disk_window, instance_label, nearest_point_owner,
                        nnec_radii, window_sq_distance)

logger = logging.getLogger(__name__)

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass
class SlicConfig:
    n_segments: int = 1000
    compactness: float = 10.0
    iters: int = 10

    def __post_init__(self):
        if self.n_segments < 1:
            raise PreconditionError(f"n_segments must be >= 1, got {self.n_segments}")
        if self.iters < 1:
            raise PreconditionError(f"iters must be >= 1, got {self.iters}")
        if self.compactness < 0:
            raise PreconditionError(f"compactness must be >= 0, got {self.compactness}")


def _check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InputError(f"image must be (H, W, 3), got shape {img.shape}")
    if not np.isfinite(img).all() or img.min() < 0 or img.max() > 1:
        raise InputError("image values must be finite and lie in [0, 1]")
    return img


def _seed_grid(h, w, n_segments):
    ny = max(1, int(round(math.sqrt(n_segments * h / w))))
    nx = max(1, int(round(n_segments / ny)))
    ny, nx = min(ny, h), min(nx, w)
    step_y, step_x = h / ny, w / nx
    ys = (np.arange(ny) + 0.5) * step_y
    xs = (np.arange(nx) + 0.5) * step_x
    cy, cx = np.meshgrid(ys, xs, indexing='ij')
    gy, gx = np.mgrid[0:h, 0:w]
    cell = (np.minimum((gy // step_y).astype(np.int64), ny - 1) * nx
            + np.minimum((gx // step_x).astype(np.int64), nx - 1))
    return np.stack([cy.ravel(), cx.ravel()], axis=1), cell


def _merge_orphans(labels: np.ndarray) -> int:
    """
    One connectivity pass: every component of a segment except its largest joins the largest
    4-adjacent segment. Returns the number of merged components.
    """
    sizes = np.bincount(labels.ravel())
    orphans = []
    for index, sl in enumerate(ndimage.find_objects(labels)):
        if sl is None:
            continue
        seg = index + 1
        components, n = ndimage.label(labels[sl] == seg, structure=_FOUR_CONNECTED)
        if n < 2:
            continue
        counts = np.bincount(components.ravel())[1:]
        keep = int(np.argmax(counts)) + 1
        for c in range(1, n + 1):
            if c != keep:
                orphans.append((seg, sl, components == c))

    h, w = labels.shape
    for seg, sl, local in orphans:
        ys = slice(max(sl[0].start - 1, 0), min(sl[0].stop + 1, h))
        xs = slice(max(sl[1].start - 1, 0), min(sl[1].stop + 1, w))
        mask = np.zeros((ys.stop - ys.start, xs.stop - xs.start), dtype=bool)
        mask[sl[0].start - ys.start:sl[0].stop - ys.start, sl[1].start - xs.start:sl[1].stop - xs.start] = local
        ring = ndimage.binary_dilation(mask, structure=_FOUR_CONNECTED) & ~mask
        neighbours = np.unique(labels[ys, xs][ring])
        neighbours = neighbours[neighbours != seg]
        if len(neighbours) == 0:
            continue
        # largest neighbour, smallest id on ties
        target = int(neighbours[np.argmax(sizes[neighbours])])
        region = labels[ys, xs]
        region[mask] = target
        sizes[target] += int(mask.sum())
        sizes[seg] -= int(mask.sum())
    return len(orphans)


def slic_superpixels(img, n_segments: int = 1000, compactness: float = 10.0, iters: int = 10) -> torch.Tensor:
    """
    SLIC superpixels: k-means in joint CIELAB-position space from grid seeds at spacing
    s = sqrt(H·W / n_segments), each centre searching a 2s × 2s window with distance
    d_lab + (compactness / s)·d_xy, followed by connectivity enforcement.
    :param img: (H, W, 3) RGB image in [0, 1]
    :return: (H, W) int64 segment ids, contiguous from 1, every segment 4-connected
    """
    SlicConfig(n_segments, compactness, iters)
    img = _check_image(img)
    h, w = img.shape[:2]
    if n_segments > h * w:
        raise PreconditionError(f"n_segments {n_segments} exceeds the {h * w} pixels of the image")

    lab = rgb2lab(img)
    s = math.sqrt(h * w / n_segments)
    positions, labels = _seed_grid(h, w, n_segments)
    colours = np.stack([lab[min(int(y), h - 1), min(int(x), w - 1)] for y, x in positions])
    gy, gx = np.mgrid[0:h, 0:w]
    spatial_weight = compactness / s

    for _ in range(iters):
        best = np.full((h, w), np.inf)
        for k, ((cy, cx), colour) in enumerate(zip(positions, colours)):
            ys = slice(max(int(math.floor(cy - s)), 0), min(int(math.ceil(cy + s)) + 1, h))
            xs = slice(max(int(math.floor(cx - s)), 0), min(int(math.ceil(cx + s)) + 1, w))
            d_lab = np.sqrt(((lab[ys, xs] - colour) ** 2).sum(axis=-1))
            d_xy = np.sqrt((gy[ys, xs] - cy) ** 2 + (gx[ys, xs] - cx) ** 2)
            dist = d_lab + spatial_weight * d_xy
            closer = dist < best[ys, xs]
            best[ys, xs][closer] = dist[closer]
            labels[ys, xs][closer] = k

        counts = np.bincount(labels.ravel(), minlength=len(positions)).astype(np.float64)
        alive = counts > 0
        for axis, grid in enumerate((gy, gx)):
            sums = np.bincount(labels.ravel(), weights=grid.ravel().astype(np.float64), minlength=len(positions))
            positions[alive, axis] = sums[alive] / counts[alive]
        for channel in range(3):
            sums = np.bincount(labels.ravel(), weights=lab[..., channel].ravel(), minlength=len(positions))
            colours[alive, channel] = sums[alive] / counts[alive]

    labels = labels + 1
    merged = _merge_orphans(labels)
    while merged:
        logger.debug("SLIC connectivity pass merged %d orphan components", merged)
        merged = _merge_orphans(labels)

    _, contiguous = np.unique(labels, return_inverse=True)
    return torch.from_numpy(contiguous.reshape(h, w).astype(np.int64) + 1)


@dataclass
class CandidateMaskSet:
    """Binary candidate masks over one image, e.g. the output of a promptable segmenter"""
    dims: Dims
    masks: List[torch.Tensor] = field(default_factory=list)

    def __post_init__(self):
        self.dims = tuple(self.dims)
        for i, m in enumerate(self.masks):
            if tuple(m.shape) != self.dims:
                raise InputError(f"candidate {i} has dims {tuple(m.shape)}, expected {self.dims}")
            if not bool(m.any()):
                raise InputError(f"candidate {i} is empty")

    @classmethod
    def from_label_map(cls, label_map: torch.Tensor) -> 'CandidateMaskSet':
        """One candidate per distinct nonzero value, in ascending value order"""
        values = [v for v in torch.unique(label_map).tolist() if v != 0]
        return cls(tuple(label_map.shape), [label_map == v for v in values])

    def __len__(self):
        return len(self.masks)

    @property
    def areas(self) -> List[int]:
        return [int(m.sum()) for m in self.masks]


def _pixel_of(point: Point, dims: Dims) -> Tuple[int, int]:
    y, x = point.rounded()
    return min(max(y, 0), dims[0] - 1), min(max(x, 0), dims[1] - 1)


def select_candidate(point: Point, candidates: CandidateMaskSet) -> Optional[torch.Tensor]:
    """Smallest candidate covering the rounded point (earliest on area ties), None when uncovered"""
    y, x = _pixel_of(point, candidates.dims)
    best, best_area = None, None
    for mask, area in zip(candidates.masks, candidates.areas):
        if bool(mask[y, x]) and (best_area is None or area < best_area):
            best, best_area = mask, area
    return best


def _edp_sam_window(point: Point, radius: float, candidates: CandidateMaskSet) -> Tuple[Window, torch.Tensor]:
    if not radius > 0:
        raise PreconditionError(f"radius of point {point.id} must be positive, got {radius}")
    window = disk_window((point.y, point.x), radius, candidates.dims)
    disk = window_sq_distance((point.y, point.x), window).sqrt() <= radius
    selected = select_candidate(point, candidates)
    if selected is not None:
        clipped = selected[window] & disk
        if bool(clipped.any()):
            return window, clipped
    return window, disk


def edp_sam_mask(point: Point, radius: float, candidates: CandidateMaskSet) -> torch.Tensor:
    """
    Selected candidate ∩ NNEC disk; the disk itself when no candidate covers the point or the
    intersection is empty.
    """
    window, local = _edp_sam_window(point, radius, candidates)
    mask = torch.zeros(candidates.dims, dtype=torch.bool)
    mask[window] = local
    return mask


def build_annotation(points: PointSet, candidates: Mapping[int, Optional[CandidateMaskSet]], dims: Dims,
                     nnec_scale: float = 1.0) -> torch.Tensor:
    """
    Rasterise the EDP-SAM mask of every point into one label map; a pixel claimed twice goes to the
    nearest point, then to the smallest id.
    :param candidates: candidate set per point id; missing or None means no candidates
    """
    dims = tuple(dims)
    points.check_bounds(dims)
    radii = nnec_radii(points, dims, nnec_scale)
    masks = []
    for p, r in zip(points, radii):
        cands = candidates.get(p.id) or CandidateMaskSet(dims)
        if cands.dims != dims:
            raise InputError(f"candidates of point {p.id} have dims {cands.dims}, expected {dims}")
        masks.append(_edp_sam_window(p, float(r), cands))
    return nearest_point_owner(points, masks, dims)


class CandidateProvider:
    """
    Source of candidate masks for one prompt; stands in for a promptable segmenter.
    `superpixel` is the boolean mask of the SLIC segment holding the point, or None when the
    provider does not ask for superpixels.
    """
    needs_superpixels = False

    def candidates(self, image: np.ndarray, point: Point, superpixel: Optional[torch.Tensor]) -> CandidateMaskSet:
        raise NotImplementedError


class LabelMapCandidateProvider(CandidateProvider):
    """The same candidates for every prompt, read from a label map (one candidate per nonzero value)"""

    def __init__(self, label_map: torch.Tensor):
        self.candidate_set = CandidateMaskSet.from_label_map(label_map)

    def candidates(self, image, point, superpixel):
        return self.candidate_set


class SyntheticCandidateProvider(CandidateProvider):
    """
    Nested candidates grown from a ground-truth label map: the instance under the point and its
    dilations by each of `growth` pixels, smallest first. Background points get nothing.
    """

    def __init__(self, gt_labels: torch.Tensor, growth: Sequence[int] = (2, 6)):
        self.gt_labels = gt_labels
        self.growth = tuple(growth)

    def candidates(self, image, point, superpixel):
        dims = tuple(self.gt_labels.shape)
        label = instance_label(self.gt_labels, point)
        if label == 0:
            return CandidateMaskSet(dims)
        base = (self.gt_labels == label).numpy()
        masks = [torch.from_numpy(base)]
        for g in self.growth:
            grown = ndimage.binary_dilation(base, structure=_FOUR_CONNECTED, iterations=g)
            masks.append(torch.from_numpy(grown))
        return CandidateMaskSet(dims, masks)


def annotate_with_provider(image, points: PointSet, provider: CandidateProvider, slic: SlicConfig = None,
                           nnec_scale: float = 1.0) -> torch.Tensor:
    """
    Prompt the provider with every point (and its superpixel when asked for) and build the
    annotation label map.
    """
    image = _check_image(image)
    dims = image.shape[:2]
    superpixels = None
    if provider.needs_superpixels:
        slic = slic or SlicConfig()
        superpixels = slic_superpixels(image, slic.n_segments, slic.compactness, slic.iters)
    per_point = {}
    for p in points:
        context = None
        if superpixels is not None:
            context = superpixels == superpixels[_pixel_of(p, dims)]
        per_point[p.id] = provider.candidates(image, p, context)
    return build_annotation(points, per_point, dims, nnec_scale)
