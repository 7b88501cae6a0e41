"""
Dense-field numerics over (D, H, W) float64 feature maps: separable depthwise Gaussian smoothing,
align-corners bilinear or nearest-node sampling, their adjoints, and distance fields.
"""
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import torch
from scipy import ndimage

from ..errors import InputError, PreconditionError

Dims = Tuple[int, int]

SAMPLING_MODES = ('bilinear', 'nearest')

# exact grid nodes are recovered when the unnormalised coordinate lands this close to an integer
_NODE_SNAP = 1e-9


@dataclass(frozen=True)
class GaussianKernel:
    size: int
    sigma: float
    weights: torch.Tensor

    @property
    def radius(self) -> int:
        return self.size // 2


def gaussian_kernel_1d(k: int, sigma: float) -> GaussianKernel:
    """
    Normalised 1-D Gaussian taps g(u) ~ exp(-u^2 / 2 sigma^2) over u in [-k//2, k//2]
    :param k: odd positive number of taps
    :param sigma: positive standard deviation
    """
    if not isinstance(k, int) or k < 1 or k % 2 == 0:
        raise PreconditionError(f"kernel size must be an odd positive integer, got {k}")
    if not sigma > 0:
        raise PreconditionError(f"kernel sigma must be positive, got {sigma}")
    u = torch.arange(k, dtype=torch.float64) - k // 2
    g = torch.exp(-u ** 2 / (2 * sigma ** 2))
    return GaussianKernel(k, float(sigma), g / g.sum())


def _check_fmap(fmap: torch.Tensor):
    if fmap.dim() != 3:
        raise InputError(f"feature map must be (D, H, W), got shape {tuple(fmap.shape)}")


def _check_kernel_fits(fmap: torch.Tensor, kernel: GaussianKernel):
    h, w = fmap.shape[-2:]
    if kernel.size > 2 * min(h, w):
        raise PreconditionError(f"kernel size {kernel.size} too large for a {h}x{w} field")


def _separable_pass(fmap: torch.Tensor, taps: np.ndarray, axes) -> torch.Tensor:
    # per-channel 1-D correlation, zero padding of k//2 on both sides
    x = fmap.detach().cpu().numpy().astype(np.float64, copy=False)
    for axis in axes:
        x = ndimage.correlate1d(x, taps, axis=axis, mode='constant', cval=0.0)
    return torch.from_numpy(x).to(dtype=fmap.dtype)


def depthwise_gaussian_smooth(fmap: torch.Tensor, kernel: GaussianKernel) -> torch.Tensor:
    """
    Channel-wise horizontal then vertical Gaussian pass with zero padding of k//2; output dims
    equal input dims. Borders are dimmed by the padding and not renormalised.
    """
    _check_fmap(fmap)
    _check_kernel_fits(fmap, kernel)
    if kernel.size == 1:
        return fmap.clone()
    return _separable_pass(fmap, kernel.weights.numpy(), axes=(2, 1))


def smooth_adjoint(grad_out: torch.Tensor, kernel: GaussianKernel) -> torch.Tensor:
    """Transpose of depthwise_gaussian_smooth: reversed taps, passes in reverse order"""
    _check_fmap(grad_out)
    _check_kernel_fits(grad_out, kernel)
    if kernel.size == 1:
        return grad_out.clone()
    return _separable_pass(grad_out, kernel.weights.numpy()[::-1].copy(), axes=(1, 2))


def normalize_point(p: Tuple[float, float], dims: Dims) -> Tuple[float, float]:
    """Pixel (y, x) → (ȳ, x̄) in [-1, 1]; (0, 0) ↦ (-1, -1) and (H-1, W-1) ↦ (1, 1)"""
    h, w = dims
    if h <= 1 or w <= 1:
        raise PreconditionError(f"cannot normalise coordinates on a degenerate {h}x{w} grid")
    y, x = p
    return 2.0 * y / (h - 1) - 1.0, 2.0 * x / (w - 1) - 1.0


def _unnormalize(v: float, n: int) -> float:
    u = (v + 1.0) / 2.0 * (n - 1)
    nearest = round(u)
    return float(nearest) if abs(u - nearest) < _NODE_SNAP else u


def _corners(p_norm: Tuple[float, float], dims: Dims):
    """Top-left node and fractional offsets of an in-range normalised point"""
    yn, xn = p_norm
    if not (-1.0 <= yn <= 1.0 and -1.0 <= xn <= 1.0):
        raise PreconditionError(f"normalised point {p_norm} outside [-1, 1]")
    h, w = dims
    py, px = _unnormalize(yn, h), _unnormalize(xn, w)
    y0 = min(int(math.floor(py)), max(h - 2, 0))
    x0 = min(int(math.floor(px)), max(w - 2, 0))
    return y0, x0, py - y0, px - x0


def bilinear_sample(fmap: torch.Tensor, p_norm: Tuple[float, float]) -> torch.Tensor:
    """
    Align-corners bilinear interpolation of every channel at a normalised point.
    :return: (D,) centre feature; exact grid nodes return the stored feature
    """
    _check_fmap(fmap)
    h, w = fmap.shape[-2:]
    y0, x0, fy, fx = _corners(p_norm, (h, w))
    if fy == 0.0 and fx == 0.0:
        return fmap[:, y0, x0].clone()
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    return ((1 - fy) * (1 - fx) * fmap[:, y0, x0] + (1 - fy) * fx * fmap[:, y0, x1]
            + fy * (1 - fx) * fmap[:, y1, x0] + fy * fx * fmap[:, y1, x1])


def bilinear_sample_adjoint(fmap_shape: Tuple[int, int, int], p_norm: Tuple[float, float],
                            upstream: torch.Tensor) -> torch.Tensor:
    """Scatter a (D,) upstream gradient onto the four nodes around the point with bilinear weights"""
    d, h, w = fmap_shape
    y0, x0, fy, fx = _corners(p_norm, (h, w))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    out = torch.zeros(fmap_shape, dtype=upstream.dtype)
    for (yy, xx), weight in (((y0, x0), (1 - fy) * (1 - fx)), ((y0, x1), (1 - fy) * fx),
                             ((y1, x0), fy * (1 - fx)), ((y1, x1), fy * fx)):
        if weight != 0.0:
            out[:, yy, xx] += weight * upstream
    return out


def check_sampling(mode: str):
    if mode not in SAMPLING_MODES:
        raise PreconditionError(f"sampling must be one of {SAMPLING_MODES}, got {mode!r}")


def nearest_node(point: Tuple[float, float], dims: Dims) -> Tuple[int, int]:
    """Grid node under the rounded point, clamped to the field"""
    h, w = dims
    y, x = int(round(point[0])), int(round(point[1]))
    return min(max(y, 0), h - 1), min(max(x, 0), w - 1)


def sample_center(smoothed: torch.Tensor, point: Tuple[float, float], mode: str = 'bilinear') -> torch.Tensor:
    """
    Instance prototype: the smoothed feature at a point given in grid coordinates, interpolated
    bilinearly or read at the nearest node
    """
    check_sampling(mode)
    if mode == 'nearest':
        _check_fmap(smoothed)
        y, x = nearest_node(point, smoothed.shape[-2:])
        return smoothed[:, y, x].clone()
    return bilinear_sample(smoothed, normalize_point(point, smoothed.shape[-2:]))


def sample_center_adjoint(fmap_shape: Tuple[int, int, int], point: Tuple[float, float], upstream: torch.Tensor,
                          mode: str = 'bilinear') -> torch.Tensor:
    """Transpose of sample_center; the nearest variant puts the whole upstream on one node"""
    check_sampling(mode)
    if mode == 'nearest':
        out = torch.zeros(fmap_shape, dtype=upstream.dtype)
        y, x = nearest_node(point, fmap_shape[-2:])
        out[:, y, x] = upstream
        return out
    return bilinear_sample_adjoint(fmap_shape, normalize_point(point, fmap_shape[-2:]), upstream)


def distance_field(fmap: torch.Tensor, center: torch.Tensor) -> torch.Tensor:
    """Per-pixel Euclidean norm of (feature - center)"""
    _check_fmap(fmap)
    if center.shape != (fmap.shape[0],):
        raise InputError(f"center has {tuple(center.shape)} entries, feature map has {fmap.shape[0]} channels")
    return (fmap - center.view(-1, 1, 1)).pow(2).sum(dim=0).sqrt()
