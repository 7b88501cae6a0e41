"""
PNG renders of label maps and feature responses.
"""
import colorsys
from pathlib import Path
from typing import Tuple

import matplotlib
import numpy as np
import torch
from PIL import Image

Color = Tuple[int, int, int]

# hue step per id
_GOLDEN = 0.618033988749895


def label_palette(instance_id: int) -> Color:
    """8-bit RGB colour of an id; black for background"""
    if instance_id == 0:
        return 0, 0, 0
    hue = (instance_id * _GOLDEN) % 1.0
    saturation = 0.55 + 0.35 * ((instance_id * 7) % 3) / 2
    value = 0.95 - 0.25 * ((instance_id * 5) % 2)
    r, g, b = colorsys.hsv_to_rgb(hue, saturation, value)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


def render_labels(labels: torch.Tensor) -> np.ndarray:
    """(H, W) label map as an (H, W, 3) uint8 image"""
    array = labels.detach().cpu().numpy()
    ids, inverse = np.unique(array, return_inverse=True)
    colours = np.array([label_palette(int(i)) for i in ids], dtype=np.uint8)
    return colours[inverse.reshape(array.shape)]


def save_label_png(path, labels: torch.Tensor):
    Image.fromarray(render_labels(labels)).save(path)


def render_response(response: torch.Tensor, cmap: str = 'viridis') -> np.ndarray:
    """Scalar field min-max scaled through a matplotlib colormap, as (H, W, 3) uint8"""
    array = response.detach().cpu().numpy().astype(np.float64)
    lo, hi = float(array.min()), float(array.max())
    scaled = (array - lo) / (hi - lo) if hi > lo else np.zeros_like(array)
    rgba = matplotlib.colormaps[cmap](scaled, bytes=True)
    return np.ascontiguousarray(rgba[..., :3])


def save_response_png(path, response: torch.Tensor, cmap: str = 'viridis'):
    Image.fromarray(render_response(response, cmap)).save(path)


def save_scene_pngs(out_dir, stem: str, field: torch.Tensor, seg: torch.Tensor, gt: torch.Tensor = None):
    """
    <stem>_seg.png, <stem>_gt.png and <stem>_response.png (embedding norm) under `out_dir`
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_label_png(out_dir / f'{stem}_seg.png', seg)
    if gt is not None:
        save_label_png(out_dir / f'{stem}_gt.png', gt)
    save_response_png(out_dir / f'{stem}_response.png', field.norm(dim=0))
