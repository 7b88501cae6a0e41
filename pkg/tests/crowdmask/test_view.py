import numpy as np
import torch
from PIL import Image

from src.crowdmask.view import label_palette, render_labels, render_response, save_label_png, save_scene_pngs


def test_palette():
    assert label_palette(0) == (0, 0, 0)
    colours = [label_palette(i) for i in range(1, 41)]
    assert len(set(colours)) == 40
    assert all(0 <= c <= 255 for colour in colours for c in colour)
    assert label_palette(7) == label_palette(7)


def test_render_labels():
    labels = torch.tensor([[0, 1], [2, 1]])
    image = render_labels(labels)
    assert image.shape == (2, 2, 3) and image.dtype == np.uint8
    assert image[0, 0].tolist() == [0, 0, 0]
    assert image[0, 1].tolist() == list(label_palette(1))
    assert image[1, 1].tolist() == image[0, 1].tolist()


def test_save_label_png(tmp_path):
    labels = torch.tensor([[0, 3, 3], [5, 0, 3]])
    save_label_png(tmp_path / 'l.png', labels)
    with Image.open(tmp_path / 'l.png') as png:
        assert np.array_equal(np.asarray(png.convert('RGB')), render_labels(labels))


def test_render_response():
    response = torch.tensor([[0.0, 1.0], [2.0, 2.0]], dtype=torch.float64)
    image = render_response(response)
    assert image.shape == (2, 2, 3) and image.dtype == np.uint8
    assert image[1, 0].tolist() == image[1, 1].tolist()
    assert image[0, 0].tolist() != image[1, 0].tolist()
    flat = render_response(torch.full((3, 3), 4.0))
    assert (flat == flat[0, 0]).all()


def test_save_scene_pngs(tmp_path):
    field = torch.randn((2, 6, 8), dtype=torch.float64)
    seg = torch.zeros((6, 8), dtype=torch.int64)
    seg[1:3, 1:4] = 1
    save_scene_pngs(tmp_path / 'renders', 'scene', field, seg, gt=seg)
    names = sorted(p.name for p in (tmp_path / 'renders').iterdir())
    assert names == ['scene_gt.png', 'scene_response.png', 'scene_seg.png']
    with Image.open(tmp_path / 'renders' / 'scene_response.png') as png:
        assert png.size == (8, 6)
    save_scene_pngs(tmp_path / 'bare', 'x', field, seg)
    assert not (tmp_path / 'bare' / 'x_gt.png').exists()
