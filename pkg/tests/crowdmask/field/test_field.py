import numpy as np
import pytest
import torch
import torch.nn.functional as F

from src.crowdmask.errors import InputError, PreconditionError
from src.crowdmask.field import (bilinear_sample, bilinear_sample_adjoint, depthwise_gaussian_smooth, distance_field,
                                 gaussian_kernel_1d, nearest_node, normalize_point, sample_center, sample_center_adjoint,
                                 smooth_adjoint)


def dense_smooth(fmap, kernel):
    """Reference: one 2-D convolution with the outer-product kernel"""
    d = fmap.shape[0]
    g = kernel.weights
    weights = torch.outer(g, g).repeat(d, 1, 1, 1)
    return F.conv2d(fmap.unsqueeze(0), weights, padding=kernel.radius, groups=d).squeeze(0)


def test_gaussian_kernel_taps():
    kernel = gaussian_kernel_1d(7, 3.0)
    assert kernel.weights.shape == (7,)
    assert float(kernel.weights.sum()) == pytest.approx(1.0, abs=1e-15)
    assert torch.allclose(kernel.weights, kernel.weights.flip(0))
    assert int(kernel.weights.argmax()) == 3
    assert kernel.radius == 3


@pytest.mark.parametrize("k, sigma", [(4, 1.0), (0, 1.0), (3, 0.0), (3, -1.0)])
def test_gaussian_kernel_rejects_bad_parameters(k, sigma):
    with pytest.raises(PreconditionError):
        gaussian_kernel_1d(k, sigma)


def test_separable_smoothing_equals_dense_convolution():
    gen = torch.Generator().manual_seed(0)
    for k, sigma in [(3, 1.0), (5, 2.0), (7, 3.0)]:
        kernel = gaussian_kernel_1d(k, sigma)
        fmap = torch.randn((3, 13, 17), generator=gen, dtype=torch.float64)
        diff = (depthwise_gaussian_smooth(fmap, kernel) - dense_smooth(fmap, kernel)).abs().max()
        assert float(diff) < 1e-10


def test_smoothing_keeps_dims_and_identity_kernel():
    fmap = torch.randn((2, 6, 9), dtype=torch.float64)
    assert depthwise_gaussian_smooth(fmap, gaussian_kernel_1d(5, 1.0)).shape == fmap.shape
    assert torch.equal(depthwise_gaussian_smooth(fmap, gaussian_kernel_1d(1, 1.0)), fmap)


def test_smoothing_of_a_constant_is_constant_away_from_borders():
    fmap = torch.full((1, 20, 20), 2.5, dtype=torch.float64)
    out = depthwise_gaussian_smooth(fmap, gaussian_kernel_1d(7, 3.0))
    assert torch.allclose(out[:, 3:-3, 3:-3], fmap[:, 3:-3, 3:-3], atol=1e-12)
    assert float(out[0, 0, 0]) < 2.5


def test_smooth_adjoint_identity():
    gen = torch.Generator().manual_seed(1)
    rng = np.random.default_rng(1)
    for _ in range(100):
        d, h, w = int(rng.integers(1, 4)), int(rng.integers(2, 12)), int(rng.integers(2, 12))
        k = int(rng.choice([1, 3, 5, 7]))
        if k > 2 * min(h, w):
            k = 1
        kernel = gaussian_kernel_1d(k, float(rng.uniform(0.5, 3.0)))
        x = torch.randn((d, h, w), generator=gen, dtype=torch.float64)
        y = torch.randn((d, h, w), generator=gen, dtype=torch.float64)
        lhs = float((depthwise_gaussian_smooth(x, kernel) * y).sum())
        rhs = float((x * smooth_adjoint(y, kernel)).sum())
        assert abs(lhs - rhs) < 1e-10


def test_smoothing_rejects_bad_inputs():
    with pytest.raises(InputError):
        depthwise_gaussian_smooth(torch.zeros((4, 4), dtype=torch.float64), gaussian_kernel_1d(3, 1.0))
    with pytest.raises(PreconditionError):
        depthwise_gaussian_smooth(torch.zeros((1, 3, 3), dtype=torch.float64), gaussian_kernel_1d(7, 3.0))


def test_normalize_point():
    assert normalize_point((0, 0), (5, 9)) == (-1.0, -1.0)
    assert normalize_point((4, 8), (5, 9)) == (1.0, 1.0)
    assert normalize_point((2, 4), (5, 9)) == (0.0, 0.0)
    with pytest.raises(PreconditionError):
        normalize_point((0, 0), (1, 9))


def test_bilinear_sample_returns_stored_feature_at_nodes():
    fmap = torch.randn((4, 6, 7), dtype=torch.float64)
    for y, x in [(0, 0), (5, 6), (2, 3), (5, 0)]:
        out = bilinear_sample(fmap, normalize_point((y, x), (6, 7)))
        assert torch.equal(out, fmap[:, y, x])


def test_bilinear_sample_matches_grid_sample():
    gen = torch.Generator().manual_seed(2)
    rng = np.random.default_rng(2)
    fmap = torch.randn((3, 9, 11), generator=gen, dtype=torch.float64)
    for _ in range(50):
        yn, xn = rng.uniform(-1, 1, size=2)
        grid = torch.tensor([[[[xn, yn]]]], dtype=torch.float64)
        expected = F.grid_sample(fmap.unsqueeze(0), grid, mode='bilinear', align_corners=True)[0, :, 0, 0]
        assert torch.allclose(bilinear_sample(fmap, (yn, xn)), expected, atol=1e-12)


def test_bilinear_sample_midpoint():
    fmap = torch.tensor([[[0.0, 2.0], [4.0, 6.0]]], dtype=torch.float64)
    assert float(bilinear_sample(fmap, (0.0, 0.0))[0]) == pytest.approx(3.0)
    assert float(bilinear_sample(fmap, (-1.0, 0.0))[0]) == pytest.approx(1.0)


def test_bilinear_adjoint_identity():
    gen = torch.Generator().manual_seed(3)
    rng = np.random.default_rng(3)
    for _ in range(100):
        d, h, w = int(rng.integers(1, 5)), int(rng.integers(2, 10)), int(rng.integers(2, 10))
        p = tuple(rng.uniform(-1, 1, size=2))
        if rng.random() < 0.2:
            p = normalize_point((int(rng.integers(0, h)), int(rng.integers(0, w))), (h, w))
        f = torch.randn((d, h, w), generator=gen, dtype=torch.float64)
        u = torch.randn((d,), generator=gen, dtype=torch.float64)
        lhs = float((bilinear_sample(f, p) * u).sum())
        rhs = float((f * bilinear_sample_adjoint((d, h, w), p, u)).sum())
        assert abs(lhs - rhs) < 1e-10


def test_bilinear_sample_rejects_out_of_range():
    fmap = torch.zeros((1, 4, 4), dtype=torch.float64)
    with pytest.raises(PreconditionError):
        bilinear_sample(fmap, (1.2, 0.0))


def test_sample_center_and_distance_field():
    fmap = torch.zeros((2, 5, 5), dtype=torch.float64)
    fmap[0, 2, 2] = 3.0
    fmap[1, 2, 2] = 4.0
    center = sample_center(fmap, (2.0, 2.0))
    assert center.tolist() == [3.0, 4.0]
    dist = distance_field(fmap, center)
    assert float(dist[2, 2]) == 0.0
    assert float(dist[0, 0]) == pytest.approx(5.0)
    with pytest.raises(InputError):
        distance_field(fmap, torch.zeros(3, dtype=torch.float64))


def test_smoothing_is_linear():
    gen = torch.Generator().manual_seed(4)
    rng = np.random.default_rng(4)
    kernel = gaussian_kernel_1d(7, 3.0)
    for _ in range(20):
        x = torch.randn((3, 15, 12), generator=gen, dtype=torch.float64)
        y = torch.randn((3, 15, 12), generator=gen, dtype=torch.float64)
        a, b = rng.uniform(-3, 3, size=2)
        lhs = depthwise_gaussian_smooth(a * x + b * y, kernel)
        rhs = a * depthwise_gaussian_smooth(x, kernel) + b * depthwise_gaussian_smooth(y, kernel)
        assert float((lhs - rhs).abs().max()) < 1e-12


def test_nearest_sampling_reads_the_rounded_node():
    fmap = torch.randn((3, 6, 7), dtype=torch.float64)
    assert torch.equal(sample_center(fmap, (2.4, 3.6), 'nearest'), fmap[:, 2, 4])
    assert torch.equal(sample_center(fmap, (5.0, 0.2), 'nearest'), fmap[:, 5, 0])
    assert nearest_node((5.4, 6.49), (6, 7)) == (5, 6)
    for y, x in [(0, 0), (5, 6), (3, 2)]:
        assert torch.equal(sample_center(fmap, (y, x), 'nearest'), sample_center(fmap, (y, x), 'bilinear'))
    with pytest.raises(PreconditionError):
        sample_center(fmap, (1.0, 1.0), 'bicubic')


def test_sample_center_adjoint_identity():
    gen = torch.Generator().manual_seed(5)
    rng = np.random.default_rng(5)
    for mode in ('bilinear', 'nearest'):
        for _ in range(50):
            d, h, w = int(rng.integers(1, 5)), int(rng.integers(2, 10)), int(rng.integers(2, 10))
            p = (float(rng.uniform(0, h - 1)), float(rng.uniform(0, w - 1)))
            f = torch.randn((d, h, w), generator=gen, dtype=torch.float64)
            u = torch.randn((d,), generator=gen, dtype=torch.float64)
            lhs = float((sample_center(f, p, mode) * u).sum())
            rhs = float((f * sample_center_adjoint((d, h, w), p, u, mode)).sum())
            assert abs(lhs - rhs) < 1e-10
