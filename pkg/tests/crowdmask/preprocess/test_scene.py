import numpy as np
import pytest
import torch

from src.crowdmask.errors import PreconditionError
from src.crowdmask.geometry import instance_label, pairwise_distances
from src.crowdmask.preprocess import SyntheticSceneDataset, explain_scene, ideal_field, synth_scene


def test_single_instance_scene():
    scene = synth_scene(1, (32, 32), min_separation=8, seed=0)
    assert scene.n_instances == 1
    assert set(torch.unique(scene.labels).tolist()) == {0, 1}
    assert instance_label(scene.labels, scene.points[0]) == 1


def test_same_seed_gives_the_same_scene():
    a = synth_scene(5, (64, 64), min_separation=16, seed=3)
    b = synth_scene(5, (64, 64), min_separation=16, seed=3)
    assert a.points == b.points
    assert torch.equal(a.labels, b.labels)
    c = synth_scene(5, (64, 64), min_separation=16, seed=4)
    assert a.points != c.points


@pytest.mark.parametrize("seed", range(5))
def test_scene_invariants(seed):
    scene = synth_scene(5, (64, 64), min_separation=16, seed=seed)
    d = pairwise_distances(scene.points)
    off_diagonal = d[~np.eye(5, dtype=bool)]
    assert off_diagonal.min() >= 16
    assert set(torch.unique(scene.labels).tolist()) == {0, 1, 2, 3, 4, 5}
    for p in scene.points:
        assert p.score == 1.0
        assert instance_label(scene.labels, p) == p.id


def test_scene_masks_stay_apart():
    scene = synth_scene(8, (64, 64), min_separation=12, seed=7)
    # every mask pixel is nearer to its own centre than to any other
    ys, xs = torch.nonzero(scene.labels, as_tuple=True)
    for y, x in zip(ys.tolist(), xs.tolist()):
        owner = scene.labels[y, x].item()
        nearest = min(scene.points, key=lambda p: (p.y - y) ** 2 + (p.x - x) ** 2)
        assert nearest.id == owner


def test_packing_failure():
    with pytest.raises(PreconditionError, match="pack"):
        synth_scene(50, (32, 32), min_separation=16, seed=0)
    with pytest.raises(PreconditionError, match="packing failure"):
        synth_scene(2, (32, 32), min_separation=8, seed=0, max_tries_per_point=0)
    with pytest.raises(PreconditionError):
        synth_scene(0, (32, 32), min_separation=8, seed=0)
    with pytest.raises(PreconditionError):
        synth_scene(2, (32, 32), min_separation=2, seed=0)


def test_ideal_field_channels():
    scene = synth_scene(3, (40, 40), min_separation=12, seed=1)
    field = ideal_field(scene, 2)
    assert field.shape == (2, 40, 40)
    assert torch.equal(field[0] == 2.0, (scene.labels == 1) | (scene.labels == 3))
    assert torch.equal(field[1] == 2.0, scene.labels == 2)
    assert float(field[:, scene.labels == 0].abs().sum()) == 0.0


def test_dataset():
    dataset = SyntheticSceneDataset(3, 4, (48, 48), min_separation=10, base_seed=10)
    assert len(dataset) == 3
    assert dataset[1].seed == 11
    assert torch.equal(dataset[2].labels, synth_scene(4, (48, 48), 10, 12).labels)
    with pytest.raises(IndexError):
        dataset[3]


def test_explain_scene():
    scene = synth_scene(4, (48, 48), min_separation=10, seed=2)
    text = explain_scene(scene)
    assert text.startswith('Scene 48x48 (seed 2)')
    assert 'Found total 4 instances' in text
