import json

import pytest
import torch

from src.crowdmask.config import RunConfig, load_config
from src.crowdmask.errors import InputError


def test_defaults():
    cfg = RunConfig()
    assert cfg.discriminative.tau == 0.6 and cfg.discriminative.delta == 0.1
    assert cfg.energy.lambda_geo == 1.0 and cfg.energy.tau_g == 0.8
    assert cfg.pseudo_mask.low_threshold == 0.1 and cfg.pseudo_mask.high_threshold == 0.95
    assert cfg.slic.n_segments == 1000
    assert cfg.gaussian_kernel.radius == 3
    assert load_config().to_dict() == cfg.to_dict()


def test_partial_document_fills_defaults_and_shares_derived_sections():
    cfg = RunConfig.from_dict({'kernel': {'size': 5, 'sigma': 1.0}, 'energy': {'tau_g': 0.5},
                               'optimizer': {'steps': 20}, 'stride': 2})
    assert cfg.gaussian_kernel.weights.shape == (5,)
    assert torch.equal(cfg.optimizer.disc.kernel.weights, cfg.gaussian_kernel.weights)
    assert cfg.optimizer.energy.tau_g == 0.5
    assert cfg.optimizer.steps == 20 and cfg.optimizer.learning_rate == 50.0
    assert cfg.stride == 2 and cfg.nnec_scale == 1.0


def test_to_dict_reloads_to_the_same_config():
    doc = RunConfig.from_dict({'discriminative': {'tau': 0.7}, 'ema': {'momentum': 0.99},
                               'nnec_scale': 0.5}).to_dict()
    assert RunConfig.from_json(json.dumps(doc)).to_dict() == doc
    assert set(doc) == {'discriminative', 'kernel', 'energy', 'foreground', 'pseudo_mask', 'ema', 'slic',
                        'optimizer', 'stride', 'nnec_scale'}
    assert 'kernel' not in doc['discriminative']
    assert 'disc' not in doc['optimizer'] and 'energy' not in doc['optimizer']


@pytest.mark.parametrize("doc", [
    [],
    {'energies': {}},
    {'energy': {'tau': 0.5}},
    {'energy': []},
    {'discriminative': {'kernel': {'size': 3}}},
    {'optimizer': {'disc': {}}},
    {'stride': '2'},
    {'stride': 1.5},
    {'nnec_scale': True},
    {'energy': {'nnec_fallback': 1}},
    {'slic': {'n_segments': 10.0}},
    {'kernel': {'size': 4}},
    {'pseudo_mask': {'low_threshold': 0.9, 'high_threshold': 0.5}},
    {'ema': {'momentum': 1.5}},
    {'stride': 0},
    {'nnec_scale': 0},
    {'discriminative': {'sampling': 'bicubic'}},
    {'energy': {'sampling': 1}},
])
def test_bad_documents_are_input_errors(doc):
    with pytest.raises(InputError):
        RunConfig.from_dict(doc)


def test_sampling_mode_reaches_the_optimizer():
    cfg = RunConfig.from_dict({'discriminative': {'sampling': 'nearest'}, 'energy': {'sampling': 'nearest'}})
    assert cfg.optimizer.disc.sampling == 'nearest' and cfg.optimizer.energy.sampling == 'nearest'
    assert RunConfig().to_dict()['discriminative']['sampling'] == 'bilinear'
    assert RunConfig.from_dict(cfg.to_dict()).energy.sampling == 'nearest'


def test_integers_are_accepted_for_floats():
    cfg = RunConfig.from_dict({'kernel': {'sigma': 2}, 'nnec_scale': 1})
    assert isinstance(cfg.kernel.sigma, float) and isinstance(cfg.nnec_scale, float)


def test_load_config(tmp_path):
    path = tmp_path / 'cfg.json'
    path.write_text(json.dumps({'slic': {'n_segments': 16}}))
    assert load_config(path).slic.n_segments == 16
    path.write_text('{not json')
    with pytest.raises(InputError):
        load_config(path)
    with pytest.raises(InputError):
        load_config(tmp_path / 'absent.json')
