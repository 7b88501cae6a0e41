"""
Run configuration: one JSON document holding every module config. Missing keys take their
defaults, unknown keys are rejected at every level.

{
  "discriminative": {"tau": 0.6, "delta": 0.1, "sampling": "bilinear"},
  "kernel": {"size": 7, "sigma": 3.0},
  "energy": {"lambda_geo": 1.0, "tau_g": 0.8, "epsilon": 1e-06, "nnec_fallback": true, "fallback_scale": 0.5,
             "sampling": "bilinear"},
  "foreground": {"lambda_fg": 1.0},
  "pseudo_mask": {"low_threshold": 0.1, "high_threshold": 0.95},
  "ema": {"momentum": 0.999},
  "slic": {"n_segments": 1000, "compactness": 10.0, "iters": 10},
  "optimizer": {"steps": 500, "learning_rate": 50.0, "channels": 8, "init_scale": 0.5, "max_lr_halvings": 8},
  "stride": 1,
  "nnec_scale": 1.0
}
"""
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict

from .errors import InputError, PreconditionError
from .field import GaussianKernel, gaussian_kernel_1d
from .model.ema import EmaConfig
from .model.embedding_trainer import OptimizeConfig
from .model.losses import DiscriminativeConfig, ForegroundConfig
from .preprocess.edpsam import SlicConfig
from .segmenter import EnergyConfig, PseudoMaskFilter


@dataclass
class KernelConfig:
    size: int = 7
    sigma: float = 3.0

    def build(self) -> GaussianKernel:
        return gaussian_kernel_1d(self.size, self.sigma)


# section name → (config class, fields filled from other sections)
_SECTIONS = {
    'discriminative': (DiscriminativeConfig, {'kernel'}),
    'kernel': (KernelConfig, set()),
    'energy': (EnergyConfig, set()),
    'foreground': (ForegroundConfig, set()),
    'pseudo_mask': (PseudoMaskFilter, set()),
    'ema': (EmaConfig, set()),
    'slic': (SlicConfig, set()),
    'optimizer': (OptimizeConfig, {'disc', 'energy'}),
}
_SCALARS = {'stride': int, 'nnec_scale': float}


def _check_type(where: str, value, expected):
    if expected is bool:
        ok = isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif expected is str:
        ok = isinstance(value, str)
    else:
        ok = True
    if not ok:
        raise InputError(f"config {where} must be of type {expected.__name__}, got {value!r}")
    return float(value) if expected is float else value


def _section_values(name: str, doc: Dict[str, Any]) -> Dict[str, Any]:
    cls, derived = _SECTIONS[name]
    if not isinstance(doc, dict):
        raise InputError(f"config section '{name}' must be an object")
    allowed = {f.name: f.type for f in dataclasses.fields(cls) if f.name not in derived}
    unknown = set(doc) - set(allowed)
    if unknown:
        raise InputError(f"unknown config keys in '{name}': {sorted(unknown)}")
    return {k: _check_type(f"{name}.{k}", v, allowed[k]) for k, v in doc.items()}


@dataclass
class RunConfig:
    discriminative: DiscriminativeConfig = field(default_factory=DiscriminativeConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    foreground: ForegroundConfig = field(default_factory=ForegroundConfig)
    pseudo_mask: PseudoMaskFilter = field(default_factory=PseudoMaskFilter)
    ema: EmaConfig = field(default_factory=EmaConfig)
    slic: SlicConfig = field(default_factory=SlicConfig)
    optimizer: OptimizeConfig = field(default_factory=OptimizeConfig)
    stride: int = 1
    nnec_scale: float = 1.0

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'RunConfig':
        if not isinstance(doc, dict):
            raise InputError("config must be a JSON object")
        unknown = set(doc) - set(_SECTIONS) - set(_SCALARS)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        values = {name: _section_values(name, doc.get(name, {})) for name in _SECTIONS}
        scalars = {k: _check_type(k, doc[k], t) for k, t in _SCALARS.items() if k in doc}
        try:
            kernel_cfg = KernelConfig(**values['kernel'])
            kernel = kernel_cfg.build()
            disc = DiscriminativeConfig(kernel=kernel, **values['discriminative'])
            energy = EnergyConfig(**values['energy'])
            cfg = cls(discriminative=disc, kernel=kernel_cfg, energy=energy,
                      foreground=ForegroundConfig(**values['foreground']),
                      pseudo_mask=PseudoMaskFilter(**values['pseudo_mask']),
                      ema=EmaConfig(**values['ema']),
                      slic=SlicConfig(**values['slic']),
                      optimizer=OptimizeConfig(disc=disc, energy=energy, **values['optimizer']),
                      **scalars)
        except PreconditionError as e:
            raise InputError(f"invalid config: {e}") from e
        if cfg.stride < 1:
            raise InputError(f"config stride must be >= 1, got {cfg.stride}")
        if not cfg.nnec_scale > 0:
            raise InputError(f"config nnec_scale must be > 0, got {cfg.nnec_scale}")
        return cfg

    @classmethod
    def from_json(cls, text: str) -> 'RunConfig':
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise InputError(f"config is not valid JSON: {e}") from e
        return cls.from_dict(doc)

    def to_dict(self) -> Dict[str, Any]:
        doc = {}
        for name, (_, derived) in _SECTIONS.items():
            section = getattr(self, name)
            doc[name] = {f.name: getattr(section, f.name) for f in dataclasses.fields(section)
                         if f.name not in derived}
        for k in _SCALARS:
            doc[k] = getattr(self, k)
        return doc

    @property
    def gaussian_kernel(self) -> GaussianKernel:
        return self.discriminative.kernel


def load_config(path=None) -> RunConfig:
    """Config from a JSON file, or all defaults when no path is given"""
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read config file {path}: {e}") from e
    return RunConfig.from_json(text)
