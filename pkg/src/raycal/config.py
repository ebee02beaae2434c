"""Training configuration and its ``key = value`` text format."""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigurationError
from .losses import LATENT_MODES, LossWeights


@dataclass
class TrainConfig:
    # learning rates of the four optimiser groups
    lr_encoder: float = 5e-5
    lr_hypernet: float = 8e-5
    lr_distortion: float = 5e-6
    lr_intrinsics: float = 5e-1
    # loss weights
    w_photometric: float = 100.0
    w_trans: float = 30.0
    w_rot: float = 20.0
    w_enc: float = 1e-6
    latent_mode: str = "mean_square"
    # schedule
    epochs: int = 20
    e1: int = 5
    e2: int = 15
    batch_size: int = 1
    rays_per_step: int = 1024
    seed: int = 0
    labelled_fraction: Optional[float] = None
    grad_clip: float = 10.0
    checkpoint_every: int = 0
    # ablation switches
    train_intrinsics: bool = True
    train_distortion: bool = True
    photometric: bool = True
    learn_principal_point: bool = False
    separate_focal: bool = False
    # architecture
    lfn_width: int = 128
    lfn_layers: int = 6
    hyper_width: int = 256
    hyper_layers: int = 6
    latent_dim: int = 256
    encoder_channels: tuple = (16, 32, 64, 128, 128, 128, 128)
    encoder_strides: tuple = (2, 2, 2, 2, 1, 1, 1)
    pose_hidden: tuple = (64, 64)
    scene_width: int = 256
    distortion_width: int = 8
    distortion_layers: int = 4
    extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.validate()

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.w_photometric, self.w_trans, self.w_rot, self.w_enc)

    def validate(self):
        for name in ("lr_encoder", "lr_hypernet", "lr_distortion", "lr_intrinsics"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0")
        self.weights.validate()
        if self.e1 > self.e2:
            raise ConfigurationError(f"stage boundary e1={self.e1} exceeds e2={self.e2}")
        if self.e1 < 0:
            raise ConfigurationError("stage boundaries must be >= 0")
        if self.labelled_fraction is not None and not 0.0 <= self.labelled_fraction <= 1.0:
            raise ConfigurationError("labelled_fraction must lie in [0, 1]")
        if self.latent_mode not in LATENT_MODES:
            raise ConfigurationError(f"latent_mode must be one of {LATENT_MODES}")
        if self.batch_size < 1 or self.rays_per_step < 2 or self.epochs < 0:
            raise ConfigurationError("batch_size >= 1, rays_per_step >= 2 and epochs >= 0 required")
        if self.grad_clip <= 0:
            raise ConfigurationError("grad_clip must be positive")
        if len(self.encoder_channels) != len(self.encoder_strides):
            raise ConfigurationError("encoder_channels and encoder_strides differ in length")
        return self

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("extra")
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)} - {"extra"}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)


def _parse_value(name, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None:
            if default is None and raw.lower() in ("", "none"):
                return None
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.replace(",", " ").split())
        return raw
    except ValueError:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str, base: Optional[TrainConfig] = None) -> TrainConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) over ``base``."""
    base = base or TrainConfig()
    defaults = {f.name: getattr(base, f.name) for f in dataclasses.fields(base) if f.name != "extra"}
    changes = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigurationError(f"config line {n}: expected key = value")
        if key not in defaults:
            raise ConfigurationError(f"config line {n}: unknown key {key!r}")
        changes[key] = _parse_value(key, value, defaults[key])
    return base.replace(**changes)


def load_config(path, base: Optional[TrainConfig] = None) -> TrainConfig:
    return parse_config(Path(path).read_text(), base)


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        if isinstance(v, list):
            v = " ".join(str(x) for x in v)
        elif v is None:
            v = "none"
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
