from dataclasses import asdict, dataclass, field
from typing import Optional

from crashsurrogate.helpers.config import load_yaml_config
from crashsurrogate.helpers.errors import ConfigError
from crashsurrogate.models.config import ModelConfig


@dataclass
class TrainConfig:
    family: str = 'MeshTransolver'
    scale: str = 'desk'
    epochs: int = 100
    lr: float = 1e-4
    lr_floor: float = 0.0
    weight_decay: float = 1e-4
    patience: int = 18
    grad_clip: float = 1.0
    seed: int = 0
    truncation_window: Optional[int] = None
    n_jobs: int = 1
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f'epochs should be >= 1, got {self.epochs}')
        if not self.lr > 0:
            raise ConfigError(f'lr should be > 0, got {self.lr}')
        if self.lr_floor < 0 or self.lr_floor > self.lr:
            raise ConfigError(f'lr_floor should lie in [0, lr], got {self.lr_floor}')
        if self.patience < 1:
            raise ConfigError(f'patience should be >= 1, got {self.patience}')
        if self.truncation_window is not None and self.truncation_window < 1:
            raise ConfigError(f'truncation_window should be >= 1 or empty, got {self.truncation_window}')
        if not isinstance(self.model, dict):
            raise ConfigError(f'model overrides should be a key-value mapping, got {self.model!r}')

    def model_config(self, dim=2):
        return ModelConfig.for_family(self.family, scale=self.scale, dim=dim, seed=self.seed, **self.model)

    def to_dict(self):
        return asdict(self)


def load_train_config(path=None, **overrides):
    return load_yaml_config(path, TrainConfig, **overrides)
