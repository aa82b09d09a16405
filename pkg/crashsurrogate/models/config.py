from dataclasses import asdict, dataclass, fields
from typing import Optional

from crashsurrogate.helpers.errors import ConfigError
from crashsurrogate.helpers.io import sha256_json
from crashsurrogate.mesh.features import FeatureLayout
from crashsurrogate.models.families import families, scales

GLOBAL_KINDS = ('none', 'physics', 'geo', 'geo_flare')


@dataclass(frozen=True)
class ModelConfig:
    family: str
    dim: int = 2
    d_h: int = 128
    n_tokens: int = 128
    l_pre: int = 0
    l_attn: int = 0
    l_post: int = 0
    global_kind: str = 'none'
    plusplus: bool = False
    heads: int = 4
    routes: int = 0
    contact_enabled: bool = False
    contact_k: int = 32
    contact_radius: Optional[float] = None
    contact_alpha_init: float = 1e-3
    role_encoding: str = 'onehot'
    extra_features: int = 0
    mpnn_activation: str = 'relu'
    attention_activation: str = 'gelu'
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.family not in families:
            raise ConfigError(f'Model family {self.family} invalid, choose one of: {", ".join(families)}')
        if self.dim not in (2, 3):
            raise ConfigError(f'Spatial dimension should be 2 or 3, got {self.dim}')
        if self.d_h < 1 or self.n_tokens < 1:
            raise ConfigError(f'd_h and n_tokens should be >= 1, got {self.d_h}, {self.n_tokens}')
        if min(self.l_pre, self.l_attn, self.l_post) < 0:
            raise ConfigError('Stage counts should be non-negative')
        if self.global_kind not in GLOBAL_KINDS:
            raise ConfigError(f'global_kind {self.global_kind} invalid, choose one of: {", ".join(GLOBAL_KINDS)}')
        if self.l_attn and self.global_kind == 'none':
            raise ConfigError(f'{self.family}: {self.l_attn} attention blocks requested without a global processor')
        if self.l_pre + self.l_attn + self.l_post == 0:
            raise ConfigError(f'{self.family}: the processor has no blocks')

        stack = families[self.family]
        hybrid = stack['l_pre'] > 0 and stack['l_attn'] > 0
        if hybrid and (self.l_pre < 1 or self.l_post < 1):
            raise ConfigError(f'Hybrid family {self.family} needs l_pre >= 1 and l_post >= 1')
        if stack['l_pre'] == 0 and (self.l_pre or self.l_post):
            raise ConfigError(f'Attention family {self.family} has no message-passing stages')
        if self.contact_enabled and not self.uses_mesh:
            raise ConfigError(f'{self.family}: the contact block needs a message-passing stage before it')
        if self.contact_enabled and self.contact_k < 1:
            raise ConfigError(f'contact_k should be >= 1, got {self.contact_k}')

        FeatureLayout(self.role_encoding, self.extra_features)

    @property
    def uses_mesh(self):
        return self.l_pre + self.l_post > 0

    @property
    def layout(self):
        return FeatureLayout(self.role_encoding, self.extra_features)

    @property
    def d_node(self):
        return self.layout.node_dim(self.dim)

    @property
    def d_edge(self):
        return 2 * self.dim + 2

    @property
    def stages(self):
        return f'{self.l_pre}+{self.l_attn}+{self.l_post}'

    @classmethod
    def for_family(cls, family, scale='desk', dim=2, **overrides):
        if family not in families:
            raise ConfigError(f'Model family {family} invalid, choose one of: {", ".join(families)}')
        if scale not in scales:
            raise ConfigError(f'Scale {scale} invalid, choose one of: {", ".join(scales)}')

        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in families[family].items() if k in known}
        values.update(scales[scale])
        values.update({k: v for k, v in overrides.items() if v is not None})

        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f'Unknown ModelConfig keys: {", ".join(unknown)}')

        return cls(family=family, dim=dim, **values)

    def to_dict(self):
        retval = asdict(self)
        retval['d_node'] = self.d_node
        return retval

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in known})

    def config_hash(self):
        return sha256_json(self.to_dict())
