import numpy as np

from dataclasses import dataclass
from typing import Tuple

from crashsurrogate.helpers.errors import ConfigError


@dataclass(frozen=True)
class DesignVariable:
    name: str
    low: float
    high: float
    nominal: float

    def __post_init__(self):
        if not (np.isfinite(self.low) and np.isfinite(self.high)) or self.low >= self.high:
            raise ConfigError(f'Design variable {self.name}: invalid bounds [{self.low}, {self.high}]')
        if not self.low <= self.nominal <= self.high:
            raise ConfigError(f'Design variable {self.name}: nominal {self.nominal} outside [{self.low}, {self.high}]')


# toy-scale counterpart of a frontal pole-impact DOE: impact location, two thickness regions,
# four geometry morphs and the impact speed. Lengths in mm, speed in mm/ms
default_variables = (
    DesignVariable('pole_position', -60.0, 60.0, 0.0),
    DesignVariable('thickness_outer', 1.2, 1.8, 1.5),
    DesignVariable('thickness_inner', 0.8, 1.6, 1.2),
    DesignVariable('front_depth', -2.0, 12.0, 0.0),
    DesignVariable('front_width', -7.0, 7.0, 0.0),
    DesignVariable('section_depth', -10.0, 10.0, 0.0),
    DesignVariable('curvature', -10.0, 5.0, 0.0),
    DesignVariable('impact_speed', 2.0, 4.0, 3.0),
)


@dataclass(frozen=True)
class DesignBounds:
    variables: Tuple[DesignVariable, ...] = default_variables

    def __post_init__(self):
        object.__setattr__(self, 'variables', tuple(self.variables))
        if not self.variables:
            raise ConfigError('Design bounds need at least one variable')

        names = self.names
        if len(set(names)) != len(names):
            raise ConfigError(f'Duplicate design variable names: {names}')

    @property
    def names(self):
        return tuple(v.name for v in self.variables)

    @property
    def low(self):
        return np.array([v.low for v in self.variables])

    @property
    def high(self):
        return np.array([v.high for v in self.variables])

    @property
    def dim(self):
        return len(self.variables)

    def nominal(self, sample_id=0):
        return DesignSample(sample_id, self.names, tuple(v.nominal for v in self.variables))

    def to_dict(self):
        return {v.name: {'low': v.low, 'high': v.high, 'nominal': v.nominal} for v in self.variables}

    @classmethod
    def from_mapping(cls, mapping):
        """
        Bounds from a key-value mapping `name: {low, high[, nominal]}` or `name: [low, high]`.
        Variables missing from the mapping keep their defaults; unknown names are added in file order.
        """
        if not mapping:
            return cls()

        defaults = {v.name: v for v in default_variables}
        variables = []
        for name, bound in mapping.items():
            if isinstance(bound, (list, tuple)):
                if len(bound) != 2:
                    raise ConfigError(f'Design variable {name}: expected [low, high], got {bound}')
                low, high = float(bound[0]), float(bound[1])
                nominal = None
            elif isinstance(bound, dict):
                unknown = set(bound) - {'low', 'high', 'nominal'}
                if unknown:
                    raise ConfigError(f'Design variable {name}: unknown keys {sorted(unknown)}')
                low, high = float(bound['low']), float(bound['high'])
                nominal = bound.get('nominal')
            else:
                raise ConfigError(f'Design variable {name}: cannot parse bounds {bound!r}')

            if nominal is None:
                nominal = defaults[name].nominal if name in defaults and low <= defaults[name].nominal <= high else 0.5 * (low + high)

            variables.append(DesignVariable(name, low, high, float(nominal)))

        given = {v.name for v in variables}
        variables = [v for v in default_variables if v.name not in given] + variables

        order = {v.name: k for k, v in enumerate(default_variables)}
        variables.sort(key=lambda v: order.get(v.name, len(order)))

        return cls(tuple(variables))


@dataclass(frozen=True)
class DesignSample:
    sample_id: int
    names: Tuple[str, ...]
    values: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'names', tuple(self.names))
        object.__setattr__(self, 'values', tuple(float(x) for x in self.values))
        if len(self.names) != len(self.values):
            raise ConfigError(f'DesignSample {self.sample_id}: {len(self.names)} names for {len(self.values)} values')

    def __getitem__(self, name):
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(f'Design variable {name} not in sample {self.sample_id}') from None

    def get(self, name, default=None):
        return self[name] if name in self.names else default

    def vector(self):
        return np.array(self.values)

    def as_dict(self):
        return dict(zip(self.names, self.values))

    def check_bounds(self, bounds):
        for v in bounds.variables:
            value = self.get(v.name)
            if value is None:
                raise ConfigError(f'DesignSample {self.sample_id} misses design variable {v.name}')
            if not v.low <= value <= v.high:
                raise ConfigError(f'DesignSample {self.sample_id}: {v.name}={value} outside [{v.low}, {v.high}]')

        return self
