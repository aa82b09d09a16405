from crashsurrogate.autodiff.tensor import Parameter
from crashsurrogate.helpers.errors import ShapeError


class Module:
    """
    Parameter container. Parameters and sub-modules are discovered from instance attributes
    (including lists of modules) in definition order, which gives stable dotted names.
    """

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix=''):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield f'{prefix}{name}', value
            elif isinstance(value, Module):
                yield from value.named_parameters(f'{prefix}{name}.')
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Parameter):
                        yield f'{prefix}{name}.{i}', item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(f'{prefix}{name}.{i}.')

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def parameter_count(self):
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self):
        return {name: p.values.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        own = dict(self.named_parameters())

        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise ShapeError(f'State dict mismatch, missing: {missing}, unexpected: {unexpected}')

        for name, values in state.items():
            if name not in own:
                continue
            if own[name].shape != values.shape:
                raise ShapeError(f'Parameter {name}: expected shape {own[name].shape}, got {values.shape}')
            own[name].values = values.astype(own[name].values.dtype, copy=True)
