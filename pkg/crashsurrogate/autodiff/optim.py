import math

import numpy as np

from dataclasses import dataclass, field

from crashsurrogate.helpers.errors import GradientError


@dataclass
class CosineSchedule:
    initial_lr: float = 1e-4
    total_steps: int = 1
    floor_lr: float = 0.0

    def lr(self, step):
        if self.total_steps <= 0:
            return self.initial_lr

        progress = min(max(step, 0), self.total_steps) / self.total_steps
        return self.floor_lr + 0.5 * (self.initial_lr - self.floor_lr) * (1.0 + math.cos(math.pi * progress))


@dataclass
class OptimState:
    base_lr: float = 1e-4
    weight_decay: float = 1e-4
    schedule: CosineSchedule = None
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.schedule is None:
            self.schedule = CosineSchedule(initial_lr=self.base_lr, total_steps=0, floor_lr=self.base_lr)

    @property
    def current_lr(self):
        return self.schedule.lr(self.step)


def _named(params):
    if isinstance(params, dict):
        return list(params.items())

    return [(str(i), p) for i, p in enumerate(params)]


def adamw_step(params, opt):
    """
    One AdamW update with decoupled weight decay. The learning rate comes from the cosine
    schedule evaluated at the current step; returns that learning rate.
    """
    named = _named(params)
    for name, p in named:
        if p.grad is None:
            raise GradientError(f'Parameter {name} has no gradient, call backward() first')

    lr = opt.schedule.lr(opt.step)
    beta1, beta2 = opt.betas
    t = opt.step + 1
    bias_correction1 = 1.0 - beta1 ** t
    bias_correction2 = 1.0 - beta2 ** t

    for name, p in named:
        if name not in opt.first_moment:
            opt.first_moment[name] = np.zeros_like(p.values)
            opt.second_moment[name] = np.zeros_like(p.values)

        m = opt.first_moment[name]
        v = opt.second_moment[name]
        m *= beta1
        m += (1.0 - beta1) * p.grad
        v *= beta2
        v += (1.0 - beta2) * p.grad ** 2

        if opt.weight_decay:
            p.values = p.values - lr * opt.weight_decay * p.values

        m_hat = m / bias_correction1
        v_hat = v / bias_correction2
        p.values = p.values - lr * m_hat / (np.sqrt(v_hat) + opt.eps)

    opt.step = t

    return lr


def global_grad_norm(params):
    return float(np.sqrt(sum(float((p.grad ** 2).sum()) for _, p in _named(params) if p.grad is not None)))


def clip_grad_norm(params, max_norm):
    """Scale gradients in place so their global L2 norm is at most `max_norm`; returns the norm before clipping"""
    total = global_grad_norm(params)
    if max_norm is not None and total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for _, p in _named(params):
            if p.grad is not None:
                p.grad *= scale

    return total
