"""Adam with decoupled weight decay."""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NonFiniteGradientError, ShapeMismatchError


@dataclass
class OptimizerState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 4e-5
    step: int = 0
    exp_avg: dict = field(default_factory=dict)
    exp_avg_sq: dict = field(default_factory=dict)


def adam_step(params, state, lr=None):
    """
    One update of every parameter in ``params`` (name -> Tensor).

    Decay is applied as theta <- theta - lr*wd*theta before the moment update.
    Parameters that received no gradient this step are left untouched.
    """
    lr = state.lr if lr is None else lr
    for name, p in params.items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradientError(name)
    state.step += 1
    t = state.step
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        if p.grad is None:
            continue
        if p.grad.shape != p.data.shape:
            raise ShapeMismatchError(f"Gradient shape {p.grad.shape} does not match parameter '{name}' {p.data.shape}")
        m = state.exp_avg.get(name)
        v = state.exp_avg_sq.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        if state.weight_decay:
            p.data = p.data - lr * state.weight_decay * p.data
        m = state.beta1 * m + (1.0 - state.beta1) * p.grad
        v = state.beta2 * v + (1.0 - state.beta2) * p.grad * p.grad
        m_hat = m / bias1
        v_hat = v / bias2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        state.exp_avg[name] = m
        state.exp_avg_sq[name] = v
    return state


class Adam:
    """Stateful wrapper over ``adam_step`` for a fixed set of named parameters."""

    def __init__(self, named_params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=4e-5):
        self.params = dict(named_params)
        self.state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr=None):
        adam_step(self.params, self.state, lr)
