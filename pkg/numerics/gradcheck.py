"""Central finite-difference verification of analytic gradients."""
import numpy as np

from .tensor import Tensor


def grad_check(f, inputs, h=1e-5, floor=1e-4):
    """
    Compare the tape gradient of scalar ``f()`` w.r.t. each tensor in
    ``inputs`` against (f(x+h) - f(x-h)) / 2h, coordinate by coordinate.

    Returns the max relative error |a - n| / max(|a| + |n|, floor).
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    for x in inputs:
        x.zero_grad()
    f().backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]

    worst = 0.0
    for x, grad in zip(inputs, analytic):
        x.data = np.ascontiguousarray(x.data)
        flat = x.data.reshape(-1)
        grad_flat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = float(f().data)
            flat[i] = original - h
            minus = float(f().data)
            flat[i] = original
            numeric = (plus - minus) / (2.0 * h)
            error = abs(grad_flat[i] - numeric) / max(abs(grad_flat[i]) + abs(numeric), floor)
            worst = max(worst, error)
    return worst
