"""
Dense tensor with a reverse-mode tape.

Each operation in ``numerics.ops`` returns a new Tensor holding its parents and
a closure that pushes the output gradient back to them. ``Tensor.backward``
walks the graph in reverse topological order.
"""
from contextlib import contextmanager

import numpy as np

from .exceptions import NonFiniteError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording (evaluation, frozen encoders)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ('data', 'requires_grad', 'grad', '_parents', '_backward')

    def __init__(self, data, requires_grad=False, dtype=None):
        array = np.asarray(data, dtype=dtype)
        if array.dtype.kind not in 'fiub':
            raise TypeError(f"Unsupported tensor dtype {array.dtype}")
        self.data = array
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    # ------------------------------------------------------------------ props
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ', requires_grad=True' if self.requires_grad else ''
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # ------------------------------------------------------------------ graph
    @classmethod
    def from_op(cls, data, parents, backward):
        """Wrap an op result, recording the graph only when it is needed."""
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"Operation produced non-finite values (shape {np.shape(data)})")
        out = cls(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def accumulate(self, grad):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + grad

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def detach(self):
        return Tensor(self.data)

    # -------------------------------------------------------------- operators
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.add(self, ops.mul(as_tensor(other, self.dtype), -1.0))

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from . import ops
        return ops.getitem(self, key)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def parameter(data, dtype=np.float64):
    return Tensor(np.array(data, dtype=dtype), requires_grad=True)
