"""A small define-by-run reverse-mode autodiff engine over float64 numpy arrays.

Every operation on :class:`Tensor` that involves a tensor with
``requires_grad`` records its parents and a closure computing the
vector-Jacobian product. :func:`backward` visits the recorded nodes once, in
reverse construction order, and accumulates gradients into the leaves.
"""

import itertools
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, NonScalarLoss, ShapeMismatch, TapeConsumed

_ids = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "_id", "_freed", "_consumed")
    # make ``ndarray <op> Tensor`` dispatch to Tensor's reflected operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None
        self._id = next(_ids)
        self._freed = False
        self._consumed = False

    # -- bookkeeping -------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return not self._parents and not self._freed

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self):
        return len(self.data)

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)

    def backward(self):
        backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data):
    """A leaf tensor that accumulates gradients."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _record(data, parents, vjp):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def custom(data, parents, vjp):
    """Record a hand-written op; ``vjp(g)`` returns one gradient per parent."""
    return _record(np.asarray(data, dtype=np.float64), tuple(parents), vjp)


unbroadcast = _unbroadcast


def _broadcast_check(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise binary --------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "add")
    return _record(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "sub")
    return _record(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "mul")
    return _record(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "div")
    out = a.data / b.data
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def neg(a):
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(f"matmul needs >= 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}") from None

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        if not b.requires_grad:
            gb = None
        elif b.ndim == 2:
            # fold all leading dims of a into one contraction
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (
            None if ga is None else _unbroadcast(ga, a.shape),
            None if gb is None else _unbroadcast(gb, b.shape),
        )

    return _record(out, (a, b), vjp)


def linear(x, w, b=None):
    """Fused ``x @ w + b`` for ``x`` of shape (..., n), ``w`` (n, m), ``b`` (m,)."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2 or x.ndim < 1 or x.shape[-1] != w.shape[0]:
        raise ShapeMismatch(f"linear: {x.shape} @ {w.shape}")
    out = x.data @ w.data
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[1],):
            raise ShapeMismatch(f"linear bias {b.shape} for weight {w.shape}")
        out = out + b.data
        parents = (x, w, b)

    def vjp(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ w.data.T if x.requires_grad else None
        gw = x.data.reshape(-1, x.shape[-1]).T @ g2 if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _record(out, parents, vjp)


# -- elementwise unary ---------------------------------------------------------


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive value")
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    a = as_tensor(a)
    out = special.expit(a.data)
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a):
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return _record(out, (a,), lambda g: (g * special.expit(x),))


def square(a):
    a = as_tensor(a)
    return _record(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def log_ndtr(a):
    """log of the standard normal CDF."""
    a = as_tensor(a)
    out = special.log_ndtr(a.data)

    def vjp(g):
        # d/dx log Phi(x) = phi(x) / Phi(x)
        logphi = -0.5 * a.data**2 - 0.5 * np.log(2 * np.pi)
        return (g * np.exp(logphi - out),)

    return _record(out, (a,), vjp)


# -- reductions ----------------------------------------------------------------


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _record(out, (a,), vjp)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return div(sum_(a, axis, keepdims), float(n))


def logsumexp(a, axis=-1, keepdims=False):
    a = as_tensor(a)
    out = special.logsumexp(a.data, axis=axis, keepdims=True)
    soft = np.exp(a.data - out)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return _record(out, (a,), vjp)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    lse = special.logsumexp(a.data, axis=axis, keepdims=True)
    out = a.data - lse
    soft = np.exp(out)
    return _record(out, (a,), lambda g: (g - soft * g.sum(axis=axis, keepdims=True),))


# -- shape ---------------------------------------------------------------------


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"cannot reshape {a.shape} to {shape}") from None
    return _record(out, (a,), lambda g: (g.reshape(a.shape),))


def expand_dims(a, axis):
    a = as_tensor(a)
    return reshape(a, np.expand_dims(a.data, axis).shape)


def broadcast_to(a, shape):
    a = as_tensor(a)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeMismatch(f"cannot broadcast {a.shape} to {shape}") from None
    return _record(out, (a,), lambda g: (_unbroadcast(g, a.shape),))


def getitem(a, index):
    """Basic slicing or integer-array gathering; scatter-adds on the way back."""
    a = as_tensor(a)
    out = a.data[index]

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _record(np.array(out), (a,), vjp)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch("concat: incompatible shapes " + str([t.shape for t in tensors])) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record(out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors, axis=0):
    return concat([expand_dims(t, axis) for t in tensors], axis=axis)


def where(cond, a, b):
    """Select ``a`` where ``cond`` else ``b``; ``cond`` is a constant mask."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    out = np.where(cond, a.data, b.data)
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(np.where(cond, g, 0.0), a.shape),
                   _unbroadcast(np.where(cond, 0.0, g), b.shape)),
    )


# -- backward --------------------------------------------------------------------


def _reachable(root):
    seen, order, stack_ = set(), [], [root]
    while stack_:
        node = stack_.pop()
        if node._id in seen:
            continue
        seen.add(node._id)
        if node._freed:
            raise TapeConsumed("graph was already released by an earlier backward()")
        order.append(node)
        stack_.extend(p for p in node._parents if p.requires_grad)
    return order


def backward(loss):
    """Fill ``.grad`` of every ``requires_grad`` leaf reachable from ``loss``.

    Gradients accumulate across calls on different graphs; the graph itself is
    released afterwards, so a second call on the same loss raises.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.size != 1:
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.shape}")
    if loss._consumed:
        raise TapeConsumed("backward() already called on this loss")
    if not loss.requires_grad:
        loss._consumed = True
        return
    nodes = _reachable(loss)
    # ids grow with construction order, so descending id is a reverse topological order
    nodes.sort(key=lambda n: n._id, reverse=True)
    grads = {loss._id: np.ones_like(loss.data)}
    for node in nodes:
        g = grads.pop(node._id, None)
        if g is None:
            continue
        if not node._parents:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(parent._id)
            grads[parent._id] = pg if prev is None else prev + pg
    for node in nodes:
        if node._parents:
            node._parents = ()
            node._vjp = None
            node._freed = True
    loss._consumed = True


def zero_grad(params):
    for p in params:
        p.grad = None


@dataclass
class GradCheckReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    tol: float

    @property
    def max_rel_error(self):
        return float(self.rel_error.max()) if self.rel_error.size else 0.0

    @property
    def passed(self):
        return self.max_rel_error <= self.tol

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"grad_check {status}: {self.rel_error.size} coords, max rel err {self.max_rel_error:.3e} (tol {self.tol:g})"


def grad_check(f, params, step=1e-5, tol=1e-4, floor=1e-6):
    """Compare reverse-mode gradients of ``f(params)`` to central differences.

    The relative error of each coordinate is ``|a - n| / max(|a|, |n|, floor)``;
    ``floor`` keeps coordinates with (near-)zero gradient from dividing by zero.
    """
    params = list(params)
    zero_grad(params)
    loss = f(params)
    backward(loss)
    analytic = np.concatenate(
        [(p.grad if p.grad is not None else np.zeros_like(p.data)).ravel() for p in params]
    )
    numeric = []
    with no_grad():
        for p in params:
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = f(params).item()
                flat[i] = orig - step
                down = f(params).item()
                flat[i] = orig
                numeric.append((up - down) / (2 * step))
    numeric = np.array(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return GradCheckReport(analytic, numeric, np.abs(analytic - numeric) / denom, tol)
