"""Dense float64 arrays with reverse-mode differentiation and an Adam optimizer.

Every operation records itself on an implicit tape (the graph of parent
links plus backward closures). Calling :func:`backward` on a scalar loss
replays that tape in reverse and accumulates gradients into every tensor
created with ``requires_grad=True``. Sized for desk-scale networks, a few
hundred thousand parameters at most.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ShapeMismatch",
    "TrainingError",
    "param",
    "constant",
    "backward",
    "backward_from",
    "Adam",
    "exp",
    "log",
    "sqrt",
    "relu",
    "softplus",
    "softmax",
    "clip_max",
    "matmul",
    "tsum",
    "tmean",
    "tmax",
    "tmin",
    "concat",
    "reshape",
    "take_rows",
    "segment_sum",
    "causal_conv1d",
    "layer_norm",
    "uniform_init",
]


class ShapeMismatch(ValueError):
    """Operand shapes do not conform; the message names the primitive."""


class TrainingError(RuntimeError):
    """Optimization cannot continue (non-finite gradient or loss)."""


def _as_f64(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


class Tensor:
    """A node in the computation tape: float64 payload plus gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_f64(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return _elementwise("add", self, _wrap(other), np.add,
                            lambda g, a, b: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        return _elementwise("sub", self, _wrap(other), np.subtract,
                            lambda g, a, b: (g, -g))

    def __rsub__(self, other):
        return _wrap(other) - self

    def __mul__(self, other):
        return _elementwise("mul", self, _wrap(other), np.multiply,
                            lambda g, a, b: (g * b.data, g * a.data))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other)
        return _elementwise("div", self, other, np.divide,
                            lambda g, a, b: (g / b.data, -g * a.data / (b.data * b.data)))

    def __rtruediv__(self, other):
        return _wrap(other) / self

    def __neg__(self):
        return _unary("neg", self, np.negative, lambda g, a, out: -g)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise ShapeMismatch("pow: exponent must be a python scalar")
        e = float(exponent)
        return _unary("pow", self, lambda x: np.power(x, e),
                      lambda g, a, out: g * e * np.power(a.data, e - 1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        out = Tensor(self.data[key])
        out.requires_grad = self.requires_grad
        if out.requires_grad:
            out._parents = (self,)

            def _bw(g, a=self, k=key):
                ga = np.zeros_like(a.data)
                np.add.at(ga, k, g)
                return (ga,)

            out._backward = _bw
        return out


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def param(data, name: str) -> Tensor:
    """A trainable tensor: gradient slot allocated, tracked by the optimizer."""
    t = Tensor(data, requires_grad=True, name=name)
    t.zero_grad()
    return t


def constant(data) -> Tensor:
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _elementwise(opname, a, b, fwd, bwd) -> Tensor:
    try:
        data = fwd(a.data, b.data)
    except ValueError as err:
        raise ShapeMismatch(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast") from err

    def _bw(g):
        ga, gb = bwd(g, a, b)
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return _make(data, (a, b), _bw)


def _unary(opname, a, fwd, bwd) -> Tensor:
    data = fwd(a.data)
    out = _make(data, (a,), None)
    if out.requires_grad:
        out._backward = lambda g: (bwd(g, a, out),)
    return out


# -- pointwise primitives ---------------------------------------------------

def exp(a: Tensor) -> Tensor:
    return _unary("exp", a, np.exp, lambda g, x, out: g * out.data)


def log(a: Tensor) -> Tensor:
    return _unary("log", a, np.log, lambda g, x, out: g / x.data)


def sqrt(a: Tensor) -> Tensor:
    return _unary("sqrt", a, np.sqrt, lambda g, x, out: g * 0.5 / out.data)


def relu(a: Tensor) -> Tensor:
    return _unary("relu", a, lambda x: np.maximum(x, 0.0),
                  lambda g, x, out: g * (x.data > 0.0))


def softplus(a: Tensor) -> Tensor:
    # log(1 + exp(x)) computed stably; derivative is the logistic function
    def _fwd(x):
        return np.logaddexp(0.0, x)

    def _bwd(g, x, out):
        return g / (1.0 + np.exp(-x.data))

    return _unary("softplus", a, _fwd, _bwd)


def clip_max(a: Tensor, cap: float) -> Tensor:
    """Elementwise min(a, cap); gradient passes only through unclipped entries."""
    return _unary("clip_max", a, lambda x: np.minimum(x, cap),
                  lambda g, x, out: g * (x.data < cap))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def _bw(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return _make(y, (a,), _bw)


# -- linear algebra ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: shapes {a.shape} and {b.shape} not aligned")
    data = a.data @ b.data

    def _bw(g):
        return (g @ b.data.T, a.data.T @ g)

    return _make(data, (a, b), _bw)


# -- reductions ---------------------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def _bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _make(data, (a,), _bw)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def _extreme(opname, a, axis, keepdims, reducer, arg_reducer):
    data = reducer(a.data, axis=axis, keepdims=keepdims)

    def _bw(g):
        ga = np.zeros_like(a.data)
        if axis is None:
            # route to the first attaining element in flat order
            idx = np.unravel_index(arg_reducer(a.data), a.shape)
            ga[idx] = np.asarray(g).reshape(())
        else:
            arg = arg_reducer(a.data, axis=axis)
            gg = g if keepdims else np.expand_dims(g, axis)
            np.put_along_axis(ga, np.expand_dims(arg, axis), gg, axis=axis)
        return (ga,)

    return _make(data, (a,), _bw)


def tmax(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    # ties route the gradient to the first attaining index
    return _extreme("max", a, axis, keepdims, np.max, np.argmax)


def tmin(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return _extreme("min", a, axis, keepdims, np.min, np.argmin)


# -- structural ops -----------------------------------------------------------

def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def _bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(data, tensors, _bw)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def _bw(g):
        return (g.reshape(a.shape),)

    return _make(data, (a,), _bw)


def take_rows(a: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows along axis 0; backward scatter-adds into the source."""
    idx = np.asarray(indices)
    data = a.data[idx]

    def _bw(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _make(data, (a,), _bw)


def segment_sum(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets given per-row ids."""
    ids = np.asarray(segment_ids)
    if ids.shape[0] != a.shape[0]:
        raise ShapeMismatch(
            f"segment_sum: {ids.shape[0]} ids for {a.shape[0]} rows")
    data = np.zeros((num_segments,) + a.shape[1:], dtype=np.float64)
    np.add.at(data, ids, a.data)

    def _bw(g):
        return (g[ids],)

    return _make(data, (a,), _bw)


def causal_conv1d(x: Tensor, w: Tensor, b: Tensor, dilation: int = 1) -> Tensor:
    """Length-preserving causal convolution.

    ``x`` is (N, L, C_in), ``w`` is (K, C_in, C_out), ``b`` is (C_out,).
    Left zero padding of (K-1)*dilation keeps output[t] a function of
    input[0..t] only.
    """
    if x.ndim != 3 or w.ndim != 3 or x.shape[2] != w.shape[1]:
        raise ShapeMismatch(
            f"causal_conv1d: input {x.shape} and kernel {w.shape} not aligned")
    n, length, c_in = x.shape
    k, _, c_out = w.shape
    pad = (k - 1) * dilation
    xp = np.concatenate(
        [np.zeros((n, pad, c_in), dtype=np.float64), x.data], axis=1)
    out = np.broadcast_to(b.data, (n * length, c_out)).copy()
    for tap in range(k):
        seg = xp[:, tap * dilation: tap * dilation + length, :]
        out += seg.reshape(-1, c_in) @ w.data[tap]
    out = out.reshape(n, length, c_out)

    def _bw(g):
        g2 = g.reshape(-1, c_out)
        gw = np.empty_like(w.data)
        gxp = np.zeros_like(xp)
        for tap in range(k):
            seg = xp[:, tap * dilation: tap * dilation + length, :].reshape(-1, c_in)
            gw[tap] = seg.T @ g2
            gxp[:, tap * dilation: tap * dilation + length, :] += (
                g2 @ w.data[tap].T).reshape(n, length, c_in)
        gb = g.sum(axis=(0, 1))
        return (gxp[:, pad:, :], gw, gb)

    return _make(out, (x, w, b), _bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the trailing (channel) axis with learned gain and bias."""
    c = x.shape[-1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeMismatch(
            f"layer_norm: gain/bias must be ({c},), got {gain.shape} and {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def _bw(g):
        lead = tuple(range(g.ndim - 1))
        g_gain = (g * xhat).sum(axis=lead)
        g_bias = g.sum(axis=lead)
        gh = g * gain.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return (gx, g_gain, g_bias)

    return _make(out, (x, gain, bias), _bw)


# -- backward pass ------------------------------------------------------------

def _topo_order(roots) -> list:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(r, False) for r in roots]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen and (parent.requires_grad or parent._parents):
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate gradients of every reachable trainable tensor from a scalar loss."""
    if loss.data.size != 1:
        raise ShapeMismatch(
            f"backward: loss must be scalar, got shape {loss.shape}")
    backward_from([loss], [np.ones_like(loss.data)])


def backward_from(outputs, output_grads) -> None:
    """Reverse-mode sweep seeded with explicit output gradients.

    Supports checkpointed training: a subgraph can be replayed with the
    downstream gradient injected at its outputs.
    """
    grads: dict[int, np.ndarray] = {}
    for out, g in zip(outputs, output_grads):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != out.shape:
            raise ShapeMismatch(
                f"backward: seed grad shape {g.shape} != output shape {out.shape}")
        grads[id(out)] = grads.get(id(out), 0.0) + g

    for node in reversed(_topo_order(list(outputs))):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and node._backward is None:
            # leaf parameter
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        if node._backward is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not (parent.requires_grad or parent._parents):
                continue
            if parent._backward is None and parent.requires_grad:
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += pg
            else:
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg


# -- optimizer ----------------------------------------------------------------

class Adam:
    """Standard Adam with bias correction; gradients are zeroed after each step."""

    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise TrainingError(
                    f"non-finite gradient in parameter {p.name or '<unnamed>'}")
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * g * g
            m_hat = self._m[i] / (1.0 - self.beta1 ** self.t)
            v_hat = self._v[i] / (1.0 - self.beta2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.zero_grad()

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Weight init: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform(-bound, bound, size=shape)
