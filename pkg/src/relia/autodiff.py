"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

The computation graph is implicit: every tensor produced by a primitive
holds references to its parent tensors plus a closure computing the local
vector-Jacobian products.  The graph is acyclic by construction (an op can
only consume tensors that already exist), and ``backward`` replays it in
reverse topological order, accumulating gradients into the leaf tensors
created with ``requires_grad=True``.

Only the primitives needed by the residual classifier and its losses are
implemented: matmul, conv2d, batchnorm2d, relu, max_pool2d,
global_avg_pool, elementwise arithmetic, softmax, log, clip, mean/sum and
reshape.  Everything runs in 64-bit precision.

A graph and its tensors are meant to be confined to a single worker;
``no_grad`` toggles a module-level flag and is likewise not thread-safe.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import NonScalarLossError, ShapeMismatchError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference-only forward)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """Dense float64 array participating in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``grad`` of every reachable leaf.

        ``self`` must be a scalar.  Interior nodes do not retain gradients.
        """
        if self.data.size != 1:
            raise NonScalarLossError(f"backward requires a scalar loss, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))

        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            grad_out = pending.pop(id(node), None)
            if grad_out is None:
                continue
            if node._backward is None:
                node.grad = grad_out if node.grad is None else node.grad + grad_out
                continue
            for parent, grad_in in zip(node._parents, node._backward(grad_out)):
                if grad_in is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + grad_in
                else:
                    pending[key] = grad_in

    # Operator sugar; scalars are treated as constants.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data, parents, backward_fn, op: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes that numpy broadcasting introduced."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.data.shape, b.data.shape) from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(a.data + b.data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _make(a.data * b.data, (a, b), backward, "mul")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent: float) -> Tensor:
    """Elementwise a**exponent for a constant real exponent."""
    a = as_tensor(a)
    exponent = float(exponent)
    out = a.data ** exponent

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return _make(out, (a,), backward, "power")


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (g / a.data,)

    return _make(np.log(a.data), (a,), backward, "log")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values into [lo, hi]; gradient passes only where unclamped."""
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        return (g * mask,)

    return _make(np.clip(a.data, lo, hi), (a,), backward, "clip")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    return _make(np.where(mask, a.data, 0.0), (a,), backward, "relu")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    original = a.data.shape

    def backward(g):
        return (g.reshape(original),)

    return _make(a.data.reshape(shape), (a,), backward, "reshape")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.data.shape).copy(),)
        g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.data.shape).copy(),)

    return _make(np.mean(a.data, axis=axis), (a,), backward, "mean")


def tensor_sum(a, axis=None) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _make(np.sum(a.data, axis=axis), (a,), backward, "sum")


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max-subtracted before exponentiation)."""
    a = as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    exp = np.exp(shifted)
    out = exp / np.sum(exp, axis=axis, keepdims=True)

    def backward(g):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _make(out, (a,), backward, "softmax")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatchError("matmul", a.data.shape, b.data.shape)

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), backward, "matmul")


def _im2col(xp: np.ndarray, kh: int, kw: int, oh: int, ow: int, stride: int) -> np.ndarray:
    """Materialize sliding conv windows as (n*oh*ow, c*kh*kw)."""
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, oh, ow, c, kh, kw),
        strides=(sn, sh * stride, sw * stride, sc, sh, sw),
        writeable=False,
    )
    return windows.reshape(n * oh * ow, c * kh * kw)


def conv2d(x, w, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding.

    x: (n, c_in, h, w); w: (c_out, c_in, kh, kw); bias: (c_out,) or None.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[1] != w.data.shape[1]:
        raise ShapeMismatchError("conv2d", x.data.shape, w.data.shape)
    n, c_in, h, width = x.data.shape
    c_out, _, kh, kw = w.data.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (width + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeMismatchError("conv2d", x.data.shape, w.data.shape)

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = _im2col(xp, kh, kw, oh, ow, stride)
    w_flat = w.data.reshape(c_out, c_in * kh * kw)
    out = (cols @ w_flat.T).reshape(n, oh * ow, c_out).transpose(0, 2, 1).reshape(n, c_out, oh, ow)

    parents = [x, w]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.data.shape != (c_out,):
            raise ShapeMismatchError("conv2d.bias", bias.data.shape, (c_out,))
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def backward(g):
        g_mat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * oh * ow, c_out)
        gw = (g_mat.T @ cols).reshape(w.data.shape)
        g_cols = (g_mat @ w_flat).reshape(n, oh, ow, c_in, kh, kw)
        gxp = np.zeros((n, c_in, h + 2 * padding, width + 2 * padding))
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += (
                    g_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        gx = gxp[:, :, padding:padding + h, padding:padding + width] if padding else gxp
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _make(out, tuple(parents), backward, "conv2d")


def max_pool2d(x, kernel: int, stride: int | None = None) -> Tensor:
    """Max pooling without padding; stride defaults to the kernel size."""
    x = as_tensor(x)
    stride = kernel if stride is None else stride
    if x.data.ndim != 4:
        raise ShapeMismatchError("max_pool2d", x.data.shape)
    n, c, h, w = x.data.shape
    oh = (h - kernel) // stride + 1
    ow = (w - kernel) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeMismatchError("max_pool2d", x.data.shape, (kernel, kernel))
    sn, sc, sh, sw = x.data.strides
    windows = np.lib.stride_tricks.as_strided(
        x.data,
        shape=(n, c, oh, ow, kernel, kernel),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    ).reshape(n, c, oh, ow, kernel * kernel)
    argmax = np.argmax(windows, axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def backward(g):
        g_win = np.zeros((n, c, oh, ow, kernel * kernel))
        np.put_along_axis(g_win, argmax[..., None], g[..., None], axis=-1)
        g_win = g_win.reshape(n, c, oh, ow, kernel, kernel)
        gx = np.zeros_like(x.data)
        for i in range(kernel):
            for j in range(kernel):
                gx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += g_win[:, :, :, :, i, j]
        return (gx,)

    return _make(out, (x,), backward, "max_pool2d")


def global_avg_pool(x) -> Tensor:
    """Spatial mean over (h, w): (n, c, h, w) -> (n, c)."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeMismatchError("global_avg_pool", x.data.shape)
    n, c, h, w = x.data.shape

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.data.shape).copy(),)

    return _make(x.data.mean(axis=(2, 3)), (x,), backward, "global_avg_pool")


def batchnorm2d(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over (batch, h, w).

    In training mode the batch statistics normalize the input and the
    running buffers (plain arrays, not graph nodes) are updated in place
    with the given momentum.  In inference mode the running statistics are
    used and the op is a per-channel affine map.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim != 4 or gamma.data.shape != (x.data.shape[1],) or beta.data.shape != gamma.data.shape:
        raise ShapeMismatchError("batchnorm2d", x.data.shape, gamma.data.shape, beta.data.shape)

    if training:
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean[:] = (1.0 - momentum) * running_mean + momentum * mu
        running_var[:] = (1.0 - momentum) * running_var + momentum * var
    else:
        mu = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * x_hat + beta.data[None, :, None, None]

    def backward(g):
        d_beta = g.sum(axis=(0, 2, 3))
        d_gamma = (g * x_hat).sum(axis=(0, 2, 3))
        scale = (gamma.data * inv_std)[None, :, None, None]
        if training:
            m = g.shape[0] * g.shape[2] * g.shape[3]
            gx = (scale / m) * (
                m * g
                - d_beta[None, :, None, None]
                - x_hat * d_gamma[None, :, None, None]
            )
        else:
            gx = g * scale
        return gx, d_gamma, d_beta

    return _make(out, (x, gamma, beta), backward, "batchnorm2d")


def gradients(loss: Tensor, params: list[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar loss for each parameter; unused parameters get zeros."""
    for p in params:
        p.grad = None
    loss.backward()
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


def finite_difference_check(f, params: list[Tensor], h: float = 1e-5, max_entries: int | None = None, seed: int = 0) -> float:
    """Compare backward() against central finite differences.

    ``f`` re-evaluates the scalar loss from the current parameter values.
    Returns the maximum elementwise relative error, with the denominator
    floored at 1e-6 so near-zero gradient pairs do not divide to noise.
    Checks at most ``max_entries`` coordinates per parameter when set.
    """
    analytic = gradients(f(), params)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            idx = rng.choice(n, size=max_entries, replace=False)
        else:
            idx = np.arange(n)
        for i in idx:
            original = flat[i]
            flat[i] = original + h
            with no_grad():
                f_plus = float(f().data)
            flat[i] = original - h
            with no_grad():
                f_minus = float(f().data)
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = grad.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst
