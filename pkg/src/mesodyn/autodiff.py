"""Array-valued reverse-mode automatic differentiation on a dynamic tape.

Every operation takes and returns :class:`Tensor` objects wrapping float64
numpy arrays.  The local adjoint rules are themselves written in tensor
operations, so the gradients returned by :func:`gradient` live on the tape
and can be differentiated again (double backward), which the training loss
relies on when it differentiates through gradients taken inside the model.

Complex quantities never appear on the tape: spectra travel as stacked
(real, imaginary) pairs, and the two transform primitives
:func:`dft_r2c` / :func:`dft_c2r` form a mutually adjoint pair under
constant diagonal weights.

Recording can be suspended with :func:`no_grad` for pure evaluation.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import NumericOverflow

_grad_enabled = True
_check_finite = False


@contextmanager
def no_grad():
    """Suspend tape recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextmanager
def check_finite(enabled: bool = True):
    """Raise NumericOverflow on any non-finite intermediate (debug aid)."""
    global _check_finite
    prev = _check_finite
    _check_finite = enabled
    try:
        yield
    finally:
        _check_finite = prev


class Tensor:
    """A node of the computation graph."""

    __slots__ = ("data", "parents", "_vjp")

    def __init__(self, data, parents=(), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        if _grad_enabled:
            self.parents = parents
            self._vjp = vjp
        else:
            self.parents = ()
            self._vjp = None
        if _check_finite and not np.all(np.isfinite(self.data)):
            raise NumericOverflow("non-finite intermediate value")

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    # operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_const(self, p)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def constant(data) -> Tensor:
    """A leaf with no gradient path."""
    t = Tensor.__new__(Tensor)
    t.data = np.asarray(data, dtype=np.float64)
    t.parents = ()
    t._vjp = None
    return t


def parameter(data) -> Tensor:
    """A trainable leaf (identical to constant; gradients flow to any leaf)."""
    return constant(np.array(data, dtype=np.float64))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def detach(t: Tensor) -> Tensor:
    """Same values, no history; lets iterative evaluations free their graphs."""
    return constant(t.data)


def _sum_to(g: Tensor, shape: tuple) -> Tensor:
    """Reverse numpy broadcasting: reduce g down to the given shape."""
    if g.data.shape == shape:
        return g
    extra = g.data.ndim - len(shape)
    if extra > 0:
        g = sum_axes(g, tuple(range(extra)), keepdims=False)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.data.shape[i] != 1)
    if axes:
        g = sum_axes(g, axes, keepdims=True)
    return g if g.data.shape == shape else reshape(g, shape)


# primitive operations ----------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _sum_to(g, a.data.shape), _sum_to(g, b.data.shape)

    return Tensor(a.data + b.data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _sum_to(g, a.data.shape), _sum_to(neg(g), b.data.shape)

    return Tensor(a.data - b.data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, (a,), lambda g: (neg(g),))


def mul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _sum_to(mul(g, b), a.data.shape), _sum_to(mul(g, a), b.data.shape)

    return Tensor(a.data * b.data, (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        ga = div(g, b)
        gb = neg(mul(ga, div(a, b)))
        return _sum_to(ga, a.data.shape), _sum_to(gb, b.data.shape)

    return Tensor(a.data / b.data, (a, b), vjp)


def pow_const(a: Tensor, p) -> Tensor:
    p = float(p)

    def vjp(g):
        if p == 2.0:
            return (mul(g, mul(constant(2.0), a)),)
        return (mul(g, mul(constant(p), pow_const(a, p - 1.0))),)

    return Tensor(a.data**p, (a,), vjp)


def exp(a: Tensor) -> Tensor:
    def vjp(g):
        return (mul(g, exp(a)),)

    return Tensor(np.exp(a.data), (a,), vjp)


def log(a: Tensor) -> Tensor:
    def vjp(g):
        return (div(g, a),)

    return Tensor(np.log(a.data), (a,), vjp)


def sin(a: Tensor) -> Tensor:
    def vjp(g):
        return (mul(g, cos(a)),)

    return Tensor(np.sin(a.data), (a,), vjp)


def cos(a: Tensor) -> Tensor:
    def vjp(g):
        return (neg(mul(g, sin(a))),)

    return Tensor(np.cos(a.data), (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    def vjp(g):
        t = tanh(a)
        return (mul(g, sub(constant(1.0), mul(t, t))),)

    return Tensor(np.tanh(a.data), (a,), vjp)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: Tensor) -> Tensor:
    def vjp(g):
        s = sigmoid(a)
        return (mul(g, mul(s, sub(constant(1.0), s))),)

    return Tensor(_sigmoid_np(a.data), (a,), vjp)


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(a)), stable for large |a|; derivative is sigmoid(a)."""

    def vjp(g):
        return (mul(g, sigmoid(a)),)

    return Tensor(np.logaddexp(0.0, a.data), (a,), vjp)


def _silu_gg(a: Tensor) -> Tensor:
    """Second derivative of silu, composed from primitives so a third
    derivative (never needed on the hot path) still works."""
    s = sigmoid(a)
    one = constant(1.0)
    sp = mul(s, sub(one, s))
    return mul(sp, add(constant(2.0), mul(a, sub(one, mul(constant(2.0), s)))))


def silu_grad(a: Tensor) -> Tensor:
    """First derivative of silu as one fused node."""

    def vjp(g):
        return (mul(g, _silu_gg(a)),)

    s = _sigmoid_np(a.data)
    return Tensor(s * (1.0 + a.data * (1.0 - s)), (a,), vjp)


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x) as one fused node."""

    def vjp(g):
        return (mul(g, silu_grad(a)),)

    return Tensor(a.data * _sigmoid_np(a.data), (a,), vjp)


def sum_axes(a: Tensor, axes: tuple, keepdims: bool = False) -> Tensor:
    axes = tuple(ax % a.data.ndim for ax in axes)

    def vjp(g):
        if keepdims:
            expanded = g
        else:
            shape = list(a.data.shape)
            for ax in axes:
                shape[ax] = 1
            expanded = reshape(g, tuple(shape))
        return (broadcast_to(expanded, a.data.shape),)

    return Tensor(np.sum(a.data, axis=axes, keepdims=keepdims), (a,), vjp)


def sum_all(a: Tensor) -> Tensor:
    return sum_axes(a, tuple(range(a.data.ndim))) if a.data.ndim else a


def mean_all(a: Tensor) -> Tensor:
    return mul(sum_all(a), constant(1.0 / a.data.size))


def broadcast_to(a: Tensor, shape: tuple) -> Tensor:
    def vjp(g):
        return (_sum_to(g, a.data.shape),)

    return Tensor(np.broadcast_to(a.data, shape).copy(), (a,), vjp)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    def vjp(g):
        return (reshape(g, a.data.shape),)

    return Tensor(a.data.reshape(shape), (a,), vjp)


def transpose(a: Tensor) -> Tensor:
    def vjp(g):
        return (transpose(g),)

    # view, not copy: tensors are never mutated while on the tape
    return Tensor(a.data.T, (a,), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return matmul(g, transpose(b)), matmul(transpose(a), g)

    return Tensor(a.data @ b.data, (a, b), vjp)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b in one node (2D x, bias broadcast over rows)."""

    def vjp(g):
        return matmul(g, transpose(w)), matmul(transpose(x), g), sum_axes(g, (0,))

    return Tensor(x.data @ w.data + b.data, (x, w, b), vjp)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    axis = axis % a.data.ndim
    sl = tuple(
        slice(start, start + length) if ax == axis else slice(None)
        for ax in range(a.data.ndim)
    )

    def vjp(g):
        return (pad_slice(g, axis, start, a.data.shape[axis]),)

    return Tensor(a.data[sl].copy(), (a,), vjp)


def pad_slice(a: Tensor, axis: int, start: int, total: int) -> Tensor:
    """Embed a into a zero array of size `total` along `axis` (adjoint of narrow)."""
    axis = axis % a.data.ndim
    shape = list(a.data.shape)
    length = shape[axis]
    shape[axis] = total
    data = np.zeros(shape)
    sl = tuple(
        slice(start, start + length) if ax == axis else slice(None)
        for ax in range(a.data.ndim)
    )
    data[sl] = a.data

    def vjp(g):
        return (narrow(g, axis, start, length),)

    return Tensor(data, (a,), vjp)


def concat(parts: list[Tensor], axis: int) -> Tensor:
    axis = axis % parts[0].data.ndim
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def vjp(g):
        return tuple(
            narrow(g, axis, int(offsets[i]), sizes[i]) for i in range(len(parts))
        )

    return Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), vjp)


# discrete Fourier transform pair ------------------------------------


def _half_weights(n: int) -> np.ndarray:
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return w


def dft_r2c(u: Tensor) -> Tensor:
    """Normalized half-spectrum of a real signal along the last axis.

    Input shape (..., N); output shape (..., 2, N//2 + 1) stacking the real
    and imaginary parts of fft(u)/N for modes 0..N/2.
    """
    n = u.data.shape[-1]
    spec = np.fft.rfft(u.data, axis=-1) / n
    data = np.stack([spec.real, spec.imag], axis=-2)

    def vjp(g):
        scale = constant(1.0 / (n * _half_weights(n)))
        return (dft_c2r(mul(g, scale)),)

    return Tensor(data, (u,), vjp)


def dft_c2r(y: Tensor) -> Tensor:
    """Real signal whose normalized half-spectrum is y (shape (..., 2, M)).

    Inverse of :func:`dft_r2c`; the imaginary entries at k = 0 and Nyquist
    do not influence the output (they are structurally zero for spectra of
    real signals).
    """
    m = y.data.shape[-1]
    n = 2 * (m - 1)
    spec = y.data[..., 0, :] + 1j * y.data[..., 1, :]
    data = np.fft.irfft(spec, n=n, axis=-1) * n

    def vjp(g):
        scale = constant(n * _half_weights(n))
        return (mul(dft_r2c(g), scale),)

    return Tensor(data, (y,), vjp)


# reverse accumulation -----------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def gradient(output: Tensor, wrt, grad_output: Tensor | None = None) -> list[Tensor]:
    """Reverse-mode gradients of a scalar output.

    The returned tensors are recorded on the tape, so they can be fed back
    into :func:`gradient` for higher-order derivatives.  Variables with no
    path to the output get a zero gradient.
    """
    single = isinstance(wrt, Tensor)
    targets = [wrt] if single else list(wrt)
    if grad_output is None:
        if output.data.size != 1:
            raise ValueError("gradient needs a scalar output (or an explicit seed)")
        grad_output = constant(np.ones_like(output.data))
    target_ids = {id(t) for t in targets}
    grads: dict[int, Tensor] = {id(output): grad_output}
    kept: dict[int, Tensor] = {}
    for node in reversed(_toposort(output)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if id(node) in target_ids:
            kept[id(node)] = g
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None:
                continue
            held = grads.get(id(parent))
            grads[id(parent)] = pg if held is None else add(held, pg)
    results = []
    for t in targets:
        got = kept.get(id(t))
        results.append(got if got is not None else constant(np.zeros_like(t.data)))
    return results[0] if single else results
