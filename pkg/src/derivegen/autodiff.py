"""Minimal dense-tensor math with tape-based reverse-mode differentiation.

Values are 64-bit floats stored in numpy arrays. Forward operations record
nodes on an explicit :class:`Tape`; :func:`backward` replays the nodes in
exact reverse execution order and accumulates gradients into every
:class:`Parameter` reachable from the loss. Running ops with no active tape
is inference mode: same values, nothing recorded.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class StaleTapeError(RuntimeError):
    """backward() was called twice on the same tape without a new forward pass."""


class DivergenceError(RuntimeError):
    """A non-finite gradient was encountered; the optimizer step was aborted."""


class Tensor:
    """A dense float64 array plus a transient gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


class Parameter:
    """A trainable value with persistent gradient and momentum buffers."""

    __slots__ = ("value", "grad", "velocity")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.velocity = np.zeros_like(self.value)

    @classmethod
    def uniform(cls, shape, rng: np.random.Generator, scale: float = 0.08) -> "Parameter":
        return cls(rng.uniform(-scale, scale, size=shape))

    @classmethod
    def zeros(cls, shape) -> "Parameter":
        return cls(np.zeros(shape))

    @classmethod
    def constant(cls, shape, fill: float) -> "Parameter":
        return cls(np.full(shape, fill, dtype=np.float64))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Parameter(shape={self.value.shape})"


_ACTIVE: "Tape | None" = None


class Tape:
    """Ordered record of executed ops, replayed in reverse by backward().

    Use as a context manager around one forward pass; a fresh tape per pass
    keeps the reverse traversal exact.
    """

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        global _ACTIVE
        if _ACTIVE is not None:
            raise RuntimeError("another tape is already recording")
        _ACTIVE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE
        _ACTIVE = None
        return False

    def __len__(self) -> int:
        return len(self._nodes)


def _record(node) -> None:
    if _ACTIVE is not None:
        _ACTIVE._nodes.append(node)


def _value(x) -> np.ndarray:
    return x.value if isinstance(x, Parameter) else x.data


def _accumulate(x, g: np.ndarray) -> None:
    if isinstance(x, Parameter):
        x.grad += g
    elif x.grad is None:
        x.grad = g.copy()
    else:
        x.grad += g


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(param) into every Parameter recorded on the tape.

    The loss must be a scalar. Calling this twice on one tape raises
    StaleTapeError: intermediate gradients are transient, so a replay would
    be incorrect.
    """
    if tape._consumed:
        raise StaleTapeError("tape already consumed; run a new forward pass")
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
    tape._consumed = True
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape._nodes):
        node()


def affine(W: Parameter, x: Tensor, b: "Parameter | None" = None) -> Tensor:
    """W @ x (+ b) for a matrix W and vector x."""
    wv, xv = W.value, x.data
    if wv.ndim != 2 or xv.ndim != 1 or wv.shape[1] != xv.shape[0]:
        raise ShapeError(f"affine: weight {wv.shape} incompatible with input {xv.shape}")
    y = wv @ xv
    if b is not None:
        if b.value.shape != (wv.shape[0],):
            raise ShapeError(f"affine: bias {b.value.shape} incompatible with weight {wv.shape}")
        y = y + b.value
    out = Tensor(y)

    def node():
        g = out.grad
        if g is None:
            return
        W.grad += np.outer(g, xv)
        if b is not None:
            b.grad += g
        _accumulate(x, wv.T @ g)

    _record(node)
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # piecewise form avoids exp overflow for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def elementwise(op: str, a: Tensor, b: "Tensor | None" = None) -> Tensor:
    """Apply relu, sigmoid, tanh, or (binary) pairwise_max componentwise."""
    av = a.data
    if op == "pairwise_max":
        if b is None:
            raise ShapeError("pairwise_max needs two operands")
        bv = b.data
        if av.shape != bv.shape:
            raise ShapeError(f"pairwise_max: shapes {av.shape} and {bv.shape} differ")
        mask = av >= bv  # ties route the gradient to the first argument
        out = Tensor(np.where(mask, av, bv))

        def node():
            g = out.grad
            if g is None:
                return
            _accumulate(a, g * mask)
            _accumulate(b, g * ~mask)

        _record(node)
        return out

    if b is not None:
        raise ShapeError(f"{op} is unary")
    if op == "relu":
        out = Tensor(np.maximum(av, 0.0))

        def node():
            g = out.grad
            if g is None:
                return
            _accumulate(a, g * (av > 0))

    elif op == "sigmoid":
        yv = _sigmoid(av)
        out = Tensor(yv)

        def node():
            g = out.grad
            if g is None:
                return
            _accumulate(a, g * yv * (1.0 - yv))

    elif op == "tanh":
        yv = np.tanh(av)
        out = Tensor(yv)

        def node():
            g = out.grad
            if g is None:
                return
            _accumulate(a, g * (1.0 - yv * yv))

    else:
        raise ValueError(f"unknown elementwise op: {op!r}")
    _record(node)
    return out


def relu(a: Tensor) -> Tensor:
    return elementwise("relu", a)


def sigmoid(a: Tensor) -> Tensor:
    return elementwise("sigmoid", a)


def tanh(a: Tensor) -> Tensor:
    return elementwise("tanh", a)


def pairwise_max(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("pairwise_max", a, b)


def add(a, b) -> Tensor:
    """Elementwise sum; either operand may be a Tensor or a Parameter."""
    av, bv = _value(a), _value(b)
    if av.shape != bv.shape:
        raise ShapeError(f"add: shapes {av.shape} and {bv.shape} differ")
    out = Tensor(av + bv)

    def node():
        g = out.grad
        if g is None:
            return
        _accumulate(a, g)
        _accumulate(b, g)

    _record(node)
    return out


def concat(parts: "list[Tensor]") -> Tensor:
    """Concatenate 1-D tensors."""
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeError(f"concat expects vectors, got shape {p.data.shape}")
    out = Tensor(np.concatenate([p.data for p in parts]))
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def node():
        g = out.grad
        if g is None:
            return
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[lo:hi])

    _record(node)
    return out


def lookup(table: Parameter, index: int) -> Tensor:
    """Select one row of an embedding table."""
    if not 0 <= index < table.value.shape[0]:
        raise IndexError(f"row {index} out of range for table with {table.value.shape[0]} rows")
    out = Tensor(table.value[index].copy())

    def node():
        g = out.grad
        if g is None:
            return
        table.grad[index] += g

    _record(node)
    return out


def vsum(a: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    out = Tensor(np.array(a.data.sum()))

    def node():
        g = out.grad
        if g is None:
            return
        _accumulate(a, np.full_like(a.data, float(g)))

    _record(node)
    return out


def softmax_xent(logits: Tensor, target_index: int) -> tuple[Tensor, Tensor]:
    """Stable softmax + cross-entropy against one target index.

    Returns (loss, probs). Only the loss participates in differentiation;
    probs is a detached diagnostic output.
    """
    lv = logits.data
    k = lv.shape[0]
    if k == 0:
        raise ValueError("softmax over an empty distribution")
    if not 0 <= target_index < k:
        raise IndexError(f"target index {target_index} out of range for {k} classes")
    m = lv.max()
    ex = np.exp(lv - m)
    z = ex.sum()
    probs = ex / z
    # loss = -(logit[t] - m - log z), computed in log space for stability
    loss = Tensor(np.array(np.log(z) - (lv[target_index] - m)))

    def node():
        g = loss.grad
        if g is None:
            return
        gl = probs.copy()
        gl[target_index] -= 1.0
        _accumulate(logits, float(g) * gl)

    _record(node)
    return loss, Tensor(probs)


def sgd_momentum_step(params, lr: float, momentum: float,
                      max_grad_norm: "float | None" = None) -> None:
    """One SGD-with-momentum update over an iterable of Parameters.

    velocity <- momentum * velocity - lr * grad; value <- value + velocity;
    gradients are zeroed afterwards. A non-finite gradient entry aborts the
    whole step before any parameter is touched. max_grad_norm, when given,
    rescales the global gradient norm (off by default).
    """
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise DivergenceError("non-finite gradient; aborting optimizer step")
    if max_grad_norm is not None:
        total = np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
        if total > max_grad_norm and total > 0.0:
            scale = max_grad_norm / total
            for p in params:
                p.grad *= scale
    for p in params:
        p.velocity *= momentum
        p.velocity -= lr * p.grad
        p.value += p.velocity
        p.grad[:] = 0.0
