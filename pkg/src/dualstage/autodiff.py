"""Minimal dense-array numerics with tape-based reverse-mode differentiation.

Everything is 64-bit. There is no broadcasting beyond scalar-tensor; the
few mixed-shape operations the networks need (row-vector add, row scaling,
column extraction) exist as explicit named ops so that shape errors stay
loud.
"""

from __future__ import annotations

import threading

import numpy as np

from .exceptions import ConfigurationError, ContractError, ShapeMismatchError

_tls = threading.local()


def _tape_stack() -> list:
    if not hasattr(_tls, "stack"):
        _tls.stack = []
    return _tls.stack


class Tensor:
    """Dense float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of operations for one forward pass.

    Records are appended in execution order, so the list is topologically
    sorted by construction and a single reverse sweep visits every record
    exactly once.
    """

    def __init__(self):
        self.records: list[tuple[str, tuple[Tensor, ...], Tensor, object]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().pop()
        return False

    def record(self, kind, inputs, output, backward_fn):
        output.requires_grad = True
        self.records.append((kind, inputs, output, backward_fn))

    def backward(self, loss: Tensor):
        """Populate .grad of every tracked tensor reachable from ``loss``.

        ``loss`` must be a scalar produced while this tape was active.
        """
        if loss.data.shape != ():
            raise ContractError(
                f"backward requires a scalar loss, got shape {loss.data.shape}"
            )
        if not loss.requires_grad:
            raise ContractError("loss was not produced on an active tape")
        for _, _, out, _ in self.records:
            out.grad = None
        loss.grad = np.ones((), dtype=np.float64)
        for _, inputs, out, backward_fn in reversed(self.records):
            if out.grad is None:
                continue
            grads = backward_fn(out.grad)
            for tensor, grad in zip(inputs, grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.grad is None:
                    tensor.grad = np.array(grad, dtype=np.float64)
                else:
                    tensor.grad = tensor.grad + grad


def _active_tape(*tensors: Tensor) -> Tape | None:
    stack = _tape_stack()
    if not stack:
        return None
    if any(t.requires_grad for t in tensors):
        return stack[-1]
    return None


def _require_same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(
            f"{op}: shapes {a.data.shape} and {b.data.shape} differ"
        )


def _is_scalar(t: Tensor) -> bool:
    return t.data.ndim == 0


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


# ---------------------------------------------------------------------------
# elementwise / scalar ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if not (_is_scalar(a) or _is_scalar(b)):
        _require_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    tape = _active_tape(a, b)
    if tape is not None:
        def backward_fn(g):
            ga = g.sum() if _is_scalar(a) and not _is_scalar(b) else g
            gb = g.sum() if _is_scalar(b) and not _is_scalar(a) else g
            return ga, gb
        tape.record("add", (a, b), out, backward_fn)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if not (_is_scalar(a) or _is_scalar(b)):
        _require_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    tape = _active_tape(a, b)
    if tape is not None:
        def backward_fn(g):
            ga = g.sum() if _is_scalar(a) and not _is_scalar(b) else g
            gb = g.sum() if _is_scalar(b) and not _is_scalar(a) else g
            return ga, -gb
        tape.record("sub", (a, b), out, backward_fn)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product for equal shapes; scalar-tensor product otherwise."""
    if not (_is_scalar(a) or _is_scalar(b)):
        _require_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    tape = _active_tape(a, b)
    if tape is not None:
        def backward_fn(g):
            ga = g * b.data
            gb = g * a.data
            if _is_scalar(a) and not _is_scalar(b):
                ga = ga.sum()
            if _is_scalar(b) and not _is_scalar(a):
                gb = gb.sum()
            return ga, gb
        tape.record("mul", (a, b), out, backward_fn)
    return out


hadamard = mul


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    tape = _active_tape(a)
    if tape is not None:
        tape.record("neg", (a,), out, lambda g: (-g,))
    return out


def abs_(a: Tensor) -> Tensor:
    out = Tensor(np.abs(a.data))
    tape = _active_tape(a)
    if tape is not None:
        # subgradient at 0 is 0 (np.sign(0) == 0)
        tape.record("abs", (a,), out, lambda g: (g * np.sign(a.data),))
    return out


def sum_(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())
    tape = _active_tape(a)
    if tape is not None:
        tape.record("sum", (a,), out, lambda g: (g * np.ones_like(a.data),))
    return out


def mean_(a: Tensor) -> Tensor:
    n = a.data.size
    out = Tensor(a.data.mean())
    tape = _active_tape(a)
    if tape is not None:
        tape.record("mean", (a,), out, lambda g: (g * np.ones_like(a.data) / n,))
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y)
    tape = _active_tape(a)
    if tape is not None:
        tape.record("sigmoid", (a,), out, lambda g: (g * y * (1.0 - y),))
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)
    tape = _active_tape(a)
    if tape is not None:
        tape.record("tanh", (a,), out, lambda g: (g * (1.0 - y * y),))
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    if a.data.size == 0:
        raise ShapeMismatchError("softmax requires at least one element")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)
    tape = _active_tape(a)
    if tape is not None:
        def backward_fn(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            return (y * (g - dot),)
        tape.record("softmax", (a,), out, backward_fn)
    return out


# ---------------------------------------------------------------------------
# matrix / structural ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatchError(
            f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}"
        )
    out = Tensor(a.data @ b.data)
    tape = _active_tape(a, b)
    if tape is not None:
        def backward_fn(g):
            return g @ b.data.T, a.data.T @ g
        tape.record("matmul", (a, b), out, backward_fn)
    return out


def matvec(a: Tensor, v: Tensor) -> Tensor:
    if a.data.ndim != 2 or v.data.ndim != 1 or a.data.shape[1] != v.data.shape[0]:
        raise ShapeMismatchError(
            f"matvec: incompatible shapes {a.data.shape} x {v.data.shape}"
        )
    out = Tensor(a.data @ v.data)
    tape = _active_tape(a, v)
    if tape is not None:
        def backward_fn(g):
            return np.outer(g, v.data), a.data.T @ g
        tape.record("matvec", (a, v), out, backward_fn)
    return out


def outer(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeMismatchError(
            f"outer expects two vectors, got {a.data.shape} and {b.data.shape}"
        )
    out = Tensor(np.outer(a.data, b.data))
    tape = _active_tape(a, b)
    if tape is not None:
        def backward_fn(g):
            return g @ b.data, g.T @ a.data
        tape.record("outer", (a, b), out, backward_fn)
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    tape = _active_tape(*tensors)
    if tape is not None:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)
        def backward_fn(g):
            return tuple(
                np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
                for i in range(len(tensors))
            )
        tape.record("concat", tuple(tensors), out, backward_fn)
    return out


def stack_cols(columns) -> Tensor:
    """Stack 1-D tensors of equal length as the columns of a matrix."""
    columns = list(columns)
    for c in columns:
        if c.data.ndim != 1:
            raise ShapeMismatchError(f"stack_cols expects vectors, got {c.data.shape}")
    out = Tensor(np.stack([c.data for c in columns], axis=1))
    tape = _active_tape(*columns)
    if tape is not None:
        def backward_fn(g):
            return tuple(g[:, j] for j in range(len(columns)))
        tape.record("stack_cols", tuple(columns), out, backward_fn)
    return out


def col(a: Tensor, j: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"col expects a matrix, got {a.data.shape}")
    out = Tensor(a.data[:, j])
    tape = _active_tape(a)
    if tape is not None:
        def backward_fn(g):
            full = np.zeros_like(a.data)
            full[:, j] = g
            return (full,)
        tape.record("col", (a,), out, backward_fn)
    return out


def scale_rows(a: Tensor, v: Tensor) -> Tensor:
    """Multiply row i of ``a`` by ``v[i]``."""
    if a.data.ndim != 2 or v.data.ndim != 1 or a.data.shape[0] != v.data.shape[0]:
        raise ShapeMismatchError(
            f"scale_rows: incompatible shapes {a.data.shape} and {v.data.shape}"
        )
    out = Tensor(a.data * v.data[:, None])
    tape = _active_tape(a, v)
    if tape is not None:
        def backward_fn(g):
            return g * v.data[:, None], (g * a.data).sum(axis=1)
        tape.record("scale_rows", (a, v), out, backward_fn)
    return out


def mul_rowvec(a: Tensor, v: Tensor) -> Tensor:
    """Multiply every row of ``a`` elementwise by the vector ``v``."""
    if a.data.ndim != 2 or v.data.ndim != 1 or a.data.shape[1] != v.data.shape[0]:
        raise ShapeMismatchError(
            f"mul_rowvec: incompatible shapes {a.data.shape} and {v.data.shape}"
        )
    out = Tensor(a.data * v.data[None, :])
    tape = _active_tape(a, v)
    if tape is not None:
        def backward_fn(g):
            return g * v.data[None, :], (g * a.data).sum(axis=0)
        tape.record("mul_rowvec", (a, v), out, backward_fn)
    return out


def add_rowvec(a: Tensor, v: Tensor) -> Tensor:
    """Add the vector ``v`` to every row of ``a``."""
    if a.data.ndim != 2 or v.data.ndim != 1 or a.data.shape[1] != v.data.shape[0]:
        raise ShapeMismatchError(
            f"add_rowvec: incompatible shapes {a.data.shape} and {v.data.shape}"
        )
    out = Tensor(a.data + v.data[None, :])
    tape = _active_tape(a, v)
    if tape is not None:
        def backward_fn(g):
            return g, g.sum(axis=0)
        tape.record("add_rowvec", (a, v), out, backward_fn)
    return out


def conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """Same-length 1-D cross-correlation with zero padding.

    ``x`` may be a vector or a matrix whose rows are convolved independently.
    The kernel length must be odd and no longer than the signal.
    """
    k = kernel.data
    if k.ndim != 1:
        raise ShapeMismatchError(f"conv1d kernel must be 1-D, got {k.shape}")
    ksize = k.shape[0]
    if ksize % 2 == 0:
        raise ConfigurationError(f"conv1d kernel size must be odd, got {ksize}")
    squeeze = x.data.ndim == 1
    xd = x.data[None, :] if squeeze else x.data
    if xd.ndim != 2:
        raise ShapeMismatchError(f"conv1d input must be 1-D or 2-D, got {x.data.shape}")
    length = xd.shape[1]
    if ksize > length:
        raise ConfigurationError(
            f"conv1d kernel size {ksize} exceeds signal length {length}"
        )
    half = ksize // 2
    padded = np.zeros((xd.shape[0], length + 2 * half))
    padded[:, half:half + length] = xd
    y = np.zeros_like(xd)
    for j in range(ksize):
        y += k[j] * padded[:, j:j + length]
    out = Tensor(y[0] if squeeze else y)
    tape = _active_tape(x, kernel)
    if tape is not None:
        def backward_fn(g):
            gd = g[None, :] if squeeze else g
            gpad = np.zeros((gd.shape[0], length + 2 * half))
            gpad[:, half:half + length] = gd
            gx = np.zeros_like(xd)
            gk = np.zeros_like(k)
            for j in range(ksize):
                # y[:, i] depends on x[:, i + j - half]
                gx += k[j] * gpad[:, 2 * half - j:2 * half - j + length]
                gk[j] = (gd * padded[:, j:j + length]).sum()
            return gx[0] if squeeze else gx, gk
        tape.record("conv1d", (x, kernel), out, backward_fn)
    return out


def assert_finite(t: Tensor, what: str = "tensor"):
    if not np.isfinite(t.data).all():
        raise ContractError(f"{what} contains non-finite values")
