"""Minimal reverse-mode automatic differentiation on dense 2-D arrays.

A Tape records primitive operations as they execute; ``backward`` replays
the adjoint rules in exact reverse order and accumulates gradients into
every tensor that requires them.  One tape lives for one optimization step
and is cleared afterwards.  Everything is float64; sparse constraint
matrices participate as constants of sparse-dense products (no gradient
w.r.t. the matrix itself).

Also home to the Adam optimizer state and the flat binary checkpoint
format (JSON header describing the parameter census, then raw
little-endian float64 buffers).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, TrainingError

LN_EPS = 1e-5


class Tensor:
    """A 2-D float64 array plus an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        a = np.asarray(data, dtype=np.float64)
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if a.ndim != 2:
            raise DimensionError(f"tensors are 2-D, got shape {a.shape}")
        self.data = a
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError("item() requires a 1x1 tensor")
        return float(self.data[0, 0])

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}{self.data.shape}, grad={'yes' if self.requires_grad else 'no'}"


def parameter(data, name: str) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def constant(data) -> Tensor:
    return Tensor(data)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy()
    else:
        np.add(t.grad, g, out=t.grad)


class Tape:
    """Ordered record of primitive ops with saved intermediates.

    Each entry is ``(output, adjoint_fn)``; the adjoint reads the output's
    accumulated gradient and pushes contributions to the operands.
    """

    def __init__(self):
        self._ops: list[tuple[Tensor, object]] = []

    def __len__(self):
        return len(self._ops)

    def clear(self):
        self._ops.clear()

    def _emit(self, out: Tensor, adjoint) -> Tensor:
        if out.requires_grad:
            self._ops.append((out, adjoint))
        return out

    # -- primitives ------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul {a.shape} x {b.shape}")
        out = Tensor(a.data @ b.data, a.requires_grad or b.requires_grad)

        def adjoint(g):
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)

        return self._emit(out, adjoint)

    def matmul_tn(self, a: Tensor, b: Tensor) -> Tensor:
        """Transposed matmul ``a.T @ b``."""
        if a.shape[0] != b.shape[0]:
            raise DimensionError(f"matmul_tn {a.shape} x {b.shape}")
        out = Tensor(a.data.T @ b.data, a.requires_grad or b.requires_grad)

        def adjoint(g):
            _accum(a, b.data @ g.T)
            _accum(b, a.data @ g)

        return self._emit(out, adjoint)

    def spmm(self, s, b: Tensor) -> Tensor:
        """Sparse-dense product ``s @ b`` with a constant CSR/CSC matrix."""
        if s.shape[1] != b.shape[0]:
            raise DimensionError(f"spmm {s.shape} x {b.shape}")
        out = Tensor(s @ b.data, b.requires_grad)
        st = s.T

        def adjoint(g):
            _accum(b, st @ g)

        return self._emit(out, adjoint)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise add; ``b`` may be a 1-row bias broadcast over rows."""
        bias = b.shape != a.shape
        if bias and not (b.shape == (1, a.shape[1])):
            raise DimensionError(f"add {a.shape} + {b.shape}")
        out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad)

        def adjoint(g):
            _accum(a, g)
            _accum(b, g.sum(axis=0, keepdims=True) if bias else g)

        return self._emit(out, adjoint)

    def scalar_mul(self, a: Tensor, s: float) -> Tensor:
        s = float(s)
        out = Tensor(a.data * s, a.requires_grad)

        def adjoint(g):
            _accum(a, g * s)

        return self._emit(out, adjoint)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise DimensionError(f"mul {a.shape} * {b.shape}")
        out = Tensor(a.data * b.data, a.requires_grad or b.requires_grad)

        def adjoint(g):
            _accum(a, g * b.data)
            _accum(b, g * a.data)

        return self._emit(out, adjoint)

    def tanh(self, a: Tensor) -> Tensor:
        y = np.tanh(a.data)
        out = Tensor(y, a.requires_grad)

        def adjoint(g):
            _accum(a, g * (1.0 - y * y))

        return self._emit(out, adjoint)

    def sigmoid(self, a: Tensor) -> Tensor:
        y = 1.0 / (1.0 + np.exp(-a.data))
        out = Tensor(y, a.requires_grad)

        def adjoint(g):
            _accum(a, g * y * (1.0 - y))

        return self._emit(out, adjoint)

    def log(self, a: Tensor) -> Tensor:
        if np.any(a.data <= 0):
            raise ContractError("log requires strictly positive inputs")
        out = Tensor(np.log(a.data), a.requires_grad)

        def adjoint(g):
            _accum(a, g / a.data)

        return self._emit(out, adjoint)

    def clamp(self, a: Tensor, lo: float, hi: float) -> Tensor:
        y = np.clip(a.data, lo, hi)
        out = Tensor(y, a.requires_grad)
        inside = (a.data > lo) & (a.data < hi)

        def adjoint(g):
            _accum(a, g * inside)

        return self._emit(out, adjoint)

    def clamp_pass(self, a: Tensor, lo: float, hi: float) -> Tensor:
        """Clamp with a pass-through adjoint.

        The forward value is clipped but gradients flow as if the clamp were
        the identity, so saturated entries can still be pulled back inside.
        """
        out = Tensor(np.clip(a.data, lo, hi), a.requires_grad)

        def adjoint(g):
            _accum(a, g)

        return self._emit(out, adjoint)

    def layer_norm(self, a: Tensor) -> Tensor:
        """Row-wise normalization (zero mean, unit variance, no affine)."""
        mu = a.data.mean(axis=1, keepdims=True)
        var = a.data.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + LN_EPS)
        y = (a.data - mu) * inv
        out = Tensor(y, a.requires_grad)

        def adjoint(g):
            gy_mean = g.mean(axis=1, keepdims=True)
            gyy_mean = (g * y).mean(axis=1, keepdims=True)
            _accum(a, inv * (g - gy_mean - y * gyy_mean))

        return self._emit(out, adjoint)

    def mean_pool_rows(self, a: Tensor) -> Tensor:
        n = a.shape[0]
        out = Tensor(a.data.mean(axis=0, keepdims=True), a.requires_grad)

        def adjoint(g):
            _accum(a, np.repeat(g / n, n, axis=0))

        return self._emit(out, adjoint)

    def sum(self, a: Tensor) -> Tensor:
        out = Tensor(np.array([[a.data.sum()]]), a.requires_grad)

        def adjoint(g):
            _accum(a, np.full(a.shape, g[0, 0]))

        return self._emit(out, adjoint)

    # -- compositions ----------------------------------------------------

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        return self.add(a, self.scalar_mul(b, -1.0))

    def square(self, a: Tensor) -> Tensor:
        return self.mul(a, a)

    def affine(self, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
        return self.add(self.matmul(x, w), b)


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate gradients of every requires_grad tensor reachable from ``loss``."""
    if loss.data.shape != (1, 1):
        raise ContractError(f"loss must be 1x1, got {loss.data.shape}")
    if not loss.requires_grad:
        return
    loss.grad = np.ones((1, 1))
    for out, adjoint in reversed(tape._ops):
        if out.grad is not None:
            adjoint(out.grad)


def zero_grads(params) -> None:
    for p in (params.values() if isinstance(params, dict) else params):
        p.grad = None


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = 0.0
    grads = [p.grad for p in params.values() if p.grad is not None]
    for g in grads:
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


@dataclass
class AdamState:
    """Adam optimizer buffers for a named parameter set."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, Tensor]) -> None:
    """One Adam update with bias correction; missing gradients count as zero."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = p.grad
        if g is not None and not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        if g is None:
            m *= b1
            v *= b2
        else:
            if g.shape != p.data.shape:
                raise DimensionError(f"gradient shape {g.shape} vs param {p.data.shape}")
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
        p.data -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


# -- checkpoints ---------------------------------------------------------


def save_checkpoint(path, params: dict[str, Tensor], meta: dict | None = None) -> None:
    """JSON census header on the first line, then little-endian float64 blobs."""
    header = {
        "meta": meta or {},
        "params": [{"name": k, "shape": list(v.data.shape)} for k, v in params.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for v in params.values():
            fh.write(np.ascontiguousarray(v.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        arrays = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ContractError(f"checkpoint truncated at parameter {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ContractError("trailing bytes after declared parameters")
    return header.get("meta", {}), arrays
