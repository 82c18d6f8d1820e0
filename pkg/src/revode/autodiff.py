"""Reverse-mode automatic differentiation on an explicit tape.

Nodes are appended in creation order, which is already a topological order
(every parent index is smaller than its child's), so the backward sweep is
a single reversed loop over the node list.  Values are float64 numpy
arrays.  Elementwise ops require exactly matching shapes -- the only
broadcasting allowed anywhere is scalar-times-tensor / scalar-plus-tensor,
which keeps silent shape bugs out of the gradient path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonFiniteGradientError, ShapeError


class Node:
    __slots__ = ("op", "value", "parents", "bwd", "name")

    def __init__(self, op, value, parents, bwd, name=None):
        self.op = op
        self.value = value
        self.parents = parents
        self.bwd = bwd  # callable(out_grad) -> tuple of parent grads
        self.name = name


class Tensor:
    """Lightweight handle: a tape plus an index into it."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.idx].value

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return smul(self, float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return smul(self, -1.0)

    def __getitem__(self, key):
        return take(self, key)


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []

    def _record(self, op, value, parents, bwd, name=None) -> Tensor:
        value = np.asarray(value, dtype=np.float64)
        for p in parents:
            assert p < len(self.nodes)
        self.nodes.append(Node(op, value, parents, bwd, name))
        return Tensor(self, len(self.nodes) - 1)

    def leaf(self, value, name: str) -> Tensor:
        """A named parameter; backward() reports gradients for these."""
        return self._record("leaf", value, (), None, name=name)

    def const(self, value) -> Tensor:
        """A constant input; participates in forward, gets no gradient."""
        return self._record("const", value, (), None)

    def __len__(self):
        return len(self.nodes)


def _lift(tape: Tape, x) -> Tensor:
    if isinstance(x, Tensor):
        if x.tape is not tape:
            raise ShapeError("operands belong to different tapes")
        return x
    return tape.const(x)


def _same_shape(op, a, b):
    if a.value.shape != b.value.shape:
        raise ShapeError(
            f"{op}: operand shapes {a.value.shape} and {b.value.shape} differ "
            "(only scalar broadcast is supported; see smul/sadd)"
        )


# ----------------------------------------------------------- primitives

def add(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        return sadd(a, float(b))
    b = _lift(a.tape, b)
    _same_shape("add", a, b)
    return a.tape._record(
        "add", a.value + b.value, (a.idx, b.idx), lambda g: (g, g)
    )


def sub(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        return sadd(a, -float(b))
    b = _lift(a.tape, b)
    _same_shape("sub", a, b)
    return a.tape._record(
        "sub", a.value - b.value, (a.idx, b.idx), lambda g: (g, -g)
    )


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        return smul(a, float(b))
    b = _lift(a.tape, b)
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return a.tape._record(
        "mul", av * bv, (a.idx, b.idx), lambda g: (g * bv, g * av)
    )


def smul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return a.tape._record("smul", a.value * c, (a.idx,), lambda g: (g * c,))


def sadd(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return a.tape._record("sadd", a.value + c, (a.idx,), lambda g: (g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    b = _lift(a.tape, b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2:
        raise ShapeError(f"matmul requires 2-D operands, got {av.shape} @ {bv.shape}")
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {av.shape} @ {bv.shape}")
    return a.tape._record(
        "matmul",
        av @ bv,
        (a.idx, b.idx),
        lambda g: (g @ bv.T, av.T @ g),
    )


def tsum(a: Tensor) -> Tensor:
    shape = a.value.shape
    return a.tape._record(
        "sum", np.sum(a.value), (a.idx,), lambda g: (np.full(shape, float(g)),)
    )


def tmean(a: Tensor) -> Tensor:
    shape = a.value.shape
    n = a.value.size
    return a.tape._record(
        "mean", np.mean(a.value), (a.idx,), lambda g: (np.full(shape, float(g) / n),)
    )


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat of zero tensors")
    tape = tensors[0].tape
    tensors = [_lift(tape, t) for t in tensors]
    values = [t.value for t in tensors]
    nd = values[0].ndim
    for v in values[1:]:
        if v.ndim != nd:
            raise ShapeError("concat operands must share rank")
    out = np.concatenate(values, axis=axis)
    sizes = [v.shape[axis] for v in values]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return tape._record("concat", out, tuple(t.idx for t in tensors), bwd)


def take(a: Tensor, key) -> Tensor:
    """Basic (non-fancy) slicing; gradients scatter back additively."""
    shape = a.value.shape
    out = a.value[key]

    def bwd(g):
        buf = np.zeros(shape, dtype=np.float64)
        buf[key] = g
        return (buf,)

    return a.tape._record("slice", out, (a.idx,), bwd)


def transpose(a: Tensor) -> Tensor:
    if a.value.ndim != 2:
        raise ShapeError(f"transpose requires a 2-D operand, got {a.value.shape}")
    return a.tape._record("transpose", a.value.T.copy(), (a.idx,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.value.shape
    return a.tape._record(
        "reshape", a.value.reshape(shape), (a.idx,), lambda g: (g.reshape(old),)
    )


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return a.tape._record("tanh", out, (a.idx,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.value, 0.0)
    mask = (a.value > 0.0).astype(np.float64)
    return a.tape._record("relu", out, (a.idx,), lambda g: (g * mask,))


def tsin(a: Tensor) -> Tensor:
    av = a.value
    return a.tape._record("sin", np.sin(av), (a.idx,), lambda g: (g * np.cos(av),))


def tcos(a: Tensor) -> Tensor:
    av = a.value
    return a.tape._record("cos", np.cos(av), (a.idx,), lambda g: (-g * np.sin(av),))


def texp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return a.tape._record("exp", out, (a.idx,), lambda g: (g * out,))


def square(a: Tensor) -> Tensor:
    av = a.value
    return a.tape._record("square", av * av, (a.idx,), lambda g: (2.0 * g * av,))


def l2_norm_sq(a: Tensor) -> Tensor:
    av = a.value
    return a.tape._record(
        "l2_norm_sq", np.sum(av * av), (a.idx,), lambda g: (2.0 * float(g) * av,)
    )


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    av = a.value
    shifted = av - np.max(av, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def bwd(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - dot),)

    return a.tape._record("softmax", out, (a.idx,), bwd)


# ------------------------------------------------------------- backward

def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    """Accumulate d(loss)/d(leaf) for every named leaf; loss must be scalar."""
    if loss.tape is not tape:
        raise ShapeError("loss does not belong to this tape")
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    grads[loss.idx] = np.ones_like(loss.value)
    for idx in range(loss.idx, -1, -1):
        g = grads[idx]
        if g is None:
            continue
        node = tape.nodes[idx]
        if node.bwd is None:
            continue
        parent_grads = node.bwd(g)
        for pidx, pg in zip(node.parents, parent_grads):
            if grads[pidx] is None:
                grads[pidx] = np.asarray(pg, dtype=np.float64).copy()
            else:
                grads[pidx] = grads[pidx] + pg
    out: dict[str, np.ndarray] = {}
    for idx, node in enumerate(tape.nodes):
        if node.op == "leaf" and node.name is not None and grads[idx] is not None:
            out[node.name] = grads[idx]
    return out


def check_finite_grads(grads: dict[str, np.ndarray]):
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"gradient for {name!r} is not finite")


# ----------------------------------------------------------- grad check

@dataclass
class GradCheckReport:
    max_rel_err: float
    per_param: dict
    passed: bool
    tol: float


def grad_check(
    f: Callable[[Tape, dict[str, Tensor]], Tensor],
    params: dict[str, np.ndarray],
    h: float = 1e-5,
    tol: float = 1e-5,
) -> GradCheckReport:
    """Compare reverse-mode gradients of f against central differences.

    f receives a fresh tape and a dict of named leaf Tensors and must
    return a scalar loss Tensor.  The relative error denominator is
    floored so that near-zero gradients are compared absolutely.
    """
    params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    def run(vals: dict[str, np.ndarray]) -> float:
        tape = Tape()
        leaves = {k: tape.leaf(v, k) for k, v in vals.items()}
        return float(f(tape, leaves).value)

    tape = Tape()
    leaves = {k: tape.leaf(v, k) for k, v in params.items()}
    loss = f(tape, leaves)
    ad_grads = backward(tape, loss)

    per_param = {}
    max_rel = 0.0
    for name, base in params.items():
        ad = ad_grads.get(name, np.zeros_like(base))
        fd = np.zeros_like(base)
        flat = base.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = run(params)
            flat[i] = orig - h
            f_minus = run(params)
            flat[i] = orig
            fd_flat[i] = (f_plus - f_minus) / (2.0 * h)
        denom = np.maximum(np.maximum(np.abs(ad), np.abs(fd)), 1e-3)
        rel = float(np.max(np.abs(ad - fd) / denom)) if base.size else 0.0
        per_param[name] = rel
        max_rel = max(max_rel, rel)
    return GradCheckReport(max_rel_err=max_rel, per_param=per_param, passed=max_rel < tol, tol=tol)
