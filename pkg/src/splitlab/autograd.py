"""Dense 2-D tensors with reverse-mode differentiation on a re-entrant tape.

Every tensor is a rows x cols float64 matrix. Operations record nodes on a
``Tape`` whenever at least one input is attached to it. A backward pass walks
the tape in reverse; with ``create_graph=True`` the backward computations are
themselves recorded, so the returned gradients are ordinary taped tensors and
a second backward yields second-order derivatives. This is what lets a loss
contain "the gradient of another loss" as a differentiable sub-expression.

Conventions:
  - all arithmetic is float64; results must be finite (NaN/Inf raises),
  - relu is given a zero second derivative everywhere (subgradient 0 at 0),
  - a tape and its tensors belong to one logical thread.
"""

from __future__ import annotations

import contextlib
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "AutogradError",
    "Tensor",
    "Tape",
    "constant",
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "smul",
    "mulc",
    "tile_rows",
    "sum_rows",
    "sum_all",
    "spread",
    "relu",
    "tanh",
    "activation",
    "add_bias",
    "mse",
    "select_column",
    "backward",
    "ACTIVATIONS",
]

ACTIVATIONS = ("relu", "tanh", "identity")


class AutogradError(ValueError):
    """Shape mismatch, non-finite result, or a tensor used off its tape."""


def _as_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise AutogradError(f"expected a 2-D array, got shape {arr.shape}")
    return arr


def _require_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise AutogradError(f"non-finite values produced by '{op}'")


class Tensor:
    """A 2-D float64 matrix, optionally attached to a tape node."""

    __slots__ = ("data", "tape", "node")

    def __init__(self, data, tape: "Tape | None" = None, node: int | None = None):
        self.data = _as_matrix(data)
        self.tape = tape
        self.node = node

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise AutogradError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def detach(self) -> "Tensor":
        """A constant view of the same values, off any tape."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = "" if self.node is None else f", node={self.node}"
        return f"Tensor(shape={self.shape}{tag})"


def constant(data) -> Tensor:
    """Wrap an array as an untaped constant."""
    arr = _as_matrix(data)
    _require_finite(arr, "constant")
    return Tensor(arr)


class _Node:
    __slots__ = ("op", "inputs", "values", "out", "aux")

    def __init__(self, op, inputs, values, out, aux):
        self.op = op
        self.inputs = inputs  # node ids; None marks a constant input
        self.values = values  # cached input arrays (for the backward rules)
        self.out = out
        self.aux = aux


class Tape:
    """Ordered record of primitive operations; inputs always precede users."""

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self._recording = True

    def __len__(self) -> int:
        return len(self.nodes)

    @contextlib.contextmanager
    def paused(self) -> Iterator[None]:
        """Suspend recording; values are still computed identically."""
        prev = self._recording
        self._recording = False
        try:
            yield
        finally:
            self._recording = prev

    def leaf(self, data) -> Tensor:
        """Register an input variable; gradients can be requested for it."""
        arr = _as_matrix(data).copy()
        _require_finite(arr, "leaf")
        self.nodes.append(_Node("leaf", (), (), arr, None))
        return Tensor(arr, self, len(self.nodes) - 1)


def _recording_tape(inputs: tuple[Tensor, ...]) -> Tape | None:
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise AutogradError("operation inputs live on different tapes")
    if tape is not None and tape._recording:
        return tape
    return None


def _emit(op: str, inputs: tuple[Tensor, ...], out: np.ndarray, aux=None) -> Tensor:
    _require_finite(out, op)
    tape = _recording_tape(inputs)
    if tape is None:
        return Tensor(out)
    node = _Node(op, tuple(t.node for t in inputs), tuple(t.data for t in inputs), out, aux)
    tape.nodes.append(node)
    return Tensor(out, tape, len(tape.nodes) - 1)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


# ---------------------------------------------------------------- primitives

def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.cols != b.rows:
        raise AutogradError(f"matmul dims {a.shape} x {b.shape}")
    return _emit("matmul", (a, b), a.data @ b.data)


def transpose(a) -> Tensor:
    a = _t(a)
    return _emit("transpose", (a,), a.data.T.copy())


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise AutogradError(f"add shapes {a.shape} vs {b.shape}")
    return _emit("add", (a, b), a.data + b.data)


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise AutogradError(f"sub shapes {a.shape} vs {b.shape}")
    return _emit("sub", (a, b), a.data - b.data)


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise AutogradError(f"mul shapes {a.shape} vs {b.shape}")
    return _emit("mul", (a, b), a.data * b.data)


def smul(a, c: float) -> Tensor:
    a = _t(a)
    c = float(c)
    return _emit("smul", (a,), a.data * c, aux=c)


def mulc(a, m) -> Tensor:
    """Elementwise multiply by a constant array (no gradient through ``m``)."""
    a = _t(a)
    m = _as_matrix(m)
    if a.shape != m.shape:
        raise AutogradError(f"mulc shapes {a.shape} vs {m.shape}")
    return _emit("mulc", (a,), a.data * m, aux=m)


def tile_rows(b, n: int) -> Tensor:
    b = _t(b)
    if b.rows != 1:
        raise AutogradError(f"tile_rows needs a 1 x m tensor, got {b.shape}")
    return _emit("tile_rows", (b,), np.repeat(b.data, n, axis=0), aux=n)


def sum_rows(x) -> Tensor:
    x = _t(x)
    return _emit("sum_rows", (x,), x.data.sum(axis=0, keepdims=True))


def sum_all(x) -> Tensor:
    x = _t(x)
    return _emit("sum_all", (x,), np.array([[x.data.sum()]]))


def spread(s, rows: int, cols: int) -> Tensor:
    s = _t(s)
    if s.shape != (1, 1):
        raise AutogradError(f"spread needs a 1x1 tensor, got {s.shape}")
    return _emit("spread", (s,), np.full((rows, cols), s.data[0, 0]), aux=(rows, cols))


def relu(x) -> Tensor:
    x = _t(x)
    return _emit("relu", (x,), np.maximum(x.data, 0.0))


def tanh(x) -> Tensor:
    x = _t(x)
    return _emit("tanh", (x,), np.tanh(x.data))


# ---------------------------------------------------------------- composites

def activation(x, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "identity":
        return _t(x)
    raise AutogradError(f"unknown activation '{kind}' (expected one of {ACTIVATIONS})")


def add_bias(x, b) -> Tensor:
    """Row-broadcast addition of a 1 x cols bias."""
    x, b = _t(x), _t(b)
    if b.shape != (1, x.cols):
        raise AutogradError(f"bias shape {b.shape} does not broadcast over {x.shape}")
    return add(x, tile_rows(b, x.rows))


def mse(pred, target) -> Tensor:
    """Mean over all entries of the squared difference; 1x1 result."""
    pred, target = _t(pred), _t(target)
    if pred.shape != target.shape:
        raise AutogradError(f"mse shapes {pred.shape} vs {target.shape}")
    d = sub(pred, target)
    return smul(sum_all(mul(d, d)), 1.0 / (pred.rows * pred.cols))


def select_column(x, j: int) -> Tensor:
    """Column j as a rows x 1 tensor (differentiable slice)."""
    x = _t(x)
    if not 0 <= j < x.cols:
        raise AutogradError(f"column {j} out of range for {x.shape}")
    picker = np.zeros((x.cols, 1))
    picker[j, 0] = 1.0
    return matmul(x, picker)


# ------------------------------------------------------------------ backward

def _input_handle(node: _Node, i: int, tape: Tape) -> Tensor:
    nid = node.inputs[i]
    if nid is None:
        return Tensor(node.values[i])
    return Tensor(node.values[i], tape, nid)


def _vjp(node: _Node, nid: int, g: Tensor, tape: Tape) -> list[tuple[int | None, Tensor]]:
    """Adjoint contributions (input node id, gradient) for one node.

    Contributions are built from the public primitives so that, while the
    tape is recording, they are differentiable in their own right.
    """
    op = node.op
    if op == "matmul":
        a = _input_handle(node, 0, tape)
        b = _input_handle(node, 1, tape)
        return [
            (node.inputs[0], matmul(g, transpose(b))),
            (node.inputs[1], matmul(transpose(a), g)),
        ]
    if op == "transpose":
        return [(node.inputs[0], transpose(g))]
    if op == "add":
        return [(node.inputs[0], g), (node.inputs[1], g)]
    if op == "sub":
        return [(node.inputs[0], g), (node.inputs[1], smul(g, -1.0))]
    if op == "mul":
        a = _input_handle(node, 0, tape)
        b = _input_handle(node, 1, tape)
        return [(node.inputs[0], mul(g, b)), (node.inputs[1], mul(g, a))]
    if op == "smul":
        return [(node.inputs[0], smul(g, node.aux))]
    if op == "mulc":
        return [(node.inputs[0], mulc(g, node.aux))]
    if op == "tile_rows":
        return [(node.inputs[0], sum_rows(g))]
    if op == "sum_rows":
        return [(node.inputs[0], tile_rows(g, node.values[0].shape[0]))]
    if op == "sum_all":
        r, c = node.values[0].shape
        return [(node.inputs[0], spread(g, r, c))]
    if op == "spread":
        return [(node.inputs[0], sum_all(g))]
    if op == "relu":
        mask = (node.values[0] > 0.0).astype(np.float64)
        return [(node.inputs[0], mulc(g, mask))]
    if op == "tanh":
        # d tanh = 1 - tanh^2; route through the node's own taped output so
        # second-order terms survive.
        t = Tensor(node.out, tape, nid)
        return [(node.inputs[0], mul(g, sub(constant(np.ones_like(node.out)), mul(t, t))))]
    raise AutogradError(f"no backward rule for op '{op}'")


def backward(loss: Tensor, wrt: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Gradients of a scalar loss w.r.t. the requested taped tensors.

    With ``create_graph=True`` the returned gradients stay on the tape, so a
    further ``backward`` over an expression of them yields second-order
    derivatives. With ``create_graph=False`` the same arithmetic runs with
    recording suspended; first-order values are bit-identical either way.
    """
    if loss.tape is None or loss.node is None:
        raise AutogradError("loss is not attached to a tape")
    if loss.shape != (1, 1):
        raise AutogradError(f"loss must be scalar (1x1), got {loss.shape}")
    tape = loss.tape
    for w in wrt:
        if w.tape is not tape or w.node is None:
            raise AutogradError("a requested tensor does not live on the loss tape")

    want: dict[int, Tensor | None] = {w.node: None for w in wrt}
    adjoint: dict[int, Tensor] = {loss.node: constant(np.ones((1, 1)))}

    ctx = contextlib.nullcontext() if create_graph else tape.paused()
    with ctx:
        for nid in range(loss.node, -1, -1):
            g = adjoint.pop(nid, None)
            if g is None:
                continue
            if nid in want:
                want[nid] = g
            node = tape.nodes[nid]
            if node.op == "leaf":
                continue
            for input_id, contrib in _vjp(node, nid, g, tape):
                if input_id is None:
                    continue
                seen = adjoint.get(input_id)
                adjoint[input_id] = contrib if seen is None else add(seen, contrib)

    out = []
    for w in wrt:
        g = want[w.node]
        out.append(constant(np.zeros(w.shape)) if g is None else g)
    return out
