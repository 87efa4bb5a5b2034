"""Reverse-mode differentiation on dense float64 tensors.

A `Tape` records every operation applied while it is active; `Tape.backward`
replays the records in reverse and accumulates exact gradients into the
trainable leaves. Design points:

- float64 everywhere; gradient checking at desk scale needs the headroom.
- A tape can be consumed by backward() exactly once; a second call raises
  instead of silently accumulating, so the multi-task loop cannot
  double-count a batch.
- Every forward op validates that its output is finite. Overflow is an
  error, never a silent Inf.
- Recurrent cells and the sharing combiners are recorded as single fused
  nodes with hand-written backward rules; all rules are covered by the
  finite-difference suite in the tests.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError, LabelError, NumericsError

__all__ = [
    "Tensor", "Tape", "parameter", "constant",
    "matmul", "add", "mul", "tanh", "sigmoid", "elementwise",
    "concat", "transpose", "take_rows", "take_columns",
    "affine", "mul_scalar", "add_n", "sum_all", "frobenius_sq",
    "softmax", "softmax_cross_entropy", "softmax_xent_sum",
    "weighted_sum", "linear_mix", "lstm_step", "lstm_sequence",
    "subspace_ortho", "sgd_step",
]


class Tensor:
    """Dense float64 array, optionally a trainable leaf or a recorded node output."""

    __slots__ = ("data", "grad", "node", "is_param", "name")

    def __init__(self, data, is_param: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional["Node"] = None
        self.is_param = is_param
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the stored values."""
        return self.data.reshape(-1)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" param={self.name!r}" if self.is_param else ""
        return f"Tensor(shape={self.data.shape}{tag})"


class Node:
    """One recorded operation: inputs, outputs, and a backward closure."""

    __slots__ = ("op", "inputs", "outputs", "bwd")

    def __init__(self, op: str, inputs, outputs, bwd: Callable):
        self.op = op
        self.inputs = inputs
        self.outputs = outputs
        self.bwd = bwd


_ACTIVE = threading.local()


def _tape_stack():
    if not hasattr(_ACTIVE, "stack"):
        _ACTIVE.stack = []
    return _ACTIVE.stack


def _current_tape() -> "Tape":
    stack = _tape_stack()
    if not stack:
        raise ContractError("no active Tape; wrap forward computation in `with Tape():`")
    return stack[-1]


class Tape:
    """Append-only record of operations, in topological (construction) order.

    Single-threaded per tape; independent tapes may run in parallel threads,
    each thread sees its own active-tape stack.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.parameters: set[Tensor] = set()
        self._consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def _record(self, node: Node):
        self.nodes.append(node)
        for t in node.inputs:
            if t.is_param:
                self.parameters.add(t)

    def backward(self, loss: Tensor) -> None:
        """Populate .grad on every parameter reachable from `loss`.

        Visits nodes in reverse recorded order. Grad buffers of intermediate
        tensors are freed as soon as their producing node has run.
        """
        if self._consumed:
            raise ContractError("tape already consumed by backward(); build a new tape")
        if loss.data.ndim != 0:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.data.shape}")
        if loss.node is None:
            raise ContractError("loss is not a recorded result on this tape")
        self._consumed = True
        loss.grad = np.ones((), dtype=np.float64)
        for node in reversed(self.nodes):
            out_grads = [o.grad for o in node.outputs]
            if all(g is None for g in out_grads):
                continue
            in_grads = node.bwd(out_grads)
            for t, g in zip(node.inputs, in_grads):
                if g is None:
                    continue
                if not t.is_param and t.node is None:
                    continue  # constant leaf
                if t.grad is None:
                    t.grad = np.array(g, dtype=np.float64)  # copy: closure may hand out views
                else:
                    t.grad += g
            for o in node.outputs:
                if not o.is_param:
                    o.grad = None


def parameter(data, name: str = "") -> Tensor:
    """Trainable leaf; persists across tapes and receives gradients."""
    return Tensor(data, is_param=True, name=name)


def constant(data) -> Tensor:
    """Non-trainable leaf; never receives a gradient."""
    return Tensor(data)


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values produced by op '{op}'")


def _emit(op: str, inputs: Sequence[Tensor], out_data, bwd: Callable) -> Tensor:
    """Record a single-output node and return its output tensor."""
    _check_finite(out_data, op)
    out = Tensor(out_data)
    node = Node(op, tuple(inputs), (out,), bwd)
    out.node = node
    _current_tape()._record(node)
    return out


def _emit_multi(op: str, inputs: Sequence[Tensor], out_arrays, bwd: Callable):
    outs = []
    for arr in out_arrays:
        _check_finite(arr, op)
        outs.append(Tensor(arr))
    node = Node(op, tuple(inputs), tuple(outs), bwd)
    for o in outs:
        o.node = node
    _current_tape()._record(node)
    return outs


# ---------------------------------------------------------------------------
# basic ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul shapes incompatible: {a.data.shape} x {b.data.shape}")
    out = a.data @ b.data

    def bwd(gs):
        g = gs[0]
        return (g @ b.data.T, a.data.T @ g)

    return _emit("matmul", (a, b), out, bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add shapes differ: {a.data.shape} vs {b.data.shape}")
    return _emit("add", (a, b), a.data + b.data, lambda gs: (gs[0], gs[0]))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"mul shapes differ: {a.data.shape} vs {b.data.shape}")
    out = a.data * b.data
    return _emit("mul", (a, b), out, lambda gs: (gs[0] * b.data, gs[0] * a.data))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _emit("tanh", (x,), t, lambda gs: (gs[0] * (1.0 - t * t),))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid_np(x.data)
    return _emit("sigmoid", (x,), s, lambda gs: (gs[0] * s * (1.0 - s),))


def _sigmoid_np(z: np.ndarray) -> np.ndarray:
    # exp may overflow to inf for very negative z; 1/(1+inf) = 0 is the
    # correct saturated value, so the overflow warning is suppressed
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


_ELEMENTWISE = {}


def elementwise(op_kind: str, *args: Tensor) -> Tensor:
    """Dispatch by kind: add/mul take two same-shape operands, tanh/sigmoid one."""
    try:
        fn = _ELEMENTWISE[op_kind]
    except KeyError:
        raise ContractError(f"unknown elementwise kind {op_kind!r}") from None
    return fn(*args)


_ELEMENTWISE.update({"add": add, "mul": mul, "tanh": tanh, "sigmoid": sigmoid})


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("concat of zero tensors")
    shapes = [t.data.shape for t in tensors]
    ref = list(shapes[0])
    for sh in shapes[1:]:
        if len(sh) != len(ref) or any(sh[i] != ref[i] for i in range(len(ref)) if i != axis):
            raise DimensionError(f"concat shapes inconsistent off axis {axis}: {shapes}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    extents = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def bwd(gs):
        return tuple(np.split(gs[0], extents, axis=axis))

    return _emit("concat", tuple(tensors), out, bwd)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {x.data.shape}")
    return _emit("transpose", (x,), x.data.T.copy(), lambda gs: (gs[0].T,))


def take_rows(x: Tensor, idx) -> Tensor:
    """Gather rows; duplicate indices accumulate in the backward scatter."""
    idx = np.asarray(idx, dtype=np.intp)
    out = x.data[idx]

    def bwd(gs):
        dx = np.zeros_like(x.data)
        np.add.at(dx, idx, gs[0])
        return (dx,)

    return _emit("take_rows", (x,), out, bwd)


def take_columns(x: Tensor, idx) -> Tensor:
    """Select columns by (unique) index array."""
    idx = np.asarray(idx, dtype=np.intp)
    if len(np.unique(idx)) != len(idx):
        raise DimensionError("take_columns requires unique column indices")
    if x.data.ndim != 2:
        raise DimensionError(f"take_columns needs a matrix, got shape {x.data.shape}")
    out = x.data[:, idx]

    def bwd(gs):
        dx = np.zeros_like(x.data)
        dx[:, idx] = gs[0]
        return (dx,)

    return _emit("take_columns", (x,), out, bwd)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with the bias broadcast across rows."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise DimensionError(f"affine shapes incompatible: {x.data.shape} x {w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise DimensionError(f"affine bias shape {b.data.shape} != ({w.data.shape[1]},)")
    out = x.data @ w.data + b.data

    def bwd(gs):
        g = gs[0]
        return (g @ w.data.T, x.data.T @ g, g.sum(axis=0))

    return _emit("affine", (x, w, b), out, bwd)


def mul_scalar(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit("mul_scalar", (x,), x.data * c, lambda gs: (gs[0] * c,))


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise DimensionError("add_n of zero tensors")
    sh = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape != sh:
            raise DimensionError(f"add_n shapes differ: {sh} vs {t.data.shape}")
    out = tensors[0].data.copy()
    for t in tensors[1:]:
        out += t.data
    return _emit("add_n", tuple(tensors), out, lambda gs: tuple(gs[0] for _ in tensors))


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=np.float64)
    return _emit("sum_all", (x,), out, lambda gs: (np.broadcast_to(gs[0], x.data.shape),))


def frobenius_sq(m: Tensor) -> Tensor:
    """Sum of squared entries of a matrix; gradient is 2m."""
    if m.data.ndim != 2:
        raise DimensionError(f"frobenius_sq needs a matrix, got shape {m.data.shape}")
    out = np.asarray((m.data * m.data).sum(), dtype=np.float64)
    return _emit("frobenius_sq", (m,), out, lambda gs: (gs[0] * 2.0 * m.data,))


# ---------------------------------------------------------------------------
# softmax / cross-entropy
# ---------------------------------------------------------------------------

def softmax_np(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; also used by inference."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits: Tensor) -> Tensor:
    p = softmax_np(logits.data)

    def bwd(gs):
        g = gs[0]
        dot = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - dot),)

    return _emit("softmax", (logits,), p, bwd)


def softmax_cross_entropy(logits: Tensor, gold: int) -> Tensor:
    """-log softmax(logits)[gold] for a single class-score vector."""
    if logits.data.ndim != 1 or logits.data.shape[0] < 2:
        raise DimensionError(f"softmax_cross_entropy needs a vector of >=2 logits, got {logits.data.shape}")
    gold = int(gold)
    if not 0 <= gold < logits.data.shape[0]:
        raise LabelError(f"gold label {gold} out of range [0, {logits.data.shape[0]})")
    p = softmax_np(logits.data)
    out = np.asarray(-np.log(p[gold]), dtype=np.float64)

    def bwd(gs):
        d = p.copy()
        d[gold] -= 1.0
        return (gs[0] * d,)

    return _emit("softmax_cross_entropy", (logits,), out, bwd)


def softmax_xent_sum(logits: Tensor, golds) -> Tensor:
    """Sum over rows of -log softmax(row)[gold_row]; logits is [T x C]."""
    golds = np.asarray(golds, dtype=np.intp)
    if logits.data.ndim != 2:
        raise DimensionError(f"softmax_xent_sum needs [T x C] logits, got {logits.data.shape}")
    t, c = logits.data.shape
    if golds.shape != (t,):
        raise DimensionError(f"gold count {golds.shape} != row count {t}")
    if golds.size and (golds.min() < 0 or golds.max() >= c):
        raise LabelError(f"gold label out of range [0, {c})")
    p = softmax_np(logits.data)
    rows = np.arange(t)
    out = np.asarray(-np.log(p[rows, golds]).sum(), dtype=np.float64)

    def bwd(gs):
        d = p.copy()
        d[rows, golds] -= 1.0
        return (gs[0] * d,)

    return _emit("softmax_xent_sum", (logits,), out, bwd)


# ---------------------------------------------------------------------------
# fused ops for the sharing architecture
# ---------------------------------------------------------------------------

def weighted_sum(weights: Tensor, tensors: Sequence[Tensor]) -> Tensor:
    """sum_k weights[k] * tensors[k]; weights is a length-K vector."""
    k = len(tensors)
    if weights.data.shape != (k,):
        raise DimensionError(f"weight vector shape {weights.data.shape} != ({k},)")
    sh = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape != sh:
            raise DimensionError(f"weighted_sum operand shapes differ: {sh} vs {t.data.shape}")
    out = np.zeros(sh, dtype=np.float64)
    for i, t in enumerate(tensors):
        out += weights.data[i] * t.data

    def bwd(gs):
        g = gs[0]
        dw = np.array([(g * t.data).sum() for t in tensors])
        return (dw,) + tuple(weights.data[i] * g for i in range(k))

    return _emit("weighted_sum", (weights,) + tuple(tensors), out, bwd)


def linear_mix(matrix: Tensor, tensors: Sequence[Tensor]) -> list[Tensor]:
    """out_i = sum_j matrix[i, j] * tensors[j] over same-shape tensors.

    The cross-task combiner: one node producing len(tensors) outputs.
    """
    n = len(tensors)
    if matrix.data.shape != (n, n):
        raise DimensionError(f"mix matrix shape {matrix.data.shape} != ({n}, {n})")
    sh = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape != sh:
            raise DimensionError(f"linear_mix operand shapes differ: {sh} vs {t.data.shape}")
    m = matrix.data
    outs = []
    for i in range(n):
        acc = np.zeros(sh, dtype=np.float64)
        for j in range(n):
            acc += m[i, j] * tensors[j].data
        outs.append(acc)

    def bwd(gs):
        dm = np.zeros_like(m)
        dts = [None] * n
        for i, g in enumerate(gs):
            if g is None:
                continue
            for j in range(n):
                dm[i, j] = (g * tensors[j].data).sum()
                if dts[j] is None:
                    dts[j] = m[i, j] * g
                else:
                    dts[j] = dts[j] + m[i, j] * g
        return (dm,) + tuple(dts)

    return _emit_multi("linear_mix", (matrix,) + tuple(tensors), outs, bwd)


def _lstm_gates(z: np.ndarray, h_units: int):
    """Split a pre-activation row [.. x 4H] into activated gates i, f, o, g."""
    i = _sigmoid_np(z[..., :h_units])
    f = _sigmoid_np(z[..., h_units:2 * h_units])
    o = _sigmoid_np(z[..., 2 * h_units:3 * h_units])
    g = np.tanh(z[..., 3 * h_units:])
    return i, f, o, g


def lstm_step(x: Tensor, h: Tensor, c: Tensor, w: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step. x is [1 x d], h and c are [1 x H].

    w stacks input rows over hidden rows: [(d+H) x 4H], gate order i|f|o|g.
    """
    d = x.data.shape[1]
    hu = h.data.shape[1]
    if x.data.shape[0] != 1 or h.data.shape != (1, hu) or c.data.shape != (1, hu):
        raise DimensionError(f"lstm_step state shapes inconsistent: {x.data.shape} {h.data.shape} {c.data.shape}")
    if w.data.shape != (d + hu, 4 * hu) or b.data.shape != (4 * hu,):
        raise DimensionError(f"lstm_step weight shape {w.data.shape} incompatible with d={d}, H={hu}")
    xh = np.concatenate([x.data, h.data], axis=1)
    z = xh @ w.data + b.data
    i, f, o, g = _lstm_gates(z, hu)
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    def bwd(gs):
        dh = gs[0] if gs[0] is not None else np.zeros_like(h_new)
        dc_in = gs[1] if gs[1] is not None else np.zeros_like(c_new)
        do = dh * tc
        dc = dc_in + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c.data
        dc_prev = dc * f
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            do * o * (1.0 - o),
            dg * (1.0 - g * g),
        ], axis=1)
        dxh = dz @ w.data.T
        dw = xh.T @ dz
        return (dxh[:, :d], dxh[:, d:], dc_prev, dw, dz[0])

    return tuple(_emit_multi("lstm_step", (x, h, c, w, b), [h_new, c_new], bwd))


def lstm_sequence(xs: Tensor, w: Tensor, b: Tensor, reverse: bool = False) -> Tensor:
    """Run an LSTM over all rows of xs [T x d] from zero state; returns hs [T x H].

    One fused node: forward caches per-step activations, backward is plain
    BPTT over the whole sequence. With reverse=True the rows are processed
    last-to-first and outputs are returned in input order.
    """
    if xs.data.ndim != 2 or xs.data.shape[0] == 0:
        raise DimensionError(f"lstm_sequence needs a non-empty [T x d], got {xs.data.shape}")
    d = xs.data.shape[1]
    if w.data.ndim != 2 or w.data.shape[0] <= d or w.data.shape[1] % 4 != 0:
        raise DimensionError(f"lstm_sequence weight shape {w.data.shape} incompatible with input dim {d}")
    hu = w.data.shape[0] - d
    if w.data.shape[1] != 4 * hu or b.data.shape != (4 * hu,):
        raise DimensionError(f"lstm_sequence weight shape {w.data.shape} / bias {b.data.shape} inconsistent")
    t_len = xs.data.shape[0]
    order = list(range(t_len - 1, -1, -1) if reverse else range(t_len))

    x_seq = xs.data
    hs = np.zeros((t_len, hu))
    xh_all = np.zeros((t_len, d + hu))
    gates = np.zeros((t_len, 4 * hu))  # activated i|f|o|g per step
    cache_c = np.zeros((t_len, hu))
    cache_tc = np.zeros((t_len, hu))
    wd = w.data
    h = np.zeros(hu)
    c = np.zeros(hu)
    for t in order:
        xh = xh_all[t]
        xh[:d] = x_seq[t]
        xh[d:] = h
        z = xh @ wd + b.data
        z[:3 * hu] = _sigmoid_np(z[:3 * hu])
        z[3 * hu:] = np.tanh(z[3 * hu:])
        gates[t] = z
        c = z[hu:2 * hu] * c + z[:hu] * z[3 * hu:]
        tc = np.tanh(c)
        h = z[2 * hu:3 * hu] * tc
        hs[t] = h
        cache_c[t] = c
        cache_tc[t] = tc

    def bwd(gs):
        dhs = gs[0]
        dz_all = np.zeros((t_len, 4 * hu))
        wh_t = wd[d:].T
        dh_carry = np.zeros(hu)
        dc_carry = np.zeros(hu)
        zero_c = np.zeros(hu)
        for step, t in enumerate(reversed(order)):
            prev = order[len(order) - 2 - step] if step < len(order) - 1 else None
            c_prev = cache_c[prev] if prev is not None else zero_c
            z = gates[t]
            i, f, o, g = z[:hu], z[hu:2 * hu], z[2 * hu:3 * hu], z[3 * hu:]
            tc = cache_tc[t]
            dh = dhs[t] + dh_carry
            do = dh * tc
            dc = dc_carry + dh * o * (1.0 - tc * tc)
            dz = dz_all[t]
            dz[:hu] = dc * g
            dz[hu:2 * hu] = dc * c_prev
            dz[2 * hu:3 * hu] = do
            dz[:3 * hu] *= z[:3 * hu] * (1.0 - z[:3 * hu])
            dz[3 * hu:] = dc * i * (1.0 - g * g)
            dc_carry = dc * f
            dh_carry = dz @ wh_t
        dxs = dz_all @ wd[:d].T
        dw = xh_all.T @ dz_all
        db = dz_all.sum(axis=0)
        return (dxs, dw, db)

    return _emit("lstm_sequence", (xs, w, b), hs, bwd)


def lstm_bank(xs_list: Sequence[Tensor], ws: Sequence[Tensor], bs: Sequence[Tensor],
              reverse_flags: Sequence[bool]) -> list[Tensor]:
    """Run G independent same-shaped LSTMs in one node, vectorized over cells.

    Cell g consumes xs_list[g] with (ws[g], bs[g]); reverse cells process
    rows last-to-first but return outputs in input order. Used to run all
    tasks' and directions' cells of one stacked layer together.
    """
    g_count = len(xs_list)
    if not (len(ws) == len(bs) == len(reverse_flags) == g_count) or g_count == 0:
        raise DimensionError("lstm_bank needs equal, non-zero cell counts")
    t_len, d = xs_list[0].data.shape
    hu = ws[0].data.shape[0] - d
    for xs, w, b in zip(xs_list, ws, bs):
        if xs.data.shape != (t_len, d) or t_len == 0:
            raise DimensionError("lstm_bank inputs must share a non-empty [T x d] shape")
        if w.data.shape != (d + hu, 4 * hu) or b.data.shape != (4 * hu,):
            raise DimensionError("lstm_bank weights must share the [(d+H) x 4H] shape")
    rev = np.asarray(reverse_flags, dtype=bool)

    x_proc = np.stack([xs.data[::-1] if r else xs.data
                       for xs, r in zip(xs_list, rev)])           # [G x T x d]
    w_all = np.stack([w.data for w in ws])                        # [G x (d+H) x 4H]
    b_all = np.stack([b.data for b in bs])                        # [G x 4H]
    xh_all = np.zeros((t_len, g_count, d + hu))
    gates = np.zeros((t_len, g_count, 4 * hu))
    cache_c = np.zeros((t_len, g_count, hu))
    cache_tc = np.zeros((t_len, g_count, hu))
    hs_proc = np.zeros((g_count, t_len, hu))
    h = np.zeros((g_count, hu))
    c = np.zeros((g_count, hu))
    for t in range(t_len):
        xh = xh_all[t]
        xh[:, :d] = x_proc[:, t]
        xh[:, d:] = h
        z = np.matmul(xh[:, None, :], w_all)[:, 0] + b_all
        z[:, :3 * hu] = _sigmoid_np(z[:, :3 * hu])
        z[:, 3 * hu:] = np.tanh(z[:, 3 * hu:])
        gates[t] = z
        c = z[:, hu:2 * hu] * c + z[:, :hu] * z[:, 3 * hu:]
        tc = np.tanh(c)
        h = z[:, 2 * hu:3 * hu] * tc
        hs_proc[:, t] = h
        cache_c[t] = c
        cache_tc[t] = tc
    outs = [hs_proc[g, ::-1].copy() if rev[g] else hs_proc[g].copy()
            for g in range(g_count)]

    def bwd(gs):
        dhs = np.zeros((g_count, t_len, hu))
        for g_idx, g in enumerate(gs):
            if g is None:
                continue
            dhs[g_idx] = g[::-1] if rev[g_idx] else g
        dz_all = np.zeros((t_len, g_count, 4 * hu))
        wh_t = np.ascontiguousarray(w_all[:, d:].transpose(0, 2, 1))  # [G x 4H x H]
        dh = np.zeros((g_count, hu))
        dc = np.zeros((g_count, hu))
        zero_c = np.zeros((g_count, hu))
        for t in range(t_len - 1, -1, -1):
            z = gates[t]
            i, f = z[:, :hu], z[:, hu:2 * hu]
            o, g_act = z[:, 2 * hu:3 * hu], z[:, 3 * hu:]
            tc = cache_tc[t]
            c_prev = cache_c[t - 1] if t > 0 else zero_c
            dh = dh + dhs[:, t]
            do = dh * tc
            dci = dc + dh * o * (1.0 - tc * tc)
            dz = dz_all[t]
            dz[:, :hu] = dci * g_act
            dz[:, hu:2 * hu] = dci * c_prev
            dz[:, 2 * hu:3 * hu] = do
            dz[:, :3 * hu] *= z[:, :3 * hu] * (1.0 - z[:, :3 * hu])
            dz[:, 3 * hu:] = dci * i * (1.0 - g_act * g_act)
            dh = np.matmul(dz[:, None, :], wh_t)[:, 0]
            dc = dci * f
        dz_t = np.ascontiguousarray(dz_all.transpose(1, 0, 2))    # [G x T x 4H]
        dx_proc = np.matmul(dz_t, w_all[:, :d].transpose(0, 2, 1))
        dw_all = np.matmul(xh_all.transpose(1, 2, 0), dz_t)       # [G x (d+H) x 4H]
        db_all = dz_all.sum(axis=0)
        dxs = [dx_proc[g, ::-1] if rev[g] else dx_proc[g] for g in range(g_count)]
        return tuple(dxs) + tuple(dw_all) + tuple(db_all)

    return _emit_multi("lstm_bank", tuple(xs_list) + tuple(ws) + tuple(bs), outs, bwd)


def char_lstm_final(table: Tensor, id_seqs: Sequence[Sequence[int]], w: Tensor,
                    b: Tensor, reverse: bool = False) -> Tensor:
    """Final LSTM states over N id sequences embedded via `table`: [N x H].

    Fuses the row gather with a padded, mask-updated batch recurrence so the
    whole character side of a sentence is two nodes. Rows shorter than the
    longest keep their final state through the padded steps. reverse=True
    consumes each sequence right-to-left.
    """
    if not id_seqs or any(len(s) == 0 for s in id_seqs):
        raise DimensionError("char_lstm_final needs non-empty id sequences")
    d = table.data.shape[1]
    hu = w.data.shape[0] - d
    if w.data.shape != (d + hu, 4 * hu) or hu <= 0 or b.data.shape != (4 * hu,):
        raise DimensionError(
            f"char_lstm_final weight shape {w.data.shape} incompatible with embed dim {d}")
    n = len(id_seqs)
    lengths = np.array([len(s) for s in id_seqs])
    l_max = int(lengths.max())
    ids = np.zeros((n, l_max), dtype=np.intp)
    for r, seq in enumerate(id_seqs):
        ordered = list(reversed(seq)) if reverse else list(seq)
        ids[r, :len(ordered)] = ordered
    mask = (np.arange(l_max)[None, :] < lengths[:, None]).astype(np.float64)

    wd = w.data
    xh_all = np.zeros((l_max, n, d + hu))
    gates = np.zeros((l_max, n, 4 * hu))
    c_states = np.zeros((l_max, n, hu))
    cache_tc = np.zeros((l_max, n, hu))
    h = np.zeros((n, hu))
    c = np.zeros((n, hu))
    for t in range(l_max):
        m = mask[:, t:t + 1]
        xh = xh_all[t]
        xh[:, :d] = table.data[ids[:, t]]
        xh[:, d:] = h
        z = xh @ wd + b.data
        z[:, :3 * hu] = _sigmoid_np(z[:, :3 * hu])
        z[:, 3 * hu:] = np.tanh(z[:, 3 * hu:])
        gates[t] = z
        c_cand = z[:, hu:2 * hu] * c + z[:, :hu] * z[:, 3 * hu:]
        tc = np.tanh(c_cand)
        h_cand = z[:, 2 * hu:3 * hu] * tc
        h = m * h_cand + (1.0 - m) * h
        c = m * c_cand + (1.0 - m) * c
        c_states[t] = c
        cache_tc[t] = tc

    def bwd(gs):
        dtable = np.zeros_like(table.data)
        dz_all = np.zeros((l_max, n, 4 * hu))
        wh_t = wd[d:].T
        dh = np.array(gs[0], dtype=np.float64)
        dc = np.zeros((n, hu))
        zero_c = np.zeros((n, hu))
        for t in range(l_max - 1, -1, -1):
            m = mask[:, t:t + 1]
            z = gates[t]
            i, f = z[:, :hu], z[:, hu:2 * hu]
            o, g = z[:, 2 * hu:3 * hu], z[:, 3 * hu:]
            tc = cache_tc[t]
            c_prev = c_states[t - 1] if t > 0 else zero_c
            dh_cand = dh * m
            dc_cand = dc * m
            do = dh_cand * tc
            dci = dc_cand + dh_cand * o * (1.0 - tc * tc)
            dz = dz_all[t]
            dz[:, :hu] = dci * g
            dz[:, hu:2 * hu] = dci * c_prev
            dz[:, 2 * hu:3 * hu] = do
            dz[:, :3 * hu] *= z[:, :3 * hu] * (1.0 - z[:, :3 * hu])
            dz[:, 3 * hu:] = dci * i * (1.0 - g * g)
            dh = dh * (1.0 - m) + dz @ wh_t
            dc = dc * (1.0 - m) + dci * f
        flat_dz = dz_all.reshape(l_max * n, 4 * hu)
        dxs = flat_dz @ wd[:d].T
        np.add.at(dtable, ids.T.reshape(-1), dxs)
        dw = np.tensordot(xh_all, dz_all, axes=([0, 1], [0, 1]))
        db = flat_dz.sum(axis=0)
        return (dtable, dw, db)

    return _emit("char_lstm_final", (table, w, b), h.copy(), bwd)


def subspace_ortho(weights: Sequence[Tensor], input_rows: int, col_groups) -> Tensor:
    """sum over weight matrices of ||G1^T G2||_F^2 on their input-weight block.

    For each matrix only the first `input_rows` rows participate; `col_groups`
    is a pair of disjoint column index arrays selecting the two subspaces.
    Fused into one node to keep the per-step overhead negligible.
    """
    idx1 = np.asarray(col_groups[0], dtype=np.intp)
    idx2 = np.asarray(col_groups[1], dtype=np.intp)
    if np.intersect1d(idx1, idx2).size:
        raise DimensionError("subspace column groups must be disjoint")
    total = 0.0
    caches = []
    for wt in weights:
        g1 = wt.data[:input_rows, idx1]
        g2 = wt.data[:input_rows, idx2]
        cross = g1.T @ g2
        total += (cross * cross).sum()
        caches.append((g1, g2, cross))

    def bwd(gs):
        g = gs[0]
        grads = []
        for wt, (g1, g2, cross) in zip(weights, caches):
            dw = np.zeros_like(wt.data)
            dw[:input_rows, idx1] = 2.0 * g * (g2 @ cross.T)
            dw[:input_rows, idx2] = 2.0 * g * (g1 @ cross)
            grads.append(dw)
        return tuple(grads)

    return _emit("subspace_ortho", tuple(weights), np.asarray(total, dtype=np.float64), bwd)


# ---------------------------------------------------------------------------
# parameter updates
# ---------------------------------------------------------------------------

def sgd_step(params, lr: float) -> None:
    """p <- p - lr * grad for every parameter; grads are cleared afterwards."""
    if lr < 0:
        raise ContractError(f"negative learning rate {lr}")
    params = list(params)
    for p in params:
        if p.grad is None:
            raise ContractError(f"sgd_step before backward: parameter {p.name or p!r} has no gradient")
    for p in params:
        p.data -= lr * p.grad
        p.grad = None
