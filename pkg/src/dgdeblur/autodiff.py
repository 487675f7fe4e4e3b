"""Reverse-mode automatic differentiation on small dense tensors.

The engine is define-by-run: every operation appends a node to a
:class:`Tape`, recording the operation kind, the indices of its input
nodes, any auxiliary data (axis lists, pad widths, gather indices), and
the forward result.  Calling :meth:`Tape.backward` on a scalar root
walks the recorded nodes once in reverse order and accumulates
gradients into every :class:`Parameter` that participated.

Values are always float64 arrays with at most four axes.  Complex
results (the 2-D DFT) are stored as an extra trailing axis of length
two holding real and imaginary parts, which keeps the whole engine in
real arithmetic and makes adjoints explicit.

The reverse pass is deterministic: nodes are visited in a fixed order
and gradient contributions are summed in the order the consumers were
recorded, so identical tapes produce bit-identical gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf


class ContractError(ValueError):
    """A caller violated an interface precondition."""


MAX_AXES = 4

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _as_f64(values, what: str) -> np.ndarray:
    # np.array rather than ascontiguousarray: the latter promotes 0-d to 1-d
    arr = np.array(values, dtype=np.float64, order="C")
    if arr.ndim > MAX_AXES:
        raise ContractError(f"{what}: rank {arr.ndim} exceeds the {MAX_AXES}-axis limit")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{what}: values must be finite (found NaN or Inf)")
    return arr


class Parameter:
    """A named trainable array paired with its gradient accumulator.

    Assignments to ``value`` and ``gradient`` are coerced to float64
    arrays so that scalar parameters stay 0-d arrays (naked numpy
    scalars are immutable and would silently break in-place updates).
    Finiteness is only enforced at construction: an optimizer step may
    legitimately pass through non-finite values before the training
    loop detects divergence.
    """

    __slots__ = ("_value", "_gradient", "name")

    def __init__(self, value, name: str):
        self.name = name
        self._value = _as_f64(value, f"parameter {name!r}")
        self._gradient = np.zeros_like(self._value)

    @property
    def value(self) -> np.ndarray:
        return self._value

    @value.setter
    def value(self, v) -> None:
        arr = np.array(v, dtype=np.float64, order="C")
        if arr.ndim > MAX_AXES:
            raise ContractError(
                f"parameter {self.name!r}: rank {arr.ndim} exceeds the "
                f"{MAX_AXES}-axis limit")
        self._value = arr

    @property
    def gradient(self) -> np.ndarray:
        return self._gradient

    @gradient.setter
    def gradient(self, v) -> None:
        self._gradient = np.asarray(v, dtype=np.float64)

    def reset_gradient(self) -> None:
        self._gradient = np.zeros_like(self._value)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


@dataclass(frozen=True)
class Node:
    """One recorded operation: kind, input node ids, aux data, output."""

    op: str
    inputs: tuple[int, ...]
    aux: object
    out: np.ndarray
    param: Parameter | None = None


class Tensor:
    """Handle to one node of a tape."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def data(self) -> np.ndarray:
        return self.tape.nodes[self.idx].out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __repr__(self) -> str:
        return f"Tensor(idx={self.idx}, shape={self.shape})"


@dataclass(frozen=True)
class OpDef:
    forward: object  # (inputs: list[ndarray], aux) -> ndarray
    vjp: object      # (g, inputs, out, aux) -> tuple[ndarray | None, ...]


OPS: dict[str, OpDef] = {}


def _register(name: str, forward, vjp) -> None:
    OPS[name] = OpDef(forward, vjp)


class Tape:
    """Append-only record of one forward computation."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._param_nodes: dict[int, int] = {}

    def constant(self, values) -> Tensor:
        arr = _as_f64(values, "constant")
        self.nodes.append(Node("const", (), None, arr))
        return Tensor(self, len(self.nodes) - 1)

    def param(self, p: Parameter) -> Tensor:
        """Leaf for a Parameter; repeated calls reuse the same node."""
        idx = self._param_nodes.get(id(p))
        if idx is None:
            self.nodes.append(Node("param", (), None, p.value, p))
            idx = len(self.nodes) - 1
            self._param_nodes[id(p)] = idx
        return Tensor(self, idx)

    def record(self, op: str, inputs: tuple[Tensor, ...], aux=None) -> Tensor:
        for t in inputs:
            if t.tape is not self:
                raise ContractError(f"op {op!r}: input belongs to a different tape")
        out = OPS[op].forward([t.data for t in inputs], aux)
        if out.ndim > MAX_AXES:
            raise ContractError(f"op {op!r}: output rank {out.ndim} exceeds {MAX_AXES}")
        self.nodes.append(Node(op, tuple(t.idx for t in inputs), aux, out))
        return Tensor(self, len(self.nodes) - 1)

    def backward(self, root: Tensor) -> dict[str, np.ndarray]:
        """Reverse sweep from a scalar root.

        Accumulates into ``Parameter.gradient`` for every parameter leaf
        reachable from the root and returns a name -> gradient snapshot.
        """
        if root.tape is not self:
            raise ContractError("backward: root belongs to a different tape")
        if root.data.ndim != 0:
            raise ContractError(
                f"backward: root must be scalar, got shape {root.data.shape}")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[root.idx] = np.ones(())
        touched: list[Parameter] = []
        for i in range(root.idx, -1, -1):
            g = grads[i]
            if g is None:
                continue
            node = self.nodes[i]
            if node.op == "const":
                continue
            if node.op == "param":
                node.param.gradient = node.param.gradient + g
                touched.append(node.param)
                continue
            in_data = [self.nodes[j].out for j in node.inputs]
            gins = OPS[node.op].vjp(g, in_data, node.out, node.aux)
            for j, gj in zip(node.inputs, gins):
                if gj is None:
                    continue
                grads[j] = gj if grads[j] is None else grads[j] + gj
        return {p.name: p.gradient.copy() for p in touched}

    def replay(self) -> float:
        """Recompute every non-leaf node from its recorded inputs.

        Returns the worst absolute deviation from the stored outputs;
        a faithful tape replays to exactly 0.0.
        """
        worst = 0.0
        for node in self.nodes:
            if node.op in ("const", "param"):
                continue
            ref = OPS[node.op].forward([self.nodes[j].out for j in node.inputs], node.aux)
            if not np.array_equal(ref, node.out):
                worst = max(worst, float(np.max(np.abs(ref - node.out))))
        return worst


# ---------------------------------------------------------------------------
# operation definitions
# ---------------------------------------------------------------------------

def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum an upstream gradient down to a broadcast operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ContractError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


_register(
    "add",
    lambda ins, aux: (_check_broadcast(ins[0], ins[1], "add"), ins[0] + ins[1])[1],
    lambda g, ins, out, aux: (_unbroadcast(g, ins[0].shape), _unbroadcast(g, ins[1].shape)),
)

_register(
    "sub",
    lambda ins, aux: (_check_broadcast(ins[0], ins[1], "sub"), ins[0] - ins[1])[1],
    lambda g, ins, out, aux: (_unbroadcast(g, ins[0].shape), _unbroadcast(-g, ins[1].shape)),
)

_register(
    "mul",
    lambda ins, aux: (_check_broadcast(ins[0], ins[1], "mul"), ins[0] * ins[1])[1],
    lambda g, ins, out, aux: (
        _unbroadcast(g * ins[1], ins[0].shape),
        _unbroadcast(g * ins[0], ins[1].shape),
    ),
)

_register(
    "neg",
    lambda ins, aux: -ins[0],
    lambda g, ins, out, aux: (-g,),
)

_register(
    "scale",
    lambda ins, aux: ins[0] * aux,
    lambda g, ins, out, aux: (g * aux,),
)


def _matmul_fwd(ins, aux):
    a, b = ins
    if a.ndim != 2 or b.ndim != 2:
        raise ContractError(f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul: inner dimensions differ, {a.shape} vs {b.shape}")
    return a @ b


_register(
    "matmul",
    _matmul_fwd,
    lambda g, ins, out, aux: (g @ ins[1].T, ins[0].T @ g),
)


def _bmm_fwd(ins, aux):
    a, b = ins
    if a.ndim != b.ndim or a.ndim < 2:
        raise ContractError(f"bmm: ranks differ, {a.shape} vs {b.shape}")
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ContractError(f"bmm: incompatible shapes {a.shape} and {b.shape}")
    return a @ b


def _swap_last2(x):
    return np.swapaxes(x, -1, -2)


_register(
    "bmm",
    _bmm_fwd,
    lambda g, ins, out, aux: (g @ _swap_last2(ins[1]), _swap_last2(ins[0]) @ g),
)

_register(
    "transpose2",
    lambda ins, aux: np.ascontiguousarray(_swap_last2(ins[0])),
    lambda g, ins, out, aux: (np.ascontiguousarray(_swap_last2(g)),),
)


def _permute_fwd(ins, aux):
    return np.ascontiguousarray(np.transpose(ins[0], aux))


def _permute_vjp(g, ins, out, aux):
    inv = np.argsort(aux)
    return (np.ascontiguousarray(np.transpose(g, inv)),)


_register("permute", _permute_fwd, _permute_vjp)


def _reshape_fwd(ins, aux):
    if int(np.prod(aux)) != ins[0].size:
        raise ContractError(f"reshape: cannot reshape {ins[0].shape} into {aux}")
    if len(aux) > MAX_AXES:
        raise ContractError(f"reshape: target rank {len(aux)} exceeds {MAX_AXES}")
    return ins[0].reshape(aux)


_register(
    "reshape",
    _reshape_fwd,
    lambda g, ins, out, aux: (g.reshape(ins[0].shape),),
)

_register(
    "sum_all",
    lambda ins, aux: np.asarray(ins[0].sum()),
    lambda g, ins, out, aux: (np.broadcast_to(g, ins[0].shape).copy(),),
)


def _mean_axes_fwd(ins, aux):
    return ins[0].mean(axis=aux, keepdims=True)


def _mean_axes_vjp(g, ins, out, aux):
    count = 1
    for ax in aux:
        count *= ins[0].shape[ax]
    return (np.broadcast_to(g / count, ins[0].shape).copy(),)


_register("mean_axes", _mean_axes_fwd, _mean_axes_vjp)


def _layernorm_stats(x, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    return xc * inv, inv


def _layernorm_fwd(ins, aux):
    y, _ = _layernorm_stats(ins[0], aux)
    return y


def _layernorm_vjp(g, ins, out, aux):
    y, inv = _layernorm_stats(ins[0], aux)
    gm = g.mean(axis=-1, keepdims=True)
    gym = np.mean(g * y, axis=-1, keepdims=True)
    return (inv * (g - gm - y * gym),)


_register("layernorm", _layernorm_fwd, _layernorm_vjp)


def _gelu(x):
    return x * 0.5 * (1.0 + erf(x * _INV_SQRT2))


def _gelu_grad(x):
    phi = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * phi


_register(
    "gelu",
    lambda ins, aux: _gelu(ins[0]),
    lambda g, ins, out, aux: (g * _gelu_grad(ins[0]),),
)

_register(
    "relu",
    lambda ins, aux: np.maximum(ins[0], 0.0),
    lambda g, ins, out, aux: (g * (ins[0] > 0.0),),
)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_register(
    "sigmoid",
    lambda ins, aux: _sigmoid(ins[0]),
    lambda g, ins, out, aux: (g * out * (1.0 - out),),
)

_register(
    "abs",
    lambda ins, aux: np.abs(ins[0]),
    lambda g, ins, out, aux: (g * np.sign(ins[0]),),
)


def _cmod_fwd(ins, aux):
    x = ins[0]
    if x.shape[-1] != 2:
        raise ContractError(f"cmod: trailing axis must have length 2, got {x.shape}")
    return np.hypot(x[..., 0], x[..., 1])


def _cmod_vjp(g, ins, out, aux):
    x = ins[0]
    safe = np.where(out > 0.0, out, 1.0)
    scale = np.where(out > 0.0, g / safe, 0.0)
    dx = np.empty_like(x)
    dx[..., 0] = scale * x[..., 0]
    dx[..., 1] = scale * x[..., 1]
    return (dx,)


_register("cmod", _cmod_fwd, _cmod_vjp)


def _fft2_fwd(ins, aux):
    x = ins[0]
    if x.ndim != 2:
        raise ContractError(f"fft2: expected a 2-D field, got shape {x.shape}")
    f = np.fft.fft2(x)
    return np.ascontiguousarray(np.stack([f.real, f.imag], axis=-1))


def _fft2_vjp(g, ins, out, aux):
    # Adjoint of the unnormalized DFT is the conjugate transpose, which
    # for np.fft conventions is H*W times the inverse transform.
    h, w = ins[0].shape
    gc = g[..., 0] + 1j * g[..., 1]
    return (np.ascontiguousarray(np.real(np.fft.ifft2(gc)) * (h * w)),)


_register("fft2", _fft2_fwd, _fft2_vjp)


def _take_fwd(ins, aux):
    idx, axis = aux
    return np.ascontiguousarray(np.take(ins[0], idx, axis=axis))


def _take_vjp(g, ins, out, aux):
    idx, axis = aux
    dx = np.zeros_like(ins[0])
    np.add.at(np.moveaxis(dx, axis, 0), idx, np.moveaxis(g, axis, 0))
    return (dx,)


_register("take", _take_fwd, _take_vjp)


def _select_fwd(ins, aux):
    a, b = ins
    if a.shape != b.shape:
        raise ContractError(f"select: branch shapes differ, {a.shape} vs {b.shape}")
    return np.where(aux, a, b)


def _select_vjp(g, ins, out, aux):
    zero = np.zeros(())
    return (
        _unbroadcast(np.where(aux, g, zero), ins[0].shape),
        _unbroadcast(np.where(aux, zero, g), ins[1].shape),
    )


_register("select", _select_fwd, _select_vjp)


def _pad_reflect_fwd(ins, aux):
    (top, bottom), (left, right) = aux
    x = ins[0]
    if x.ndim != 3:
        raise ContractError(f"pad_reflect: expected H x W x C, got shape {x.shape}")
    return np.pad(x, ((top, bottom), (left, right), (0, 0)), mode="reflect")


def _pad_reflect_vjp(g, ins, out, aux):
    (top, bottom), (left, right) = aux
    h, w, c = ins[0].shape
    rows = np.pad(np.arange(h), (top, bottom), mode="reflect")
    cols = np.pad(np.arange(w), (left, right), mode="reflect")
    flat = (rows[:, None] * w + cols[None, :]).ravel()
    dx = np.zeros((h * w, c))
    np.add.at(dx, flat, g.reshape(-1, c))
    return (dx.reshape(h, w, c),)


_register("pad_reflect", _pad_reflect_fwd, _pad_reflect_vjp)


def _crop_fwd(ins, aux):
    h, w = aux
    return np.ascontiguousarray(ins[0][:h, :w])


def _crop_vjp(g, ins, out, aux):
    h, w = aux
    dx = np.zeros_like(ins[0])
    dx[:h, :w] = g
    return (dx,)


_register("crop", _crop_fwd, _crop_vjp)


def _conv3x3_fwd(ins, aux):
    xp, w = ins
    if w.shape[:2] != (3, 3):
        raise ContractError(f"conv3x3: kernel must be 3x3, got {w.shape}")
    if xp.ndim != 3 or xp.shape[2] != w.shape[2]:
        raise ContractError(f"conv3x3: input {xp.shape} incompatible with kernel {w.shape}")
    h, wd = xp.shape[0] - 2, xp.shape[1] - 2
    out = np.zeros((h, wd, w.shape[3]))
    for dy in range(3):
        for dx in range(3):
            out += xp[dy:dy + h, dx:dx + wd] @ w[dy, dx]
    return out


def _conv3x3_vjp(g, ins, out, aux):
    xp, w = ins
    h, wd = g.shape[0], g.shape[1]
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    gm = g.reshape(-1, g.shape[2])
    for dy in range(3):
        for dx in range(3):
            window = xp[dy:dy + h, dx:dx + wd]
            dw[dy, dx] = window.reshape(-1, window.shape[2]).T @ gm
            dxp[dy:dy + h, dx:dx + wd] += g @ w[dy, dx].T
    return (dxp, dw)


_register("conv3x3", _conv3x3_fwd, _conv3x3_vjp)


def _avgpool2_fwd(ins, aux):
    x = ins[0]
    h, w, c = x.shape
    if h % 2 or w % 2:
        raise ContractError(f"avgpool2: spatial extents must be even, got {x.shape}")
    return x.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))


def _avgpool2_vjp(g, ins, out, aux):
    gq = np.repeat(np.repeat(g * 0.25, 2, axis=0), 2, axis=1)
    return (gq,)


_register("avgpool2", _avgpool2_fwd, _avgpool2_vjp)


def _partition_fwd(ins, aux):
    p = aux
    x = ins[0]
    if x.ndim != 3:
        raise ContractError(f"partition: expected H x W x C, got shape {x.shape}")
    h, w, c = x.shape
    if h % p or w % p:
        raise ContractError(f"partition: extents {h}x{w} not divisible by p={p}")
    eh, ew = h // p, w // p
    tiles = x.reshape(eh, p, ew, p, c).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(tiles.reshape(eh * ew, p * p, c))


def _partition_vjp(g, ins, out, aux):
    p = aux
    h, w, c = ins[0].shape
    eh, ew = h // p, w // p
    tiles = g.reshape(eh, ew, p, p, c).transpose(0, 2, 1, 3, 4)
    return (np.ascontiguousarray(tiles.reshape(h, w, c)),)


_register("partition", _partition_fwd, _partition_vjp)


def _unpartition_fwd(ins, aux):
    h, w = aux
    x = ins[0]
    if x.ndim != 3:
        raise ContractError(f"unpartition: expected E x n x C, got shape {x.shape}")
    e, n, c = x.shape
    p = int(round(np.sqrt(n)))
    if p * p != n or (h // p) * (w // p) != e or h % p or w % p:
        raise ContractError(f"unpartition: {x.shape} does not tile a {h}x{w} field")
    eh, ew = h // p, w // p
    tiles = x.reshape(eh, ew, p, p, c).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(tiles.reshape(h, w, c))


def _unpartition_vjp(g, ins, out, aux):
    e, n, c = ins[0].shape
    p = int(round(np.sqrt(n)))
    h, w = aux
    eh, ew = h // p, w // p
    tiles = g.reshape(eh, p, ew, p, c).transpose(0, 2, 1, 3, 4)
    return (np.ascontiguousarray(tiles.reshape(e, n, c)),)


_register("unpartition", _unpartition_fwd, _unpartition_vjp)


# ---------------------------------------------------------------------------
# functional wrappers
# ---------------------------------------------------------------------------

def _rec(op, *tensors, aux=None) -> Tensor:
    return tensors[0].tape.record(op, tensors, aux)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _rec("add", a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _rec("sub", a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _rec("mul", a, b)


def neg(a: Tensor) -> Tensor:
    return _rec("neg", a)


def scale(a: Tensor, c: float) -> Tensor:
    return _rec("scale", a, aux=float(c))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return _rec("matmul", a, b)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    return _rec("bmm", a, b)


def transpose2(a: Tensor) -> Tensor:
    return _rec("transpose2", a)


def permute(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    return _rec("permute", a, aux=tuple(axes))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _rec("reshape", a, aux=tuple(int(s) for s in shape))


def sum_all(a: Tensor) -> Tensor:
    return _rec("sum_all", a)


def mean_axes(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    return _rec("mean_axes", a, aux=tuple(axes))


def layernorm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance.  No affine part."""
    return _rec("layernorm", a, aux=float(eps))


POINTWISE_KINDS = ("gelu", "relu", "sigmoid")


def pointwise(a: Tensor, kind: str) -> Tensor:
    if kind not in POINTWISE_KINDS:
        raise ContractError(f"pointwise: unknown kind {kind!r}, expected one of {POINTWISE_KINDS}")
    return _rec(kind, a)


def absolute(a: Tensor) -> Tensor:
    return _rec("abs", a)


def complex_modulus(a: Tensor) -> Tensor:
    return _rec("cmod", a)


def fft2(a: Tensor) -> Tensor:
    """Unnormalized 2-D DFT of a real field, returned as H x W x 2."""
    return _rec("fft2", a)


def take(a: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    return _rec("take", a, aux=(np.asarray(indices, dtype=np.intp), int(axis)))


def select(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise mask ? a : b.  The mask is data, not differentiated."""
    return a.tape.record("select", (a, b), aux=np.asarray(mask, dtype=bool))


def pad_reflect(a: Tensor, pads: tuple[tuple[int, int], tuple[int, int]]) -> Tensor:
    (t, b), (l, r) = pads
    return _rec("pad_reflect", a, aux=((int(t), int(b)), (int(l), int(r))))


def crop(a: Tensor, height: int, width: int) -> Tensor:
    return _rec("crop", a, aux=(int(height), int(width)))


def conv3x3(xpad: Tensor, w: Tensor) -> Tensor:
    return _rec("conv3x3", xpad, w)


def avgpool2(a: Tensor) -> Tensor:
    return _rec("avgpool2", a)


def partition_op(a: Tensor, p: int) -> Tensor:
    return _rec("partition", a, aux=int(p))


def unpartition_op(a: Tensor, height: int, width: int) -> Tensor:
    return _rec("unpartition", a, aux=(int(height), int(width)))


def backward(tape: Tape, root: Tensor) -> dict[str, np.ndarray]:
    return tape.backward(root)


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    passed: bool


def grad_check(f, params: list[Parameter], step: float = 1e-5,
               tol: float = 1e-5) -> list[GradCheckEntry]:
    """Compare tape gradients of a scalar function against central differences.

    ``f`` must rebuild its tape on every call and read the current
    parameter values, so that coordinate perturbations are observed.
    Every coordinate of every parameter is probed.
    """
    if not (0.0 < step <= 1e-2):
        raise ContractError(f"grad_check: step {step} outside (0, 1e-2]")
    for p in params:
        p.reset_gradient()
    root = f()
    if root.data.ndim != 0:
        raise ContractError("grad_check: f must return a scalar tensor")
    root.tape.backward(root)
    analytic = {p.name: p.gradient.copy() for p in params}

    entries = []
    for p in params:
        flat = p.value.reshape(-1)
        ana = analytic[p.name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            up = float(f().data)
            flat[i] = saved - step
            down = float(f().data)
            flat[i] = saved
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(ana[i]), abs(numeric), 1e-6)
            worst = max(worst, abs(ana[i] - numeric) / denom)
        entries.append(GradCheckEntry(p.name, worst, worst <= tol))
    return entries
