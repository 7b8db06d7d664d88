"""Dense tensors with reverse-mode automatic differentiation.

Values are computed eagerly with numpy; every op also records edges to its
differentiable inputs so a later backward pass can sweep the graph. Gradients
are themselves built from engine ops, so ops whose backward rules are
expressed through the engine (dense arithmetic, tanh, leaky_relu, reductions,
l2_norm) can be differentiated a second time - which the critic's gradient
penalty needs. Ops with raw-numpy backward rules (conv, pooling, softmax,
relu, embedding lookup, cross-entropy) support first-order gradients only and
raise SecondOrderUnsupportedError if a second pass tries to pull through them.

Storage is float32 by default with float64 accumulation in reductions;
construct leaves from float64 arrays to run a whole graph in float64.
"""
from __future__ import annotations

import threading

import numpy as np

from .errors import InvalidInputError, SecondOrderUnsupportedError

DEFAULT_DTYPE = np.float32


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_op")

    def __init__(self, data, requires_grad=False, dtype=None, _parents=(), _op="leaf"):
        if isinstance(data, Tensor):
            raise InvalidInputError("cannot wrap a Tensor in a Tensor")
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not (isinstance(data, np.ndarray) and arr.dtype in (np.float32, np.float64)):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self._parents = _parents  # tuple of (parent Tensor, vjp function)
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(op={self._op!r}, shape={self.data.shape}, dtype={self.data.dtype})"

    # arithmetic sugar; scalars are wrapped as constants of this dtype
    def __add__(self, other):
        return add(self, _coerce(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _coerce(other, self.dtype))

    def __rsub__(self, other):
        return sub(_coerce(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _coerce(other, self.dtype))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _coerce(other, self.dtype))

    def __rtruediv__(self, other):
        return div(_coerce(other, self.dtype), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, dtype=None) -> Tensor:
    return Tensor(data, dtype=dtype)


def parameter(data, dtype=None) -> Tensor:
    """A trainable leaf."""
    return Tensor(data, requires_grad=True, dtype=dtype)


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, dtype=dtype)


def _coerce(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype), dtype=dtype)


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------

_ACTIVE = threading.local()


class Tape:
    """Ordered record of the op nodes created while the tape is active.

    Creation order is a topological order (an op's inputs always exist before
    the op runs). Trainable leaves that feed a recorded op are collected in
    `parameters`; `watch` registers one explicitly.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.parameters: list[Tensor] = []
        self._param_ids: set[int] = set()

    def __enter__(self):
        stack = getattr(_ACTIVE, "stack", None)
        if stack is None:
            stack = _ACTIVE.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE.stack.pop()
        return False

    def watch(self, t: Tensor) -> None:
        if not t.requires_grad:
            raise InvalidInputError("watch: tensor is not marked trainable")
        if id(t) not in self._param_ids:
            self._param_ids.add(id(t))
            self.parameters.append(t)


def _current_tape() -> Tape | None:
    stack = getattr(_ACTIVE, "stack", None)
    return stack[-1] if stack else None


def _record(out: Tensor) -> None:
    tape = _current_tape()
    if tape is not None and out._parents:
        tape.nodes.append(out)
        for p, _ in out._parents:
            if p.requires_grad and not p._parents:
                tape.watch(p)


def _make_node(data, parents, op) -> Tensor:
    """Create an op node, keeping only edges to inputs that require grad."""
    kept = tuple((p, fn) for (p, fn) in parents if p.requires_grad)
    out = Tensor(data, requires_grad=bool(kept), dtype=data.dtype, _parents=kept, _op=op)
    _record(out)
    return out


def _blocked(op):
    def vjp(_g):
        raise SecondOrderUnsupportedError(
            f"{op} supports first-order gradients only; the gradient-penalty "
            f"path must be built from dense ops, tanh/leaky_relu, sum, and l2_norm"
        )

    return vjp


def _first_order_node(data, op, deps) -> Tensor:
    """Wrap a raw-numpy gradient so any second differentiation through it
    raises instead of returning silently wrong values."""
    parents = tuple((d, _blocked(op)) for d in deps if isinstance(d, Tensor))
    return _make_node(np.asarray(data), parents, op + ".grad")


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    while stack:
        node, i = stack.pop()
        if i == 0:
            if id(node) in visited:
                continue
            visited.add(id(node))
        if i < len(node._parents):
            stack.append((node, i + 1))
            parent = node._parents[i][0]
            if id(parent) not in visited:
                stack.append((parent, 0))
        else:
            order.append(node)
    return order


def grad(loss: Tensor, wrt) -> list[Tensor]:
    """Gradients of a scalar loss with respect to each tensor in `wrt`.

    Tensors unreachable from the loss get zero gradients. The returned
    gradients carry graph edges of their own wherever the ops on the path
    support second-order differentiation.
    """
    if loss.size != 1:
        raise InvalidInputError(
            f"grad: loss must be a scalar, got shape {loss.shape}"
        )
    wrt = list(wrt)
    order = _toposort(loss)
    grads: dict[int, Tensor] = {
        id(loss): constant(np.ones_like(loss.data), dtype=loss.dtype)
    }
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            continue
        for parent, vjp in node._parents:
            contrib = vjp(g)
            prev = grads.get(id(parent))
            grads[id(parent)] = contrib if prev is None else add(prev, contrib)
    return [
        grads.get(id(p), constant(np.zeros_like(p.data), dtype=p.dtype)) for p in wrt
    ]


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, Tensor]:
    """Gradient of a scalar loss for every parameter the tape saw."""
    gs = grad(loss, tape.parameters)
    return dict(zip(tape.parameters, gs))


def grad_of_grad(output: Tensor, x: Tensor, wrt) -> list[Tensor]:
    """Gradients, with respect to `wrt`, of the L2 norm of d(output)/dx."""
    (gx,) = grad(output, [x])
    return grad(l2_norm(gx), wrt)


# ---------------------------------------------------------------------------
# shape helpers
# ---------------------------------------------------------------------------


def _check(cond, op, msg):
    if not cond:
        raise InvalidInputError(f"{op}: {msg}")


def _reduced_shape(shape, axis):
    out = list(shape)
    if axis is None:
        return [1] * len(shape)
    out[axis] = 1
    return out


def _unbroadcast(g: Tensor, target_shape) -> Tensor:
    """Sum a broadcast gradient back down to the shape it broadcast from."""
    while g.ndim > len(target_shape):
        g = sum(g, axis=0)
    for ax, (gs, ts) in enumerate(zip(g.shape, target_shape)):
        if ts == 1 and gs != 1:
            g = sum(g, axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# second-order-capable primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a, DEFAULT_DTYPE), _coerce(b, DEFAULT_DTYPE)
    try:
        out = a.data + b.data
    except ValueError:
        raise InvalidInputError(f"add: shapes {a.shape} and {b.shape} do not broadcast")
    return _make_node(
        out,
        ((a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(g, b.shape))),
        "add",
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a, DEFAULT_DTYPE), _coerce(b, DEFAULT_DTYPE)
    try:
        out = a.data - b.data
    except ValueError:
        raise InvalidInputError(f"sub: shapes {a.shape} and {b.shape} do not broadcast")
    return _make_node(
        out,
        (
            (a, lambda g: _unbroadcast(g, a.shape)),
            (b, lambda g: _unbroadcast(scale(g, -1.0), b.shape)),
        ),
        "sub",
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a, DEFAULT_DTYPE), _coerce(b, DEFAULT_DTYPE)
    try:
        out = a.data * b.data
    except ValueError:
        raise InvalidInputError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")
    return _make_node(
        out,
        (
            (a, lambda g: _unbroadcast(mul(g, b), a.shape)),
            (b, lambda g: _unbroadcast(mul(g, a), b.shape)),
        ),
        "mul",
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a, DEFAULT_DTYPE), _coerce(b, DEFAULT_DTYPE)
    try:
        out = a.data / b.data
    except ValueError:
        raise InvalidInputError(f"div: shapes {a.shape} and {b.shape} do not broadcast")
    return _make_node(
        out,
        (
            (a, lambda g: _unbroadcast(div(g, b), a.shape)),
            (b, lambda g: _unbroadcast(scale(mul(g, div(div(a, b), b)), -1.0), b.shape)),
        ),
        "div",
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make_node(a.data * a.data.dtype.type(c), ((a, lambda g: scale(g, c)),), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.ndim == 2 and b.ndim == 2, "matmul", f"needs 2-D operands, got {a.shape} @ {b.shape}")
    _check(a.shape[1] == b.shape[0], "matmul", f"inner dims differ: {a.shape} @ {b.shape}")
    return _make_node(
        a.data @ b.data,
        (
            (a, lambda g: matmul(g, transpose(b))),
            (b, lambda g: matmul(transpose(a), g)),
        ),
        "matmul",
    )


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(int(i) for i in np.argsort(axes))
    return _make_node(
        np.transpose(a.data, axes), ((a, lambda g: transpose(g, inv)),), "transpose"
    )


def reshape(a: Tensor, shape) -> Tensor:
    orig = a.shape
    try:
        out = np.reshape(a.data, shape)
    except ValueError:
        raise InvalidInputError(f"reshape: cannot reshape {orig} to {shape}")
    return _make_node(out, ((a, lambda g: reshape(g, orig)),), "reshape")


def broadcast_to(a: Tensor, shape) -> Tensor:
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise InvalidInputError(f"broadcast_to: cannot broadcast {a.shape} to {shape}")
    return _make_node(out, ((a, lambda g: _unbroadcast(g, a.shape)),), "broadcast_to")


def sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = np.sum(a.data, axis=axis, keepdims=keepdims, dtype=np.float64)
    out = np.asarray(out, dtype=a.dtype)

    def vjp(g):
        if not keepdims:
            g = reshape(g, _reduced_shape(a.shape, axis))
        return broadcast_to(g, a.shape)

    return _make_node(out, ((a, vjp),), "sum")


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)
    out = Tensor(data, dtype=data.dtype, _op="tanh")
    if a.requires_grad:
        # the vjp closes over the output so a second backward pass can flow
        # through tanh's value as well
        def vjp(g):
            return mul(g, sub(_coerce(1.0, a.dtype), mul(out, out)))

        out._parents = ((a, vjp),)
        out.requires_grad = True
    _record(out)
    return out


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    mask = np.where(a.data > 0, a.dtype.type(1.0), a.dtype.type(alpha))
    mask_c = constant(mask, dtype=a.dtype)
    return _make_node(a.data * mask, ((a, lambda g: mul(g, mask_c)),), "leaky_relu")


def l2_norm(a: Tensor, axis=None, keepdims=False) -> Tensor:
    """Euclidean norm over all entries (axis=None) or along one axis.

    At a zero vector the subgradient 0 is used, so gradients stay finite when
    the norm sits exactly at the origin.
    """
    sq = np.sum(np.square(a.data, dtype=np.float64), axis=axis, keepdims=keepdims)
    out_data = np.asarray(np.sqrt(sq), dtype=a.dtype)
    out = Tensor(out_data, dtype=out_data.dtype, _op="l2_norm")

    if a.requires_grad:
        positive = out_data > 0
        mask_c = constant(positive.astype(a.dtype), dtype=a.dtype)
        offset_c = constant((~positive).astype(a.dtype), dtype=a.dtype)
        kd_shape = tuple(_reduced_shape(a.shape, axis))

        def vjp(g):
            safe = add(mul(out, mask_c), offset_c)  # norm where > 0, else 1
            masked_g = mul(g, mask_c)
            if not keepdims:
                safe = reshape(safe, kd_shape)
                masked_g = reshape(masked_g, kd_shape)
            return mul(div(masked_g, safe), a)

        out._parents = ((a, vjp),)
        out.requires_grad = True
    _record(out)
    return out


def stop_gradient(a: Tensor) -> Tensor:
    """Identity in the forward pass; contributes zero gradient upstream."""
    return _make_node(a.data, (), "stop_gradient")


# ---------------------------------------------------------------------------
# first-order-only primitives
# ---------------------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make_node(
        np.where(mask, a.data, a.dtype.type(0.0)),
        ((a, lambda g: _first_order_node(g.data * mask, "relu", (g, a))),),
        "relu",
    )


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        dot = np.sum(g.data * y, axis=axis, keepdims=True)
        return _first_order_node((g.data - dot) * y, "softmax", (g, a))

    return _make_node(y, ((a, vjp),), "softmax")


def _same_padding(size, k, stride):
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


def conv2d(x: Tensor, k: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """2-D cross-correlation of a (B, Cin, H, W) batch with (Cout, Cin, kh, kw)
    kernels."""
    _check(x.ndim == 4, "conv2d", f"input must be (B, C, H, W), got {x.shape}")
    _check(k.ndim == 4, "conv2d", f"kernel must be (Cout, Cin, kh, kw), got {k.shape}")
    _check(
        x.shape[1] == k.shape[1],
        "conv2d",
        f"channel mismatch: input {x.shape} vs kernel {k.shape}",
    )
    _check(padding in ("same", "valid"), "conv2d", f"unknown padding {padding!r}")
    b_, _, h, w = x.shape
    cout, cin, kh, kw = k.shape
    if padding == "same":
        out_h, pt, pb = _same_padding(h, kh, stride)
        out_w, pl, pr = _same_padding(w, kw, stride)
    else:
        _check(h >= kh and w >= kw, "conv2d", f"kernel {k.shape} larger than input {x.shape}")
        out_h, out_w = (h - kh) // stride + 1, (w - kw) // stride + 1
        pt = pb = pl = pr = 0
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))

    def windows():
        win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
        return win[:, :, ::stride, ::stride][:, :, :out_h, :out_w]

    out = np.einsum("bihwkl,oikl->bohw", windows(), k.data, optimize=True)
    out = np.asarray(out, dtype=x.dtype)

    def vjp_x(g):
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + (out_h - 1) * stride + 1 : stride,
                    j : j + (out_w - 1) * stride + 1 : stride] += np.einsum(
                    "bohw,oi->bihw", g.data, k.data[:, :, i, j], optimize=True
                )
        dx = dxp[:, :, pt : pt + h, pl : pl + w]
        return _first_order_node(np.asarray(dx, dtype=x.dtype), "conv2d", (g, k))

    def vjp_k(g):
        dk = np.einsum("bihwkl,bohw->oikl", windows(), g.data, optimize=True)
        return _first_order_node(np.asarray(dk, dtype=k.dtype), "conv2d", (g, x))

    return _make_node(out, ((x, vjp_x), (k, vjp_k)), "conv2d")


def mean_pool2x2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2; odd edges use the clipped window
    (a 1-wide edge averages the cells that exist), so a 1x1 input is passed
    through unchanged."""
    _check(x.ndim == 4, "mean_pool2x2", f"input must be (B, C, H, W), got {x.shape}")
    b_, c, h, w = x.shape
    ho, wo = (h + 1) // 2, (w + 1) // 2
    acc = np.zeros((b_, c, ho, wo), dtype=np.float64)
    for di in (0, 1):
        for dj in (0, 1):
            sub = x.data[:, :, di::2, dj::2]
            acc[:, :, : sub.shape[2], : sub.shape[3]] += sub
    cnt = np.outer(
        np.minimum(2, h - 2 * np.arange(ho)), np.minimum(2, w - 2 * np.arange(wo))
    ).astype(np.float64)
    out = np.asarray(acc / cnt, dtype=x.dtype)

    def vjp(g):
        gd = g.data / cnt
        dx = np.zeros_like(x.data)
        for di in (0, 1):
            for dj in (0, 1):
                tgt = dx[:, :, di::2, dj::2]
                tgt += gd[:, :, : tgt.shape[2], : tgt.shape[3]]
        return _first_order_node(dx, "mean_pool2x2", (g,))

    return _make_node(out, ((x, vjp),), "mean_pool2x2")


def max_pool(x: Tensor) -> Tensor:
    """Global spatial max over (H, W) per channel; ties go to the lowest flat
    index, so the backward routing is deterministic."""
    _check(x.ndim == 4, "max_pool", f"input must be (B, C, H, W), got {x.shape}")
    b_, c, h, w = x.shape
    flat = x.data.reshape(b_, c, h * w)
    idx = np.argmax(flat, axis=2)
    out = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]

    def vjp(g):
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, idx[:, :, None], g.data[:, :, None], axis=2)
        return _first_order_node(dflat.reshape(x.shape), "max_pool", (g,))

    return _make_node(out, ((x, vjp),), "max_pool")


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x spatial upsampling."""
    _check(x.ndim == 4, "upsample2x", f"input must be (B, C, H, W), got {x.shape}")
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def vjp(g):
        b_, c, h2, w2 = g.shape
        dx = g.data.reshape(b_, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))
        return _first_order_node(np.asarray(dx, dtype=x.dtype), "upsample2x", (g,))

    return _make_node(out, ((x, vjp),), "upsample2x")


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Gather rows of a (K, d) table by an integer index array."""
    _check(table.ndim == 2, "embedding_lookup", f"table must be (K, d), got {table.shape}")
    idx = np.asarray(indices)
    _check(
        idx.size == 0 or (idx.min() >= 0 and idx.max() < table.shape[0]),
        "embedding_lookup",
        f"indices out of range for table with {table.shape[0]} rows",
    )
    out = table.data[idx]

    def vjp(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, idx.reshape(-1), g.data.reshape(-1, table.shape[1]))
        return _first_order_node(dt, "embedding_lookup", (g,))

    return _make_node(out, ((table, vjp),), "embedding_lookup")


def cross_entropy_with_logits(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    _check(logits.ndim == 2, "cross_entropy", f"logits must be (B, K), got {logits.shape}")
    y = np.asarray(labels)
    _check(
        y.shape == (logits.shape[0],),
        "cross_entropy",
        f"labels must be ({logits.shape[0]},), got {y.shape}",
    )
    z = logits.data.astype(np.float64)
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(z - m), axis=1))
    nll = lse - z[np.arange(len(y)), y]
    out = np.asarray(nll.mean(), dtype=logits.dtype)

    def vjp(g):
        p = np.exp(z - m) / np.sum(np.exp(z - m), axis=1, keepdims=True)
        p[np.arange(len(y)), y] -= 1.0
        d = np.asarray(p / len(y), dtype=logits.dtype) * g.data
        return _first_order_node(d, "cross_entropy", (g, logits))

    return _make_node(out, ((logits, vjp),), "cross_entropy")
