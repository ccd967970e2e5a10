"""A small reverse-mode differentiation engine over dense numpy arrays.

Only what the selection matrix and the per-pixel normal network need:
2-D matmul, elementwise arithmetic with row/column-vector broadcasting,
relu, column softmax, grouped max, reductions and row normalization.

Every tensor gets a monotonically increasing id at creation. Since an op's
output is always created after its inputs, sorting reachable nodes by id is
a topological order; :func:`tape` returns that order and :func:`backward`
walks it in reverse, accumulating gradients in a fixed sequence.
"""

import itertools

import numpy as np

from .exceptions import ShapeError

_ids = itertools.count()


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "parents", "vjp", "op", "id")

    def __init__(self, value, requires_grad=False, dtype=None):
        self.value = np.array(value, dtype=dtype if dtype is not None else None, copy=True)
        if not np.issubdtype(self.value.dtype, np.floating):
            self.value = self.value.astype(float)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.parents = ()
        self.vjp = None
        self.op = "leaf"
        self.id = next(_ids)

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def numpy(self):
        return self.value

    def item(self):
        return self.value.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    t = Tensor.__new__(Tensor)
    arr = np.asarray(x, dtype=dtype)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(float)
    t.value = arr
    t.grad = None
    t.requires_grad = False
    t.parents = ()
    t.vjp = None
    t.op = "const"
    t.id = next(_ids)
    return t


def _node(value, op, parents, vjp):
    out = as_tensor(value)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.vjp = vjp
    return out


def _broadcast_kind(a_shape, b_shape, op):
    """Classify the allowed broadcasts: equal, scalar, row or column vector."""
    if a_shape == b_shape:
        return "same"
    if len(b_shape) == 0 or b_shape == (1,) or b_shape == (1, 1):
        return "scalar_b"
    if len(a_shape) == 0 or a_shape == (1,) or a_shape == (1, 1):
        return "scalar_a"
    if len(a_shape) == 2 and len(b_shape) == 2:
        if b_shape == (1, a_shape[1]):
            return "row_b"
        if b_shape == (a_shape[0], 1):
            return "col_b"
        if a_shape == (1, b_shape[1]):
            return "row_a"
        if a_shape == (b_shape[0], 1):
            return "col_a"
    raise ShapeError(f"{op}: incompatible shapes {a_shape} and {b_shape}")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.sum(g)
    if shape in ((1,), (1, 1)):
        return np.sum(g).reshape(shape)
    if shape[0] == 1:
        return np.sum(g, axis=0, keepdims=True)
    return np.sum(g, axis=1, keepdims=True)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_kind(a.shape, b.shape, "add")
    return _node(
        a.value + b.value, "add", (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_kind(a.shape, b.shape, "sub")
    return _node(
        a.value - b.value, "sub", (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_kind(a.shape, b.shape, "mul")
    return _node(
        a.value * b.value, "mul", (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def scale(a, c):
    """Multiply by a python constant ``c``."""
    a = as_tensor(a)
    c = float(c)
    return _node(a.value * c, "scale", (a,), lambda g: (g * c,))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _node(
        a.value @ b.value, "matmul", (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def relu(a):
    a = as_tensor(a)
    on = a.value > 0
    return _node(np.where(on, a.value, 0.0).astype(a.dtype), "relu", (a,), lambda g: (g * on,))


def softmax_columns(a, scale=1.0):
    """Column-wise softmax of ``scale * a``."""
    a = as_tensor(a)
    if a.value.ndim != 2:
        raise ShapeError(f"softmax_columns: expected a matrix, got shape {a.shape}")
    c = float(scale)
    z = c * a.value
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=0, keepdims=True)

    def vjp(g):
        return (c * y * (g - np.sum(g * y, axis=0, keepdims=True)),)

    return _node(y, "softmax_columns", (a,), vjp)


def sum(a):  # noqa: A001 - mirrors numpy naming inside the namespace
    a = as_tensor(a)
    return _node(np.sum(a.value), "sum", (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a):
    a = as_tensor(a)
    n = a.value.size
    return _node(
        np.mean(a.value), "mean", (a,),
        lambda g: (np.broadcast_to(g / n, a.shape).astype(a.dtype),),
    )


def l2_normalize_rows(a, eps=1e-12):
    """Divide each row by its norm, guarded by ``eps`` at the zero vector."""
    a = as_tensor(a)
    if a.value.ndim != 2:
        raise ShapeError(f"l2_normalize_rows: expected a matrix, got shape {a.shape}")
    raw = np.linalg.norm(a.value, axis=1, keepdims=True)
    small = raw <= eps
    n = np.where(small, eps, raw)
    y = a.value / n

    def vjp(g):
        proj = np.where(small, 0.0, np.sum(g * y, axis=1, keepdims=True))
        return ((g - y * proj) / n,)

    return _node(y, "l2_normalize_rows", (a,), vjp)


def masked_sum_of_squares(a, mask):
    """Sum over rows ``i`` with ``mask[i]`` of ``sum_j a[i, j]**2``."""
    a = as_tensor(a)
    m = np.asarray(mask, dtype=a.dtype).reshape(-1)
    if a.value.ndim != 2 or m.shape[0] != a.shape[0]:
        raise ShapeError(f"masked_sum_of_squares: shapes {a.shape} and mask {np.shape(mask)}")
    w = m[:, None]
    return _node(
        np.sum(w * a.value**2), "masked_sum_of_squares", (a,),
        lambda g: (2.0 * g * w * a.value,),
    )


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.value.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from exc
    return _node(out, "reshape", (a,), lambda g: (g.reshape(a.shape),))


def transpose(a):
    a = as_tensor(a)
    if a.value.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    return _node(a.value.T.copy(), "transpose", (a,), lambda g: (g.T,))


def group_max(a, groups, rng=None):
    """Elementwise max over ``groups`` stacked row blocks.

    ``a`` has shape (groups * n, f) with block ``g`` in rows ``g*n:(g+1)*n``;
    the result is (n, f). The gradient goes to one maximizing block per
    element. Ties go to the lowest block, or to a block drawn from ``rng``
    when given, which keeps identical inputs from receiving identical
    updates forever.
    """
    a = as_tensor(a)
    rows = a.shape[0] if a.value.ndim == 2 else -1
    if a.value.ndim != 2 or groups < 1 or rows % groups:
        raise ShapeError(f"group_max: cannot split shape {a.shape} into {groups} groups")
    n, f = rows // groups, a.shape[1]
    x = a.value.reshape(groups, n, f)
    if rng is None or groups == 1:
        arg = np.argmax(x, axis=0)
    else:
        top = x.max(axis=0, keepdims=True)
        score = np.where(x == top, rng.random(x.shape), -1.0)
        arg = np.argmax(score, axis=0)
    out = np.take_along_axis(x, arg[None], axis=0)[0]

    def vjp(g):
        gx = np.zeros_like(x)
        np.put_along_axis(gx, arg[None], g[None], axis=0)
        return (gx.reshape(a.shape),)

    return _node(out, "group_max", (a,), vjp)


def tape(loss):
    """Nodes reachable from ``loss`` in creation (topological) order."""
    seen = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t.id in seen:
            continue
        seen[t.id] = t
        stack.extend(t.parents)
    return [seen[i] for i in sorted(seen)]


def backward(loss, leaves=()):
    """Fill ``.grad`` of every grad-requiring leaf that ``loss`` depends on.

    Leaves listed in ``leaves`` are reset to zero first, so parameters that do
    not take part in the graph end up with an all-zero gradient.
    """
    if loss.value.size != 1 or loss.value.ndim > 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    for leaf in leaves:
        leaf.grad = np.zeros_like(leaf.value)
    nodes = tape(loss)
    grads = {loss.id: np.ones_like(loss.value)}
    for node in reversed(nodes):
        g = grads.pop(node.id, None)
        if g is None or not node.requires_grad:
            continue
        if node.vjp is None:
            node.grad = np.array(g, dtype=node.dtype)
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=parent.dtype)
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + pg
            else:
                grads[parent.id] = pg


def adam_step(params, grads, state, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update with bias correction.

    ``params`` and ``grads`` are matching lists of arrays; ``state`` is a dict
    (initially empty) that keeps the step count and both moment estimates.
    Returns ``state``.
    """
    if not state:
        state["t"] = 0
        state["m"] = [np.zeros_like(p) for p in params]
        state["v"] = [np.zeros_like(p) for p in params]
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if p.shape != g.shape:
            raise ShapeError(f"adam_step: parameter {p.shape} vs gradient {g.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
    return state


class Adam:
    """Adam over a fixed list of parameter tensors."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = {}

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.value) for p in self.params]
        adam_step([p.value for p in self.params], grads, self.state,
                  self.lr, self.beta1, self.beta2, self.eps)
