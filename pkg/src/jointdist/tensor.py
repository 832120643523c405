"""Immutable dense tensors with broadcasting and recorded gradients.

Every op in this module dispatches on whether its operands carry a hidden
leading batch axis (see ``Tensor.batched``). Batched operands behave, from the
caller's point of view, exactly like a single unbatched value; the payload
simply holds one such value per world. This is what lets a model written for a
single possible world run over many worlds at once.

Ops on operands that require gradients record their parents and a
vector-Jacobian product, forming the graph walked by
:func:`jointdist.autodiff.gradient`.
"""

from __future__ import annotations

import math
import numbers
import operator

import numpy as np
from scipy import special

from jointdist.errors import DomainError, DTypeError, ShapeError, UnsupportedOpError

REAL = "real64"
INT = "int64"
_NP_DTYPES = {REAL: np.dtype(np.float64), INT: np.dtype(np.int64)}


class Shape(tuple):
    """Ordered tuple of non-negative extents; the empty shape is a scalar."""

    def __new__(cls, dims=()):
        if isinstance(dims, Shape):
            return dims
        if isinstance(dims, (numbers.Integral, np.integer)):
            dims = (dims,)
        dims = tuple(operator.index(d) for d in dims)
        for d in dims:
            if d < 0:
                raise ShapeError(f"negative extent in shape {list(dims)}")
        return super().__new__(cls, dims)

    @property
    def rank(self):
        return len(self)

    @property
    def num_elements(self):
        return math.prod(self)

    def __add__(self, other):
        return Shape(tuple(self) + tuple(other))

    def __getitem__(self, item):
        out = tuple.__getitem__(self, item)
        return Shape(out) if isinstance(item, slice) else out

    def __repr__(self):
        return f"Shape({list(self)})"


def as_shape(shape):
    return Shape(shape)


def broadcast_shapes(*shapes):
    """Right-aligned broadcast of any number of shapes.

    >>> broadcast_shapes((2, 1), (3,))
    Shape([2, 3])
    """
    result = ()
    for s in shapes:
        result = _broadcast_pair(result, tuple(Shape(s)))
    return Shape(result)


def _broadcast_pair(a, b):
    rank = max(len(a), len(b))
    pa = (1,) * (rank - len(a)) + a
    pb = (1,) * (rank - len(b)) + b
    out = []
    for axis, (x, y) in enumerate(zip(pa, pb)):
        if x == y or y == 1:
            out.append(x)
        elif x == 1:
            out.append(y)
        else:
            raise ShapeError(
                f"incompatible extents {x} and {y} at axis {axis - rank} "
                f"when broadcasting {list(a)} with {list(b)}"
            )
    return tuple(out)


def _infer_np_dtype(arr):
    if arr.dtype.kind in "biu":
        return _NP_DTYPES[INT]
    if arr.dtype.kind == "f":
        return _NP_DTYPES[REAL]
    raise DTypeError(f"unsupported element type {arr.dtype}")


def _to_array(value, dtype=None):
    arr = np.asarray(value)
    if dtype is None:
        target = _infer_np_dtype(arr)
    else:
        target = _NP_DTYPES[dtype]
        if target.kind == "i" and arr.dtype.kind == "f":
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise DTypeError("refusing to truncate non-integral values to int64")
        elif arr.dtype.kind not in "biuf":
            raise DTypeError(f"unsupported element type {arr.dtype}")
    return np.array(arr, dtype=target, copy=True)


class Tensor:
    """An immutable n-dimensional array of ``real64`` or ``int64`` elements.

    Args:
      value: array-like data.
      dtype: ``"real64"`` or ``"int64"``; inferred from ``value`` when omitted
        (integers and booleans become ``int64``, floats ``real64``).
      batched: when True the leading axis of ``value`` is a hidden batch axis
        and ``shape`` reports only the remaining dimensions.
      requires_grad: mark this tensor as a differentiation source.
    """

    __slots__ = ("_value", "_batched", "requires_grad", "_parents", "_vjp", "op", "variable")
    __array_priority__ = 1000

    def __init__(self, value, dtype=None, *, batched=False, requires_grad=False):
        arr = _to_array(value, dtype)
        if batched and arr.ndim == 0:
            raise ShapeError("a batched tensor needs a leading batch axis")
        arr.flags.writeable = False
        self._value = arr
        self._batched = bool(batched)
        self.requires_grad = bool(requires_grad) and arr.dtype.kind == "f"
        self._parents = ()
        self._vjp = None
        self.op = "constant"
        self.variable = None

    @classmethod
    def _wrap(cls, arr, batched=False, op="constant"):
        t = cls.__new__(cls)
        arr = np.asarray(arr)
        if arr.dtype.kind == "b":
            arr = arr.astype(np.int64)
        if arr.flags.writeable:
            arr.flags.writeable = False
        t._value = arr
        t._batched = batched
        t.requires_grad = False
        t._parents = ()
        t._vjp = None
        t.op = op
        t.variable = None
        return t

    @property
    def dtype(self):
        return REAL if self._value.dtype.kind == "f" else INT

    @property
    def shape(self):
        return Shape(self._value.shape[1:] if self._batched else self._value.shape)

    @property
    def ndim(self):
        return self._value.ndim - (1 if self._batched else 0)

    @property
    def batched(self):
        return self._batched

    @property
    def batch_size(self):
        return self._value.shape[0] if self._batched else None

    @property
    def payload(self):
        """Read-only view of the underlying array, hidden batch axis included."""
        return self._value

    def numpy(self):
        return np.array(self._value)

    def item(self):
        if self._batched or self._value.size != 1:
            raise ShapeError(f"item() needs a single element, shape is {list(self.shape)}")
        return self._value.item()

    def __float__(self):
        return float(self.item())

    def __int__(self):
        return int(self.item())

    def __len__(self):
        if not self.shape:
            raise TypeError("len() of a scalar tensor")
        return self.shape[0]

    def __repr__(self):
        tag = f", batch={self.batch_size}" if self._batched else ""
        return f"Tensor(shape={list(self.shape)}, dtype={self.dtype}{tag}, value={np.array2string(self._value, precision=8)})"

    __hash__ = object.__hash__

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_index(self, index)

    def __lt__(self, other):
        return less(self, other)

    def __le__(self, other):
        return less_equal(self, other)

    def __gt__(self, other):
        return greater(self, other)

    def __ge__(self, other):
        return greater_equal(self, other)


def is_tensor_like(x):
    return isinstance(x, Tensor) or hasattr(x, "_as_tensor")


def as_tensor(value, dtype=None):
    """Convert ``value`` to a Tensor, reading deferred values at call time.

    Tensors pass through unchanged except for an explicit ``int64 -> real64``
    widening when ``dtype="real64"`` is requested. Objects exposing
    ``_as_tensor()`` (variables, deferred tensors) are read now.
    """
    if isinstance(value, Tensor):
        t = value
    elif hasattr(value, "_as_tensor"):
        t = value._as_tensor()
    else:
        return Tensor(value, dtype)
    if dtype is not None and t.dtype != dtype:
        if dtype == REAL:
            return cast(t, REAL)
        raise DTypeError(f"expected {dtype} tensor, got {t.dtype}")
    return t


def constant(value, dtype=None):
    return Tensor(value, dtype)


# --- graph recording -----------------------------------------------------


def _record(arr, batched, op, parents, vjp):
    out = Tensor._wrap(arr, batched, op)
    if out._value.dtype.kind == "f" and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _batch_size(tensors):
    size = None
    for t in tensors:
        if t._batched:
            if size is None:
                size = t._value.shape[0]
            elif size != t._value.shape[0]:
                raise ShapeError(f"batch sizes {size} and {t._value.shape[0]} differ")
    return size


def _aligned(tensors):
    """Payload arrays laid out so numpy broadcasting matches user semantics.

    Batched payloads get singleton axes inserted after the batch axis so that
    every operand's user dimensions are right-aligned; plain payloads already
    broadcast correctly against ``(N, *user_dims)``.
    """
    n = _batch_size(tensors)
    if n is None:
        return [t._value for t in tensors], False
    rank = max(t.ndim for t in tensors)
    out = []
    for t in tensors:
        v = t._value
        if t._batched and t.ndim < rank:
            v = v.reshape((n,) + (1,) * (rank - t.ndim) + v.shape[1:])
        out.append(v)
    return out, True


def _sum_to(g, t):
    """Reduce an adjoint computed at a broadcast shape back to ``t``'s payload."""
    if t._batched:
        target = (g.shape[0],) + (1,) * (g.ndim - 1 - t.ndim) + tuple(t.shape)
    else:
        target = t._value.shape
    while g.ndim > len(target):
        g = g.sum(axis=0)
    axes = tuple(i for i, (gd, td) in enumerate(zip(g.shape, target)) if td == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(t._value.shape)


def _user_axes(t, axes):
    """Normalize user axes of ``t`` to sorted payload axes."""
    rank = t.ndim
    if axes is None:
        user = tuple(range(rank))
    else:
        if isinstance(axes, (numbers.Integral, np.integer)):
            axes = (axes,)
        user = []
        for a in axes:
            a = operator.index(a)
            if not -rank <= a < rank:
                raise ShapeError(f"axis {a} out of range for rank {rank}")
            user.append(a % rank)
        if len(set(user)) != len(user):
            raise ShapeError(f"repeated axis in {list(axes)}")
        user = tuple(sorted(user))
    offset = 1 if t._batched else 0
    return user, tuple(a + offset for a in user)


# --- operand coercion ----------------------------------------------------


def _coerce_pair(a, b):
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    if ta and not tb and not hasattr(b, "_as_tensor") and isinstance(b, numbers.Number):
        b = Tensor(b, a.dtype)
    elif tb and not ta and not hasattr(a, "_as_tensor") and isinstance(a, numbers.Number):
        a = Tensor(a, b.dtype)
    a, b = as_tensor(a), as_tensor(b)
    if a.dtype != b.dtype:
        raise DTypeError(
            f"mixed dtypes {a.dtype} and {b.dtype}; widen explicitly with cast(x, 'real64')"
        )
    return a, b


def _require_real(op, *tensors):
    for t in tensors:
        if t.dtype != REAL:
            raise DTypeError(f"{op} requires real64 operands, got {t.dtype}")


def _check_domain(op, arr, bad, message):
    if np.any(bad):
        index = np.unravel_index(int(np.argmax(bad)), bad.shape)
        raise DomainError(op, f"{message} (got {arr[index]!r})", index)


# --- elementwise ops -----------------------------------------------------


def _binary(op, a, b, fn, grad_a, grad_b, real_only=False):
    a, b = _coerce_pair(a, b)
    if real_only:
        _require_real(op, a, b)
    broadcast_shapes(a.shape, b.shape)
    (av, bv), batched = _aligned([a, b])
    out = fn(av, bv)

    def vjp(g):
        ga = _sum_to(grad_a(g, av, bv, out), a) if a.requires_grad else None
        gb = _sum_to(grad_b(g, av, bv, out), b) if b.requires_grad else None
        return ga, gb

    return _record(out, batched, op, (a, b), vjp)


def add(a, b):
    return _binary("add", a, b, np.add, lambda g, x, y, o: g, lambda g, x, y, o: g)


def sub(a, b):
    return _binary("sub", a, b, np.subtract, lambda g, x, y, o: g, lambda g, x, y, o: -g)


def mul(a, b):
    return _binary(
        "mul", a, b, np.multiply, lambda g, x, y, o: g * y, lambda g, x, y, o: g * x
    )


def div(a, b):
    return _binary(
        "div",
        a,
        b,
        np.divide,
        lambda g, x, y, o: g / y,
        lambda g, x, y, o: -g * o / y,
        real_only=True,
    )


def _unary(op, x, fn, grad, real_only=True, domain=None):
    x = as_tensor(x)
    if real_only:
        _require_real(op, x)
    v = x._value
    if domain is not None:
        bad, message = domain(v)
        _check_domain(op, v, bad, message)
    out = fn(v)

    def vjp(g):
        return (grad(g, v, out),)

    return _record(out, x._batched, op, (x,), vjp)


def neg(x):
    return _unary("neg", x, np.negative, lambda g, v, o: -g, real_only=False)


def _positive(v):
    return ~(v > 0), "argument must be positive"


def log(x):
    return _unary("log", x, np.log, lambda g, v, o: g / v, domain=_positive)


def exp(x):
    return _unary("exp", x, np.exp, lambda g, v, o: g * o)


def square(x):
    return _unary("square", x, np.square, lambda g, v, o: 2.0 * g * v, real_only=False)


def sqrt(x):
    return _unary(
        "sqrt",
        x,
        np.sqrt,
        lambda g, v, o: g / (2.0 * o),
        domain=lambda v: (~(v >= 0), "argument must be non-negative"),
    )


def _softplus(v):
    return np.logaddexp(0.0, v)


def _sigmoid(v):
    return special.expit(v)


def softplus(x):
    return _unary("softplus", x, _softplus, lambda g, v, o: g * _sigmoid(v))


def sigmoid(x):
    return _unary("sigmoid", x, _sigmoid, lambda g, v, o: g * o * (1.0 - o))


def lgamma(x):
    return _unary(
        "lgamma", x, special.gammaln, lambda g, v, o: g * special.psi(v), domain=_positive
    )


def digamma(x):
    return _unary(
        "digamma",
        x,
        special.psi,
        lambda g, v, o: g * special.polygamma(1, v),
        domain=_positive,
    )


def power(x, exponent):
    """``x ** exponent`` for a constant Python exponent."""
    if not isinstance(exponent, numbers.Real):
        raise DTypeError("power() takes a constant numeric exponent")
    if exponent == 2:
        return square(x)
    p = float(exponent)
    return _unary("power", x, lambda v: np.power(v, p), lambda g, v, o: g * p * np.power(v, p - 1.0))


def round_(x):
    """Round half to even; piecewise constant, so no gradient is recorded."""
    x = as_tensor(x)
    return Tensor._wrap(np.round(x._value), x._batched, "round")


def floor(x):
    x = as_tensor(x)
    return Tensor._wrap(np.floor(x._value), x._batched, "floor")


def stop_gradient(x):
    x = as_tensor(x)
    return Tensor._wrap(x._value, x._batched, "stop_gradient")


def cast(x, dtype):
    """Explicit dtype conversion. Narrowing to int64 requires integral values."""
    x = as_tensor(x)
    if x.dtype == dtype:
        return x
    if dtype == REAL:
        return Tensor._wrap(x._value.astype(np.float64), x._batched, "cast")
    v = x._value
    if not np.all(np.isfinite(v)) or np.any(v != np.round(v)):
        raise DTypeError("cast to int64 needs integral values; round first")
    return Tensor._wrap(v.astype(np.int64), x._batched, "cast")


def _compare(op, fn):
    def compare(a, b):
        a, b = _coerce_pair(a, b)
        broadcast_shapes(a.shape, b.shape)
        (av, bv), batched = _aligned([a, b])
        return Tensor._wrap(fn(av, bv).astype(np.int64), batched, op)

    compare.__name__ = op
    return compare


less = _compare("less", np.less)
less_equal = _compare("less_equal", np.less_equal)
greater = _compare("greater", np.greater)
greater_equal = _compare("greater_equal", np.greater_equal)
equal = _compare("equal", np.equal)
not_equal = _compare("not_equal", np.not_equal)


def logical_and(a, b):
    a, b = as_tensor(a), as_tensor(b)
    (av, bv), batched = _aligned([a, b])
    return Tensor._wrap(((av != 0) & (bv != 0)).astype(np.int64), batched, "logical_and")


def where(condition, x, y):
    """Select ``x`` where ``condition`` is nonzero, else ``y``."""
    c = as_tensor(condition)
    x, y = _coerce_pair(x, y)
    broadcast_shapes(c.shape, x.shape, y.shape)
    (cv, xv, yv), batched = _aligned([c, x, y])
    mask = cv != 0
    out = np.where(mask, xv, yv)

    def vjp(g):
        return (
            None,
            _sum_to(np.where(mask, g, 0.0), x) if x.requires_grad else None,
            _sum_to(np.where(mask, 0.0, g), y) if y.requires_grad else None,
        )

    return _record(out, batched, "where", (c, x, y), vjp)


# --- reductions ----------------------------------------------------------


def _sum_last(arr, axes):
    """Sum ``axes`` by moving them last and flattening them into one axis.

    The element order of the flattened axis is independent of any leading
    batch axis, so per-world results are bit-identical to single-world ones.
    """
    if not axes:
        return arr
    keep = [a for a in range(arr.ndim) if a not in axes]
    moved = np.transpose(arr, keep + list(axes))
    lead = moved.shape[: len(keep)]
    flat = np.ascontiguousarray(moved).reshape(lead + (-1,))
    return flat.sum(axis=-1)


def reduce_sum(x, axes=None, keepdims=False):
    """Sum over the given user axes (all when ``axes`` is None)."""
    x = as_tensor(x)
    _, paxes = _user_axes(x, axes)
    v = x._value
    out = _sum_last(v, paxes)
    if keepdims:
        out = out.reshape(tuple(1 if i in paxes else d for i, d in enumerate(v.shape)))

    def vjp(g):
        expanded = g.reshape(tuple(1 if i in paxes else d for i, d in enumerate(v.shape)))
        return (np.broadcast_to(expanded, v.shape),)

    return _record(out, x._batched, "reduce_sum", (x,), vjp)


def reduce_max(x, axes=None, keepdims=False):
    """Maximum over user axes. Treated as a constant by differentiation."""
    x = as_tensor(x)
    _, paxes = _user_axes(x, axes)
    v = x._value
    out = np.max(v, axis=paxes, keepdims=keepdims) if paxes else v
    return Tensor._wrap(out, x._batched, "reduce_max")


def logsumexp(x, axis=-1, keepdims=False):
    x = as_tensor(x)
    m = reduce_max(x, axis, keepdims=True)
    m = where(equal(m, -np.inf), 0.0, m)
    total = reduce_sum(exp(x - m), axis, keepdims=True)
    # An all -inf slice sums to zero; its logsumexp is -inf.
    empty = equal(total, 0.0)
    s = where(empty, -np.inf, log(where(empty, 1.0, total))) + m
    if not keepdims:
        user, _ = _user_axes(x, axis)
        s = reshape(s, tuple(d for i, d in enumerate(x.shape) if i not in user))
    return s


def log_softmax(x, axis=-1):
    return x - logsumexp(x, axis, keepdims=True)


# --- structural ops ------------------------------------------------------


def matmul(a, b, adjoint_a=False, adjoint_b=False):
    """Matrix product over the two innermost dims, broadcasting leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    _require_real("matmul", a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs operands of rank >= 2")
    am, ak = (a.shape[-1], a.shape[-2]) if adjoint_a else (a.shape[-2], a.shape[-1])
    bk, bn = (b.shape[-1], b.shape[-2]) if adjoint_b else (b.shape[-2], b.shape[-1])
    if ak != bk:
        raise ShapeError(
            f"matmul contraction mismatch: {ak} vs {bk} "
            f"(shapes {list(a.shape)}, {list(b.shape)}, adjoint_a={adjoint_a}, adjoint_b={adjoint_b})"
        )
    broadcast_shapes(a.shape[:-2], b.shape[:-2])
    (av, bv), batched = _aligned([a, b])
    at = np.swapaxes(av, -1, -2) if adjoint_a else av
    bt = np.swapaxes(bv, -1, -2) if adjoint_b else bv
    out = np.matmul(at, bt)

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(bt, -1, -2))
            if adjoint_a:
                ga = np.swapaxes(ga, -1, -2)
            ga = _sum_to(ga, a)
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(at, -1, -2), g)
            if adjoint_b:
                gb = np.swapaxes(gb, -1, -2)
            gb = _sum_to(gb, b)
        return ga, gb

    return _record(out, batched, "matmul", (a, b), vjp)


def _is_advanced(item):
    return isinstance(item, (list, np.ndarray, Tensor)) or (
        hasattr(item, "__array__") and not isinstance(item, (numbers.Integral, np.integer))
    )


def slice_index(x, index):
    """Basic indexing on user-visible dims.

    ``Ellipsis`` addresses dims from the end of the rank, so ``x[..., :2]``
    slices the last axis whatever leading sample or batch dims are present.
    """
    x = as_tensor(x)
    if not isinstance(index, tuple):
        index = (index,)
    index = tuple(i._value if isinstance(i, Tensor) else i for i in index)
    if x._batched:
        if any(_is_advanced(i) for i in index):
            raise UnsupportedOpError("array indices cannot be lifted over a batch axis")
        pindex = (slice(None),) + index
    else:
        pindex = index
    v = x._value
    out = v[pindex]

    def vjp(g):
        full = np.zeros(v.shape, dtype=g.dtype)
        np.add.at(full, pindex, g)
        return (full,)

    return _record(np.array(out), x._batched, "slice", (x,), vjp)


def reshape(x, shape):
    x = as_tensor(x)
    shape = tuple(int(d) for d in shape)
    v = x._value
    try:
        out = v.reshape(((v.shape[0],) if x._batched else ()) + shape)
    except ValueError as e:
        raise ShapeError(f"cannot reshape {list(x.shape)} to {list(shape)}") from e

    def vjp(g):
        return (g.reshape(v.shape),)

    return _record(out, x._batched, "reshape", (x,), vjp)


def expand_dims(x, axis):
    x = as_tensor(x)
    rank = x.ndim + 1
    if not -rank <= axis < rank:
        raise ShapeError(f"axis {axis} out of range for rank {rank}")
    axis %= rank
    shape = list(x.shape)
    shape.insert(axis, 1)
    return reshape(x, shape)


def broadcast_to(x, shape):
    x = as_tensor(x)
    shape = Shape(shape)
    if broadcast_shapes(x.shape, shape) != shape:
        raise ShapeError(f"cannot broadcast {list(x.shape)} to {list(shape)}")
    (v,), batched = _aligned([x])
    if batched:
        v = v.reshape((v.shape[0],) + (1,) * (len(shape) - x.ndim) + tuple(x.shape))
        target = (v.shape[0],) + tuple(shape)
    else:
        target = tuple(shape)
    out = np.broadcast_to(v, target)

    def vjp(g):
        return (_sum_to(g, x),)

    return _record(out, batched, "broadcast_to", (x,), vjp)


def transpose(x, perm):
    x = as_tensor(x)
    perm = tuple(operator.index(p) for p in perm)
    if sorted(perm) != list(range(x.ndim)):
        raise ShapeError(f"{list(perm)} is not a permutation of rank {x.ndim}")
    pperm = (0,) + tuple(p + 1 for p in perm) if x._batched else perm
    inverse = tuple(np.argsort(pperm))
    out = np.transpose(x._value, pperm)

    def vjp(g):
        return (np.transpose(g, inverse),)

    return _record(out, x._batched, "transpose", (x,), vjp)


def add_n(tensors):
    """Left-to-right sum; the fixed order keeps results reproducible."""
    tensors = list(tensors)
    if not tensors:
        return Tensor(0.0)
    total = as_tensor(tensors[0])
    for t in tensors[1:]:
        total = add(total, t)
    return total


ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "log": log,
    "exp": exp,
    "square": square,
    "softplus": softplus,
    "sigmoid": sigmoid,
    "lgamma": lgamma,
    "digamma": digamma,
}


def elementwise(op, *args):
    """Apply a named elementwise op from the core vocabulary."""
    try:
        fn = ELEMENTWISE[op]
    except KeyError:
        raise UnsupportedOpError(f"unknown elementwise op {op!r}") from None
    return fn(*args)
