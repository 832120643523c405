"""The tensor-valued distribution contract shared by every distribution.

A distribution carries three fixed properties: ``dtype``, ``batch_shape`` and
``event_shape``. Drawing with ``sample_shape`` S yields a tensor of shape
``S + batch_shape + event_shape`` and ``log_prob`` maps such a tensor to shape
``S + batch_shape``.

Parameters are stored exactly as given and converted on every use, so a
parameter backed by a mutable variable is read when it is needed, not when the
distribution is built.
"""

from __future__ import annotations

import math

import numpy as np

from jointdist import tensor as T
from jointdist.errors import DomainError, ShapeError
from jointdist.random import as_stream
from jointdist.tensor import REAL, Shape, Tensor


class Distribution:
    """Base class. Subclasses define ``_batch_shape``, ``_event_shape``,
    ``_sample`` and ``_log_prob``; moments are optional."""

    dtype = REAL
    reparameterized = False

    def __init__(self, parameters, name=None):
        self._parameters = dict(parameters)
        self.name = name or type(self).__name__

    # --- parameters --------------------------------------------------------

    @property
    def parameters(self):
        return dict(self._parameters)

    def _param(self, name):
        return T.as_tensor(self._parameters[name], REAL)

    def _check_positive(self, name, t=None):
        t = self._param(name) if t is None else t
        v = t.payload
        bad = ~(v > 0)
        if np.any(bad):
            index = np.unravel_index(int(np.argmax(bad)), bad.shape)
            raise DomainError(self.name, f"parameter {name} must be positive (got {v[index]!r})", index)
        return t

    # --- shapes ------------------------------------------------------------

    @property
    def batch_shape(self):
        return Shape(self._batch_shape())

    @property
    def event_shape(self):
        return Shape(self._event_shape())

    def _event_shape(self):
        return ()

    # --- sampling and density ---------------------------------------------

    def sample(self, sample_shape=(), seed=None):
        """Draw ``sample_shape`` i.i.d. values; ``seed`` is an int or a stream."""
        return self._sample(Shape(sample_shape), as_stream(seed))

    def log_prob(self, x):
        x = T.as_tensor(x)
        self._check_value_shape(x)
        return self._log_prob(x)

    def _check_value_shape(self, x):
        event = tuple(self.event_shape)
        shape = tuple(x.shape)
        k = len(event)
        if len(shape) < k or (k and shape[-k:] != event):
            raise ShapeError(
                f"{self.name}: value of shape {list(shape)} does not end in event shape {list(event)}"
            )
        try:
            T.broadcast_shapes(shape[: len(shape) - k], self.batch_shape)
        except ShapeError as e:
            raise ShapeError(
                f"{self.name}: value of shape {list(shape)} does not broadcast "
                f"with batch shape {list(self.batch_shape)}"
            ) from e

    def prob(self, x):
        return T.exp(self.log_prob(x))

    def mean(self):
        raise NotImplementedError(f"{self.name} has no analytic mean")

    def stddev(self):
        raise NotImplementedError(f"{self.name} has no analytic stddev")

    def entropy(self):
        raise NotImplementedError(f"{self.name} has no analytic entropy")

    # --- variables ---------------------------------------------------------

    @property
    def trainable_variables(self):
        found = []
        for raw in self._parameters.values():
            found.extend(collect_variables(raw))
        return unique_variables(found)

    def __repr__(self):
        try:
            b, e = list(self.batch_shape), list(self.event_shape)
        except Exception:  # repr must not fail on bad parameters
            b = e = "?"
        return f"{self.name}(batch_shape={b}, event_shape={e}, dtype={self.dtype})"


# --- variable discovery --------------------------------------------------


def collect_variables(raw):
    """Trainable variables reachable from one parameter, in discovery order."""
    if isinstance(raw, Distribution):
        return list(raw.trainable_variables)
    hook = getattr(raw, "_collect_variables", None)
    if hook is not None:
        return list(hook())
    if isinstance(raw, Tensor):
        return _graph_variables(raw)
    return []


def _graph_variables(t):
    found, seen, stack = [], set(), [t]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node.variable is not None and getattr(node.variable, "trainable", False):
            found.append(node.variable)
        stack.extend(reversed(node._parents))
    return found


def unique_variables(variables):
    """Deduplicate by identity, keeping first occurrences; names must be unique."""
    out, names = [], {}
    for v in variables:
        if any(v is u for u in out):
            continue
        other = names.get(v.name)
        if other is not None:
            raise ValueError(f"two distinct variables share the name {v.name!r}")
        names[v.name] = v
        out.append(v)
    return out


# --- sampling layout -----------------------------------------------------


class Layout:
    """Where one draw's elements live and which random coordinates they use.

    ``shape`` is the per-world user shape of the elements being drawn. With a
    batched stream every world gets its own key and the payload gains a
    leading axis of size ``n``; element indices restart in every world, which
    is what makes world ``i`` reproduce a single-world draw exactly.
    """

    def __init__(self, stream, shape, params=()):
        shape = tuple(shape)
        key = stream.next_key()
        n = None
        for p in params:
            if p.batched:
                if not stream.batched:
                    raise ValueError("batched parameters need a batched random stream")
                n = p.batch_size
        if stream.batched:
            if n is not None and n != stream.batch_size:
                raise ShapeError(f"parameter batch {n} differs from stream batch {stream.batch_size}")
            n = stream.batch_size
        self.n = n
        self.shape = shape
        self.batched = stream.batched
        self.payload_shape = ((n,) if self.batched else ()) + shape
        size = math.prod(shape)
        index = np.arange(size, dtype=np.uint64).reshape(shape)
        if self.batched:
            keys = np.broadcast_to(key.reshape((n,) + (1,) * len(shape)), self.payload_shape)
        else:
            keys = np.broadcast_to(key, shape)
        self.keys = np.ascontiguousarray(keys).reshape(-1)
        self.index = np.ascontiguousarray(np.broadcast_to(index, self.payload_shape)).reshape(-1)

    def align(self, t, trailing=()):
        """Broadcast parameter ``t`` to ``payload_shape + trailing`` as an array."""
        target = self.payload_shape + tuple(trailing)
        v = t.payload
        if t.batched:
            user = tuple(t.shape)
            rank = len(self.shape) + len(trailing)
            v = v.reshape((v.shape[0],) + (1,) * (rank - len(user)) + user)
        return np.broadcast_to(v, target)

    def flat(self, t, trailing=()):
        k = math.prod(trailing)
        a = self.align(t, trailing)
        return np.ascontiguousarray(a).reshape((-1, k) if trailing else (-1,))

    def wrap(self, flat, trailing=(), dtype=None):
        arr = np.asarray(flat).reshape(self.payload_shape + tuple(trailing))
        if dtype is not None:
            arr = arr.astype(dtype)
        return Tensor._wrap(arr, self.batched, "sample")


def param_shapes(*items):
    """Broadcast shape of tensors (or shapes)."""
    return T.broadcast_shapes(*(t.shape if isinstance(t, Tensor) else t for t in items))


def safe_where(valid, value, fallback):
    """``value`` where ``valid`` else ``fallback`` (a constant)."""
    return T.where(valid, value, T.Tensor(fallback))
