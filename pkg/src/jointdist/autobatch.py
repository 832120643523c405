"""Vectorized execution of joint distributions.

Two modes are offered:

* Manual: ``jd.sample([n])`` runs the model once with vectorized root draws.
  The model body must be written so every op broadcasts over the extra
  leading axis; :func:`vectorized_sample` checks that it did.
* Automatic: :class:`AutoBatched` runs the model body as written for a single
  world while every tensor carries a hidden leading axis of worlds. Tensor ops
  dispatch on that axis, so slicing, reductions and matmuls address only the
  per-world dimensions.
"""

from __future__ import annotations

import numpy as np

from jointdist import structure as nest
from jointdist import tensor as T
from jointdist.distributions.base import Distribution
from jointdist.distributions.meta import Independent, Sample
from jointdist.errors import ShapeError, UnsupportedOpError, VectorizationError
from jointdist.joint import JointDistribution
from jointdist.random import BatchedStream, as_stream, fold_in
from jointdist.tensor import Shape, Tensor


def BatchedTensor(payload, dtype=None):
    """A tensor whose leading axis of ``payload`` indexes worlds."""
    return Tensor(payload, dtype, batched=True)


def unbatch(t):
    """Expose the hidden axis as an ordinary leading dimension (gradients pass through)."""
    t = T.as_tensor(t)
    if not t.batched:
        return t
    return T._record(t.payload, False, "unbatch", (t,), lambda g: (g,))


def batch(t):
    """Hide the leading dimension of ``t`` as the world axis."""
    t = T.as_tensor(t)
    if t.batched:
        raise ShapeError("tensor is already batched")
    if t.ndim == 0:
        raise ShapeError("a scalar has no axis to hide")
    return T._record(t.payload, True, "batch", (t,), lambda g: (g,))


LIFTABLE = dict(T.ELEMENTWISE)
LIFTABLE.update(
    {
        "matmul": T.matmul,
        "reduce_sum": T.reduce_sum,
        "slice_index": T.slice_index,
        "reshape": T.reshape,
        "expand_dims": T.expand_dims,
        "transpose": T.transpose,
        "broadcast_to": T.broadcast_to,
        "where": T.where,
        "sqrt": T.sqrt,
        "power": T.power,
        "logsumexp": T.logsumexp,
        "log_softmax": T.log_softmax,
        "add_n": T.add_n,
    }
)


def lift_op(op, *args, **kwargs):
    """Apply tensor op ``op`` to batched and/or plain operands.

    Plain operands are shared by every world; batched ones carry one value per
    world. The result is batched if any operand is.
    """
    try:
        fn = LIFTABLE[op]
    except KeyError:
        raise UnsupportedOpError(f"op {op!r} cannot be lifted over a batch axis") from None
    return fn(*args, **kwargs)


def _depends_on_worlds(d):
    if isinstance(d, (Sample, Independent)):
        return _depends_on_worlds(d.distribution)
    for raw in d._parameters.values():
        if isinstance(raw, Distribution):
            if _depends_on_worlds(raw):
                return True
        elif T.as_tensor(raw).batched:
            return True
    return False


class AutoBatched(Distribution):
    """Wrap a joint distribution so it runs once per world, vectorized.

    ``batch_shape`` is a single global shape (empty here: one joint
    distribution) and ``event_shape`` holds each leaf's full per-world shape,
    so ``log_prob`` returns one scalar per world with no ``Independent``
    bookkeeping. Root nodes need no annotation: every draw happens once per
    world.
    """

    def __init__(self, jd, name=None):
        if not isinstance(jd, JointDistribution):
            raise TypeError("AutoBatched wraps a JointDistribution")
        super().__init__({}, name or f"AutoBatched{jd.name}")
        self.jd = jd

    @property
    def dtype(self):
        return self.jd.dtype

    @property
    def batch_shape(self):
        return Shape(())

    @property
    def event_shape(self):
        return nest.map_structure(lambda b, e: b + e, self.jd.batch_shape, self.jd.event_shape)

    @property
    def trainable_variables(self):
        return self.jd.trainable_variables

    @property
    def root_flags(self):
        """Per leaf: True when its distribution does not depend on other nodes.

        Computed by running two worlds and checking which node distributions
        received world-dependent parameters.
        """
        stream = BatchedStream(fold_in(np.uint64(0), np.arange(2, dtype=np.uint64)))
        ds, _, nodes = self.jd._run(Shape(()), None, stream, "value")
        joined = self.jd.model.join(ds, tuple(n.name for n in nodes))
        return nest.map_structure(lambda d: not _depends_on_worlds(d), joined)

    # --- sampling -----------------------------------------------------------

    def sample(self, sample_shape=(), seed=None):
        """Draw ``sample_shape`` independent worlds; leaves gain those leading dims."""
        sample_shape = Shape(sample_shape)
        n = sample_shape.num_elements
        if n == 0:
            raise ShapeError("sample_shape must have at least one element")
        stream = as_stream(seed)
        if stream.batched:
            raise ValueError("AutoBatched.sample takes an int seed or a RandomStream")
        _, xs, nodes = self.jd._run(Shape(()), None, stream.split(n), "value")
        joined = self.jd.model.join(xs, tuple(n_.name for n_ in nodes))
        return nest.map_structure(lambda x: _unfold(x, sample_shape), joined)

    def _sample(self, sample_shape, stream):
        return self.sample(sample_shape, stream)

    # --- density -----------------------------------------------------------

    def _check_value_shape(self, x):
        return None

    def log_prob(self, x):
        """One joint log density per world, shaped like the value's leading dims."""
        template = self.jd.dtype
        events = nest.flatten(self.event_shape)
        leaves = [T.as_tensor(v) for v in nest.flatten_up_to(template, x)]
        paths = nest.leaf_paths(template, "value")
        lead = None
        for leaf, event, path in zip(leaves, events, paths):
            if leaf.batched:
                raise ShapeError(f"{path}: pass plain tensors with explicit leading dims")
            k = len(event)
            shape = tuple(leaf.shape)
            if len(shape) < k or tuple(shape[len(shape) - k :]) != tuple(event):
                raise ShapeError(
                    f"{path}: shape {list(shape)} does not end in event shape {list(event)}"
                )
            this = shape[: len(shape) - k]
            if lead is None:
                lead = this
            elif this != lead:
                raise ShapeError(
                    f"{path}: leading dims {list(this)} differ from {list(lead)} of other leaves"
                )
        lead = Shape(lead or ())
        if not leaves or not lead:
            return self._world_log_prob(x)
        n = lead.num_elements
        worlds = [
            batch(T.reshape(leaf, (n,) + tuple(event))) for leaf, event in zip(leaves, events)
        ]
        lp = self._world_log_prob(nest.unflatten(template, worlds))
        return T.reshape(unbatch(lp), tuple(lead))

    def _world_log_prob(self, x):
        node_values = self.jd._split(x)
        ds, xs, nodes = self.jd._run(Shape(()), node_values, None, "value")
        self.jd._check_signature(nodes)
        parts = [
            T.reduce_sum(d.log_prob(v)) for d, v in zip(nest.flatten(ds), nest.flatten(xs))
        ]
        return T.add_n(parts)


def _unfold(x, sample_shape):
    x = unbatch(x)
    user = tuple(x.shape[1:])
    return T.reshape(x, tuple(sample_shape) + user)


def autobatched_log_prob(abjd, x):
    return abjd.log_prob(x)


def vectorized_sample(jd, n, seed):
    """``n`` independent worlds with a leading axis of size ``n`` on every leaf.

    For an :class:`AutoBatched` model this is automatic. For a plain joint
    distribution the model itself must vectorize; leaves whose shape is not
    ``[n] + single-world shape`` raise :class:`VectorizationError`.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    if isinstance(jd, AutoBatched):
        return jd.sample([n], seed)
    x = jd.sample([n], seed)
    expected = nest.map_structure(lambda b, e: Shape((n,)) + b + e, jd.batch_shape, jd.event_shape)
    for leaf, want, path in zip(
        nest.flatten(x), nest.flatten(expected), nest.leaf_paths(expected, "value")
    ):
        if tuple(leaf.shape) != tuple(want):
            raise VectorizationError(
                f"{path}: vectorized sample has shape {list(leaf.shape)}, expected {list(want)}; "
                "mark parentless nodes as roots and index event dims from the end"
            )
    return x


__all__ = [
    "AutoBatched",
    "BatchedTensor",
    "LIFTABLE",
    "autobatched_log_prob",
    "batch",
    "lift_op",
    "unbatch",
    "vectorized_sample",
]
