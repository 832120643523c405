"""Distributions built from other distributions: Sample and Independent."""

from __future__ import annotations

import math

from jointdist import tensor as T
from jointdist.distributions.base import Distribution
from jointdist.errors import ShapeError
from jointdist.tensor import Shape


class Sample(Distribution):
    """An i.i.d. block of draws from ``distribution`` treated as one event.

    The block dims sit between the inner batch dims and the inner event dims:
    ``event_shape = sample_shape + inner.event_shape``.
    """

    def __init__(self, distribution, sample_shape=(), name=None):
        super().__init__({"distribution": distribution}, name or f"Sample{distribution.name}")
        self.distribution = distribution
        self.extra_shape = Shape(sample_shape)

    @property
    def dtype(self):
        return self.distribution.dtype

    @property
    def reparameterized(self):
        return self.distribution.reparameterized

    def _batch_shape(self):
        return self.distribution.batch_shape

    def _event_shape(self):
        return self.extra_shape + self.distribution.event_shape

    def _sample(self, sample_shape, stream):
        s, e = len(sample_shape), len(self.extra_shape)
        b = len(self.distribution.batch_shape)
        ev = len(self.distribution.event_shape)
        x = self.distribution._sample(Shape(sample_shape) + self.extra_shape, stream)
        # [S, E, B, ev] -> [S, B, E, ev]
        perm = (
            list(range(s))
            + list(range(s + e, s + e + b))
            + list(range(s, s + e))
            + list(range(s + e + b, s + e + b + ev))
        )
        return T.transpose(x, perm)

    def _log_prob(self, x):
        e = len(self.extra_shape)
        ev = len(self.distribution.event_shape)
        b = len(self.distribution.batch_shape)
        lead = x.ndim - e - ev
        if lead < b:
            x = T.reshape(x, (1,) * (b - lead) + tuple(x.shape))
            lead = b
        # [lead, E, ev] -> [E, lead, ev]
        perm = list(range(lead, lead + e)) + list(range(lead)) + list(range(lead + e, x.ndim))
        lp = self.distribution.log_prob(T.transpose(x, perm))
        return T.reduce_sum(lp, list(range(e))) if e else lp

    def mean(self):
        return self._tile(self.distribution.mean())

    def stddev(self):
        return self._tile(self.distribution.stddev())

    def _tile(self, m):
        b = len(self.distribution.batch_shape)
        e = len(self.extra_shape)
        m = T.reshape(m, tuple(m.shape[:b]) + (1,) * e + tuple(m.shape[b:]))
        return T.broadcast_to(m, self.batch_shape + self.event_shape)

    def entropy(self):
        return self.distribution.entropy() * float(math.prod(self.extra_shape))

    @property
    def trainable_variables(self):
        return self.distribution.trainable_variables


class Independent(Distribution):
    """Reinterprets the rightmost ``reinterpreted_batch_ndims`` batch dims as event dims."""

    def __init__(self, distribution, reinterpreted_batch_ndims, name=None):
        super().__init__({"distribution": distribution}, name or f"Independent{distribution.name}")
        r = int(reinterpreted_batch_ndims)
        if r < 0:
            raise ValueError("reinterpreted_batch_ndims must be non-negative")
        self.distribution = distribution
        self.reinterpreted_batch_ndims = r

    @property
    def dtype(self):
        return self.distribution.dtype

    @property
    def reparameterized(self):
        return self.distribution.reparameterized

    def _split(self):
        inner = self.distribution.batch_shape
        r = self.reinterpreted_batch_ndims
        if r > len(inner):
            raise ShapeError(
                f"cannot reinterpret {r} batch dims of batch shape {list(inner)}"
            )
        return inner[: len(inner) - r], inner[len(inner) - r :]

    def _batch_shape(self):
        return self._split()[0]

    def _event_shape(self):
        return self._split()[1] + self.distribution.event_shape

    def _sample(self, sample_shape, stream):
        self._split()
        return self.distribution._sample(sample_shape, stream)

    def _reduce(self, t):
        r = self.reinterpreted_batch_ndims
        return T.reduce_sum(t, list(range(-r, 0))) if r else t

    def _log_prob(self, x):
        return self._reduce(self.distribution.log_prob(x))

    def mean(self):
        return self.distribution.mean()

    def stddev(self):
        return self.distribution.stddev()

    def entropy(self):
        return self._reduce(self.distribution.entropy())

    @property
    def trainable_variables(self):
        return self.distribution.trainable_variables
