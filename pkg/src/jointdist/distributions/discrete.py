"""Count and binary distributions: Poisson, Bernoulli, Multinomial.

Counts are returned as real64 tensors so they compose with real-valued model
code; Bernoulli draws are int64. Values that are representable but impossible
(negative or fractional counts, counts not summing to the total) get log
probability ``-inf`` instead of raising.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from jointdist import samplers
from jointdist import tensor as T
from jointdist.distributions.base import Distribution, Layout, param_shapes, safe_where
from jointdist.errors import DomainError
from jointdist.tensor import INT, REAL, Tensor


def _is_count(x):
    return T.logical_and(T.greater_equal(x, 0.0), T.equal(x, T.floor(x)))


class Poisson(Distribution):
    def __init__(self, rate, name=None):
        super().__init__({"rate": rate}, name)

    @property
    def rate(self):
        return self._check_positive("rate")

    def _batch_shape(self):
        return self._param("rate").shape

    def _sample(self, sample_shape, stream):
        rate = self.rate
        lay = Layout(stream, tuple(sample_shape) + tuple(rate.shape), (rate,))
        return lay.wrap(samplers.poisson(lay.keys, lay.index, lay.flat(rate)))

    def _log_prob(self, x):
        x = T.as_tensor(x, REAL)
        rate = self.rate
        valid = _is_count(x)
        xs = T.where(valid, x, 0.0)
        lp = xs * T.log(rate) - rate - T.lgamma(xs + 1.0)
        return safe_where(valid, lp, -np.inf)

    def mean(self):
        return self.rate

    def stddev(self):
        return T.sqrt(self.rate)

    def entropy(self):
        # Truncated sum of -p log p; the neglected tail mass is far below 1e-12.
        rate = self.rate
        lam = rate.payload
        kmax = int(np.ceil(np.max(lam) + 20.0 * np.sqrt(np.max(lam)) + 30.0))
        k = np.arange(kmax + 1, dtype=np.float64).reshape((-1,) + (1,) * lam.ndim)
        logp = k * np.log(lam) - lam - special.gammaln(k + 1.0)
        h = -np.sum(np.exp(logp) * logp, axis=0)
        return Tensor._wrap(h, rate.batched, "entropy")


class Bernoulli(Distribution):
    """Bernoulli(probs) over {0, 1}; draws are int64."""

    dtype = INT

    def __init__(self, probs, name=None):
        super().__init__({"probs": probs}, name)

    @property
    def probs(self):
        p = self._param("probs")
        v = p.payload
        bad = ~((v >= 0.0) & (v <= 1.0))
        if np.any(bad):
            index = np.unravel_index(int(np.argmax(bad)), bad.shape)
            raise DomainError(self.name, f"probs must lie in [0, 1] (got {v[index]!r})", index)
        return p

    def _batch_shape(self):
        return self._param("probs").shape

    def _sample(self, sample_shape, stream):
        p = self.probs
        lay = Layout(stream, tuple(sample_shape) + tuple(p.shape), (p,))
        return lay.wrap(samplers.bernoulli(lay.keys, lay.index, lay.flat(p)))

    def _log_prob(self, x):
        x = T.as_tensor(x, REAL)
        v = x.payload
        bad = ~((v == 0.0) | (v == 1.0))
        if np.any(bad):
            index = np.unravel_index(int(np.argmax(bad)), bad.shape)
            raise DomainError(self.name, f"value must be 0 or 1 (got {v[index]!r})", index)
        p = self.probs
        log_p = safe_where(T.greater(p, 0.0), T.log(T.where(T.greater(p, 0.0), p, 1.0)), -np.inf)
        q = 1.0 - p
        log_q = safe_where(T.greater(q, 0.0), T.log(T.where(T.greater(q, 0.0), q, 1.0)), -np.inf)
        return T.where(T.equal(x, 1.0), log_p, log_q)

    def mean(self):
        return self.probs

    def stddev(self):
        p = self.probs
        return T.sqrt(p * (1.0 - p))

    def entropy(self):
        p = self.probs.payload
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -(special.xlogy(p, p) + special.xlogy(1.0 - p, 1.0 - p))
        return Tensor._wrap(h, self.probs.batched, "entropy")


class Multinomial(Distribution):
    """Counts of ``total_count`` categorical trials over the last parameter axis.

    Exactly one of ``probs`` or ``logits`` must be given; logits are
    normalized with log-sum-exp.
    """

    def __init__(self, total_count, probs=None, logits=None, name=None):
        if (probs is None) == (logits is None):
            raise ValueError("Multinomial takes exactly one of probs or logits")
        params = {"total_count": total_count}
        if probs is not None:
            params["probs"] = probs
        else:
            params["logits"] = logits
        super().__init__(params, name)

    @property
    def total_count(self):
        n = self._param("total_count")
        v = n.payload
        bad = ~((v >= 0.0) & (v == np.floor(v)))
        if np.any(bad):
            index = np.unravel_index(int(np.argmax(bad)), bad.shape)
            raise DomainError(
                self.name, f"total_count must be a non-negative integer (got {v[index]!r})", index
            )
        return n

    def _category_param(self):
        return self._param("probs" if "probs" in self._parameters else "logits")

    @property
    def probs(self):
        if "probs" in self._parameters:
            return self._param("probs")
        return T.exp(self.log_probs)

    @property
    def log_probs(self):
        if "logits" in self._parameters:
            return T.log_softmax(self._param("logits"), -1)
        return T.log(self._param("probs"))

    def _batch_shape(self):
        return param_shapes(self._param("total_count"), self._category_param().shape[:-1])

    def _event_shape(self):
        return self._category_param().shape[-1:]

    def _sample(self, sample_shape, stream):
        n, p = self.total_count, self.probs
        k = p.shape[-1]
        shape = tuple(sample_shape) + tuple(param_shapes(n, p.shape[:-1]))
        lay = Layout(stream, shape, (n, p))
        counts = samplers.multinomial(lay.keys, lay.index, lay.flat(n), lay.flat(p, (k,)))
        return lay.wrap(counts, (k,))

    def _log_prob(self, x):
        x = T.as_tensor(x, REAL)
        n = self.total_count
        k = x.shape[-1]
        counts_ok = T.equal(T.reduce_sum(_is_count(x), -1), k)
        sums_ok = T.equal(T.reduce_sum(x, -1), n)
        valid = T.logical_and(counts_ok, sums_ok)
        xs = T.where(T.expand_dims(valid, -1), x, 0.0)
        lp = (
            T.lgamma(n + 1.0)
            - T.reduce_sum(T.lgamma(xs + 1.0), -1)
            + T.reduce_sum(xs * self.log_probs, -1)
        )
        return safe_where(valid, lp, -np.inf)

    def mean(self):
        n = T.expand_dims(self.total_count, -1)
        return n * self.probs

    def stddev(self):
        n = T.expand_dims(self.total_count, -1)
        p = self.probs
        return T.sqrt(n * p * (1.0 - p))

    def entropy(self):
        raise NotImplementedError("Multinomial entropy has no closed form")
