"""Continuous distributions: Normal, Gamma, InverseGamma, Dirichlet."""

from __future__ import annotations

import math

import numpy as np

from jointdist import samplers
from jointdist import tensor as T
from jointdist.distributions.base import Distribution, Layout, param_shapes
from jointdist.errors import DomainError
from jointdist.tensor import REAL

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _require_positive_value(name, x):
    v = x.payload
    bad = ~(v > 0)
    if np.any(bad):
        index = np.unravel_index(int(np.argmax(bad)), bad.shape)
        raise DomainError(name, f"value outside the positive support (got {v[index]!r})", index)


class Normal(Distribution):
    """Normal(loc, scale); draws are ``loc + scale * eps`` so gradients flow."""

    reparameterized = True

    def __init__(self, loc, scale, name=None):
        super().__init__({"loc": loc, "scale": scale}, name)

    @property
    def loc(self):
        return self._param("loc")

    @property
    def scale(self):
        return self._check_positive("scale")

    def _batch_shape(self):
        return param_shapes(self.loc, self._param("scale"))

    def _sample(self, sample_shape, stream):
        loc, scale = self.loc, self.scale
        shape = tuple(sample_shape) + tuple(param_shapes(loc, scale))
        lay = Layout(stream, shape, (loc, scale))
        eps = lay.wrap(samplers.standard_normal(lay.keys, lay.index))
        return loc + scale * eps

    def _log_prob(self, x):
        x = T.as_tensor(x, REAL)
        loc, scale = self.loc, self.scale
        z = (x - loc) / scale
        return -T.log(scale) - _HALF_LOG_2PI - 0.5 * T.square(z)

    def mean(self):
        return T.broadcast_to(self.loc, self.batch_shape)

    def stddev(self):
        return T.broadcast_to(self.scale, self.batch_shape)

    def entropy(self):
        return T.broadcast_to(0.5 + _HALF_LOG_2PI + T.log(self.scale), self.batch_shape)


class Gamma(Distribution):
    """Gamma(concentration, rate) with density proportional to x^(a-1) e^(-rx)."""

    def __init__(self, concentration, rate, name=None):
        super().__init__({"concentration": concentration, "rate": rate}, name)

    @property
    def concentration(self):
        return self._check_positive("concentration")

    @property
    def rate(self):
        return self._check_positive("rate")

    def _batch_shape(self):
        return param_shapes(self._param("concentration"), self._param("rate"))

    def _sample(self, sample_shape, stream):
        a, r = self.concentration, self.rate
        lay = Layout(stream, tuple(sample_shape) + tuple(param_shapes(a, r)), (a, r))
        g = samplers.standard_gamma(lay.keys, lay.index, lay.flat(a))
        return lay.wrap(g / lay.flat(r))

    def _log_prob(self, x):
        x = T.as_tensor(x, REAL)
        _require_positive_value(self.name, x)
        a, r = self.concentration, self.rate
        return a * T.log(r) - T.lgamma(a) + (a - 1.0) * T.log(x) - r * x

    def mean(self):
        return T.broadcast_to(self.concentration / self.rate, self.batch_shape)

    def stddev(self):
        return T.broadcast_to(T.sqrt(self.concentration) / self.rate, self.batch_shape)

    def entropy(self):
        a, r = self.concentration, self.rate
        h = a - T.log(r) + T.lgamma(a) + (1.0 - a) * T.digamma(a)
        return T.broadcast_to(h, self.batch_shape)


class InverseGamma(Distribution):
    """InverseGamma(concentration a, scale b): density b^a / Gamma(a) x^(-a-1) e^(-b/x).

    If ``y ~ Gamma(a, rate=1)`` then ``b / y`` has this law.
    """

    def __init__(self, concentration, scale, name=None):
        super().__init__({"concentration": concentration, "scale": scale}, name)

    @property
    def concentration(self):
        return self._check_positive("concentration")

    @property
    def scale(self):
        return self._check_positive("scale")

    def _batch_shape(self):
        return param_shapes(self._param("concentration"), self._param("scale"))

    def _sample(self, sample_shape, stream):
        a, b = self.concentration, self.scale
        lay = Layout(stream, tuple(sample_shape) + tuple(param_shapes(a, b)), (a, b))
        g = samplers.standard_gamma(lay.keys, lay.index, lay.flat(a))
        return lay.wrap(lay.flat(b) / g)

    def _log_prob(self, x):
        x = T.as_tensor(x, REAL)
        _require_positive_value(self.name, x)
        a, b = self.concentration, self.scale
        return a * T.log(b) - T.lgamma(a) - (a + 1.0) * T.log(x) - b / x

    def mean(self):
        a, b = self.concentration, self.scale
        defined = T.greater(a, 1.0)
        safe = T.where(defined, a, 2.0)
        return T.broadcast_to(T.where(defined, b / (safe - 1.0), np.nan), self.batch_shape)

    def stddev(self):
        a, b = self.concentration, self.scale
        defined = T.greater(a, 2.0)
        safe = T.where(defined, a, 3.0)
        sd = b / ((safe - 1.0) * T.sqrt(safe - 2.0))
        return T.broadcast_to(T.where(defined, sd, np.nan), self.batch_shape)

    def entropy(self):
        a, b = self.concentration, self.scale
        h = a + T.log(b) + T.lgamma(a) - (1.0 + a) * T.digamma(a)
        return T.broadcast_to(h, self.batch_shape)


class Dirichlet(Distribution):
    """Dirichlet over the probability simplex; the last parameter axis is the event."""

    def __init__(self, concentration, name=None):
        super().__init__({"concentration": concentration}, name)

    @property
    def concentration(self):
        c = self._check_positive("concentration")
        if c.ndim < 1:
            raise DomainError(self.name, "concentration needs at least one axis")
        return c

    def _batch_shape(self):
        return self._param("concentration").shape[:-1]

    def _event_shape(self):
        return self._param("concentration").shape[-1:]

    def _sample(self, sample_shape, stream):
        c = self.concentration
        lay = Layout(stream, tuple(sample_shape) + tuple(c.shape), (c,))
        g = samplers.standard_gamma(lay.keys, lay.index, lay.flat(c)).reshape(lay.payload_shape)
        return lay.wrap(g / g.sum(axis=-1, keepdims=True))

    def _log_prob(self, x):
        x = T.as_tensor(x, REAL)
        _require_positive_value(self.name, x)
        c = self.concentration
        norm = T.lgamma(T.reduce_sum(c, -1)) - T.reduce_sum(T.lgamma(c), -1)
        return norm + T.reduce_sum((c - 1.0) * T.log(x), -1)

    def mean(self):
        c = self.concentration
        return c / T.reduce_sum(c, -1, keepdims=True)

    def stddev(self):
        c = self.concentration
        total = T.reduce_sum(c, -1, keepdims=True)
        return T.sqrt(c * (total - c) / (T.square(total) * (total + 1.0)))

    def entropy(self):
        c = self.concentration
        k = float(c.shape[-1])
        total = T.reduce_sum(c, -1)
        log_beta = T.reduce_sum(T.lgamma(c), -1) - T.lgamma(total)
        return (
            log_beta
            + (total - k) * T.digamma(total)
            - T.reduce_sum((c - 1.0) * T.digamma(c), -1)
        )


__all__ = ["Normal", "Gamma", "InverseGamma", "Dirichlet"]
