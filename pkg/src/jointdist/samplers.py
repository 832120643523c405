"""Elementwise samplers over flat arrays of keys and element indices.

Each function takes 1-D arrays of equal length: ``keys`` (uint64 stream keys),
``index`` (position of the element within one world's draw) and parameters.
Element ``j`` depends only on ``(keys[j], index[j], params[j])``, never on its
neighbours, which is what makes batched and per-world draws agree exactly.

Rejection loops index their uniforms by round number, so an element that is
rejected in round ``r`` draws fresh uniforms from round ``r + 1``.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from jointdist.random import fold_in, uniform_pair

_MAX_ROUNDS = 10_000

# Counter word 3 tags, one per use of uniforms inside a sampler.
_NORMAL = 1
_GAMMA_PROPOSAL = 2
_GAMMA_ACCEPT = 3
_GAMMA_BOOST = 4
_POISSON = 5
_BINOMIAL = 6
_BERNOULLI = 7


def _box_muller(u0, u1):
    return np.sqrt(-2.0 * np.log(u0)) * np.cos(2.0 * np.pi * u1)


def standard_normal(keys, index, round_=0, slot=_NORMAL):
    u0, u1 = uniform_pair(keys, index, round_, slot)
    return _box_muller(u0, u1)


def uniform(keys, index, round_=0, slot=0):
    return uniform_pair(keys, index, round_, slot)[0]


def bernoulli(keys, index, probs):
    return (uniform(keys, index, 0, _BERNOULLI) < probs).astype(np.int64)


def standard_gamma(keys, index, concentration):
    """Gamma(concentration, rate=1) by Marsaglia and Tsang's squeeze method.

    Concentrations below one are boosted: draw Gamma(a + 1) and multiply by
    ``U ** (1 / a)``.
    """
    alpha = np.asarray(concentration, dtype=np.float64)
    boost = alpha < 1.0
    a = np.where(boost, alpha + 1.0, alpha)
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(a)
    pending = np.arange(a.size)
    round_ = 0
    while pending.size:
        if round_ > _MAX_ROUNDS:
            raise RuntimeError("gamma sampler failed to converge")
        k, i = keys[pending], index[pending]
        dp, cp = d[pending], c[pending]
        z = standard_normal(k, i, round_, _GAMMA_PROPOSAL)
        u = uniform(k, i, round_, _GAMMA_ACCEPT)
        t = 1.0 + cp * z
        positive = t > 0.0
        v = np.where(positive, t * t * t, 1.0)
        log_v = np.log(v)
        accept = positive & (np.log(u) < 0.5 * z * z + dp - dp * v + dp * log_v)
        out[pending[accept]] = (dp * v)[accept]
        pending = pending[~accept]
        round_ += 1
    if np.any(boost):
        u = uniform(keys, index, 0, _GAMMA_BOOST)
        safe_alpha = np.where(boost, alpha, 1.0)
        out = np.where(boost, out * np.power(u, 1.0 / safe_alpha), out)
    return out


def _poisson_knuth(keys, index, rate):
    limit = np.exp(-rate)
    count = np.zeros(rate.shape)
    product = np.ones(rate.shape)
    pending = np.arange(rate.size)
    step = 0
    while pending.size:
        u = uniform(keys[pending], index[pending], step, _POISSON)
        product[pending] *= u
        done = product[pending] <= limit[pending]
        count[pending[done]] = step
        pending = pending[~done]
        step += 1
    return count


def _poisson_ptrs(keys, index, rate):
    # Hoermann (1993), transformed rejection with squeeze; valid for rate >= 10.
    slam = np.sqrt(rate)
    loglam = np.log(rate)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    out = np.empty(rate.shape)
    pending = np.arange(rate.size)
    round_ = 0
    while pending.size:
        if round_ > _MAX_ROUNDS:
            raise RuntimeError("Poisson sampler failed to converge")
        u, v = uniform_pair(keys[pending], index[pending], round_, _POISSON)
        u = u - 0.5
        ap, bp, lam = a[pending], b[pending], rate[pending]
        us = 0.5 - np.abs(u)
        k = np.floor((2.0 * ap / us + bp) * u + lam + 0.43)
        quick = (us >= 0.07) & (v <= vr[pending])
        valid = (k >= 0.0) & ~((us < 0.013) & (v > us))
        ks = np.where(k >= 0.0, k, 0.0)
        lhs = np.log(v) + np.log(inv_alpha[pending]) - np.log(ap / (us * us) + bp)
        rhs = -lam + ks * loglam[pending] - special.gammaln(ks + 1.0)
        accept = quick | (valid & (lhs <= rhs))
        out[pending[accept]] = k[accept]
        pending = pending[~accept]
        round_ += 1
    return out


def poisson(keys, index, rate):
    """Knuth's multiplication method below rate 30, PTRS above."""
    rate = np.asarray(rate, dtype=np.float64)
    out = np.zeros(rate.shape)
    small = (rate > 0.0) & (rate < 30.0)
    large = rate >= 30.0
    if np.any(small):
        out[small] = _poisson_knuth(keys[small], index[small], rate[small])
    if np.any(large):
        out[large] = _poisson_ptrs(keys[large], index[large], rate[large])
    return out


def _binomial_inversion(keys, index, n, p):
    q = 1.0 - p
    s = p / q
    a = (n + 1.0) * s
    r = np.power(q, n)
    u = uniform(keys, index, 0, _BINOMIAL)
    x = np.zeros(n.shape)
    pending = np.arange(n.size)
    while pending.size:
        more = u[pending] > r[pending]
        more &= x[pending] < n[pending]
        pending = pending[more]
        if not pending.size:
            break
        u[pending] -= r[pending]
        x[pending] += 1.0
        r[pending] *= a[pending] / x[pending] - s[pending]
    return x


def _binomial_btrs(keys, index, n, p):
    # Hoermann (1993) BTRS with an exact log-pmf ratio acceptance test.
    q = 1.0 - p
    spq = np.sqrt(n * p * q)
    b = 1.15 + 2.53 * spq
    a = -0.0873 + 0.0248 * b + 0.01 * p
    c = n * p + 0.5
    vr = 0.92 - 4.2 / b
    alpha = (2.83 + 5.1 / b) * spq
    m = np.floor((n + 1.0) * p)
    log_pm = special.gammaln(m + 1.0) + special.gammaln(n - m + 1.0)
    log_odds = np.log(p / q)
    out = np.empty(n.shape)
    pending = np.arange(n.size)
    round_ = 1
    while pending.size:
        if round_ > _MAX_ROUNDS:
            raise RuntimeError("binomial sampler failed to converge")
        u, v = uniform_pair(keys[pending], index[pending], round_, _BINOMIAL)
        u = u - 0.5
        us = 0.5 - np.abs(u)
        ap, bp, np_ = a[pending], b[pending], n[pending]
        k = np.floor((2.0 * ap / us + bp) * u + c[pending])
        in_range = (k >= 0.0) & (k <= np_)
        quick = in_range & (us >= 0.07) & (v <= vr[pending])
        ks = np.clip(k, 0.0, np_)
        lhs = np.log(v * alpha[pending] / (ap / (us * us) + bp))
        rhs = (
            log_pm[pending]
            - special.gammaln(ks + 1.0)
            - special.gammaln(np_ - ks + 1.0)
            + (ks - m[pending]) * log_odds[pending]
        )
        accept = quick | (in_range & (lhs <= rhs))
        out[pending[accept]] = k[accept]
        pending = pending[~accept]
        round_ += 1
    return out


def binomial(keys, index, n, p):
    """Binomial(n, p) counts as float64; ``n`` must be integral."""
    n = np.asarray(n, dtype=np.float64)
    p = np.clip(np.asarray(p, dtype=np.float64), 0.0, 1.0)
    flip = p > 0.5
    pp = np.where(flip, 1.0 - p, p)
    out = np.zeros(n.shape)
    active = (n > 0) & (pp > 0)
    small = active & (n * pp < 10.0)
    large = active & ~small
    if np.any(small):
        out[small] = _binomial_inversion(keys[small], index[small], n[small], pp[small])
    if np.any(large):
        out[large] = _binomial_btrs(keys[large], index[large], n[large], pp[large])
    return np.where(flip, n - out, out)


def multinomial(keys, index, n, probs):
    """Multinomial counts by sequential binomial splitting.

    Args:
      keys, index, n: arrays of shape ``[M]``.
      probs: array ``[M, K]`` of category probabilities (rows sum to one).

    Returns:
      ``[M, K]`` float64 counts whose rows sum to ``n`` exactly.
    """
    m, k = probs.shape
    out = np.zeros((m, k))
    remaining = np.asarray(n, dtype=np.float64).copy()
    mass = np.ones(m)
    for j in range(k - 1):
        pj = probs[:, j]
        cond = np.where(mass > 0.0, np.clip(pj / np.where(mass > 0.0, mass, 1.0), 0.0, 1.0), 0.0)
        draw = binomial(fold_in(keys, j), index, remaining, cond)
        out[:, j] = draw
        remaining = remaining - draw
        mass = mass - pj
    out[:, k - 1] = remaining
    return out
