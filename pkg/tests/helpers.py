"""Shared oracles for the test suite."""

import numpy as np

from jointdist import tensor as T
from jointdist.autodiff import gradient

FD_STEP = 1e-6


def relative_error(a, b):
    """Elementwise |a - b| / max(|a|, |b|, 1): relative for large values, absolute near zero."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)


def central_difference(f, x, h=FD_STEP):
    """Gradient of scalar ``f`` (numpy array -> float) at ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def check_gradients(fn, *args, tol=1e-6):
    """Autodiff of ``sum(fn(*args) * w)`` against central differences for every argument.

    Returns the maximum relative error over all arguments and elements.
    """
    rng = np.random.default_rng(0)
    args = [np.asarray(a, dtype=np.float64) for a in args]
    out_shape = np.shape(fn(*[T.Tensor(a) for a in args]).payload)
    w = rng.uniform(0.5, 1.5, size=out_shape)

    def scalar(*vals):
        return T.reduce_sum(T.mul(fn(*vals), w))

    leaves = [T.Tensor(a, requires_grad=True) for a in args]
    grads = gradient(scalar(*leaves), leaves)
    worst = 0.0
    for i, a in enumerate(args):

        def f(v, i=i):
            vals = [T.Tensor(b) for b in args]
            vals[i] = T.Tensor(v)
            return float(scalar(*vals).item())

        fd = central_difference(f, a)
        err = float(np.max(relative_error(grads[i].numpy(), fd), initial=0.0))
        worst = max(worst, err)
    assert worst <= tol, f"gradient mismatch: relative error {worst:.3g}"
    return worst
