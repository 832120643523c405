"""Mutable parameters, constrained proxies and gradient-based fitting.

Distributions store parameters as given and read them at use, so assigning to
a :class:`Variable` changes every later density evaluation without rebuilding
anything.
"""

from __future__ import annotations

import itertools
import warnings

import numpy as np

from jointdist import tensor as T
from jointdist.autodiff import GradientTape, _source_variable
from jointdist.distributions.base import collect_variables
from jointdist.errors import ShapeError
from jointdist.tensor import REAL, Shape, Tensor

_names = itertools.count()


class Variable:
    """A named, shape-fixed, mutable real64 tensor.

    Each read produces a fresh leaf tensor bound to this variable, so the
    value seen by a computation is whatever the variable holds at that time.
    """

    def __init__(self, initial_value, name=None, trainable=True):
        value = np.array(T.as_tensor(initial_value, REAL).payload, dtype=np.float64)
        self._value = value
        self.name = name if name is not None else f"Variable_{next(_names)}"
        self.trainable = bool(trainable)

    @property
    def shape(self):
        return Shape(self._value.shape)

    @property
    def dtype(self):
        return REAL

    def read(self):
        t = Tensor(self._value, REAL, requires_grad=self.trainable)
        t.variable = self
        t.op = "read"
        return t

    _as_tensor = read

    def numpy(self):
        return self._value.copy()

    def assign(self, value):
        v = np.asarray(T.as_tensor(value, REAL).payload, dtype=np.float64)
        if v.shape != self._value.shape:
            raise ShapeError(
                f"cannot assign shape {list(v.shape)} to variable {self.name!r} "
                f"of shape {list(self._value.shape)}"
            )
        self._value = v.copy()
        return self

    def assign_add(self, delta):
        return self.assign(self._value + np.asarray(delta, dtype=np.float64))

    def _collect_variables(self):
        return [self] if self.trainable else []

    def __repr__(self):
        return f"Variable({self.name!r}, shape={list(self.shape)}, value={np.array2string(self._value, precision=8)})"


class DeferredTensor:
    """``transform_fn(pretransformed_input)`` evaluated at every read."""

    def __init__(self, pretransformed_input, transform_fn, name=None):
        self.pretransformed_input = pretransformed_input
        self.transform_fn = transform_fn
        self.name = name

    def _as_tensor(self):
        return T.as_tensor(self.transform_fn(T.as_tensor(self.pretransformed_input, REAL)), REAL)

    read = _as_tensor

    @property
    def shape(self):
        return self._as_tensor().shape

    def numpy(self):
        return self._as_tensor().numpy()

    def _collect_variables(self):
        return collect_variables(self.pretransformed_input)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, value={self.numpy()})"


# --- bijectors ---------------------------------------------------------------


class Exp:
    """``y = exp(x)``, mapping the real line onto the positive reals."""

    name = "exp"

    def forward(self, x):
        return T.exp(x)

    def inverse(self, y):
        y = T.as_tensor(y, REAL)
        return T.log(y)


class Softplus:
    """``y = log(1 + exp(x))``; inverse ``y + log(-expm1(-y))`` is stable for small y."""

    name = "softplus"

    def forward(self, x):
        return T.softplus(x)

    def inverse(self, y):
        y = T.as_tensor(y, REAL)
        v = y.payload
        if np.any(~(v > 0)):
            raise ValueError("softplus inverse needs positive values")
        return Tensor._wrap(v + np.log(-np.expm1(-v)), y.batched, "softplus_inverse")


class TransformedVariable(DeferredTensor):
    """A constrained view ``bijector.forward(u)`` of an unconstrained variable ``u``.

    Construction and :meth:`assign` take constrained values; the underlying
    variable stores their inverse image.
    """

    def __init__(self, initial_value, bijector, name=None, trainable=True):
        self.bijector = bijector
        underlying = Variable(bijector.inverse(initial_value), name=name, trainable=trainable)
        super().__init__(underlying, bijector.forward, name=underlying.name)

    @property
    def variable(self):
        return self.pretransformed_input

    def assign(self, value):
        self.pretransformed_input.assign(self.bijector.inverse(value))
        return self


def trainable_variables(obj):
    """Trainable variables reachable from a distribution or parameter."""
    return list(getattr(obj, "trainable_variables", None) or collect_variables(obj))


# --- optimization ------------------------------------------------------------


class Adam:
    """Adam with bias-corrected moments: ``x -= lr * m_hat / (sqrt(v_hat) + eps)``."""

    def __init__(self, learning_rate=1e-3, beta_1=0.9, beta_2=0.999, epsilon=1e-7):
        self.learning_rate = float(learning_rate)
        self.beta_1 = float(beta_1)
        self.beta_2 = float(beta_2)
        self.epsilon = float(epsilon)
        self.iterations = 0
        self._slots = {}

    def apply_gradients(self, grads_and_vars):
        pairs = list(grads_and_vars)
        self.iterations += 1
        t = self.iterations
        b1, b2 = self.beta_1, self.beta_2
        for g, var in pairs:
            g = np.asarray(g.payload if isinstance(g, Tensor) else g, dtype=np.float64)
            m, v = self._slots.get(id(var), (np.zeros(var.shape), np.zeros(var.shape)))
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            self._slots[id(var)] = (m, v)
            m_hat = m / (1.0 - b1**t)
            v_hat = v / (1.0 - b2**t)
            var.assign(var.numpy() - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon))

    def moments(self, var):
        return self._slots.get(id(var))


def _as_variables(variables):
    out = []
    for v in variables:
        base = _source_variable(v)
        if not isinstance(base, Variable):
            raise TypeError(f"cannot optimize {type(v).__name__}; pass Variables")
        out.append(base)
    return out


def fit_step(loss_fn, optimizer, variables):
    """One step: loss under a tape watching only ``variables``, then Adam.

    Variables the loss does not reach get a zero gradient and a warning.

    Returns:
      the loss before the update (scalar Tensor).
    """
    variables = _as_variables(variables)
    with GradientTape() as tape:
        tape.watch(variables)
        loss = T.as_tensor(loss_fn())
    if loss.shape != () or loss.batched:
        raise ShapeError(f"the loss must be a scalar, got shape {list(loss.shape)}")
    grads = tape.gradient(loss, variables)
    pairs = []
    for g, v in zip(grads, variables):
        if g is None:
            warnings.warn(f"no gradient reaches variable {v.name!r}; its update is zero", stacklevel=2)
            g = Tensor(np.zeros(v.shape))
        pairs.append((g, v))
    optimizer.apply_gradients(pairs)
    return T.stop_gradient(loss)


def make_fit_op(loss_fn, optimizer, variables):
    """A nullary callable performing :func:`fit_step` with fixed arguments."""

    def step():
        return fit_step(loss_fn, optimizer, variables)

    return step


def minimize(loss_fn, num_steps, optimizer=None, trainable_variables=None):
    """Run ``num_steps`` fit steps and return the loss trace as floats."""
    if trainable_variables is None:
        raise ValueError("minimize needs the variables to train")
    optimizer = optimizer or Adam()
    step = make_fit_op(loss_fn, optimizer, list(trainable_variables))
    return [float(step().item()) for _ in range(int(num_steps))]
