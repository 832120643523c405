"""Reverse-mode differentiation over graphs recorded by tensor ops."""

from __future__ import annotations

import numpy as np

from jointdist.errors import ShapeError
from jointdist.tensor import Tensor


def _topological(output):
    """Nodes reachable from ``output`` through recorded parents, inputs first."""
    order, seen = [], set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def _source_variable(source):
    """Map a gradient source to the Variable whose reads should be collected."""
    underlying = getattr(source, "pretransformed_input", None)
    if underlying is not None:
        return _source_variable(underlying)
    return source


def _adjoints(output):
    adjoint = {id(output): np.ones_like(output._value)}
    nodes = _topological(output)
    for node in reversed(nodes):
        g = adjoint.get(id(node))
        if g is None or node._vjp is None:
            continue
        for parent, gp in zip(node._parents, node._vjp(g)):
            if gp is None or not parent.requires_grad:
                continue
            key = id(parent)
            adjoint[key] = gp if key not in adjoint else adjoint[key] + gp
    return nodes, adjoint


def gradient(output, sources, unconnected="zero"):
    """Gradients of a scalar ``output`` with respect to each of ``sources``.

    Sources may be Variables (every read of the variable contributes),
    transformed variables (reported for their unconstrained variable), or
    Tensors (matched by identity).

    Args:
      output: scalar real Tensor.
      sources: sequence of sources.
      unconnected: ``"zero"`` returns zeros for sources the output does not
        depend on; ``"none"`` returns None for them.

    Returns:
      list of Tensors shaped like the sources.
    """
    if not isinstance(output, Tensor):
        raise TypeError("gradient() needs a Tensor output")
    if output.shape != () or output.batched:
        raise ShapeError(f"gradient() needs a scalar output, got shape {list(output.shape)}")
    if unconnected not in ("zero", "none"):
        raise ValueError("unconnected must be 'zero' or 'none'")
    sources = list(sources)
    targets = [_source_variable(s) for s in sources]
    if output.requires_grad:
        nodes, adjoint = _adjoints(output)
    else:
        nodes, adjoint = [], {}
    results = []
    for target in targets:
        total = None
        if isinstance(target, Tensor):
            total = adjoint.get(id(target))
            shape, batched = target._value.shape, target.batched
        else:
            for node in nodes:
                if node.variable is target and id(node) in adjoint:
                    g = adjoint[id(node)]
                    total = g if total is None else total + g
            shape, batched = tuple(target.shape), False
        if total is None:
            if unconnected == "none":
                results.append(None)
                continue
            total = np.zeros(shape)
        results.append(Tensor(np.reshape(total, shape), batched=batched))
    return results


class GradientTape:
    """Collects gradients only for explicitly watched sources.

    Ops record their graph whenever an operand requires gradients, so the
    tape's job is to restrict which sources receive gradients::

        with GradientTape() as tape:
            tape.watch(variables)
            loss = loss_fn()
        grads = tape.gradient(loss, variables)
    """

    def __init__(self):
        self._watched = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False

    def watch(self, sources):
        if not isinstance(sources, (list, tuple)):
            sources = [sources]
        for s in sources:
            # Watching a real tensor makes later ops record it.
            if isinstance(s, Tensor) and s.dtype == "real64":
                s.requires_grad = True
            if not any(s is w for w in self._watched):
                self._watched.append(s)

    @property
    def watched(self):
        return tuple(self._watched)

    def gradient(self, output, sources, unconnected="none"):
        single = not isinstance(sources, (list, tuple))
        sources = [sources] if single else list(sources)
        grads = gradient(output, sources, unconnected="none")
        out = []
        for s, g in zip(sources, grads):
            watched = any(_source_variable(s) is _source_variable(w) for w in self._watched)
            if g is None or not watched:
                g = None if unconnected == "none" else _zeros_like_source(s)
            out.append(g)
        return out[0] if single else out


def _zeros_like_source(source):
    target = _source_variable(source)
    if isinstance(target, Tensor):
        return Tensor(np.zeros(target._value.shape), batched=target.batched)
    return Tensor(np.zeros(tuple(target.shape)))
