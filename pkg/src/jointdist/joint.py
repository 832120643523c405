"""Joint distributions over structured values.

Every flavor compiles to a :class:`FlatModel`: a generator of node requests in
a canonical order plus maps between the user-facing structure and the
per-node list. One driver, :meth:`JointDistribution._flat_sample_distributions`,
walks that list for sampling, conditioning and density evaluation, so all
flavors share identical semantics.
"""

from __future__ import annotations

import abc
from typing import NamedTuple

from jointdist import structure as nest
from jointdist import tensor as T
from jointdist.distributions.base import Distribution, unique_variables
from jointdist.errors import DTypeError, NotIndependentError, ShapeError, StructureError, ValueShapeError
from jointdist.random import BatchedStream, RandomStream, as_stream, fold_in
from jointdist.tensor import Shape


class Root:
    """Marks a request as parentless, so it receives the caller's sample_shape."""

    __slots__ = ("distribution",)

    def __init__(self, distribution):
        if not isinstance(distribution, Distribution):
            raise TypeError(f"Root wraps a Distribution, got {type(distribution).__name__}")
        self.distribution = distribution

    def __repr__(self):
        return f"Root({self.distribution!r})"


class Request(NamedTuple):
    distribution: Distribution
    root: bool
    name: str


class FlatModel(abc.ABC):
    """A model compiled to canonical node order.

    ``requests()`` returns a generator that yields one :class:`Request` per
    node and is resumed with that node's realized value.
    """

    flavor = "flat"

    @abc.abstractmethod
    def requests(self):
        ...

    @abc.abstractmethod
    def split(self, value, names, path):
        """Per-node values (canonical order) from a user structure."""

    @abc.abstractmethod
    def join(self, node_values, names):
        """The user structure holding per-node values."""


def _substream(stream, base, i):
    if stream is None:
        return None
    keys = fold_in(base, i)
    if isinstance(stream, BatchedStream):
        return BatchedStream(keys)
    return RandomStream.from_key(keys)


class _Probe(NamedTuple):
    names: tuple
    roots: tuple
    distributions: object
    dtype: object
    batch_shape: object
    event_shape: object
    leaf_roots: tuple


class JointDistribution(Distribution):
    """A distribution over a structure of tensors, factored by the chain rule.

    Its ``dtype``, ``batch_shape`` and ``event_shape`` are structures with the
    same skeleton as samples. They are computed at empty sample shape and do
    not change afterwards.
    """

    def __init__(self, model, name=None):
        super().__init__({}, name or type(self).__name__)
        self._model = model
        self._probe_cache = None

    @property
    def model(self):
        return self._model

    # --- driver ------------------------------------------------------------

    def _sample_node(self, index, distribution, sample_shape, stream):
        """Draw node ``index``; a hook so tests can observe the root law."""
        return distribution._sample(sample_shape, stream)

    def _flat_sample_distributions(self, sample_shape=(), values=None, seed=None):
        """Run the model once in canonical order.

        Args:
          sample_shape: passed to root nodes only; dependent nodes inherit
            their batch from the realized values of their parents.
          values: optional per-node list; a ``None`` entry is drawn.
          seed: int or stream; may be None when every value is provided.

        Returns:
          ``(distributions, values)`` per node. A nested joint node contributes
          structures of its own distributions and values.
        """
        stream = None if seed is None else as_stream(seed)
        ds, xs, _ = self._run(Shape(sample_shape), values, stream, "value")
        return ds, xs

    def _run(self, sample_shape, node_values, stream, path):
        base = stream.next_key() if stream is not None else None
        gen = self._model.requests()
        ds, xs, nodes = [], [], []
        send = None
        i = 0
        while True:
            try:
                req = next(gen) if i == 0 else gen.send(send)
            except StopIteration:
                break
            d = req.distribution
            if not isinstance(d, Distribution):
                raise TypeError(
                    f"node {i} ({req.name}) produced {type(d).__name__}, not a Distribution"
                )
            if node_values is not None and i >= len(node_values):
                raise StructureError(
                    f"model emitted more nodes than the {len(node_values)} values provided", path
                )
            given = None if node_values is None else node_values[i]
            shape = sample_shape if req.root else Shape(())
            node_path = f"{path}[{req.name!r}]" if self._model.flavor == "named" else f"{path}[{i}]"
            sub = _substream(stream, base, i)
            if isinstance(d, JointDistribution):
                inner = None if given is None else d._split(given, node_path)
                d_ds, d_xs, d_nodes = d._run(shape, inner, sub, node_path)
                d._check_signature(d_nodes)
                inner_names = tuple(n.name for n in d_nodes)
                dist_entry = d._model.join(d_ds, inner_names)
                value = d._model.join(d_xs, inner_names)
            else:
                dist_entry = d
                if given is None:
                    if sub is None:
                        raise StructureError(
                            f"node {i} ({req.name}) has no value and no seed was given", node_path
                        )
                    value = self._sample_node(i, d, shape, sub)
                else:
                    value = self._check_given(i, req.name, d, given, node_path)
            ds.append(dist_entry)
            xs.append(value)
            nodes.append(req)
            send = value
            i += 1
        if node_values is not None and i != len(node_values):
            raise StructureError(
                f"model emitted {i} nodes but {len(node_values)} values were provided", path
            )
        return ds, xs, tuple(nodes)

    def _check_given(self, i, name, d, given, path):
        try:
            x = T.as_tensor(given)
        except (DTypeError, ValueError, TypeError) as e:
            raise ValueShapeError(f"node {i} ({name}): cannot read value: {e}", path) from e
        try:
            d._check_value_shape(x)
        except ShapeError as e:
            raise ValueShapeError(
                f"node {i} ({name}): value of shape {list(x.shape)} is incompatible with "
                f"batch shape {list(d.batch_shape)} and event shape {list(d.event_shape)}",
                path,
            ) from e
        return x

    def _check_signature(self, nodes):
        if self._probe_cache is None:
            return
        roots = tuple(n.root for n in nodes)
        if roots != self._probe_cache.roots:
            raise StructureError(
                f"{self.name}: model emitted {len(roots)} nodes with root flags "
                f"{list(roots)}, but its fixed structure has "
                f"{len(self._probe_cache.roots)} with {list(self._probe_cache.roots)}"
            )

    def _split(self, value, path="value"):
        if value is None:
            return None
        probe = self._probe()
        return self._model.split(value, probe.names, path)

    # --- structural properties --------------------------------------------

    def _probe(self):
        if self._probe_cache is None:
            ds, _, nodes = self._run(Shape(()), None, RandomStream(0), "value")
            names = tuple(n.name for n in nodes)
            roots = tuple(n.root for n in nodes)
            joined = self._model.join(ds, names)
            leaf_roots = []
            for n in nodes:
                if isinstance(n.distribution, JointDistribution):
                    leaf_roots.extend(n.root and r for r in n.distribution._probe().leaf_roots)
                else:
                    leaf_roots.append(n.root)
            self._probe_cache = _Probe(
                names=names,
                roots=roots,
                distributions=joined,
                dtype=nest.map_structure(lambda d: d.dtype, joined),
                batch_shape=nest.map_structure(lambda d: d.batch_shape, joined),
                event_shape=nest.map_structure(lambda d: d.event_shape, joined),
                leaf_roots=tuple(leaf_roots),
            )
        return self._probe_cache

    @property
    def dtype(self):
        return self._probe().dtype

    @property
    def batch_shape(self):
        return self._probe().batch_shape

    @property
    def event_shape(self):
        return self._probe().event_shape

    @property
    def node_names(self):
        return self._probe().names

    @property
    def root_flags(self):
        return self._probe().roots

    @property
    def leaf_root_flags(self):
        """Structure like a sample: True where the leaf's node is parentless.

        Leaves of a nested joint are roots only if the nested node is one too.
        """
        _, _, nodes = self._run(Shape(()), None, RandomStream(0), "value")
        parts = []
        for n in nodes:
            d = n.distribution
            if isinstance(d, JointDistribution):
                parts.append(nest.map_structure(lambda r, outer=n.root: outer and r, d.leaf_root_flags))
            else:
                parts.append(n.root)
        return self._model.join(parts, tuple(n.name for n in nodes))

    @property
    def trainable_variables(self):
        found = []
        for d in nest.flatten(self._probe().distributions):
            found.extend(d.trainable_variables)
        return unique_variables(found)

    # --- public API --------------------------------------------------------

    def sample(self, sample_shape=(), seed=None, value=None):
        """Draw a structure; each leaf has shape sample_shape + batch + event."""
        _, xs = self.sample_distributions(sample_shape, seed=as_stream(seed), value=value)
        return xs

    def sample_distributions(self, sample_shape=(), seed=None, value=None):
        """Run the model forward, optionally conditioned on a partial ``value``.

        Returns:
          ``(distributions, values)`` as two structures shaped like a sample.
        """
        node_values = self._split(value)
        stream = None if seed is None else as_stream(seed)
        ds, xs, nodes = self._run(Shape(sample_shape), node_values, stream, "value")
        self._check_signature(nodes)
        names = tuple(n.name for n in nodes)
        return self._model.join(ds, names), self._model.join(xs, names)

    def _pairs(self, x):
        if x is None:
            raise StructureError("log_prob needs a value")
        node_values = self._split(x)
        for leaf, path in zip(
            nest.flatten_up_to(self.dtype, x), nest.leaf_paths(self.dtype, "value")
        ):
            if leaf is None:
                raise StructureError("log_prob needs a fully specified value (missing leaf)", path)
        ds, xs, nodes = self._run(Shape(()), node_values, None, "value")
        self._check_signature(nodes)
        return ds, xs, tuple(n.name for n in nodes)

    def log_prob_parts(self, x):
        """Per-node log densities, in the value's structure."""
        ds, xs, names = self._pairs(x)
        parts = []
        for d, v in zip(ds, xs):
            leaves = [di.log_prob(vi) for di, vi in zip(nest.flatten(d), nest.flatten(v))]
            parts.append(leaves[0] if isinstance(d, Distribution) else nest.unflatten(d, leaves))
        return self._model.join(parts, names)

    def log_prob(self, x):
        """Sum of conditional log densities in canonical (depth-first) node order."""
        ds, xs, _ = self._pairs(x)
        return T.add_n(d.log_prob(v) for d, v in zip(nest.flatten(ds), nest.flatten(xs)))

    def _check_value_shape(self, x):
        # Nested joints check their own leaves when driven.
        return None

    def _sample(self, sample_shape, stream):
        _, xs, nodes = self._run(Shape(sample_shape), None, stream, "value")
        self._check_signature(nodes)
        return self._model.join(xs, tuple(n.name for n in nodes))

    def _require_independent(self):
        if not all(self._probe().leaf_roots):
            dependent = [n for n, r in zip(self._probe().names, self._probe().roots) if not r]
            raise NotIndependentError(
                f"{self.name}: analytic moments need independent components; "
                f"dependent nodes: {dependent}"
            )
        ds, _, nodes = self._run(Shape(()), None, RandomStream(0), "value")
        return self._model.join(ds, tuple(n.name for n in nodes))

    def mean(self):
        return nest.map_structure(lambda d: d.mean(), self._require_independent())

    def stddev(self):
        return nest.map_structure(lambda d: d.stddev(), self._require_independent())

    def entropy(self):
        ds = nest.flatten(self._require_independent())
        return T.add_n(d.entropy() for d in ds)

    def __repr__(self):
        return f"{self.name}(flavor={self._model.flavor}, nodes={list(self._probe().names)})"
