"""The three model-definition flavors.

* Sequential: a list of distributions and functions of earlier samples; a
  function's k-th argument is the k-th nearest preceding node.
* Named: a dict whose functions name their parents by parameter name; nodes
  are ordered topologically with lexicographic tie-breaking.
* Coroutine: a generator function yielding distributions (``Root``-wrapped
  when parentless) and receiving the realized values back.

Each compiles to a :class:`~jointdist.joint.FlatModel` driven by the same
:class:`~jointdist.joint.JointDistribution` machinery.
"""

from __future__ import annotations

import heapq
import inspect

from jointdist import structure as nest
from jointdist.distributions.base import Distribution
from jointdist.errors import CycleError, StructureError
from jointdist.joint import FlatModel, JointDistribution, Request, Root


def _positional_arity(fn):
    """Required positional parameters, or None when ``fn`` takes ``*args``."""
    try:
        params = inspect.signature(fn).parameters.values()
    except (TypeError, ValueError) as e:
        raise StructureError(f"cannot inspect the signature of {fn!r}") from e
    count = 0
    for p in params:
        if p.kind is p.VAR_POSITIONAL:
            return None
        if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD) and p.default is p.empty:
            count += 1
    return count


def _parameter_names(fn):
    try:
        params = inspect.signature(fn).parameters.values()
    except (TypeError, ValueError) as e:
        raise StructureError(f"cannot inspect the signature of {fn!r}") from e
    return [
        p.name
        for p in params
        if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD, p.KEYWORD_ONLY)
        and p.default is p.empty
    ]


def _check_entry(entry, where):
    if isinstance(entry, Distribution) or callable(entry):
        return
    raise StructureError(f"{where} must be a Distribution or a function, got {type(entry).__name__}")


def _split_sequence(value, names, path):
    if not nest.is_sequence(value):
        raise StructureError(f"expected an ordered list of {len(names)} node values", path)
    if len(value) != len(names):
        raise StructureError(f"expected {len(names)} node values, got {len(value)}", path)
    return list(value)


# --- Sequential ------------------------------------------------------------


class SequentialModel(FlatModel):
    flavor = "sequential"

    def __init__(self, entries, names=None):
        self.container = type(entries) if type(entries) in (list, tuple) else list
        self.entries = list(entries)
        if names is None:
            names = [f"x{i}" for i in range(len(self.entries))]
        names = [str(n) for n in names]
        if len(names) != len(self.entries):
            raise StructureError(f"{len(names)} names for {len(self.entries)} entries")
        if len(set(names)) != len(names):
            raise StructureError(f"duplicate node names in {names}")
        self.names = names
        self.arities = []
        for i, entry in enumerate(self.entries):
            _check_entry(entry, f"entry {i}")
            if isinstance(entry, Distribution):
                self.arities.append(0)
                continue
            k = _positional_arity(entry)
            if k is None:
                k = i
            if k > i:
                raise StructureError(
                    f"entry {i} takes {k} arguments but only {i} earlier nodes exist"
                )
            self.arities.append(k)

    def requests(self):
        values = []
        for i, entry in enumerate(self.entries):
            if isinstance(entry, Distribution):
                d, root = entry, True
            else:
                # Nearest predecessor first.
                args = [values[i - 1 - j] for j in range(self.arities[i])]
                d, root = entry(*args), False
            x = yield Request(d, root, self.names[i])
            values.append(x)

    def split(self, value, names, path):
        return _split_sequence(value, names, path)

    def join(self, node_values, names):
        return self.container(node_values)


def compile_sequential(entries, names=None):
    return SequentialModel(entries, names)


class JointDistributionSequential(JointDistribution):
    """Joint distribution from an ordered list of nodes.

    >>> from jointdist import InverseGamma, Normal
    >>> jd = JointDistributionSequential([
    ...     InverseGamma(3., 2.),             # s
    ...     Normal(0., 1.),                   # m
    ...     lambda m, s: Normal(m, s),        # x
    ... ])
    """

    def __init__(self, entries, names=None, name=None):
        super().__init__(compile_sequential(entries, names), name)


# --- Named -------------------------------------------------------------------


def topological_order(dependencies):
    """Kahn's algorithm; ties between ready nodes go to the smallest name.

    Args:
      dependencies: map name -> list of parent names.

    Raises:
      CycleError: with one witness cycle.
    """
    children = {k: [] for k in dependencies}
    indegree = {k: len(set(v)) for k, v in dependencies.items()}
    for k, parents in dependencies.items():
        for p in set(parents):
            children[p].append(k)
    ready = [k for k, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        k = heapq.heappop(ready)
        order.append(k)
        for c in children[k]:
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != len(dependencies):
        remaining = {k for k in dependencies if k not in set(order)}
        raise CycleError(_find_cycle(dependencies, remaining))
    return order


def _find_cycle(dependencies, remaining):
    # Every remaining node has a remaining parent, so walking parents must loop.
    start = min(remaining)
    path, seen = [], {}
    node = start
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        node = min(p for p in dependencies[node] if p in remaining)
    cycle = path[seen[node]:]
    cycle.reverse()
    return cycle + [cycle[0]]


class NamedModel(FlatModel):
    flavor = "named"

    def __init__(self, model):
        if not nest.is_map(model):
            raise StructureError("a named model needs a dict of nodes")
        self.nodes = dict(model)
        self.user_order = list(self.nodes)
        deps = {}
        for k, entry in self.nodes.items():
            if not isinstance(k, str):
                raise StructureError(f"node names must be strings, got {k!r}")
            _check_entry(entry, f"node {k!r}")
            if isinstance(entry, Distribution):
                deps[k] = []
                continue
            params = _parameter_names(entry)
            unknown = [p for p in params if p not in self.nodes]
            if unknown:
                raise StructureError(f"node {k!r} refers to unknown nodes {unknown}")
            deps[k] = params
        self.dependencies = deps
        self.order = topological_order(deps)

    def requests(self):
        values = {}
        for k in self.order:
            entry = self.nodes[k]
            if isinstance(entry, Distribution):
                d, root = entry, True
            else:
                d = entry(**{p: values[p] for p in self.dependencies[k]})
                root = False
            values[k] = yield Request(d, root, k)

    def split(self, value, names, path):
        if not nest.is_map(value):
            raise StructureError("expected a named map of node values", path)
        missing = [k for k in names if k not in value]
        extra = [k for k in value if k not in self.nodes]
        if missing or extra:
            raise StructureError(f"key mismatch (missing {missing}, unexpected {extra})", path)
        return [value[k] for k in names]

    def join(self, node_values, names):
        by_name = dict(zip(names, node_values))
        return {k: by_name[k] for k in self.user_order}


def compile_named(model):
    return NamedModel(model)


class JointDistributionNamed(JointDistribution):
    """Joint distribution from a dict; functions name their parents.

    >>> from jointdist import InverseGamma, Normal
    >>> jd = JointDistributionNamed(dict(
    ...     m=Normal(0., 1.),
    ...     s=InverseGamma(3., 2.),
    ...     x=lambda m, s: Normal(m, s),
    ... ))
    """

    def __init__(self, model, name=None):
        super().__init__(compile_named(model), name)


# --- Coroutine -----------------------------------------------------------


class CoroutineModel(FlatModel):
    flavor = "coroutine"

    def __init__(self, program, names=None):
        if not callable(program):
            raise StructureError("a coroutine model needs a generator function")
        self.program = program
        self.names = None if names is None else [str(n) for n in names]

    def _name(self, i):
        if self.names is not None and i < len(self.names):
            return self.names[i]
        return f"x{i}"

    def requests(self):
        gen = self.program()
        if not inspect.isgenerator(gen):
            raise StructureError("the model program must be a generator function (use yield)")
        i = 0
        try:
            item = next(gen)
            while True:
                root = isinstance(item, Root)
                d = item.distribution if root else item
                x = yield Request(d, root, self._name(i))
                i += 1
                item = gen.send(x)
        except StopIteration:
            return

    def split(self, value, names, path):
        return _split_sequence(value, names, path)

    def join(self, node_values, names):
        return tuple(node_values)


def compile_coroutine(program, names=None):
    return CoroutineModel(program, names)


class JointDistributionCoroutine(JointDistribution):
    """Joint distribution from a generator function.

    >>> from jointdist import InverseGamma, Normal
    >>> Root = JointDistributionCoroutine.Root
    >>> def model():
    ...     m = yield Root(Normal(0., 1.))
    ...     s = yield Root(InverseGamma(3., 2.))
    ...     x = yield Normal(m, s)
    >>> jd = JointDistributionCoroutine(model)
    """

    Root = Root

    def __init__(self, program, names=None, name=None):
        super().__init__(compile_coroutine(program, names), name)
