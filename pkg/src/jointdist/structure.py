"""Nested structures of ordered lists, named maps and leaves.

Lists and tuples are both ordered lists; dicts are named maps whose key order
is preserved. Anything else (tensors, numbers, shapes, ``None`` for a missing
leaf) is a leaf.
"""

from __future__ import annotations

from jointdist.errors import StructureError
from jointdist.tensor import Shape

MISSING = None


def is_sequence(x):
    return isinstance(x, (list, tuple)) and not isinstance(x, Shape)


def is_map(x):
    return isinstance(x, dict)


def is_leaf(x):
    return not (is_sequence(x) or is_map(x))


def flatten(structure):
    """Leaves in depth-first order (map entries in key insertion order)."""
    out = []
    _flatten(structure, out)
    return out


def _flatten(s, out):
    if is_map(s):
        for v in s.values():
            _flatten(v, out)
    elif is_sequence(s):
        for v in s:
            _flatten(v, out)
    else:
        out.append(s)


def unflatten(template, leaves):
    """Pack ``leaves`` into the shape of ``template``."""
    leaves = list(leaves)
    it = iter(leaves)
    try:
        out = _pack(template, it)
    except StopIteration:
        raise StructureError(
            f"too few leaves: structure needs {len(flatten(template))}, got {len(leaves)}"
        ) from None
    rest = sum(1 for _ in it)
    if rest:
        raise StructureError(
            f"too many leaves: structure needs {len(leaves) - rest}, got {len(leaves)}"
        )
    return out


def _pack(t, it):
    if is_map(t):
        return {k: _pack(v, it) for k, v in t.items()}
    if is_sequence(t):
        items = [_pack(v, it) for v in t]
        return type(t)(items) if type(t) in (list, tuple) else type(t)(*items)
    return next(it)


def map_structure(fn, *structures):
    """Apply ``fn`` leafwise across structures that share one skeleton."""
    first = structures[0]
    # Maps may list the same keys in another order; align them by key.
    columns = [flatten(first)] + [flatten(reorder_like(first, s)) for s in structures[1:]]
    return unflatten(first, [fn(*xs) for xs in zip(*columns)])


def assert_same_structure(expected, actual, path="value"):
    """Raise StructureError (with the offending path) if the skeletons differ."""
    if is_map(expected):
        if not is_map(actual):
            raise StructureError(f"expected a named map, got {_kind(actual)}", path)
        if list(expected.keys()) != list(actual.keys()) and set(expected) != set(actual):
            missing = [k for k in expected if k not in actual]
            extra = [k for k in actual if k not in expected]
            raise StructureError(f"key mismatch (missing {missing}, unexpected {extra})", path)
        for k in expected:
            assert_same_structure(expected[k], actual[k], f"{path}[{k!r}]")
    elif is_sequence(expected):
        if not is_sequence(actual):
            raise StructureError(f"expected an ordered list, got {_kind(actual)}", path)
        if len(expected) != len(actual):
            raise StructureError(
                f"expected {len(expected)} elements, got {len(actual)}", path
            )
        for i, (e, a) in enumerate(zip(expected, actual)):
            assert_same_structure(e, a, f"{path}[{i}]")
    elif not is_leaf(actual):
        raise StructureError(f"expected a leaf, got {_kind(actual)}", path)


def _kind(x):
    if is_map(x):
        return "a named map"
    if is_sequence(x):
        return "an ordered list"
    return type(x).__name__


def reorder_like(template, value):
    """Return ``value`` with map keys in ``template``'s order (skeletons must agree)."""
    assert_same_structure(template, value)
    if is_map(template):
        return {k: reorder_like(template[k], value[k]) for k in template}
    if is_sequence(template):
        return type(value)(reorder_like(t, v) for t, v in zip(template, value))
    return value


def leaf_paths(structure, root=""):
    """Path strings of each leaf, aligned with ``flatten``."""
    out = []
    _paths(structure, root, out)
    return out


def _paths(s, path, out):
    if is_map(s):
        for k, v in s.items():
            _paths(v, f"{path}[{k!r}]" if path else str(k), out)
    elif is_sequence(s):
        for i, v in enumerate(s):
            _paths(v, f"{path}[{i}]", out)
    else:
        out.append(path or "value")


def flatten_up_to(template, value, path="value"):
    """Values of ``value`` at the leaf positions of ``template``.

    Below a template leaf anything is accepted, so leaf data written as nested
    Python lists is not mistaken for structure. Map entries are matched by
    key, whatever their order.
    """
    out = []
    _flatten_up_to(template, value, path, out)
    return out


def _flatten_up_to(t, v, path, out):
    if is_map(t):
        if not is_map(v):
            raise StructureError(f"expected a named map, got {_kind(v)}", path)
        missing = [k for k in t if k not in v]
        extra = [k for k in v if k not in t]
        if missing or extra:
            raise StructureError(f"key mismatch (missing {missing}, unexpected {extra})", path)
        for k in t:
            _flatten_up_to(t[k], v[k], f"{path}[{k!r}]", out)
    elif is_sequence(t):
        if not is_sequence(v):
            raise StructureError(f"expected an ordered list, got {_kind(v)}", path)
        if len(t) != len(v):
            raise StructureError(f"expected {len(t)} elements, got {len(v)}", path)
        for i, (a, b) in enumerate(zip(t, v)):
            _flatten_up_to(a, b, f"{path}[{i}]", out)
    else:
        out.append(v)
