"""JSON encoding of structured values.

Tensor leaves become ``{"dtype": ..., "shape": [...], "data": [...]}`` with
row-major data, maps become objects, sequences become arrays and a missing
leaf is ``null``. Floats are written with Python's shortest round-trip repr,
so decoding restores every real64 bit exactly. Non-finite values use the
``NaN`` / ``Infinity`` / ``-Infinity`` literals accepted by most JSON readers.

On input a bare JSON number is also accepted as a scalar leaf (int64 for
integers, real64 otherwise), which keeps hand-written value files short.
"""

from __future__ import annotations

import json

import numpy as np

from jointdist import structure as nest
from jointdist import tensor as T
from jointdist.errors import StructureError
from jointdist.tensor import INT, REAL, Tensor

_LEAF_KEYS = {"dtype", "shape", "data"}


def encode(value):
    """A JSON-ready object for a structure of tensors (or numbers / None)."""
    if value is nest.MISSING:
        return None
    if nest.is_map(value):
        return {str(k): encode(v) for k, v in value.items()}
    if nest.is_sequence(value):
        return [encode(v) for v in value]
    t = T.as_tensor(value)
    arr = np.asarray(t.payload)
    if t.dtype == INT:
        data = [int(v) for v in arr.reshape(-1)]
    else:
        data = [float(v) for v in arr.reshape(-1)]
    shape = list(arr.shape)
    return {"dtype": t.dtype, "shape": shape, "data": data}


def decode(obj, path="value"):
    """Inverse of :func:`encode`; JSON arrays decode to lists."""
    if obj is None:
        return nest.MISSING
    if isinstance(obj, bool):
        raise StructureError(f"booleans are not values (got {obj})", path)
    if isinstance(obj, int):
        return Tensor(np.int64(obj), INT)
    if isinstance(obj, float):
        return Tensor(np.float64(obj), REAL)
    if isinstance(obj, list):
        return [decode(v, f"{path}[{i}]") for i, v in enumerate(obj)]
    if isinstance(obj, dict):
        if set(obj) == _LEAF_KEYS:
            return _decode_leaf(obj, path)
        return {k: decode(v, f"{path}[{k!r}]") for k, v in obj.items()}
    raise StructureError(f"unexpected JSON value {obj!r}", path)


def _decode_leaf(obj, path):
    dtype, shape, data = obj["dtype"], obj["shape"], obj["data"]
    if dtype not in (REAL, INT):
        raise StructureError(f"unknown dtype {dtype!r}", path)
    if not isinstance(shape, list) or not all(
        isinstance(d, int) and not isinstance(d, bool) and d >= 0 for d in shape
    ):
        raise StructureError(f"shape must be a list of non-negative ints, got {shape!r}", path)
    if not isinstance(data, list):
        raise StructureError("data must be a flat list of numbers", path)
    size = int(np.prod(shape, dtype=np.int64))
    if len(data) != size:
        raise StructureError(f"shape {shape} needs {size} numbers, got {len(data)}", path)
    for v in data:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise StructureError(f"data must hold numbers, got {v!r}", path)
        if dtype == INT and not isinstance(v, int):
            raise StructureError(f"int64 data must hold integers, got {v!r}", path)
    np_dtype = np.int64 if dtype == INT else np.float64
    arr = np.array(data, dtype=np_dtype).reshape(shape)
    return Tensor(arr, dtype)


def dumps(value, indent=None):
    return json.dumps(encode(value), indent=indent, allow_nan=True)


def loads(text):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise StructureError(f"invalid JSON: {e}") from e
    return decode(obj)


def values_equal(a, b):
    """Exact equality of two structures: same skeleton, dtypes, shapes and values."""
    if a is None or b is None:
        return a is None and b is None
    if nest.is_map(a) or nest.is_map(b):
        return (
            nest.is_map(a)
            and nest.is_map(b)
            and list(a) == list(b)
            and all(values_equal(a[k], b[k]) for k in a)
        )
    if nest.is_sequence(a) or nest.is_sequence(b):
        return (
            nest.is_sequence(a)
            and nest.is_sequence(b)
            and len(a) == len(b)
            and all(values_equal(x, y) for x, y in zip(a, b))
        )
    ta, tb = T.as_tensor(a), T.as_tensor(b)
    pa, pb = np.asarray(ta.payload), np.asarray(tb.payload)
    if ta.dtype != tb.dtype or pa.shape != pb.shape:
        return False
    if ta.dtype == INT:
        return bool(np.array_equal(pa, pb))
    # NaN payload bits are not preserved by JSON; signed zeros are.
    return bool(np.array_equal(pa, pb, equal_nan=True) and np.array_equal(np.signbit(pa), np.signbit(pb)))
