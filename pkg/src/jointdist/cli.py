"""Command-line interface over the model registry.

    jointdist list
    jointdist describe MODEL [--hp K=V ...]
    jointdist sample MODEL --seed S [--sample-shape 3,2] [--autobatch] [--n N] [--value FILE]
    jointdist logprob MODEL VALUE_FILE [--set NAME=VALUE ...] [--autobatch]
    jointdist fit MODEL DATA_FILE --seed S --steps N [--learning-rate LR ...]

Output is JSON on stdout unless ``--pretty`` is given. Exit codes: 0 success,
2 usage or configuration error, 3 malformed value or structure mismatch,
4 the model cannot do what was asked (no trainable variables, not vectorizable).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

import numpy as np

from jointdist import models
from jointdist import serialization
from jointdist import structure as nest
from jointdist import tensor as T
from jointdist.autobatch import AutoBatched, vectorized_sample
from jointdist.errors import (
    ConfigError,
    DomainError,
    DTypeError,
    NotIndependentError,
    ShapeError,
    StructureError,
    VectorizationError,
)
from jointdist.tensor import Shape
from jointdist.trainable import Adam, minimize

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALUE = 3
EXIT_CAPABILITY = 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# --- argument helpers ----------------------------------------------------------


def _parse_json_or_string(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _key_values(pairs, flag):
    out = {}
    for item in pairs or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise CliError(f"{flag} expects NAME=VALUE, got {item!r}", EXIT_USAGE)
        out[key] = _parse_json_or_string(raw)
    return out


def _sample_shape(text):
    if text is None or text.strip() in ("", "[]"):
        return Shape(())
    raw = text.strip()
    parts = json.loads(raw) if raw.startswith("[") else [p for p in raw.split(",") if p.strip()]
    try:
        dims = [int(p) for p in parts]
    except (TypeError, ValueError):
        raise CliError(f"invalid --sample-shape {text!r}", EXIT_USAGE) from None
    if any(d < 0 for d in dims):
        raise CliError(f"invalid --sample-shape {text!r}", EXIT_USAGE)
    return Shape(dims)


def _build(args):
    hp = _key_values(getattr(args, "hp", None), "--hp")
    built = models.build(args.model, **hp)
    for name, raw in _key_values(getattr(args, "set", None), "--set").items():
        if name not in built.parameters:
            known = ", ".join(built.parameters) or "none"
            raise CliError(f"model {args.model!r} has no variable {name!r}; known: {known}", EXIT_USAGE)
        try:
            built.parameters[name].assign(np.asarray(raw, dtype=np.float64))
        except (ShapeError, ValueError, TypeError) as e:
            raise CliError(f"--set {name}: {e}", EXIT_USAGE) from e
    return built


def _require_seed(args):
    if args.seed is None:
        raise CliError(f"{args.command} needs --seed (there is no ambient randomness)", EXIT_USAGE)
    return args.seed


def _read_value(path):
    try:
        if path == "-":
            text = sys.stdin.read()
        else:
            with open(path) as f:
                text = f.read()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e}", EXIT_USAGE) from e
    return serialization.loads(text)


def _emit(text, output=None):
    if output:
        with open(output, "w") as f:
            f.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _shape_json(structure):
    return nest.map_structure(lambda s: list(s), structure)


def _format_number(v):
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return "%#.9g" % v


def _number_json(arr):
    """JSON text for a real array with 9 significant digits per entry."""
    arr = np.asarray(arr)
    if arr.ndim == 0:
        return _format_number(arr)
    return "[" + ", ".join(_number_json(a) for a in arr) + "]"


# --- commands -----------------------------------------------------------------


def cmd_list(args):
    rows = [
        {"id": e.id, "flavors": list(e.flavors), "doc": e.doc} for e in models.REGISTRY.values()
    ]
    if args.pretty:
        width = max(len(r["id"]) for r in rows)
        return "\n".join(f"{r['id']:<{width}}  {r['doc']}" for r in rows)
    return json.dumps(rows)


def _leaf_labels(jd):
    """Leaf paths labelled by node name at the top level."""
    if nest.is_map(jd.dtype):
        return nest.leaf_paths(jd.dtype, "")
    labels = []
    for name, sub in zip(jd.node_names, jd.dtype):
        labels.extend(nest.leaf_paths(sub, name))
    return labels


def _describe(built):
    jd = built.jd
    leaf_paths = _leaf_labels(jd)
    leaves = []
    leaf_roots = nest.flatten(jd.leaf_root_flags)
    for path, dtype, batch, event, root in zip(
        leaf_paths,
        nest.flatten(jd.dtype),
        nest.flatten(jd.batch_shape),
        nest.flatten(jd.event_shape),
        leaf_roots,
    ):
        leaves.append(
            {
                "path": path,
                "dtype": dtype,
                "batch_shape": list(batch),
                "event_shape": list(event),
                "root": bool(root),
            }
        )
    return {
        "model": built.entry.id,
        "flavor": jd.model.flavor,
        "doc": built.entry.doc,
        "hyperparameters": _jsonable(built.hparams),
        "canonical_order": list(jd.node_names),
        "roots": [n for n, r in zip(jd.node_names, jd.root_flags) if r],
        "dependent": [n for n, r in zip(jd.node_names, jd.root_flags) if not r],
        "dtype": jd.dtype,
        "batch_shape": _shape_json(jd.batch_shape),
        "event_shape": _shape_json(jd.event_shape),
        "leaves": leaves,
        "trainable_variables": [v.name for v in jd.trainable_variables],
        "parameters": {
            name: serialization.encode(p.read()) for name, p in built.parameters.items()
        },
        "observed": list(built.entry.observed),
        "global_batch": built.entry.global_batch,
    }


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    return x


def cmd_describe(args):
    report = _describe(_build(args))
    if not args.pretty:
        return json.dumps(report)
    lines = [
        f"model: {report['model']}  flavor: {report['flavor']}",
        f"order: {', '.join(report['canonical_order'])}",
        f"roots: {', '.join(report['roots']) or '-'}  dependent: {', '.join(report['dependent']) or '-'}",
        "",
        f"{'leaf':<16}{'dtype':<8}{'batch':<12}{'event':<12}root",
    ]
    for leaf in report["leaves"]:
        lines.append(
            f"{leaf['path']:<16}{leaf['dtype']:<8}{str(leaf['batch_shape']):<12}"
            f"{str(leaf['event_shape']):<12}{'yes' if leaf['root'] else 'no'}"
        )
    for name, v in report["parameters"].items():
        lines.append(f"parameter {name}: shape {v['shape']} value {v['data']}")
    return "\n".join(lines)


def cmd_sample(args):
    seed = _require_seed(args)
    built = _build(args)
    shape = _sample_shape(args.sample_shape)
    if args.n is not None:
        if args.n < 1:
            raise CliError("--n must be positive", EXIT_USAGE)
        if args.sample_shape:
            raise CliError("use either --n or --sample-shape", EXIT_USAGE)
    partial = _read_value(args.value) if args.value else None
    if args.autobatch:
        if partial is not None:
            raise CliError("--value is not supported with --autobatch", EXIT_USAGE)
        ab = AutoBatched(built.jd)
        x = ab.sample([args.n] if args.n is not None else (list(shape) or [1]), seed)
        if args.n is None and not shape:
            x = nest.map_structure(lambda t: T.reshape(t, tuple(t.shape[1:])), x)
    elif args.n is not None:
        if partial is not None:
            raise CliError("--value is not supported with --n", EXIT_USAGE)
        try:
            x = vectorized_sample(built.jd, args.n, seed)
        except (ShapeError, VectorizationError) as e:
            raise CliError(
                f"model {built.entry.id!r} does not vectorize manually: {e}; try --autobatch",
                EXIT_CAPABILITY,
            ) from e
    else:
        x = built.jd.sample(shape, seed=seed, value=partial)
    if args.pretty:
        lines = []
        for path, leaf in zip(_leaf_labels(built.jd), nest.flatten(x)):
            t = T.as_tensor(leaf)
            lines.append(f"{path:<12}{t.dtype:<8}{str(list(t.shape)):<12}{np.array2string(t.numpy(), precision=6)}")
        return "\n".join(lines)
    return serialization.dumps(x)


def cmd_logprob(args):
    built = _build(args)
    value = _read_value(args.value_file)
    density = AutoBatched(built.jd) if args.autobatch else built.density
    lp = density.log_prob(value)
    return _number_json(lp.numpy())


def _lead_shape(jd, data):
    leaves = nest.flatten_up_to(jd.dtype, data)
    shapes = [b + e for b, e in zip(nest.flatten(jd.batch_shape), nest.flatten(jd.event_shape))]
    paths = nest.leaf_paths(jd.dtype, "value")
    lead = None
    for leaf, per_world, path in zip(leaves, shapes, paths):
        if leaf is None:
            continue
        shape = tuple(T.as_tensor(leaf).shape)
        k = len(per_world)
        if len(shape) < k or tuple(shape[len(shape) - k :]) != tuple(per_world):
            raise StructureError(f"shape {list(shape)} does not end in {list(per_world)}", path)
        this = shape[: len(shape) - k]
        if lead is not None and this != lead:
            raise StructureError(f"leading dims {list(this)} differ from {list(lead)}", path)
        lead = this
    return Shape(lead or ())


def _check_observed(built, data):
    node_values = built.jd._split(data)
    by_name = dict(zip(built.jd.node_names, node_values))
    for name in built.entry.observed:
        if by_name[name] is None:
            raise StructureError(f"observed node {name!r} is missing from the data")


def cmd_fit(args):
    seed = _require_seed(args)
    built = _build(args)
    variables = built.jd.trainable_variables
    if not variables:
        raise CliError(f"model {built.entry.id!r} has no trainable variables", EXIT_CAPABILITY)
    if args.steps < 0:
        raise CliError("--steps must be non-negative", EXIT_USAGE)
    data = _read_value(args.data_file)
    _check_observed(built, data)
    lead = _lead_shape(built.jd, data)
    # Latents absent from the data are drawn once, ancestrally, and then held fixed.
    _, full = built.jd.sample_distributions(lead, seed=seed, value=data)

    def loss():
        return T.neg(T.reduce_sum(built.log_prob(full)))

    optimizer = Adam(
        learning_rate=args.learning_rate, beta_1=args.beta_1, beta_2=args.beta_2, epsilon=args.epsilon
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        trace = minimize(loss, args.steps, optimizer=optimizer, trainable_variables=variables)
    final = {name: serialization.encode(p.read()) for name, p in built.parameters.items()}
    if args.pretty:
        lines = [f"steps: {len(trace)}"]
        if trace:
            lines.append(f"loss: {trace[0]:.9g} -> {trace[-1]:.9g}")
        for name, v in final.items():
            lines.append(f"{name}: {v['data']}")
        return "\n".join(lines)
    return json.dumps({"loss": trace, "variables": final, "steps": len(trace)})


# --- entry point ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="jointdist", description="Sample, evaluate and fit registry models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, model=True):
        if model:
            p.add_argument("model", help="registry model id (see `jointdist list`)")
            p.add_argument("--hp", action="append", metavar="K=V", help="hyperparameter override (JSON value)")
        p.add_argument("--pretty", action="store_true", help="human-readable output")
        p.add_argument("-o", "--output", help="write to this file instead of stdout")

    common(sub.add_parser("list", help="list registry models"), model=False)

    common(sub.add_parser("describe", help="structures, canonical order and root flags"))

    p = sub.add_parser("sample", help="draw a structured sample")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--sample-shape", help="e.g. 3 or 3,2 or [3,2]")
    p.add_argument("--autobatch", action="store_true", help="vectorize automatically over worlds")
    p.add_argument("--n", type=int, help="number of vectorized worlds")
    p.add_argument("--value", help="JSON file with a partial value to condition on")
    p.add_argument("--set", action="append", metavar="NAME=VALUE", help="assign a variable")

    p = sub.add_parser("logprob", help="joint log density of a value")
    common(p)
    p.add_argument("value_file", help="JSON value file, or - for stdin")
    p.add_argument("--autobatch", action="store_true", help="leading axis indexes worlds")
    p.add_argument("--set", action="append", metavar="NAME=VALUE", help="assign a variable")

    p = sub.add_parser("fit", help="maximum likelihood by gradient descent")
    common(p)
    p.add_argument("data_file", help="JSON data file (null for latent leaves)")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--beta-1", type=float, default=0.9)
    p.add_argument("--beta-2", type=float, default=0.999)
    p.add_argument("--epsilon", type=float, default=1e-7)
    p.add_argument("--set", action="append", metavar="NAME=VALUE", help="initial variable value")
    return parser


COMMANDS = {
    "list": cmd_list,
    "describe": cmd_describe,
    "sample": cmd_sample,
    "logprob": cmd_logprob,
    "fit": cmd_fit,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text = COMMANDS[args.command](args)
    except CliError as e:
        sys.stderr.write(f"jointdist: {e}\n")
        return e.code
    except ConfigError as e:
        sys.stderr.write(f"jointdist: {e}\n")
        return EXIT_USAGE
    except (NotIndependentError, VectorizationError) as e:
        sys.stderr.write(f"jointdist: {e}\n")
        return EXIT_CAPABILITY
    except (StructureError, ShapeError, DomainError, DTypeError) as e:
        sys.stderr.write(f"jointdist: {e}\n")
        return EXIT_VALUE
    _emit(text, args.output)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
