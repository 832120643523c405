"""Registry of example models with independent reference densities.

Each entry builds a joint distribution from a hyperparameter map and carries
a closed-form log density computed directly with ``scipy.stats``. The
reference never goes through the joint driver, so comparing the two checks the
driver, the flavors and the distribution formulas at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special, stats

from jointdist import structure as nest
from jointdist import tensor as T
from jointdist.autobatch import AutoBatched
from jointdist.distributions import (
    Bernoulli,
    Dirichlet,
    Gamma,
    Independent,
    InverseGamma,
    Multinomial,
    Normal,
    Poisson,
    Sample,
)
from jointdist.errors import ConfigError
from jointdist.flavors import (
    JointDistributionCoroutine,
    JointDistributionNamed,
    JointDistributionSequential,
)
from jointdist.joint import Root
from jointdist.trainable import Exp, Softplus, TransformedVariable, Variable


@dataclass
class ModelEntry:
    id: str
    doc: str
    defaults: dict
    constructor: Callable
    flavors: tuple = ("sequential",)
    aliases: dict = field(default_factory=dict)
    observed: tuple = ()
    # Per-node batch shapes that do not align; the joint density is per world.
    global_batch: bool = False


@dataclass
class BuiltModel:
    """A constructed model plus handles on its learnable parameters."""

    jd: object
    parameters: dict
    hparams: dict
    entry: ModelEntry
    reference: Callable = None
    node_order: tuple = ()

    @property
    def density(self):
        """The distribution whose ``log_prob`` is this model's joint density."""
        if self.entry.global_batch:
            return AutoBatched(self.jd)
        return self.jd

    def log_prob(self, x):
        return self.density.log_prob(x)

    def reference_log_prob(self, x):
        """Closed-form joint log density; leading sample dims broadcast."""
        return self.reference(x)


def _leaves(x, order):
    """Values of a sample keyed by node name, whatever the flavor's container."""
    if nest.is_map(x):
        return {k: np.asarray(T.as_tensor(x[k]).payload) for k in order}
    return {k: np.asarray(T.as_tensor(v).payload) for k, v in zip(order, x)}


def _real(x, name):
    try:
        return float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"hyperparameter {name} must be a number, got {x!r}") from None


def _positive(x, name):
    v = _real(x, name)
    if not v > 0:
        raise ConfigError(f"hyperparameter {name} must be positive, got {x!r}")
    return v


def _count(x, name):
    if isinstance(x, bool) or not float(x).is_integer() or int(x) < 1:
        raise ConfigError(f"hyperparameter {name} must be a positive integer, got {x!r}")
    return int(x)


# --- simple -----------------------------------------------------------------


def _simple(flavor="sequential"):
    if flavor == "sequential":
        jd = JointDistributionSequential(
            [InverseGamma(3.0, 2.0), Normal(0.0, 1.0), lambda m, s: Normal(m, s)],
            names=["s", "m", "x"],
        )
        order = ("s", "m", "x")
    elif flavor == "named":
        jd = JointDistributionNamed(
            dict(m=Normal(0.0, 1.0), s=InverseGamma(3.0, 2.0), x=lambda m, s: Normal(m, s))
        )
        order = ("m", "s", "x")
    elif flavor == "coroutine":

        def program():
            m = yield Root(Normal(0.0, 1.0))
            s = yield Root(InverseGamma(3.0, 2.0))
            yield Normal(m, s)

        jd = JointDistributionCoroutine(program, names=["m", "s", "x"])
        order = ("m", "s", "x")
    else:
        raise ConfigError(f"flavor must be sequential, named or coroutine, got {flavor!r}")

    def reference(x):
        v = _leaves(x, order)
        return (
            stats.invgamma.logpdf(v["s"], 3.0, scale=2.0)
            + stats.norm.logpdf(v["m"], 0.0, 1.0)
            + stats.norm.logpdf(v["x"], v["m"], v["s"])
        )

    return jd, {}, reference, order


# --- probabilistic matrix factorization -------------------------------------


def _pmf(
    n_factors=3,
    n_users=5,
    n_items=4,
    user_trait_scale=1.0,
    item_trait_scale=1.0,
    observation_noise_scale=0.5,
):
    f = _count(n_factors, "n_factors")
    u = _count(n_users, "n_users")
    i = _count(n_items, "n_items")
    su = _positive(user_trait_scale, "user_trait_scale")
    sv = _positive(item_trait_scale, "item_trait_scale")
    sr = _positive(observation_noise_scale, "observation_noise_scale")
    jd = JointDistributionSequential(
        [
            Sample(Normal(0.0, su), sample_shape=[f, u]),
            Sample(Normal(0.0, sv), sample_shape=[f, i]),
            lambda v, u: Independent(
                Normal(T.matmul(u, v, adjoint_a=True), sr), reinterpreted_batch_ndims=2
            ),
        ],
        names=["u", "v", "r"],
    )
    order = ("u", "v", "r")

    def reference(x):
        val = _leaves(x, order)
        uu, vv, rr = val["u"], val["v"], val["r"]
        mean = np.einsum("...fu,...fi->...ui", uu, vv)
        return (
            stats.norm.logpdf(uu, 0.0, su).sum(axis=(-2, -1))
            + stats.norm.logpdf(vv, 0.0, sv).sum(axis=(-2, -1))
            + stats.norm.logpdf(rr, mean, sr).sum(axis=(-2, -1))
        )

    return jd, {}, reference, order


# --- latent Dirichlet allocation --------------------------------------------


def _lda(num_topics=3, num_words=10, avg_doc_length=20.0, alpha=None, beta=None):
    k = _count(num_topics, "num_topics")
    v = _count(num_words, "num_words")
    rate = _positive(avg_doc_length, "avg_doc_length")
    alpha = np.ones(k) if alpha is None else np.asarray(alpha, dtype=np.float64)
    beta = np.zeros((k, v)) if beta is None else np.asarray(beta, dtype=np.float64)
    if alpha.shape != (k,) or not np.all(alpha > 0):
        raise ConfigError(f"alpha must be {k} positive numbers")
    if beta.shape != (k, v) or not np.all(np.isfinite(beta)):
        raise ConfigError(f"beta must be a finite {k}x{v} matrix")
    concentration = TransformedVariable(alpha, Softplus(), name="alpha")
    logits = Variable(beta, name="beta")

    def program():
        n = yield Root(Poisson(rate))
        theta = yield Root(Dirichlet(concentration))
        # The Poisson draw is a real-valued count; round it to an exact integer total.
        z = yield Multinomial(total_count=T.round_(n), probs=theta)
        yield Independent(Multinomial(total_count=z, logits=logits), reinterpreted_batch_ndims=1)

    jd = JointDistributionCoroutine(program, names=["n", "theta", "z", "w"])
    order = ("n", "theta", "z", "w")

    def reference(x):
        val = _leaves(x, order)
        n, theta, z, w = val["n"], val["theta"], val["z"], val["w"]
        a = concentration.numpy()
        topic_log_p = beta_log_softmax(logits.numpy())
        lead = n.shape
        out = np.empty(lead)
        for idx in np.ndindex(*lead):
            total = np.round(n[idx])
            lp = stats.poisson.logpmf(n[idx], rate)
            lp += stats.dirichlet.logpdf(theta[idx], a)
            lp += _multinomial_logpmf(z[idx], total, np.log(theta[idx]))
            for t in range(k):
                lp += _multinomial_logpmf(w[idx][t], z[idx][t], topic_log_p[t])
            out[idx] = lp
        return out

    return jd, {"alpha": concentration, "beta": logits}, reference, order


def beta_log_softmax(logits):
    return logits - special.logsumexp(logits, axis=-1, keepdims=True)


def _multinomial_logpmf(x, n, log_p):
    if np.any(x < 0) or np.any(x != np.floor(x)) or x.sum() != n:
        return -np.inf
    return special.gammaln(n + 1.0) - special.gammaln(x + 1.0).sum() + special.xlogy(x, np.exp(log_p)).sum()


# --- nested -----------------------------------------------------------------


def _nested():
    def inner():
        yield Root(Bernoulli(probs=0.25))
        yield Root(Normal(0.0, 1.0))

    jd = JointDistributionNamed(
        dict(
            a=JointDistributionCoroutine(inner),
            b=JointDistributionSequential((Poisson(rate=2.0), Gamma(concentration=2.0, rate=1.0))),
        )
    )

    def reference(x):
        a0 = np.asarray(T.as_tensor(x["a"][0]).payload)
        a1 = np.asarray(T.as_tensor(x["a"][1]).payload)
        b0 = np.asarray(T.as_tensor(x["b"][0]).payload)
        b1 = np.asarray(T.as_tensor(x["b"][1]).payload)
        return (
            stats.bernoulli.logpmf(a0, 0.25)
            + stats.norm.logpdf(a1, 0.0, 1.0)
            + stats.poisson.logpmf(b0, 2.0)
            + stats.gamma.logpdf(b1, 2.0, scale=1.0)
        )

    return jd, {}, reference, ("a", "b")


# --- vectorization demo -----------------------------------------------------


def _vecdemo(batch_safe=False):
    batch_safe = bool(batch_safe)

    def program():
        z = yield Root(Normal(0.0, [1.0, 2.0, 3.0]))
        x = yield Root(Normal(0.0, 1.0))
        if batch_safe:
            yield Normal(z[..., :2] + x[..., None], 1.0)
        else:
            yield Normal(z[:2] + x, 1.0)

    jd = JointDistributionCoroutine(program, names=["z", "x", "y"])
    order = ("z", "x", "y")

    def reference(x):
        v = _leaves(x, order)
        z, xx, y = v["z"], v["x"], v["y"]
        return (
            stats.norm.logpdf(z, 0.0, np.array([1.0, 2.0, 3.0])).sum(-1)
            + stats.norm.logpdf(xx, 0.0, 1.0)
            + stats.norm.logpdf(y, z[..., :2] + xx[..., None], 1.0).sum(-1)
        )

    return jd, {}, reference, order


# --- learnable --------------------------------------------------------------


def _learnable(loc=0.0, scale=2.0):
    loc_var = Variable(_real(loc, "loc"), name="loc")
    scale_var = TransformedVariable(_positive(scale, "scale"), Exp(), name="scale")
    jd = JointDistributionSequential(
        [InverseGamma(concentration=3.0, scale=scale_var), Normal(loc=loc_var, scale=100.0)],
        names=["p", "m"],
    )
    order = ("p", "m")

    def reference(x):
        v = _leaves(x, order)
        return stats.invgamma.logpdf(v["p"], 3.0, scale=scale_var.numpy()) + stats.norm.logpdf(
            v["m"], loc_var.numpy(), 100.0
        )

    return jd, {"scale": scale_var, "loc": loc_var}, reference, order


REGISTRY = {
    e.id: e
    for e in [
        ModelEntry(
            "simple",
            "Normal with conjugate priors: s ~ InverseGamma(3, 2), m ~ Normal(0, 1), x ~ Normal(m, s).",
            {"flavor": "sequential"},
            _simple,
            flavors=("sequential", "named", "coroutine"),
        ),
        ModelEntry(
            "pmf",
            "Probabilistic matrix factorization: U, V i.i.d. Normal blocks, R ~ Normal(U^T V, noise).",
            {
                "n_factors": 3,
                "n_users": 5,
                "n_items": 4,
                "user_trait_scale": 1.0,
                "item_trait_scale": 1.0,
                "observation_noise_scale": 0.5,
            },
            _pmf,
            aliases={"F": "n_factors", "U": "n_users", "I": "n_items"},
            observed=("r",),
        ),
        ModelEntry(
            "lda",
            "Latent Dirichlet allocation for one document: length n, topic mix theta, "
            "topic counts z, word counts w per topic. alpha (softplus) and beta are learnable.",
            {"num_topics": 3, "num_words": 10, "avg_doc_length": 20.0, "alpha": None, "beta": None},
            _lda,
            flavors=("coroutine",),
            aliases={"K": "num_topics", "V": "num_words"},
            observed=("n", "z", "w"),
        ),
        ModelEntry(
            "nested",
            "Joint distributions as components: a named map of a coroutine and a sequential joint.",
            {},
            _nested,
            flavors=("named",),
        ),
        ModelEntry(
            "vecdemo",
            "z ~ Normal(0, [1, 2, 3]), x ~ Normal(0, 1), y ~ Normal(z[:2] + x, 1). "
            "batch_safe=true indexes from the end so manual vectorization works.",
            {"batch_safe": False},
            _vecdemo,
            flavors=("coroutine",),
            global_batch=True,
        ),
        ModelEntry(
            "learnable",
            "p ~ InverseGamma(3, scale), m ~ Normal(loc, 100) with variables loc and "
            "scale (Exp-transformed).",
            {"loc": 0.0, "scale": 2.0},
            _learnable,
            observed=("p", "m"),
        ),
    ]
}


def model_ids():
    return list(REGISTRY)


def build(model_id, **hparams):
    """Construct registry model ``model_id`` with hyperparameter overrides."""
    try:
        entry = REGISTRY[model_id]
    except KeyError:
        raise ConfigError(f"unknown model {model_id!r}; known: {', '.join(REGISTRY)}") from None
    resolved = dict(entry.defaults)
    for key, value in hparams.items():
        key = entry.aliases.get(key, key)
        if key not in entry.defaults:
            raise ConfigError(
                f"model {model_id!r} has no hyperparameter {key!r}; "
                f"known: {', '.join(entry.defaults) or 'none'}"
            )
        resolved[key] = value
    try:
        jd, parameters, reference, order = entry.constructor(**resolved)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid hyperparameters for {model_id!r}: {e}") from e
    return BuiltModel(jd, parameters, resolved, entry, reference, order)
