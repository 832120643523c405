"""Declarative joint distributions over structured values.

Build a model in one of three flavors, then sample it, evaluate its joint log
density, vectorize it and fit its variables by gradient descent:

>>> import jointdist as jdist
>>> jd = jdist.JointDistributionSequential([
...     jdist.InverseGamma(3., 2.),
...     jdist.Normal(0., 1.),
...     lambda m, s: jdist.Normal(m, s),
... ])
>>> x = jd.sample(seed=0)
>>> lp = jd.log_prob(x)
"""

from jointdist import tensor
from jointdist.autobatch import AutoBatched, autobatched_log_prob, vectorized_sample
from jointdist.autodiff import GradientTape, gradient
from jointdist.distributions import (
    Bernoulli,
    Dirichlet,
    Distribution,
    Gamma,
    Independent,
    InverseGamma,
    Multinomial,
    Normal,
    Poisson,
    Sample,
)
from jointdist.errors import (
    ConfigError,
    CycleError,
    DomainError,
    DTypeError,
    NotIndependentError,
    ShapeError,
    StructureError,
    UnsupportedOpError,
    ValueShapeError,
    VectorizationError,
)
from jointdist.flavors import (
    JointDistributionCoroutine,
    JointDistributionNamed,
    JointDistributionSequential,
)
from jointdist.joint import JointDistribution, Root
from jointdist.random import RandomStream
from jointdist.tensor import Shape, Tensor
from jointdist.trainable import (
    Adam,
    DeferredTensor,
    Exp,
    Softplus,
    TransformedVariable,
    Variable,
    fit_step,
    minimize,
    trainable_variables,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AutoBatched",
    "Bernoulli",
    "ConfigError",
    "CycleError",
    "DTypeError",
    "DeferredTensor",
    "Dirichlet",
    "Distribution",
    "DomainError",
    "Exp",
    "Gamma",
    "GradientTape",
    "Independent",
    "InverseGamma",
    "JointDistribution",
    "JointDistributionCoroutine",
    "JointDistributionNamed",
    "JointDistributionSequential",
    "Multinomial",
    "Normal",
    "NotIndependentError",
    "Poisson",
    "RandomStream",
    "Root",
    "Sample",
    "Shape",
    "ShapeError",
    "Softplus",
    "StructureError",
    "Tensor",
    "TransformedVariable",
    "UnsupportedOpError",
    "ValueShapeError",
    "Variable",
    "VectorizationError",
    "autobatched_log_prob",
    "fit_step",
    "gradient",
    "minimize",
    "tensor",
    "trainable_variables",
    "vectorized_sample",
]
