"""Tensor-valued distributions and meta-distributions."""

from jointdist.distributions.base import Distribution
from jointdist.distributions.continuous import Dirichlet, Gamma, InverseGamma, Normal
from jointdist.distributions.discrete import Bernoulli, Multinomial, Poisson
from jointdist.distributions.meta import Independent, Sample

__all__ = [
    "Bernoulli",
    "Dirichlet",
    "Distribution",
    "Gamma",
    "Independent",
    "InverseGamma",
    "Multinomial",
    "Normal",
    "Poisson",
    "Sample",
]
