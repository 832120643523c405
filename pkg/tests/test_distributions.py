import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from helpers import check_gradients
from jointdist import tensor as T
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
from jointdist.autodiff import gradient
from jointdist.errors import DomainError, ShapeError
from jointdist.tensor import INT, REAL, Tensor
from jointdist.trainable import Variable

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def lp(d, x):
    return d.log_prob(x).numpy()


# --- closed-form values -------------------------------------------------------


def test_normal_standard_value():
    assert lp(Normal(0.0, 1.0), 0.0) == pytest.approx(-0.9189385, abs=5e-8)
    assert lp(Normal(0.0, 1.0), 0.0) == pytest.approx(-HALF_LOG_2PI, abs=1e-15)


def test_inverse_gamma_uses_scale_as_beta():
    # 3 ln 2 - ln Γ(3) - 4 ln 1 - 2 = 2 ln 2 - 2
    assert lp(InverseGamma(3.0, 2.0), 1.0) == pytest.approx(2 * np.log(2) - 2, abs=1e-15)
    assert lp(InverseGamma(3.0, 2.0), 1.0) == pytest.approx(-0.6137056, abs=5e-8)


def test_learnable_intermediate_values():
    # Closed forms evaluated in real64; see the decisions ledger for the rounding note.
    n0 = lp(Normal(0.0, 100.0), 0.0)
    n7 = lp(Normal(-7.0, 100.0), 0.0)
    assert n0 == pytest.approx(-np.log(100.0) - HALF_LOG_2PI, abs=1e-14)
    assert n7 == pytest.approx(-np.log(100.0) - HALF_LOG_2PI - 49.0 / 20000.0, abs=1e-14)
    assert n0 == pytest.approx(-5.5241087, abs=1e-7)
    assert n7 == pytest.approx(-5.5265587, abs=1e-7)
    assert lp(InverseGamma(3.0, 0.25), 1.0) == pytest.approx(-5.1020302, abs=1e-7)


SCIPY_CASES = [
    (lambda: Normal([0.5, -1.0], [2.0, 0.3]), lambda x: stats.norm.logpdf(x, [0.5, -1.0], [2.0, 0.3]), [[0.1, -0.7], [3.0, -1.2]]),
    (lambda: Gamma([2.0, 0.5], [1.5, 3.0]), lambda x: stats.gamma.logpdf(x, [2.0, 0.5], scale=1 / np.array([1.5, 3.0])), [[0.4, 0.1], [2.0, 1.3]]),
    (lambda: InverseGamma([3.0, 1.5], [2.0, 0.7]), lambda x: stats.invgamma.logpdf(x, [3.0, 1.5], scale=[2.0, 0.7]), [[0.4, 0.1], [2.0, 1.3]]),
    (lambda: Poisson([0.5, 7.0]), lambda x: stats.poisson.logpmf(x, [0.5, 7.0]), [[0.0, 3.0], [2.0, 11.0]]),
    (lambda: Bernoulli([0.2, 0.9]), lambda x: stats.bernoulli.logpmf(x, [0.2, 0.9]), [[0, 1], [1, 0]]),
]


@pytest.mark.parametrize("make,ref,x", SCIPY_CASES)
def test_log_prob_matches_scipy(make, ref, x):
    np.testing.assert_allclose(lp(make(), x), ref(np.asarray(x)), rtol=1e-13, atol=1e-13)


def test_dirichlet_matches_scipy():
    alpha = np.array([0.7, 2.0, 3.5])
    x = np.array([0.2, 0.3, 0.5])
    assert lp(Dirichlet(alpha), x) == pytest.approx(stats.dirichlet.logpdf(x, alpha), abs=1e-13)


def test_multinomial_matches_scipy_probs_and_logits():
    p = np.array([0.2, 0.5, 0.3])
    x = np.array([3.0, 4.0, 1.0])
    want = stats.multinomial.logpmf(x, 8, p)
    assert lp(Multinomial(8.0, probs=p), x) == pytest.approx(want, abs=1e-12)
    logits = np.log(p) + 4.2
    assert lp(Multinomial(8.0, logits=logits), x) == pytest.approx(want, abs=1e-12)


# --- normalization ------------------------------------------------------------

CONTINUOUS = [
    (Normal(1.5, 0.7), (-10.0, 12.0)),
    (Gamma(2.5, 1.3), (0.0, 60.0)),
    (Gamma(0.6, 2.0), (0.0, 40.0)),
    (InverseGamma(3.0, 2.0), (0.0, 2000.0)),
    (InverseGamma(1.5, 0.5), (0.0, 1e6)),
]


@pytest.mark.parametrize("d,support", CONTINUOUS)
def test_continuous_density_integrates_to_one(d, support):
    lo, hi = support

    def pdf(x):
        if x <= 0 and lo == 0.0:
            return 0.0
        return float(np.exp(d.log_prob(x).item()))

    total, _ = integrate.quad(pdf, lo, hi, limit=500, points=None if hi < 1e5 else [1.0, 10.0, 1000.0])
    assert abs(total - 1.0) < 1e-3


@pytest.mark.parametrize("rate", [0.3, 4.0, 55.0])
def test_poisson_pmf_sums_to_one(rate):
    d = Poisson(rate)
    k = np.arange(0.0, 1000.0)
    p = np.exp(lp(d, k))
    tail = np.nonzero(p >= 1e-12)[0].max() + 1
    assert abs(p[: tail + 1].sum() - 1.0) < 1e-9


def test_bernoulli_pmf_sums_to_one():
    p = np.exp(lp(Bernoulli(0.37), [0, 1]))
    assert abs(p.sum() - 1.0) < 1e-15


def test_multinomial_pmf_sums_to_one():
    d = Multinomial(6.0, probs=[0.1, 0.6, 0.3])
    total = 0.0
    for a in range(7):
        for b in range(7 - a):
            total += np.exp(lp(d, [a, b, 6 - a - b]))
    assert abs(total - 1.0) < 1e-9


# --- support handling ---------------------------------------------------------


def test_continuous_support_violation_raises():
    with pytest.raises(DomainError):
        InverseGamma(3.0, 2.0).log_prob(-1.0)
    with pytest.raises(DomainError):
        Gamma(2.0, 1.0).log_prob(0.0)
    with pytest.raises(DomainError):
        Dirichlet([1.0, 1.0]).log_prob([0.0, 1.0])


def test_parameter_domain_violation_raises():
    with pytest.raises(DomainError):
        Normal(0.0, -1.0).log_prob(0.0)
    with pytest.raises(DomainError):
        Gamma(0.0, 1.0).sample(seed=0)
    with pytest.raises(DomainError):
        Bernoulli(1.5).log_prob(1)


def test_representable_count_overshoot_is_minus_inf():
    assert lp(Multinomial(5.0, probs=[0.5, 0.5]), [3.0, 3.0]) == -np.inf
    assert lp(Poisson(2.0), 1.5) == -np.inf
    assert lp(Poisson(2.0), -1.0) == -np.inf


def test_bernoulli_rejects_non_binary_values():
    with pytest.raises(DomainError):
        Bernoulli(0.5).log_prob(2)


def test_multinomial_probs_xor_logits():
    with pytest.raises(ValueError):
        Multinomial(3.0, probs=[0.5, 0.5], logits=[0.0, 0.0])
    with pytest.raises(ValueError):
        Multinomial(3.0)


def test_multinomial_total_count_must_be_integral():
    with pytest.raises(DomainError):
        Multinomial(2.5, probs=[0.5, 0.5]).sample(seed=0)


# --- shape law ----------------------------------------------------------------

sample_shapes = st.lists(st.integers(1, 3), max_size=3)
batch_shapes = st.lists(st.integers(1, 3), max_size=2)


def _make(kind, batch):
    ones = np.ones(batch)
    if kind == "normal":
        return Normal(0.0 * ones, ones)
    if kind == "gamma":
        return Gamma(2.0 * ones, ones)
    if kind == "invgamma":
        return InverseGamma(3.0 * ones, ones)
    if kind == "poisson":
        return Poisson(3.0 * ones)
    if kind == "bernoulli":
        return Bernoulli(0.3 * ones)
    if kind == "dirichlet":
        return Dirichlet(np.ones(tuple(batch) + (4,)))
    if kind == "multinomial":
        return Multinomial(5.0 * ones, probs=np.full(tuple(batch) + (3,), 1 / 3))
    raise AssertionError(kind)


KINDS = ["normal", "gamma", "invgamma", "poisson", "bernoulli", "dirichlet", "multinomial"]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(KINDS), sample_shapes, batch_shapes, st.integers(0, 1000))
def test_shape_law(kind, sample_shape, batch, seed):
    d = _make(kind, batch)
    assert tuple(d.batch_shape) == tuple(batch)
    x = d.sample(sample_shape, seed=seed)
    assert tuple(x.shape) == tuple(sample_shape) + tuple(d.batch_shape) + tuple(d.event_shape)
    assert x.dtype == d.dtype
    assert tuple(d.log_prob(x).shape) == tuple(sample_shape) + tuple(d.batch_shape)


def test_log_prob_broadcasts_value_against_batch():
    d = Normal([0.0, 1.0, 2.0], 1.0)
    assert d.log_prob(0.0).shape == (3,)
    assert d.log_prob(np.zeros((4, 1))).shape == (4, 3)
    with pytest.raises(ShapeError):
        d.log_prob(np.zeros(2))


def test_multinomial_count_broadcasting_shape():
    z = np.array([4.0, 0.0, 7.0])
    d = Multinomial(total_count=z, probs=np.full((3, 5), 0.2))
    x = d.sample(seed=1)
    assert x.shape == (3, 5)
    np.testing.assert_array_equal(x.numpy().sum(-1), z)


def test_normal_vector_scale_sample_shape():
    assert Normal(0.0, [1.0, 2.0, 3.0]).sample(seed=0).shape == (3,)
    assert Normal(0.0, 1.0).sample([5], seed=0).shape == (5,)


def test_sampling_is_deterministic():
    d = Gamma([0.5, 3.0], 2.0)
    a, b = d.sample([4], seed=9), d.sample([4], seed=9)
    assert a.payload.tobytes() == b.payload.tobytes()
    assert d.sample([4], seed=10).payload.tobytes() != a.payload.tobytes()


def test_dtypes():
    assert Bernoulli(0.5).sample(seed=0).dtype == INT
    assert Poisson(1.0).sample(seed=0).dtype == REAL
    assert Bernoulli(0.5).log_prob(Tensor(1.0)).item() == pytest.approx(np.log(0.5))


# --- moments ------------------------------------------------------------------


def test_normal_and_poisson_sample_means():
    n = 100_000
    x = Normal(2.0, 3.0).sample([n], seed=1).numpy()
    assert abs(x.mean() - 2.0) < 4 * 3.0 / np.sqrt(n)
    y = Poisson(6.5).sample([n], seed=2).numpy()
    assert abs(y.mean() - 6.5) < 4 * np.sqrt(6.5 / n)


ANALYTIC = [
    (Normal(1.0, 2.0), stats.norm(1.0, 2.0)),
    (Gamma(3.0, 2.0), stats.gamma(3.0, scale=0.5)),
    (InverseGamma(4.0, 3.0), stats.invgamma(4.0, scale=3.0)),
    (Poisson(3.5), stats.poisson(3.5)),
    (Bernoulli(0.3), stats.bernoulli(0.3)),
]


@pytest.mark.parametrize("d,ref", ANALYTIC)
def test_mean_stddev_entropy_match_scipy(d, ref):
    assert d.mean().item() == pytest.approx(ref.mean(), rel=1e-12)
    assert d.stddev().item() == pytest.approx(ref.std(), rel=1e-12)
    assert d.entropy().item() == pytest.approx(ref.entropy(), rel=1e-9, abs=1e-12)


def test_dirichlet_moments_match_scipy():
    a = np.array([1.5, 2.0, 0.5])
    d = Dirichlet(a)
    ref = stats.dirichlet(a)
    np.testing.assert_allclose(d.mean().numpy(), ref.mean(), rtol=1e-13)
    np.testing.assert_allclose(d.stddev().numpy(), np.sqrt(ref.var()), rtol=1e-13)
    assert d.entropy().item() == pytest.approx(ref.entropy(), rel=1e-12)


def test_inverse_gamma_undefined_moments_are_nan():
    d = InverseGamma(1.5, 1.0)
    assert np.isnan(d.stddev().item())
    assert np.isnan(InverseGamma(0.5, 1.0).mean().item())


def test_multinomial_moments():
    d = Multinomial(10.0, probs=[0.2, 0.8])
    np.testing.assert_allclose(d.mean().numpy(), [2.0, 8.0])
    np.testing.assert_allclose(d.stddev().numpy(), np.sqrt([1.6, 1.6]))


# --- gradients ----------------------------------------------------------------

GRADIENT_CASES = {
    "normal": (lambda loc, scale, x: Normal(loc, scale).log_prob(x), ([0.3, -1.0], [1.5, 0.6], [0.9, -0.4])),
    "gamma": (lambda a, r, x: Gamma(a, r).log_prob(x), ([2.0, 0.7], [1.3, 2.5], [0.8, 0.3])),
    "invgamma": (lambda a, b, x: InverseGamma(a, b).log_prob(x), ([3.0, 1.2], [2.0, 0.6], [1.1, 0.4])),
    "poisson_rate": (lambda r: Poisson(r).log_prob([2.0, 5.0]), ([1.5, 4.0],)),
    "bernoulli_probs": (lambda p: Bernoulli(p).log_prob([1, 0]), ([0.3, 0.6],)),
    "dirichlet": (lambda a, x: Dirichlet(a).log_prob(T.div(x, T.reduce_sum(x, [-1], keepdims=True))), ([1.5, 2.0, 0.8], [0.2, 0.5, 0.3])),
    "multinomial_logits": (lambda l: Multinomial(6.0, logits=l).log_prob([1.0, 2.0, 3.0]), ([0.1, -0.4, 0.9],)),
    "multinomial_probs": (lambda p: Multinomial(6.0, probs=p).log_prob([1.0, 2.0, 3.0]), ([0.2, 0.3, 0.5],)),
}


@pytest.mark.parametrize("name", sorted(GRADIENT_CASES))
def test_log_prob_gradients_match_finite_differences(name):
    fn, args = GRADIENT_CASES[name]
    check_gradients(fn, *args)


def test_normal_sampling_is_reparameterized():
    loc = Variable(1.0)
    scale = Variable(2.0)
    d = Normal(loc, scale)
    x = d.sample(seed=4)
    eps = (x.item() - 1.0) / 2.0
    g_loc, g_scale = gradient(d.sample(seed=4), [loc, scale])
    assert g_loc.item() == pytest.approx(1.0)
    assert g_scale.item() == pytest.approx(eps, abs=1e-15)


# --- meta-distributions -------------------------------------------------------


def test_independent_value_from_table():
    d = Independent(Normal(np.zeros((2, 3)), 1.0), 2)
    assert lp(d, np.zeros((2, 3))) == pytest.approx(-5.5136312, abs=1e-7)
    assert lp(d, np.zeros((2, 3))) == pytest.approx(-6 * HALF_LOG_2PI, abs=1e-14)


def test_independent_shapes_and_errors():
    inner = Normal(np.zeros((4, 2, 3)), 1.0)
    d = Independent(inner, 2)
    assert d.batch_shape == (4,) and d.event_shape == (2, 3)
    # Parameters are read at use, so the rank check happens there too.
    too_many = Independent(inner, 4)
    with pytest.raises(ShapeError):
        too_many.event_shape
    with pytest.raises(ShapeError):
        too_many.sample(seed=0)


def test_independent_sums_inner_log_prob_exactly():
    inner = Gamma(np.linspace(1.0, 3.0, 6).reshape(2, 3), 1.5)
    x = inner.sample([5], seed=3)
    got = Independent(inner, 2).log_prob(x)
    want = T.reduce_sum(inner.log_prob(x), [-2, -1])
    assert got.payload.tobytes() == want.payload.tobytes()


def test_independent_zero_is_identity():
    inner = Normal([0.0, 1.0], 2.0)
    x = inner.sample([3], seed=2)
    assert Independent(inner, 0).log_prob(x).payload.tobytes() == inner.log_prob(x).payload.tobytes()


def test_sample_meta_shapes():
    d = Sample(Normal(0.0, 1.0), [4])
    assert d.event_shape == (4,) and d.batch_shape == ()
    d2 = Sample(Dirichlet(np.ones((2, 3))), [5, 4])
    assert d2.batch_shape == (2,) and d2.event_shape == (5, 4, 3)
    x = d2.sample([7], seed=1)
    assert x.shape == (7, 2, 5, 4, 3)
    assert d2.log_prob(x).shape == (7, 2)


def test_sample_meta_log_prob_sums_slices_exactly():
    inner = Normal([0.0, 3.0], [1.0, 2.0])
    d = Sample(inner, [3])
    x = d.sample([2], seed=5)  # shape [2, 2, 3]: sample, batch, extra
    per_slice = [inner.log_prob(T.slice_index(x, (Ellipsis, k))) for k in range(3)]
    stacked = np.stack([p.numpy() for p in per_slice], axis=-1)
    want = T.reduce_sum(Tensor(stacked), [-1])
    assert d.log_prob(x).payload.tobytes() == want.payload.tobytes()


def test_sample_meta_moments_and_entropy():
    d = Sample(Gamma(2.0, 1.0), [3])
    np.testing.assert_array_equal(d.mean().numpy(), [2.0, 2.0, 2.0])
    assert d.entropy().item() == pytest.approx(3 * Gamma(2.0, 1.0).entropy().item())


# --- deferred parameter reads -------------------------------------------------


def test_parameters_are_read_at_use():
    loc = Variable(0.0)
    d = Normal(loc, 1.0)
    before = lp(d, 0.0)
    loc.assign(2.0)
    assert lp(d, 0.0) == pytest.approx(before - 2.0)
    assert d.trainable_variables == [loc]
