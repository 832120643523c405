import numpy as np
import pytest

from jointdist import structure as nest
from jointdist import tensor as T
from jointdist.autobatch import AutoBatched
from jointdist.distributions import Independent, Sample
from jointdist.errors import ConfigError
from jointdist.models import REGISTRY, build, model_ids


def shapes(tree):
    return [tuple(s) for s in nest.flatten(tree)]


@pytest.mark.parametrize("model_id", model_ids())
def test_defaults_build_and_sample(model_id):
    built = build(model_id)
    x = built.jd.sample(seed=0)
    assert np.isfinite(float(built.reference_log_prob(x)))
    assert np.isfinite(built.log_prob(x).item())


def test_registry_contents():
    assert set(model_ids()) == {"simple", "pmf", "lda", "nested", "vecdemo", "learnable"}
    assert all(REGISTRY[m].doc for m in model_ids())


def test_event_structures():
    assert shapes(build("simple").jd.event_shape) == [(), (), ()]
    assert shapes(build("pmf", F=3, U=5, I=4).jd.event_shape) == [(3, 5), (3, 4), (5, 4)]
    assert shapes(build("lda", K=4, V=7).jd.event_shape) == [(), (4,), (4,), (4, 7)]
    assert shapes(build("vecdemo").jd.batch_shape) == [(3,), (), (2,)]


def test_pmf_uses_sample_and_independent():
    ds, _ = build("pmf").jd.sample_distributions(seed=0)
    assert isinstance(ds[0], Sample) and isinstance(ds[1], Sample)
    assert isinstance(ds[2], Independent) and ds[2].reinterpreted_batch_ndims == 2


def test_lda_structure():
    built = build("lda")
    ds, _ = built.jd.sample_distributions(seed=0)
    assert isinstance(ds[3], Independent) and ds[3].reinterpreted_batch_ndims == 1
    assert built.jd.root_flags == (True, True, False, False)
    assert [v.name for v in built.jd.trainable_variables] == ["alpha", "beta"]
    assert [v.name for v in build("learnable").jd.trainable_variables] == ["scale", "loc"]


@pytest.mark.parametrize(
    "model_id,hp",
    [
        ("nope", {}),
        ("simple", {"flavor": "functional"}),
        ("simple", {"bogus": 1}),
        ("pmf", {"F": 0}),
        ("pmf", {"observation_noise_scale": -1.0}),
        ("lda", {"alpha": [1.0, 1.0]}),
        ("lda", {"avg_doc_length": "many"}),
        ("learnable", {"scale": 0.0}),
    ],
)
def test_bad_configuration(model_id, hp):
    with pytest.raises(ConfigError):
        build(model_id, **hp)


@pytest.mark.parametrize("flavor", ["sequential", "named", "coroutine"])
def test_simple_flavors_reference_value(flavor):
    built = build("simple", flavor=flavor)
    value = {"s": 1.0, "m": 0.0, "x": 0.5}
    names = built.node_order
    x = value if flavor == "named" else type(built.jd.dtype)(value[k] for k in names)
    # Frozen from scipy.stats.
    assert built.log_prob(x).item() == pytest.approx(-2.576582705289455, abs=1e-12)
    assert float(built.reference_log_prob(x)) == pytest.approx(-2.576582705289455, abs=1e-12)


def test_learnable_reference_value():
    built = build("learnable")
    # Frozen from scipy.stats in real64; the published -6.1378145 carries single-precision rounding.
    assert float(built.reference_log_prob([1.0, 0.0])) == pytest.approx(-6.137814358072873, abs=1e-12)
    assert built.log_prob([1.0, 0.0]).item() == pytest.approx(-6.137814358072873, abs=1e-12)


@pytest.mark.parametrize("model_id", model_ids())
def test_log_prob_matches_reference(model_id):
    built = build(model_id)
    sampler = AutoBatched(built.jd) if REGISTRY[model_id].global_batch else built.jd
    for seed in range(10):
        x = sampler.sample([10], seed=seed)
        got = built.log_prob(x).numpy()
        want = np.asarray(built.reference_log_prob(x))
        assert got.shape == want.shape == (10,)
        assert np.max(np.abs(got - want)) <= 1e-9


def test_references_track_variables():
    built = build("learnable")
    built.parameters["loc"].assign(-7.0)
    built.parameters["scale"].assign(0.25)
    x = [1.0, 0.0]
    assert float(built.reference_log_prob(x)) == pytest.approx(-10.628588983112381, abs=1e-12)
    assert built.log_prob(x).item() == pytest.approx(float(built.reference_log_prob(x)), abs=1e-12)


def test_lda_count_laws():
    built = build("lda", K=4, V=6, avg_doc_length=15.0)
    for seed in range(30):
        n, theta, z, w = (v.numpy() for v in built.jd.sample([3], seed=seed))
        assert np.array_equal(z.sum(-1), np.round(n))
        assert np.array_equal(w.sum(-1), z)
        assert np.allclose(theta.sum(-1), 1.0)


def test_lda_rejects_counts_that_do_not_add_up():
    built = build("lda")
    n, theta, z, w = built.jd.sample(seed=0)
    bad = (n, theta, T.add(z, T.Tensor(np.array([1.0, 0.0, 0.0]))), w)
    assert built.log_prob(bad).item() == -np.inf


def test_pmf_ratings_have_zero_mean():
    built = build("pmf")
    r = built.jd.sample([4000], seed=11)[2].numpy()
    per_draw = r.reshape(4000, -1).mean(-1)
    se = per_draw.std(ddof=1) / np.sqrt(per_draw.size)
    assert abs(per_draw.mean()) < 4 * se


def test_vecdemo_batch_safe_variant_agrees():
    plain = build("vecdemo")
    safe = build("vecdemo", batch_safe=True)
    x = AutoBatched(plain.jd).sample([5], seed=1)
    a = plain.log_prob(x).payload
    b = AutoBatched(safe.jd).log_prob(x).payload
    assert np.array_equal(a, b)
