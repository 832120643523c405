import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointdist import structure as nest
from jointdist import tensor as T
from jointdist.autobatch import (
    AutoBatched,
    BatchedTensor,
    autobatched_log_prob,
    batch,
    lift_op,
    unbatch,
    vectorized_sample,
)
from jointdist.autodiff import gradient
from jointdist.distributions import Gamma, Normal
from jointdist.errors import ShapeError, UnsupportedOpError, VectorizationError
from jointdist.flavors import JointDistributionCoroutine, JointDistributionSequential
from jointdist.models import build

Root = JointDistributionCoroutine.Root


def bits(t):
    return T.as_tensor(t).payload.tobytes()


def shapes(x):
    return [tuple(v.shape) for v in nest.flatten(x)]


def slice_world(x, i):
    return nest.map_structure(lambda v: T.Tensor(T.as_tensor(v).payload[i], T.as_tensor(v).dtype), x)


# --- lifted ops -----------------------------------------------------------------


def test_slice_addresses_world_dims_only():
    z = BatchedTensor(np.arange(12.0).reshape(4, 3))
    assert z.shape == (3,)
    y = z[:2]
    assert y.batched and y.payload.shape == (4, 2)
    np.testing.assert_array_equal(y.payload, np.arange(12.0).reshape(4, 3)[:, :2])


def test_plain_constants_are_shared():
    x = BatchedTensor(np.arange(4.0))
    y = lift_op("add", x, 1.5)
    assert y.batched and y.shape == () and y.payload.tolist() == [1.5, 2.5, 3.5, 4.5]


def test_batched_matmul_matches_per_slice():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(6, 3, 5)), rng.normal(size=(6, 3, 4))
    out = lift_op("matmul", BatchedTensor(a), BatchedTensor(b), adjoint_a=True)
    assert out.payload.shape == (6, 5, 4)
    for i in range(6):
        want = T.matmul(T.Tensor(a[i]), T.Tensor(b[i]), adjoint_a=True)
        assert out.payload[i].tobytes() == want.payload.tobytes()


def test_reduce_sum_keeps_world_axis():
    x = BatchedTensor(np.ones((5, 2, 3)))
    assert lift_op("reduce_sum", x).payload.tolist() == [6.0] * 5


def test_unsupported_op():
    with pytest.raises(UnsupportedOpError):
        lift_op("fft", BatchedTensor(np.zeros(3)))


def test_batch_unbatch_round_trip_and_gradient():
    raw = T.Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    b = batch(raw)
    assert b.batched and b.shape == (2,)
    u = unbatch(T.mul(b, b))
    assert not u.batched and u.shape == (3, 2)
    (g,) = gradient(T.reduce_sum(u), [raw])
    np.testing.assert_array_equal(g.numpy(), 2 * np.arange(6.0).reshape(3, 2))
    with pytest.raises(ShapeError):
        batch(b)
    with pytest.raises(ShapeError):
        batch(T.Tensor(1.0))


# --- the vectorization hazard -----------------------------------------------


def test_vecdemo_shapes_single_and_automatic():
    jd = build("vecdemo").jd
    assert shapes(jd.sample(seed=0)) == [(3,), (), (2,)]
    ab = AutoBatched(jd)
    assert shapes(ab.sample([4], seed=0)) == [(4, 3), (4,), (4, 2)]
    assert shapes(vectorized_sample(ab, 4, 0)) == [(4, 3), (4,), (4, 2)]


@pytest.mark.parametrize("n", [2, 3, 8])
def test_naive_vectorization_fails(n):
    jd = build("vecdemo").jd
    with pytest.raises(ShapeError):
        vectorized_sample(jd, n, 0)


def test_batch_safe_rewrite_vectorizes_manually():
    jd = build("vecdemo", batch_safe=True).jd
    assert shapes(vectorized_sample(jd, 5, 0)) == [(5, 3), (5,), (5, 2)]


def test_vectorized_sample_flags_wrong_shapes():
    # The child ignores its parent, so its draw misses the leading axis.
    jd = JointDistributionSequential([Normal(0.0, 1.0), lambda a: Normal(0.0, 1.0)])
    with pytest.raises(VectorizationError):
        vectorized_sample(jd, 3, 0)
    with pytest.raises(ValueError):
        vectorized_sample(jd, 0, 0)


def test_root_flags_are_computed():
    assert AutoBatched(build("vecdemo").jd).root_flags == (True, True, False)

    def program():
        a = yield Normal(0.0, 1.0)
        yield Gamma(2.0, 1.0)
        yield Normal(a, 1.0)

    assert AutoBatched(JointDistributionCoroutine(program)).root_flags == (True, True, False)


def test_batch_of_one_matches_single_world_draw_path():
    built = build("vecdemo")
    ab = AutoBatched(built.jd)
    one = ab.sample([1], seed=9)
    again = ab.sample([1], seed=9)
    assert all(bits(a) == bits(b) for a, b in zip(nest.flatten(one), nest.flatten(again)))
    x = slice_world(one, 0)
    assert shapes(x) == [(3,), (), (2,)]
    assert bits(ab.log_prob(one)[0]) == bits(built.log_prob(x))


# --- autobatched density ----------------------------------------------------


@pytest.mark.parametrize("model_id", ["vecdemo", "pmf", "simple", "lda"])
def test_slice_consistency(model_id):
    built = build(model_id)
    ab = AutoBatched(built.jd)
    for seed in range(5):
        x = ab.sample([6], seed=seed)
        lp = autobatched_log_prob(ab, x)
        assert lp.shape == (6,)
        for i in range(6):
            single = built.log_prob(slice_world(x, i))
            assert np.isfinite(single.item())
            assert bits(lp[i]) == bits(single)


def test_multi_dim_sample_shape():
    ab = AutoBatched(build("vecdemo").jd)
    x = ab.sample([2, 3], seed=1)
    assert shapes(x) == [(2, 3, 3), (2, 3), (2, 3, 2)]
    assert ab.log_prob(x).shape == (2, 3)


def test_log_prob_of_single_world_value_is_scalar():
    built = build("vecdemo")
    x = built.jd.sample(seed=2)
    lp = AutoBatched(built.jd).log_prob(x)
    assert lp.shape == () and lp.item() == pytest.approx(float(built.reference(x)), abs=1e-12)


def test_plain_joint_cannot_sum_mismatched_batches():
    # The single-world vecdemo leaves have batch shapes [3], [] and [2].
    jd = build("vecdemo").jd
    with pytest.raises(ShapeError):
        jd.log_prob(jd.sample(seed=0))


def test_inconsistent_leading_axes():
    ab = AutoBatched(build("vecdemo").jd)
    x = list(ab.sample([4], seed=0))
    x[1] = T.Tensor(np.zeros(3))
    with pytest.raises(ShapeError):
        ab.log_prob(tuple(x))
    x[1] = T.Tensor(np.zeros(4))
    x[2] = T.Tensor(np.zeros((4, 3)))
    with pytest.raises(ShapeError):
        ab.log_prob(tuple(x))


def test_autobatched_structure():
    ab = AutoBatched(build("vecdemo").jd)
    assert tuple(ab.batch_shape) == ()
    assert [tuple(e) for e in ab.event_shape] == [(3,), (), (2,)]
    with pytest.raises(ShapeError):
        ab.sample([0], seed=0)
    with pytest.raises(TypeError):
        AutoBatched(Normal(0.0, 1.0))


def test_gradient_through_autobatched_log_prob():
    loc = T.Tensor(0.3, requires_grad=True)

    def program():
        m = yield Root(Normal(loc, 1.0))
        yield Normal(m, 2.0)

    ab = AutoBatched(JointDistributionCoroutine(program))
    # Detach the draw: the sample itself is reparameterized in loc.
    x = nest.map_structure(lambda v: T.Tensor(v.numpy()), ab.sample([5], seed=0))
    (g,) = gradient(T.reduce_sum(ab.log_prob(x)), [loc])
    want = float(np.sum(x[0].numpy() - 0.3))
    assert g.item() == pytest.approx(want, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31))
def test_worlds_depend_only_on_seed_and_index(n, seed):
    ab = AutoBatched(build("vecdemo").jd)
    small = ab.sample([n], seed=seed)
    big = ab.sample([n + 2], seed=seed)
    for a, b in zip(nest.flatten(small), nest.flatten(big)):
        assert a.payload.tobytes() == b.payload[:n].tobytes()


def test_worlds_are_uncorrelated():
    ab = AutoBatched(build("vecdemo").jd)
    x = ab.sample([20_000], seed=3)
    a, b = x[1].numpy()[0::2], x[1].numpy()[1::2]
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 4.0 / np.sqrt(a.size)
