import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oempc import oracle
from oempc.narx import RegressorSpec, RegressorState
from reference import ki_envelope, ki_predict

SPEC = RegressorSpec()
W = SPEC.n_z + SPEC.m


def one_d(xs, ys):
    spec = RegressorSpec(1, 1)
    Q = np.column_stack([np.zeros(len(xs)), np.zeros(len(xs)), xs])
    return oracle.Dataset(spec, Q, ys)


def test_single_sample_is_constant():
    data = oracle.Dataset(SPEC, np.ones((1, W)), [0.7])
    m = oracle.fit(data, 3.0)
    assert m.predict_flat(np.ones(W)) == 0.7
    assert m.predict_flat(np.full(W, 4.0)) == pytest.approx(0.7, abs=1e-12)


def test_two_point_hand_evaluation():
    m = oracle.fit(one_d([0.0, 1.0], [0.0, 1.0]), 1.0)
    assert m.predict_flat([0.0, 0.0, 0.5]) == pytest.approx(0.5)


def test_fit_estimates_lipschitz_constant_of_abs():
    x = np.linspace(-1, 1, 41)
    m = oracle.fit(one_d(x, np.abs(x)))
    assert 0.9 <= m.L <= 1.5 * 1.1
    assert not m.L_overridden


def test_override_is_used_verbatim():
    x = np.linspace(0, 1, 5)
    m = oracle.fit(one_d(x, x), 100)
    assert m.L == 100.0 and m.L_overridden


def test_exact_interpolation_on_training_points(small_dataset):
    m = oracle.fit(small_dataset, 50.0)
    assert np.max(np.abs(m.predict_many(small_dataset.Q) - small_dataset.y)) <= 1e-9


def test_lipschitz_continuity_on_random_pairs(small_dataset):
    m = oracle.fit(small_dataset, 5.0)
    rng = np.random.default_rng(0)
    A = rng.uniform(-1.5, 1.5, (10_000, W))
    B = A + rng.normal(0, 0.2, A.shape)
    d = np.max(np.abs(A - B), axis=1)
    gap = np.abs(m.predict_many(A) - m.predict_many(B))
    assert np.all(gap <= m.L * d + 1e-9)


@given(q=arrays(np.float64, W, elements=st.floats(-2, 2)))
def test_prediction_matches_brute_force_and_envelope(q):
    rng = np.random.default_rng(1)
    Q = rng.uniform(-1, 1, (40, W))
    y = rng.normal(size=40)
    w = rng.uniform(0.5, 2.0, W)
    m = oracle.fit(oracle.Dataset(SPEC, Q, y), 7.0, weights=w)
    p = m.predict_flat(q)
    assert p == pytest.approx(ki_predict(Q, y, 7.0, w, q), abs=1e-12)
    lo, hi = ki_envelope(Q, y, 7.0, w, q)
    if lo <= hi:
        assert lo - 1e-12 <= p <= hi + 1e-12


def test_batch_and_online_fits_agree(small_dataset):
    a = small_dataset.take(np.arange(30))
    b = small_dataset.take(np.arange(30, 60))
    batch = oracle.fit(small_dataset, 4.0)
    online = oracle.add_samples(oracle.fit(a, 4.0), b)
    grid = np.random.default_rng(5).uniform(-1, 1, (100, W))
    assert np.array_equal(batch.predict_many(grid), online.predict_many(grid))


def test_adding_a_known_point_changes_nothing(small_dataset):
    m = oracle.fit(small_dataset, 4.0)
    again = oracle.add_samples(m, small_dataset.take([7]))
    grid = np.random.default_rng(6).uniform(-1, 1, (100, W))
    assert np.array_equal(m.predict_many(grid), again.predict_many(grid))


def test_adding_a_transient_grows_data_by_its_length(small_dataset):
    m = oracle.fit(small_dataset, 4.0)
    rng = np.random.default_rng(7)
    new = oracle.Dataset(SPEC, rng.uniform(-1, 1, (40, W)), rng.normal(size=40))
    bigger = oracle.add_samples(m, new)
    assert len(bigger.dataset) == len(m.dataset) + 40
    assert bigger.L == m.L


def test_adding_samples_accepts_sample_objects(small_dataset):
    m = oracle.fit(small_dataset, 4.0)
    s = oracle.Sample(RegressorState((0.0,) * 3, (0.5, 0.5)), 0.25, 1.5)
    assert len(oracle.add_samples(m, [s]).dataset) == len(m.dataset) + 1


def test_validation_on_training_subset(small_dataset):
    m = oracle.fit(small_dataset, 4.0)
    assert oracle.validate(m, small_dataset.take(np.arange(10))).mu <= 1e-9


def test_large_L_tends_to_nearest_neighbour(small_dataset):
    m = oracle.fit(small_dataset, 1e9)
    rng = np.random.default_rng(8)
    queries = rng.uniform(-1, 1, (100, W))
    d = np.max(np.abs(queries[:, None, :] - small_dataset.Q[None]), axis=2)
    nn = small_dataset.y[np.argmin(d, axis=1)]
    assert np.max(np.abs(m.predict_many(queries) - nn)) <= 1e-6


def test_consistent_fit_raises_L_until_exact():
    x = np.linspace(0, 1, 11)
    data = one_d(x, 30.0 * x**2)
    m, err = oracle.fit_consistent(data, 1.0)
    assert err == 0.0
    assert m.L >= 57.0  # largest neighbouring quotient
    m_lo = oracle.fit(data, 1.0)
    assert np.max(np.abs(m_lo.predict_many(data.Q) - data.y)) > 0


def test_consistent_fit_keeps_L0_when_already_exact(small_dataset):
    m, err = oracle.fit_consistent(small_dataset, 50.0)
    assert err == 0.0 and m.L == 50.0


def test_dataset_csv_round_trip(tmp_path, small_dataset):
    path = tmp_path / "d.csv"
    small_dataset.to_csv(path)
    back = oracle.Dataset.from_csv(path)
    assert back.spec == small_dataset.spec
    assert np.array_equal(back.Q, small_dataset.Q)
    assert np.array_equal(back.y, small_dataset.y)
    header = path.read_text().splitlines()[0]
    assert header == "l_k-1,l_k-2,l_k-3,u_k-1,u_k-2,u_k,l_k,experiment,index"


def test_dataset_rejects_bad_tables():
    with pytest.raises(ValueError):
        oracle.Dataset(SPEC, np.zeros((2, W)), [1.0])
    with pytest.raises(ValueError):
        oracle.Dataset(SPEC, np.full((1, W), np.nan), [1.0])
    with pytest.raises(ValueError):
        oracle.Dataset(SPEC, np.zeros((1, W)), [1.0]).subsample(0)


def test_fit_rejects_bad_inputs(small_dataset):
    with pytest.raises(oracle.OracleError):
        oracle.fit(oracle.Dataset(SPEC), 1.0)
    with pytest.raises(oracle.OracleError):
        oracle.fit(small_dataset, -1.0)
    with pytest.raises(oracle.OracleError):
        oracle.fit(small_dataset, 1.0, weights=np.ones(3))


def test_rollout_matches_pointwise_prediction(small_dataset):
    m = oracle.fit(small_dataset, 4.0)
    z0 = RegressorState.from_array(small_dataset.Q[0, :5], SPEC)
    traj = m.rollout(z0, [0.1, -0.3, 0.8])
    z = z0
    for j, u in enumerate([0.1, -0.3, 0.8]):
        assert traj.costs[j] == m.predict(z, u)
        z = traj.states[j + 1]
