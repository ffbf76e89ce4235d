import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oempc import oracle, plant
from oempc.narx import (RegressorSpec, RegressorState, RolloutError, consistent_state,
                        rollout, shift)
from reference import regressor_rows, rollout_flat, shift_flat

vals = st.floats(min_value=-5, max_value=5, allow_nan=False)


def test_shift_algebra():
    z = RegressorState((1.0, 2.0, 3.0), (4.0, 5.0))
    assert shift(z, 6.0, 7.0) == RegressorState((7.0, 1.0, 2.0), (6.0, 4.0))


def test_steady_regressor_is_a_fixed_point():
    zs = RegressorState.steady(-0.9, 1.04, RegressorSpec())
    assert shift(zs, 1.04, -0.9) == zs


@given(a=vals, b=vals, u=vals, lhat=vals)
def test_memory_one_replaces_everything(a, b, u, lhat):
    z = RegressorState((a,), (b,))
    assert shift(z, u, lhat) == RegressorState((lhat,), (u,))


@given(z=st.lists(vals, min_size=5, max_size=5), u=vals, lhat=vals)
def test_shift_matches_flat_reference(z, u, lhat):
    spec = RegressorSpec()
    got = shift(RegressorState.from_array(z, spec), u, lhat).as_array()
    assert np.array_equal(got, shift_flat(z, u, lhat, 3, 2))


def test_vector_inputs_stay_grouped():
    spec = RegressorSpec(2, 2, 2)
    z = RegressorState.from_array([1, 2, 3, 4, 5, 6], spec)
    assert z.past_inputs == ((3.0, 4.0), (5.0, 6.0))
    z2 = shift(z, (7, 8), 9)
    assert np.array_equal(z2.as_array(), [9, 1, 7, 8, 3, 4])


def test_rollout_with_constant_oracle():
    z0 = RegressorState((0.1, 0.2, 0.3), (1.0, 1.0))
    traj = rollout(z0, [0.5, 0.6, 0.7], lambda z, u: 2.5)
    assert np.array_equal(traj.costs, [2.5, 2.5, 2.5])
    assert traj.horizon == 3 and len(traj.states) == 4


@given(U=st.lists(vals, min_size=1, max_size=8))
def test_rollout_reproduces_applied_inputs(U):
    z0 = RegressorState((0.0, 0.0, 0.0), (9.0, 8.0))
    traj = rollout(z0, U, lambda z, u: u * 2.0)
    last = traj.states[-1]
    expect = (list(reversed(U)) + [9.0, 8.0])[:2]
    assert list(last.past_inputs) == expect


def test_rollout_matches_reference_loop():
    def f(q):
        return float(np.sin(q).sum())

    z0 = np.array([0.1, -0.2, 0.3, 1.1, 0.9])
    U = [0.2, 1.5, 0.7, 1.9]
    traj = rollout(RegressorState.from_array(z0, RegressorSpec()), U,
                   lambda z, u: f(np.concatenate([z.as_array(), [u]])))
    ref, zN = rollout_flat(f, z0, U, 3, 2)
    assert np.array_equal(traj.costs, ref)
    assert np.array_equal(traj.states[-1].as_array(), zN)


def test_rollout_reports_failing_step():
    def bad(z, u):
        if u > 1:
            raise ValueError("boom")
        return 0.0

    with pytest.raises(RolloutError) as info:
        rollout(RegressorState((0.0,) * 3, (0.0,) * 2), [0.5, 1.5], bad)
    assert info.value.step == 1


def test_steady_rollout_stays_at_equilibrium():
    spec = RegressorSpec()
    zs = RegressorState.steady(-0.9, 1.0, spec)
    traj = rollout(zs, [1.0] * 6, lambda z, u: -0.9)
    assert all(s == zs for s in traj.states)


def test_exact_oracle_replays_recorded_trajectory():
    p = plant.PlantParams(noise_std_frac=0.0)
    rng = np.random.default_rng(1)
    U = rng.uniform(0.1, 2.0, 60)
    _, c = plant.simulate(plant.PlantState(0.3, 0.6), U, p)
    Q, y = regressor_rows(c, U, 3, 2)
    spec = RegressorSpec()
    model, err = oracle.fit_consistent(oracle.Dataset(spec, Q, y))
    assert err == 0.0
    z0 = RegressorState.from_array(Q[0, :5], spec)
    traj = model.rollout(z0, U[3:])
    assert np.max(np.abs(traj.costs - c[3:])) <= 1e-9


def test_consistent_state_entries_are_true_costs():
    p = plant.PlantParams()
    rng = np.random.default_rng(2)
    U = rng.uniform(0.1, 2.0, 3)
    X, _ = plant.simulate(plant.PlantState(*rng.uniform(0, 1, 2)), U, p)
    z = consistent_state(X, U, RegressorSpec(),
                         lambda x, u: plant.stage_cost(plant.PlantState(*x), u, p))
    for i in range(3):
        want = plant.stage_cost(plant.PlantState(*X[2 - i]), U[2 - i], p)
        assert z.past_costs[i] == want
    assert z.past_inputs == (U[2], U[1])


def test_consistent_state_at_equilibrium():
    p = plant.PlantParams()
    xs = plant.steady_state(1.0, p)
    ell = plant.stage_cost(xs, 1.0, p)
    z = consistent_state([xs] * 3, [1.0] * 3, RegressorSpec(),
                         lambda x, u: plant.stage_cost(x, u, p))
    assert z == RegressorState.steady(ell, 1.0, RegressorSpec())


def test_consistent_state_needs_full_history():
    with pytest.raises(ValueError):
        consistent_state([(0, 0)] * 2, [1.0, 1.0], RegressorSpec(), lambda x, u: 0.0)


def test_regressor_rejects_bad_input():
    with pytest.raises(ValueError):
        RegressorState((np.nan, 0.0, 0.0), (1.0, 1.0))
    with pytest.raises(ValueError):
        RegressorSpec(0, 2)
    with pytest.raises(ValueError):
        RegressorState.from_array([1, 2, 3], RegressorSpec())
