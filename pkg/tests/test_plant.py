import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oempc import plant
from reference import cstr_exact_step, cstr_steady

P = plant.PlantParams()

inputs = st.floats(min_value=1e-6, max_value=2.0, allow_nan=False)
conc = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def test_zero_flow_limit_decays_like_exp():
    x = plant.step(plant.PlantState(1.0, 0.0), 1e-9, P)
    assert x.cA == pytest.approx(math.exp(-0.25), abs=1e-6)


@given(cA=conc, cB=conc, u=inputs)
def test_rk4_matches_matrix_exponential(cA, cB, u):
    x = plant.step(plant.PlantState(cA, cB), u, P)
    ref = cstr_exact_step((cA, cB), u)
    assert np.max(np.abs(np.array(x) - ref)) <= 1e-6


@pytest.mark.parametrize("u", [1e-3, 0.3, 1.0, 1.7, 2.0])
def test_constant_input_converges_to_closed_form(u):
    X, _ = plant.simulate(plant.PlantState(0.2, 0.9), np.full(2000, u), P)
    assert np.allclose(X[-1], cstr_steady(u), atol=1e-6)


def test_unit_flow_steady_state():
    x = plant.steady_state(1.0, P)
    assert x.cA == pytest.approx(0.5)
    assert x.cB == pytest.approx(0.47619, abs=1e-5)
    assert plant.stage_cost(x, 1.0, P) == pytest.approx(-0.90476, abs=1e-5)


@given(u=inputs)
def test_equilibrium_is_a_fixed_point(u):
    xs = plant.steady_state(u, P)
    x = plant.step(xs, u, P)
    assert np.allclose(x, xs, atol=1e-9)


def test_stage_cost_examples():
    assert plant.stage_cost(plant.PlantState(0.3, 0.0), 1.0, P) == 1.0
    assert plant.stage_cost(plant.PlantState(0.3, 0.7), 0.0, P) == 0.0


@given(cB=conc, u=inputs, s=st.floats(min_value=0.0, max_value=3.0))
def test_stage_cost_linear_in_u_affine_in_cB(cB, u, s):
    x = plant.PlantState(0.5, cB)
    assert plant.stage_cost(x, s * u, P) == pytest.approx(s * plant.stage_cost(x, u, P),
                                                          abs=1e-12)
    c0 = plant.stage_cost(plant.PlantState(0.5, 0.0), u, P)
    assert plant.stage_cost(x, u, P) == pytest.approx(c0 - u * P.alpha * cB, abs=1e-12)


def test_noise_free_measurement_is_identity():
    rng = np.random.default_rng(0)
    q = plant.PlantParams(noise_std_frac=0.0)
    assert plant.measure_cost(-0.9, rng, q) == -0.9


def test_noise_std_follows_relative_law():
    rng = np.random.default_rng(0)
    draws = plant.measure_costs(np.full(100_000, -0.9), rng, P)
    assert np.std(draws) == pytest.approx(0.018, rel=0.05)


def test_measurement_is_deterministic_per_seed():
    a = plant.measure_cost(-0.9, np.random.default_rng(4), P)
    b = plant.measure_cost(-0.9, np.random.default_rng(4), P)
    assert a == b


def test_vectorised_measurement_draws_the_same_sequence():
    c = np.linspace(-1.2, 0.4, 50)
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    one = [plant.measure_cost(v, r1, P) for v in c]
    assert np.array_equal(plant.measure_costs(c, r2, P), one)


def test_simulate_costs_match_stage_cost():
    U = np.linspace(0.1, 2.0, 20)
    X, c = plant.simulate(plant.PlantState(0.4, 0.1), U, P)
    assert X.shape == (21, 2)
    for j in range(20):
        assert c[j] == plant.stage_cost(plant.PlantState(*X[j]), U[j], P)


@pytest.mark.parametrize("u", [0.0, -0.1, 2.5, math.nan])
def test_inputs_outside_the_box_are_rejected(u):
    with pytest.raises(plant.PlantDomainError):
        plant.step(plant.PlantState(0.5, 0.5), u, P)


def test_invalid_parameters_are_rejected():
    with pytest.raises(ValueError):
        plant.PlantParams(k1=0.0)
    with pytest.raises(ValueError):
        plant.PlantParams(b_outflow_sign="plus")


def test_printed_variant_is_selectable():
    q = plant.PlantParams(b_outflow_sign="minus_cA_as_printed")
    x = plant.step(plant.PlantState(0.5, 0.5), 1.0, q)
    assert x != plant.step(plant.PlantState(0.5, 0.5), 1.0, P)
    assert x.cA >= 0 and x.cB >= 0
