import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oempc.solver import NlpProblem, minimize

TOL = 1e-6


def box(n, lo, hi):
    return np.full(n, lo, dtype=float), np.full(n, hi, dtype=float)


def test_interior_quadratic():
    res = minimize(NlpProblem(lambda x: (x[0] - 0.3) ** 2, *box(1, 0, 1), tol=TOL))
    assert res.x_opt[0] == pytest.approx(0.3, abs=TOL)
    assert res.converged


def test_active_bound():
    res = minimize(NlpProblem(lambda x: (x[0] - 2.0) ** 2, *box(1, 0, 1), tol=TOL))
    assert res.x_opt[0] == 1.0


def test_equality_constrained_quadratic():
    prob = NlpProblem(lambda x: x @ x, *box(2, -2, 2),
                      eq_constraints=lambda x: [x[0] + x[1] - 1.0], tol=TOL)
    res = minimize(prob)
    assert np.allclose(res.x_opt, [0.5, 0.5], atol=10 * TOL)
    assert res.eq_residual_norm <= 10 * TOL


def test_combined_form_equals_separate_form():
    def f(x):
        return (x[0] - 1) ** 2 + (x[1] + 0.5) ** 2

    def g(x):
        return [x[0] * x[1] + 0.2]

    a = minimize(NlpProblem(f, *box(2, -2, 2), eq_constraints=g))
    b = minimize(NlpProblem(None, *box(2, -2, 2), combined=lambda x: (f(x), g(x))))
    assert np.array_equal(a.x_opt, b.x_opt)


def rosen(x):
    return float(np.sum(100 * (x[1:] - x[:-1] ** 2) ** 2 + (1 - x[:-1]) ** 2))


def test_bitwise_determinism():
    mk = lambda: NlpProblem(rosen, *box(4, -2, 2), n_random_starts=3, seed=11)  # noqa: E731
    a, b = minimize(mk()), minimize(mk())
    assert np.array_equal(a.x_opt, b.x_opt) and a.f_opt == b.f_opt


@given(c=arrays(np.float64, 3, elements=st.floats(-3, 3)))
def test_solution_inside_box(c):
    res = minimize(NlpProblem(lambda x: float(np.sum((x - c) ** 4)), *box(3, -1, 1)))
    assert np.all(res.x_opt >= -1) and np.all(res.x_opt <= 1)


@given(starts=st.lists(arrays(np.float64, 2, elements=st.floats(-2, 2)),
                       min_size=1, max_size=3))
def test_never_worse_than_any_start(starts):
    def f(x):
        return float(np.abs(x[0] - 0.7) + 3 * np.abs(x[1] + 0.1) + np.sin(5 * x[0]))

    res = minimize(NlpProblem(f, *box(2, -2, 2), starts=starts))
    assert res.f_opt <= min(f(np.asarray(s)) for s in starts) + 1e-12


def test_gradient_vanishes_at_smooth_interior_minimum():
    A = np.array([[3.0, 0.5, 0.0], [0.5, 2.0, 0.3], [0.0, 0.3, 1.0]])
    b = np.array([0.2, -0.4, 0.1])

    def f(x):
        return 0.5 * x @ A @ x - b @ x

    res = minimize(NlpProblem(f, *box(3, -5, 5), tol=TOL))
    h = 1e-6
    g = [(f(res.x_opt + h * e) - f(res.x_opt - h * e)) / (2 * h) for e in np.eye(3)]
    assert np.max(np.abs(g)) <= 100 * TOL


def test_non_finite_values_act_as_barrier():
    def f(x):
        return np.inf if x[0] < 0.2 else (x[0] - 0.1) ** 2

    res = minimize(NlpProblem(f, *box(1, 0, 1), starts=[[0.9]]))
    assert res.x_opt[0] >= 0.2
    assert np.isfinite(res.f_opt) and res.f_opt <= f([0.9])


def test_iteration_cap_reports_not_converged():
    res = minimize(NlpProblem(rosen, *box(6, -2, 2), max_iter=2))
    assert not res.converged


def test_best_feasible_start_wins():
    # double well in x[0], constraint x[1] = 0.5; the left well is deeper
    def combined(x):
        return (x[0] ** 2 - 1.0) ** 2 + 0.3 * x[0], [x[1] - 0.5]

    res = minimize(NlpProblem(None, *box(2, -2, 2), combined=combined,
                              starts=[[0.9, 0.0], [-0.9, 0.0]]))
    assert res.x_opt[0] < -0.9
    assert res.per_start[0][0] > res.per_start[1][0]
    assert res.start_index == 1


def test_problem_validation():
    with pytest.raises(ValueError):
        NlpProblem(lambda x: 0.0, [1.0], [0.0])
    with pytest.raises(ValueError):
        NlpProblem(lambda x: 0.0, [0.0], [1.0], tol=0.0)
    with pytest.raises(ValueError):
        NlpProblem(None, [0.0], [1.0])
