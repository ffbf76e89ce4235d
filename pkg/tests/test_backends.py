import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oempc import _pure, oracle, plant
from oempc.narx import RegressorSpec

_kernels = pytest.importorskip("oempc._kernels")

SPEC = RegressorSpec()


def model(seed, n=300):
    rng = np.random.default_rng(seed)
    Q = rng.uniform(-1, 2, (n, 6))
    return oracle.fit(oracle.Dataset(SPEC, Q, np.cos(Q).sum(axis=1)), 3.0,
                      weights=rng.uniform(0.5, 2, 6))


@given(seed=st.integers(0, 10_000))
def test_interpolant_queries_agree_bitwise(seed):
    m = model(seed % 7)
    Q = np.random.default_rng(seed).uniform(-2, 3, (20, 6))
    a = _kernels.ki_predict_many(*m._args(), Q)
    b = _pure.ki_predict_many(*m._args(), Q)
    assert np.array_equal(a, b)


def test_rollouts_agree_bitwise():
    m = model(1)
    rng = np.random.default_rng(2)
    z0, U = rng.uniform(0, 1, 5), rng.uniform(0, 2, (12, 1))
    for a, b in zip(_kernels.ki_rollout(*m._args(), z0, U, 3, 2, 1),
                    _pure.ki_rollout(*m._args(), z0, U, 3, 2, 1)):
        assert np.array_equal(a, b)
    K = rng.normal(size=(1, 5))
    args = (z0, U[:4], 9, K, np.full(5, 0.5), np.array([1.0]), np.array([0.0]),
            np.array([2.0]), 3, 2, 1)
    for a, b in zip(_kernels.ki_rollout_feedback(*m._args(), *args),
                    _pure.ki_rollout_feedback(*m._args(), *args)):
        assert np.array_equal(a, b)


@pytest.mark.parametrize("variant", ["minus_cB", "minus_cA_as_printed"])
def test_reactor_rollouts_agree_bitwise(variant):
    p = plant.PlantParams(b_outflow_sign=variant)
    U = np.random.default_rng(3).uniform(1e-6, 2, 200)
    k1, k2, V, cA0, tau, sub, var = p.kernel_args()
    a = _kernels.cstr_rollout(0.3, 0.7, U, k1, k2, V, cA0, p.alpha, tau, sub, var)
    b = _pure.cstr_rollout(0.3, 0.7, U, k1, k2, V, cA0, p.alpha, tau, sub, var)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_environment_variable_selects_the_fallback():
    env = dict(os.environ, OEMPC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import oempc; print(oempc.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
