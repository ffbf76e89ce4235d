"""Regressor state of the cost oracle and the prediction model built on it.

The regressor at time k holds the last ``n_a`` costs and the last ``n_b``
inputs, newest first. Flattened it is::

    [l(k-1), ..., l(k-n_a), u(k-1), ..., u(k-n_b)]

with each input's ``m`` components contiguous. Oracle distances are computed
on this layout (followed by the current input), so the order is fixed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class RegressorSpec:
    n_a: int = 3
    n_b: int = 2
    m: int = 1

    def __post_init__(self):
        if self.n_a < 1 or self.n_b < 1 or self.m < 1:
            raise ValueError("n_a, n_b and m must all be >= 1")

    @property
    def n_z(self) -> int:
        return self.n_a + self.m * self.n_b

    @property
    def memory(self) -> int:
        """History length needed to fill a regressor."""
        return max(self.n_a, self.n_b)


def _as_input(u, m: int):
    if m == 1:
        return float(np.asarray(u, dtype=np.float64).reshape(-1)[0])
    return tuple(float(v) for v in np.asarray(u, dtype=np.float64).reshape(m))


@dataclass(frozen=True)
class RegressorState:
    """Past costs and inputs, newest first.

    For ``m == 1`` the inputs are floats; otherwise tuples of length ``m``.
    """

    past_costs: tuple
    past_inputs: tuple

    def __post_init__(self):
        flat = self.as_array()
        if not np.all(np.isfinite(flat)):
            raise ValueError("regressor entries must be finite")

    @property
    def n_a(self) -> int:
        return len(self.past_costs)

    @property
    def n_b(self) -> int:
        return len(self.past_inputs)

    @property
    def m(self) -> int:
        first = self.past_inputs[0]
        return 1 if np.ndim(first) == 0 else len(first)

    @property
    def spec(self) -> RegressorSpec:
        return RegressorSpec(self.n_a, self.n_b, self.m)

    def as_array(self) -> np.ndarray:
        costs = np.asarray(self.past_costs, dtype=np.float64).reshape(-1)
        inputs = np.asarray(self.past_inputs, dtype=np.float64).reshape(-1)
        return np.concatenate([costs, inputs])

    @classmethod
    def from_array(cls, flat, spec: RegressorSpec) -> "RegressorState":
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        if flat.size != spec.n_z:
            raise ValueError(f"expected {spec.n_z} entries, got {flat.size}")
        costs = tuple(float(c) for c in flat[: spec.n_a])
        raw = flat[spec.n_a:].reshape(spec.n_b, spec.m)
        inputs = tuple(_as_input(r, spec.m) for r in raw)
        return cls(costs, inputs)

    @classmethod
    def steady(cls, cost: float, u, spec: RegressorSpec) -> "RegressorState":
        """The equilibrium regressor (cost, ..., cost, u, ..., u)."""
        return cls((float(cost),) * spec.n_a, (_as_input(u, spec.m),) * spec.n_b)


def shift(z: RegressorState, u, lhat: float) -> RegressorState:
    """One step of the regressor dynamics: push ``lhat`` and ``u`` in front."""
    u = _as_input(u, z.m)
    return RegressorState((float(lhat),) + z.past_costs[:-1],
                          (u,) + z.past_inputs[:-1])


@dataclass(frozen=True)
class PredictedTrajectory:
    states: tuple
    costs: np.ndarray
    inputs: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.costs)


class RolloutError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"oracle evaluation failed at prediction step {step}: {cause}")
        self.step = step


def rollout(z0: RegressorState, u_seq, oracle: Callable) -> PredictedTrajectory:
    """Predict costs along ``u_seq`` with ``oracle(z, u) -> cost``.

    Generic (slow) path; :meth:`oempc.oracle.LipschitzModel.rollout` is the
    compiled equivalent for the Lipschitz oracle.
    """
    m = z0.m
    U = np.asarray(u_seq, dtype=np.float64).reshape(-1, m)
    if U.shape[0] < 1:
        raise ValueError("need at least one input")
    states = [z0]
    costs = np.empty(U.shape[0])
    z = z0
    for j, u in enumerate(U):
        uj = _as_input(u, m)
        try:
            costs[j] = float(oracle(z, uj))
        except Exception as exc:  # noqa: BLE001 - re-raised with the step index
            raise RolloutError(j, exc) from exc
        z = shift(z, uj, costs[j])
        states.append(z)
    return PredictedTrajectory(tuple(states), costs, U)


def consistent_state(x_hist: Sequence, u_hist: Sequence, spec: RegressorSpec,
                     cost_fn: Callable) -> RegressorState:
    """Regressor consistent with a plant trajectory.

    ``x_hist[i]`` is the state at which ``u_hist[i]`` was applied; the
    regressor is the one at the time step right after the last input, built
    from ``cost_fn(x_hist[i], u_hist[i])``.
    """
    n = len(u_hist)
    if n < spec.memory:
        raise ValueError(f"need at least {spec.memory} past inputs, got {n}")
    if len(x_hist) < n:
        raise ValueError("x_hist shorter than u_hist")
    costs = tuple(float(cost_fn(x_hist[n - 1 - i], u_hist[n - 1 - i]))
                  for i in range(spec.n_a))
    inputs = tuple(_as_input(u_hist[n - 1 - i], spec.m) for i in range(spec.n_b))
    return RegressorState(costs, inputs)
