"""Isothermal CSTR with consecutive reactions A -> B -> C.

The plant state (c_A, c_B) is ground truth for the simulation harness only;
controllers built on the oracle never read it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from oempc import kernels

#: Closed lower bound used in place of the open bound u > 0.
U_EPS = 1e-6

_VARIANTS = {"minus_cB": 0, "minus_cA_as_printed": 1}


class PlantDomainError(ValueError):
    """Raised for non-finite states or inputs outside the admissible set."""


class PlantState(NamedTuple):
    cA: float
    cB: float


@dataclass(frozen=True)
class PlantParams:
    """CSTR parameters; defaults are the case-study values.

    ``b_outflow_sign`` selects the c_B balance: ``"minus_cB"`` uses the
    standard outflow term -(u/V) c_B, ``"minus_cA_as_printed"`` uses
    -(u/V) c_A.
    """

    k1: float = 1.0
    k2: float = 0.05
    V: float = 1.0
    cA0: float = 1.0
    alpha: float = 4.0
    tau_s: float = 0.25
    u_min: float = 0.0
    u_max: float = 2.0
    noise_std_frac: float = 0.02
    b_outflow_sign: str = "minus_cB"
    substeps: int = 8

    def __post_init__(self):
        for name in ("k1", "k2", "V", "cA0", "tau_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.u_min < self.u_max:
            raise ValueError("need 0 <= u_min < u_max")
        if self.noise_std_frac < 0:
            raise ValueError("noise_std_frac must be non-negative")
        if self.b_outflow_sign not in _VARIANTS:
            raise ValueError(f"unknown b_outflow_sign {self.b_outflow_sign!r}")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def u_lo(self) -> float:
        """Smallest admissible input (the open lower bound made closed)."""
        return self.u_min + U_EPS

    @property
    def variant_code(self) -> int:
        return _VARIANTS[self.b_outflow_sign]

    def kernel_args(self) -> tuple:
        return (self.k1, self.k2, self.V, self.cA0, self.tau_s, self.substeps,
                self.variant_code)

    def with_(self, **changes) -> "PlantParams":
        return replace(self, **changes)


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise PlantDomainError(f"non-finite value {v!r}")


def step(state: PlantState, u: float, params: PlantParams) -> PlantState:
    """Advance one sampling period with fixed-step RK4 (``params.substeps`` steps).

    Concentrations are clipped at zero after integration.
    """
    cA, cB = state
    _check_finite(cA, cB, u)
    if not params.u_min < u <= params.u_max:
        raise PlantDomainError(
            f"input {u} outside ({params.u_min}, {params.u_max}]")
    k1, k2, V, cA0, tau, sub, var = params.kernel_args()
    a, b = kernels.cstr_step(float(cA), float(cB), float(u), k1, k2, V, cA0,
                             tau, sub, var)
    return PlantState(a, b)


def simulate(state: PlantState, inputs, params: PlantParams):
    """Open-loop simulation.

    Returns ``(states, costs)`` where ``states`` has ``len(inputs) + 1`` rows
    and ``costs[j]`` is the noise-free stage cost of ``(states[j], inputs[j])``.
    """
    U = np.ascontiguousarray(inputs, dtype=np.float64).ravel()
    _check_finite(state[0], state[1])
    if not np.all(np.isfinite(U)):
        raise PlantDomainError("non-finite input")
    if U.size and (U.min() <= params.u_min or U.max() > params.u_max):
        raise PlantDomainError("input outside the admissible set")
    k1, k2, V, cA0, tau, sub, var = params.kernel_args()
    return kernels.cstr_rollout(float(state[0]), float(state[1]), U, k1, k2, V,
                                cA0, params.alpha, tau, sub, var)


def stage_cost(state: PlantState, u: float, params: PlantParams) -> float:
    """Economic stage cost u (c_A0 - alpha c_B) in $/min."""
    _check_finite(state[1], u)
    return u * (params.cA0 - params.alpha * state[1])


def measure_cost(true_cost: float, rng: np.random.Generator,
                 params: PlantParams) -> float:
    """Add zero-mean Gaussian noise with std ``noise_std_frac * |true_cost|``."""
    if params.noise_std_frac == 0:
        return true_cost
    return true_cost + rng.normal(0.0, params.noise_std_frac * abs(true_cost))


def measure_costs(true_costs, rng: np.random.Generator,
                  params: PlantParams) -> np.ndarray:
    """Vectorised :func:`measure_cost`; draws the same noise sequence."""
    c = np.asarray(true_costs, dtype=np.float64)
    if params.noise_std_frac == 0:
        return c.copy()
    return c + rng.normal(0.0, params.noise_std_frac * np.abs(c))


def steady_state(u: float, params: PlantParams) -> PlantState:
    """Closed-form equilibrium for a constant input."""
    p = params
    cA = u * p.cA0 / (u + p.k1 * p.V)
    if p.b_outflow_sign == "minus_cB":
        cB = p.k1 * cA * p.V / (u + p.k2 * p.V)
    else:
        cB = (p.k1 - u / p.V) * cA / p.k2
    return PlantState(cA, cB)


def steady_cost(u, params: PlantParams):
    """Stage cost along the equilibrium manifold; vectorised over ``u``."""
    u = np.asarray(u, dtype=np.float64)
    cA, cB = steady_state(u, params)
    return u * (params.cA0 - params.alpha * cB)
