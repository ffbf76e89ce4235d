"""Economically optimal equilibria, from the plant model and from the oracle."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from oempc import plant
from oempc.narx import RegressorSpec, RegressorState

log = logging.getLogger(__name__)

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SteadyTarget:
    u_s: float
    ell_s: float
    z_s: RegressorState
    x_s: plant.PlantState | None = None
    skipped: tuple = field(default=(), repr=False)


def golden_section(fun, a: float, b: float, tol: float = 1e-10, max_iter: int = 200):
    """Minimise a unimodal scalar function on [a, b]; returns (x, f(x))."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def equilibrium_curve(params: plant.PlantParams, grid_n: int = 1000):
    """Equilibrium cost as a function of the constant input."""
    u = np.linspace(params.u_lo, params.u_max, grid_n)
    return u, plant.steady_cost(u, params)


def sweep_model(params: plant.PlantParams, grid_n: int = 10_000,
                spec: RegressorSpec = RegressorSpec()) -> SteadyTarget:
    """Brute-force optimal equilibrium of the plant model.

    Grid search over the input followed by golden-section refinement between
    the neighbours of the best grid point. Equal costs resolve to the
    smallest input.
    """
    if grid_n < 100:
        raise ValueError("grid_n must be at least 100")
    u, ell = equilibrium_curve(params, grid_n)
    i = int(np.argmin(ell))
    u_s, ell_s = float(u[i]), float(ell[i])
    a, b = u[max(i - 1, 0)], u[min(i + 1, grid_n - 1)]

    def cost(v):
        return float(plant.steady_cost(v, params))

    ur, lr = golden_section(cost, float(a), float(b))
    if lr < ell_s:
        u_s, ell_s = float(ur), lr
    x_s = plant.steady_state(u_s, params)
    return SteadyTarget(u_s, ell_s, RegressorState.steady(ell_s, u_s, spec),
                        plant.PlantState(float(x_s[0]), float(x_s[1])))


def _steady_query(ell, u, spec: RegressorSpec) -> np.ndarray:
    """Rows (ell,...,ell, u,...,u, u) for an array of candidate costs."""
    ell = np.atleast_1d(ell)
    Q = np.empty((ell.size, spec.n_z + spec.m))
    Q[:, : spec.n_a] = ell[:, None]
    Q[:, spec.n_a:] = u
    return Q


def data_distance(model, q) -> float:
    """Weighted max-norm distance from query ``q`` to the nearest data point."""
    d = model.weights * np.abs(model.dataset.Q - np.asarray(q, dtype=np.float64))
    return float(d.max(axis=1).min())


def _bisect(resid, lo, hi, tol):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol or mid in (lo, hi):
            break
        if resid(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def steady_roots(model, u: float, *, n_scan: int = 400, tol: float = 1e-10):
    """All downward crossings ell of O((ell,...,ell, u,...,u), u) - ell found
    on a scan over the data's cost range, refined by bisection."""
    spec = model.spec
    ys = model.dataset.y
    span = float(ys.max() - ys.min())
    pad = 0.1 * span + 1e-3
    grid = np.linspace(float(ys.min()) - pad, float(ys.max()) + pad, n_scan)
    g = model.predict_many(_steady_query(grid, u, spec)) - grid

    def resid(ell):
        return model.predict_flat(_steady_query(ell, u, spec)[0]) - ell

    roots = []
    for k in np.nonzero((g[:-1] > 0.0) & (g[1:] <= 0.0))[0]:
        lo, hi = float(grid[k]), float(grid[k + 1])
        roots.append(hi if g[k + 1] == 0.0 else _bisect(resid, lo, hi, tol))
    return roots


def steady_cost_oracle(model, u: float, *, n_scan: int = 400,
                       support_radius: float | None = None,
                       damping: float = 0.5, max_iter: int = 200,
                       tol: float = 1e-10) -> float | None:
    """Equilibrium cost ell = O((ell,...,ell, u,...,u), u) of the oracle.

    Spurious solutions appear where the interpolant extrapolates, so among
    all roots the one whose steady regressor lies closest to the data is
    returned (ties: smaller ell). Roots farther than ``support_radius`` from
    the data are discarded. Without a bracketed root a damped fixed-point
    iteration is tried; ``None`` means no equilibrium was found.
    """
    spec = model.spec
    roots = steady_roots(model, u, n_scan=n_scan, tol=tol)
    if not roots:
        ell = float(model.dataset.y.min())
        for _ in range(max_iter):
            r = model.predict_flat(_steady_query(ell, u, spec)[0]) - ell
            if abs(r) <= tol:
                roots = [ell]
                break
            ell = ell + damping * r
    if not roots:
        return None
    dist = [data_distance(model, _steady_query(r, u, spec)[0]) for r in roots]
    best = min(range(len(roots)), key=lambda i: (dist[i], roots[i]))
    if support_radius is not None and dist[best] > support_radius:
        return None
    return roots[best]


def solve_ss_oracle(model, u_bounds: tuple[float, float], *, grid_n: int = 201,
                    refine: bool = True,
                    support_radius: float | None = 0.1) -> SteadyTarget:
    """Optimal equilibrium of the oracle (min over u of the equilibrium cost).

    Inputs whose equilibrium is not found within ``support_radius`` of the
    data are skipped and listed in ``skipped``.
    """
    lo, hi = u_bounds
    us = np.linspace(lo, hi, grid_n)
    ells = np.full(grid_n, np.inf)
    skipped = []
    for i, u in enumerate(us):
        val = steady_cost_oracle(model, float(u), support_radius=support_radius)
        if val is None:
            skipped.append(float(u))
        else:
            ells[i] = val
    if skipped:
        log.info("oracle equilibrium not found for %d inputs", len(skipped))
    if not np.any(np.isfinite(ells)):
        raise RuntimeError("no oracle equilibrium found on the input grid")
    i = int(np.argmin(ells))
    u_s, ell_s = float(us[i]), float(ells[i])
    if refine and grid_n > 1:
        a, b = us[max(i - 1, 0)], us[min(i + 1, grid_n - 1)]

        def cost(v):
            val = steady_cost_oracle(model, v, support_radius=support_radius)
            return math.inf if val is None else val

        ur, lr = golden_section(cost, float(a), float(b), tol=1e-8)
        if lr < ell_s:
            u_s, ell_s = float(ur), float(lr)
    return SteadyTarget(u_s, ell_s, RegressorState.steady(ell_s, u_s, model.spec),
                        None, tuple(skipped))
