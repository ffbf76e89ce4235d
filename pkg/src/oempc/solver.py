"""Box-constrained minimisation with quadratic-penalty equality constraints.

Every MPC problem in the package goes through :func:`minimize`. Gradients
are central finite differences, so objectives need not be smooth (the
Lipschitz oracle has kinks); multistart covers some of the resulting local
traps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize as _sp_minimize

BARRIER = 1e20


@dataclass
class NlpProblem:
    """Decision vector ``x`` in ``[lower, upper]``.

    Either give ``objective`` (and optionally ``eq_constraints``) or a single
    ``combined(x) -> (f, residual_vector)`` which avoids evaluating shared
    work twice.
    """

    objective: Callable[[np.ndarray], float] | None
    lower: np.ndarray
    upper: np.ndarray
    eq_constraints: Callable[[np.ndarray], np.ndarray] | None = None
    combined: Callable[[np.ndarray], tuple] | None = None
    penalty_weight: float = 1e2
    penalty_growth: float = 10.0
    max_rounds: int = 6
    tol: float = 1e-6
    max_iter: int = 200
    seed: int = 0
    starts: Sequence | None = None
    n_random_starts: int = 0

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64).ravel()
        self.upper = np.asarray(self.upper, dtype=np.float64).ravel()
        if self.lower.shape != self.upper.shape:
            raise ValueError("bound vectors differ in length")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.objective is None and self.combined is None:
            raise ValueError("need objective or combined")

    @property
    def has_constraints(self) -> bool:
        return self.eq_constraints is not None or self.combined is not None

    def evaluate(self, x) -> tuple[float, np.ndarray]:
        if self.combined is not None:
            f, r = self.combined(x)
            return float(f), np.atleast_1d(np.asarray(r, dtype=np.float64))
        f = float(self.objective(x))
        if self.eq_constraints is None:
            return f, np.zeros(0)
        return f, np.atleast_1d(np.asarray(self.eq_constraints(x), dtype=np.float64))


@dataclass
class SolveResult:
    x_opt: np.ndarray
    f_opt: float
    eq_residual_norm: float
    iterations: int
    converged: bool
    n_evals: int = 0
    start_index: int = 0
    penalty_weight: float = 0.0
    per_start: list = field(default_factory=list, repr=False)


class _Merit:
    def __init__(self, problem: NlpProblem):
        self.p = problem
        self.mu = problem.penalty_weight
        self.n_evals = 0

    def parts(self, x):
        self.n_evals += 1
        try:
            f, r = self.p.evaluate(x)
        except (ValueError, ArithmeticError):
            return BARRIER, np.zeros(0)
        return f, r

    def __call__(self, x) -> float:
        f, r = self.parts(x)
        val = f + self.mu * float(r @ r)
        return val if math.isfinite(val) and val < BARRIER else BARRIER

    def grad(self, x) -> np.ndarray:
        lo, hi = self.p.lower, self.p.upper
        g = np.empty_like(x)
        for i in range(x.size):
            h = 1e-6 * (1.0 + abs(x[i]))
            xp = x.copy()
            xm = x.copy()
            up = x[i] + h <= hi[i]
            dn = x[i] - h >= lo[i]
            if up and dn:
                xp[i] += h
                xm[i] -= h
                g[i] = (self(xp) - self(xm)) / (2.0 * h)
            elif up:
                xp[i] += h
                g[i] = (self(xp) - self(x)) / h
            elif dn:
                xm[i] -= h
                g[i] = (self(x) - self(xm)) / h
            else:
                g[i] = 0.0
        return g


def _residual_norm(r) -> float:
    return float(np.linalg.norm(r, ord=np.inf)) if r.size else 0.0


def _solve_from(problem: NlpProblem, x0: np.ndarray, merit: _Merit):
    lo, hi = problem.lower, problem.upper
    x = np.clip(np.asarray(x0, dtype=np.float64).ravel(), lo, hi)
    merit.mu = problem.penalty_weight
    rounds = problem.max_rounds if problem.has_constraints else 1
    iters = 0
    ok = False
    for _ in range(rounds):
        res = _sp_minimize(merit, x, jac=merit.grad, method="L-BFGS-B",
                           bounds=list(zip(lo, hi)),
                           options={"maxiter": problem.max_iter,
                                    "ftol": 1e-15, "gtol": problem.tol * 1e-2})
        x = np.clip(res.x, lo, hi)
        iters += int(res.nit)
        ok = bool(res.success) or res.status == 2  # 2: line search stalled at a kink
        f, r = merit.parts(x)
        if _residual_norm(r) <= 10 * problem.tol:
            break
        merit.mu *= problem.penalty_growth
    # never return something worse than the start under the final weight
    x_start = np.clip(np.asarray(x0, dtype=np.float64).ravel(), lo, hi)
    if merit(x_start) < merit(x):
        x = x_start
    f, r = merit.parts(x)
    rn = _residual_norm(r)
    converged = ok and res.status != 1 and rn <= 10 * problem.tol
    return x, f, rn, iters, converged, merit.mu


def minimize(problem: NlpProblem) -> SolveResult:
    """Deterministic multistart penalty solve.

    Starts are ``problem.starts`` (default: box midpoint) plus
    ``n_random_starts`` uniform draws from ``problem.seed``. The returned
    solution is the best feasible one (lowest objective), or the least
    infeasible one if none is feasible; ties go to the lowest start index.
    """
    lo, hi = problem.lower, problem.upper
    starts = [np.asarray(s, dtype=np.float64) for s in (problem.starts or [])]
    if not starts:
        starts = [0.5 * (lo + hi)]
    if problem.n_random_starts:
        rng = np.random.default_rng(problem.seed)
        starts += list(rng.uniform(lo, hi, size=(problem.n_random_starts, lo.size)))
    merit = _Merit(problem)
    results = []
    for k, s in enumerate(starts):
        results.append(_solve_from(problem, s, merit) + (k,))
    feas_thr = 10 * problem.tol

    def key(r):
        x, f, rn, it, conv, mu, k = r
        feasible = rn <= feas_thr
        return (0, f, k) if feasible else (1, rn, k)

    best = min(results, key=key)
    x, f, rn, it, conv, mu, k = best
    return SolveResult(x, f, rn, it, conv, merit.n_evals, k, mu,
                       per_start=[(r[1], r[2]) for r in results])
