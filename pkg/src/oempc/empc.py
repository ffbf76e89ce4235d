"""Receding-horizon economic controllers.

One model-based controller (needs the plant state) and four oracle-based
ones that see only past costs and inputs:

* ``ModelTerminalEq``: sum of N stage costs, terminal state pinned to x_s.
* ``OracleTerminalEq``: sum of N predicted costs; the tail inputs are held
  at u_s and the predicted costs over the last max(n_a, n_b) steps must
  equal l_s, which pins the terminal regressor to z_s.
* ``OracleTerminalIngredients``: free inputs for N steps, then a local
  linear law up to N_p; quadratic terminal cost and ellipsoidal terminal set.
* ``OracleLinearTerminal`` / ``OracleNoTerminal``: N predicted costs plus a
  linear terminal cost eta' z(N) (eta = 0 for the latter); no constraint.

Terminal equalities and the terminal set enter the solver as penalties.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from oempc import kernels, plant
from oempc.narx import PredictedTrajectory, RegressorSpec, RegressorState
from oempc.solver import NlpProblem, SolveResult, minimize
from oempc.sstarget import SteadyTarget

log = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    MODEL_TERMINAL_EQ = "ModelTerminalEq"
    ORACLE_TERMINAL_EQ = "OracleTerminalEq"
    ORACLE_TERMINAL_INGREDIENTS = "OracleTerminalIngredients"
    ORACLE_LINEAR_TERMINAL = "OracleLinearTerminal"
    ORACLE_NO_TERMINAL = "OracleNoTerminal"


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-6
    max_iter: int = 200
    penalty_weight: float = 1e2
    penalty_growth: float = 10.0
    max_rounds: int = 6
    n_random_starts: int = 0
    seed: int = 0
    multistart: bool = True


@dataclass(frozen=True)
class TerminalIngredients:
    """Local law u = K (z - z_s) + u_s, cost 0.5 z'Q_f z + q_f'z, set
    {(z - z_s)' P (z - z_s) <= alpha_set}."""

    K: np.ndarray
    Q_f: np.ndarray
    q_f: np.ndarray
    P: np.ndarray
    alpha_set: float
    A: np.ndarray | None = field(default=None, repr=False)
    B: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not np.allclose(self.Q_f, self.Q_f.T):
            raise ValueError("Q_f must be symmetric")
        if not np.allclose(self.P, self.P.T) or np.linalg.eigvalsh(self.P).min() <= 0:
            raise ValueError("P must be symmetric positive definite")
        if not self.alpha_set > 0:
            raise ValueError("alpha_set must be positive")

    def cost(self, z) -> float:
        z = np.asarray(z, dtype=np.float64)
        return float(0.5 * z @ self.Q_f @ z + self.q_f @ z)

    def level(self, z, z_s) -> float:
        e = np.asarray(z, dtype=np.float64) - z_s
        return float(e @ self.P @ e)

    def law(self, z, z_s, u_s):
        e = np.asarray(z, dtype=np.float64) - z_s
        return self.K @ e + np.atleast_1d(u_s)


@dataclass(frozen=True)
class EmpcConfig:
    variant: Variant
    N: int
    target: SteadyTarget
    input_box: tuple[float, float]
    spec: RegressorSpec = RegressorSpec()
    N_p: int | None = None
    terminal: TerminalIngredients | None = None
    eta: np.ndarray | None = None
    solver: SolverSettings = SolverSettings()
    feas_tol: float = 1e-5

    def __post_init__(self):
        v = Variant(self.variant)
        object.__setattr__(self, "variant", v)
        if self.N < 1:
            raise ValueError("N must be >= 1")
        lo, hi = self.input_box
        if not lo < hi:
            raise ValueError("empty input box")
        if v in (Variant.MODEL_TERMINAL_EQ, Variant.ORACLE_TERMINAL_EQ):
            want = self.N + self.spec.memory
            if self.N_p is None:
                object.__setattr__(self, "N_p", want)
            elif self.N_p != want:
                raise ValueError(f"terminal-equality variants need N_p = N + max(n_a, n_b) = {want}")
        elif v is Variant.ORACLE_TERMINAL_INGREDIENTS:
            if self.terminal is None:
                raise ValueError("terminal ingredients required")
            if self.N_p is None:
                object.__setattr__(self, "N_p", self.N)
            if self.N_p < self.N:
                raise ValueError("N_p must be >= N")
        else:
            object.__setattr__(self, "N_p", self.N)
            if v is Variant.ORACLE_LINEAR_TERMINAL and self.eta is None:
                raise ValueError("eta required for the linear terminal cost")
            if v is Variant.ORACLE_NO_TERMINAL:
                object.__setattr__(self, "eta", np.zeros(self.spec.n_z))
        if v is Variant.MODEL_TERMINAL_EQ and self.target.x_s is None:
            raise ValueError("model-based variant needs target.x_s")

    @property
    def lower(self) -> float:
        return float(self.input_box[0])

    @property
    def upper(self) -> float:
        return float(self.input_box[1])


@dataclass
class ControlDecision:
    u0: float
    cost_opt: float
    trajectory: PredictedTrajectory
    feasible: bool
    eq_residual: float
    plan: np.ndarray
    solve: SolveResult | None = field(default=None, repr=False)
    degraded: bool = False


def _starts(cfg: EmpcConfig, warm) -> list[np.ndarray]:
    n = cfg.N
    cands = []
    if warm is not None:
        cands.append(np.clip(np.asarray(warm, dtype=np.float64).ravel()[:n],
                             cfg.lower, cfg.upper))
    if cfg.solver.multistart or not cands:
        cands.append(np.full(n, np.clip(cfg.target.u_s, cfg.lower, cfg.upper)))
        cands.append(np.full(n, 0.5 * (cfg.lower + cfg.upper)))
    out = []
    for c in cands:
        if not any(np.array_equal(c, o) for o in out):
            out.append(c)
    return out


def _problem(cfg: EmpcConfig, combined, warm) -> NlpProblem:
    s = cfg.solver
    return NlpProblem(None, np.full(cfg.N, cfg.lower), np.full(cfg.N, cfg.upper),
                      combined=combined, penalty_weight=s.penalty_weight,
                      penalty_growth=s.penalty_growth, max_rounds=s.max_rounds,
                      tol=s.tol, max_iter=s.max_iter, seed=s.seed,
                      starts=_starts(cfg, warm), n_random_starts=s.n_random_starts)


def solve_model_terminal_eq(x, cfg: EmpcConfig, params: plant.PlantParams,
                            warm=None, observer=None,
                            terminal_form: str = "state") -> ControlDecision:
    """Model-based EMPC with terminal equality x(N) = x_s.

    ``terminal_form="state"`` penalises x(N) - x_s. ``"output"`` holds the
    input at u_s for N_p - N further steps and penalises l(j) - l_s there,
    which pins x(N) = x_s whenever the plant is observable from its cost
    (the same set, written the way the oracle problem writes it).
    Feasibility is judged on the residual of the constraint actually posed.

    ``observer(u_seq)`` is called with every candidate sequence the solver
    evaluates (used to log predictions for the ideal-oracle experiment).
    """
    if cfg.variant is not Variant.MODEL_TERMINAL_EQ:
        raise ValueError("config variant must be ModelTerminalEq")
    if terminal_form not in ("state", "output"):
        raise ValueError(f"unknown terminal_form {terminal_form!r}")
    x_s = np.asarray(cfg.target.x_s, dtype=np.float64)
    k1, k2, V, cA0, tau, sub, var = params.kernel_args()
    a0, b0 = float(x[0]), float(x[1])
    N = cfg.N
    tail = np.full(cfg.N_p - N, cfg.target.u_s)
    ell_s = cfg.target.ell_s

    def run(u):
        return kernels.cstr_rollout(a0, b0, u, k1, k2, V, cA0, params.alpha,
                                    tau, sub, var)

    if terminal_form == "state":
        def combined(u):
            if observer is not None:
                observer(u)
            X, c = run(u)
            return c.sum(), X[-1] - x_s
    else:
        def combined(u):
            if observer is not None:
                observer(u)
            _, c = run(np.concatenate([u, tail]))
            return c[:N].sum(), c[N:] - ell_s

    sol = minimize(_problem(cfg, combined, warm))
    X, c = run(sol.x_opt)
    if terminal_form == "state":
        resid = float(np.abs(X[-1] - x_s).max())
    else:
        resid = float(np.abs(run(np.concatenate([sol.x_opt, tail]))[1][N:] - ell_s).max())
    traj = PredictedTrajectory(tuple(plant.PlantState(*r) for r in X), c,
                               sol.x_opt.reshape(-1, 1))
    return ControlDecision(float(sol.x_opt[0]), float(c.sum()), traj,
                           resid <= cfg.feas_tol, resid, sol.x_opt.copy(), sol)


def _oracle_traj(model, Z, costs, U) -> PredictedTrajectory:
    spec = model.spec
    return PredictedTrajectory(tuple(RegressorState.from_array(r, spec) for r in Z),
                               costs, np.asarray(U).reshape(-1, spec.m))


def _flat(z) -> np.ndarray:
    return z.as_array() if isinstance(z, RegressorState) else np.asarray(z, dtype=np.float64)


def solve_oracle_terminal_eq(z, cfg: EmpcConfig, model, warm=None) -> ControlDecision:
    """Oracle EMPC with terminal equality on costs (and inputs held at u_s)."""
    if cfg.variant is not Variant.ORACLE_TERMINAL_EQ:
        raise ValueError("config variant must be OracleTerminalEq")
    z0 = _flat(z)
    N, Np = cfg.N, cfg.N_p
    tail = np.full(Np - N, cfg.target.u_s)
    ell_s = cfg.target.ell_s

    def combined(u):
        costs, _ = model.rollout_arrays(z0, np.concatenate([u, tail]))
        return costs[:N].sum(), costs[N:] - ell_s

    sol = minimize(_problem(cfg, combined, warm))
    U = np.concatenate([sol.x_opt, tail])
    costs, Z = model.rollout_arrays(z0, U)
    return ControlDecision(float(sol.x_opt[0]), float(costs[:N].sum()),
                           _oracle_traj(model, Z, costs, U),
                           sol.eq_residual_norm <= cfg.feas_tol,
                           sol.eq_residual_norm, sol.x_opt.copy(), sol)


def solve_oracle_terminal_ing(z, cfg: EmpcConfig, model, warm=None) -> ControlDecision:
    """Oracle EMPC with terminal cost, terminal set and local terminal law."""
    if cfg.variant is not Variant.ORACLE_TERMINAL_INGREDIENTS:
        raise ValueError("config variant must be OracleTerminalIngredients")
    z0 = _flat(z)
    ti = cfg.terminal
    z_s = cfg.target.z_s.as_array()
    u_s = np.atleast_1d(cfg.target.u_s).astype(np.float64)
    lo = np.full(model.spec.m, cfg.lower)
    hi = np.full(model.spec.m, cfg.upper)

    def run(u):
        return model.rollout_feedback(z0, u, cfg.N_p, ti.K, z_s, u_s, lo, hi)

    def combined(u):
        costs, Z, _ = run(u)
        zN = Z[-1]
        viol = max(0.0, ti.level(zN, z_s) - ti.alpha_set)
        return costs.sum() + ti.cost(zN), (viol,)

    sol = minimize(_problem(cfg, combined, warm))
    costs, Z, U = run(sol.x_opt)
    value = float(costs.sum() + ti.cost(Z[-1]))
    return ControlDecision(float(sol.x_opt[0]), value, _oracle_traj(model, Z, costs, U),
                           sol.eq_residual_norm <= cfg.feas_tol,
                           sol.eq_residual_norm, sol.x_opt.copy(), sol)


def solve_oracle_linear_terminal(z, cfg: EmpcConfig, model, warm=None) -> ControlDecision:
    """Oracle EMPC without terminal constraint; terminal cost eta' z(N)."""
    if cfg.variant not in (Variant.ORACLE_LINEAR_TERMINAL, Variant.ORACLE_NO_TERMINAL):
        raise ValueError("config variant must be OracleLinearTerminal or OracleNoTerminal")
    z0 = _flat(z)
    eta = np.asarray(cfg.eta, dtype=np.float64)

    def objective(u):
        costs, Z = model.rollout_arrays(z0, u)
        return costs.sum() + float(eta @ Z[-1])

    s = cfg.solver
    prob = NlpProblem(objective, np.full(cfg.N, cfg.lower), np.full(cfg.N, cfg.upper),
                      tol=s.tol, max_iter=s.max_iter, seed=s.seed,
                      starts=_starts(cfg, warm), n_random_starts=s.n_random_starts)
    sol = minimize(prob)
    costs, Z = model.rollout_arrays(z0, sol.x_opt)
    return ControlDecision(float(sol.x_opt[0]), float(costs.sum() + eta @ Z[-1]),
                           _oracle_traj(model, Z, costs, sol.x_opt), True, 0.0,
                           sol.x_opt.copy(), sol)


_ORACLE_SOLVERS = {
    Variant.ORACLE_TERMINAL_EQ: solve_oracle_terminal_eq,
    Variant.ORACLE_TERMINAL_INGREDIENTS: solve_oracle_terminal_ing,
    Variant.ORACLE_LINEAR_TERMINAL: solve_oracle_linear_terminal,
    Variant.ORACLE_NO_TERMINAL: solve_oracle_linear_terminal,
}


# -- terminal ingredients --------------------------------------------------------


class TerminalSynthesisError(RuntimeError):
    pass


def _predict_fn(model):
    if hasattr(model, "predict_flat"):
        return model.predict_flat
    return model


def linearize(model, z_s, u_s, spec: RegressorSpec, step: float = 1e-4):
    """Central-difference linearisation of the regressor dynamics at (z_s, u_s).

    ``model`` is a LipschitzModel or any callable on the flat query [z, u].
    Returns ``(A, B, grad_z, grad_u)`` where the grads are those of the
    oracle output.
    """
    f = _predict_fn(model)
    q0 = np.concatenate([np.asarray(z_s, dtype=np.float64),
                         np.atleast_1d(u_s).astype(np.float64)])
    grad = np.empty(q0.size)
    for i in range(q0.size):
        qp, qm = q0.copy(), q0.copy()
        qp[i] += step
        qm[i] -= step
        grad[i] = (f(qp) - f(qm)) / (2.0 * step)
    nz, m, n_a = spec.n_z, spec.m, spec.n_a
    A = np.zeros((nz, nz))
    B = np.zeros((nz, m))
    A[0] = grad[:nz]
    B[0] = grad[nz:]
    for i in range(1, n_a):
        A[i, i - 1] = 1.0
    B[n_a:n_a + m] = np.eye(m)
    for i in range(n_a + m, nz):
        A[i, i - m] = 1.0
    return A, B, grad[:nz], grad[nz:]


def _closed_loop_hessian(f, z_s, u_s, K, step):
    """Symmetric FD Hessian of e -> O(z_s + e, u_s + K e) at e = 0."""
    n = z_s.size

    def phi(e):
        return f(np.concatenate([z_s + e, u_s + K @ e]))

    H = np.empty((n, n))
    f0 = phi(np.zeros(n))
    E = np.eye(n) * step
    for i in range(n):
        for j in range(i, n):
            if i == j:
                H[i, i] = (phi(E[i]) - 2.0 * f0 + phi(-E[i])) / step**2
            else:
                H[i, j] = H[j, i] = (phi(E[i] + E[j]) - phi(E[i] - E[j])
                                     - phi(E[j] - E[i]) + phi(-E[i] - E[j])) / (4 * step**2)
    return H


def boundary_points(P, alpha, n, rng) -> np.ndarray:
    """``n`` points e with e' P e = alpha along random directions."""
    V = rng.standard_normal((n, P.shape[0]))
    scale = np.sqrt(alpha / np.einsum("ij,jk,ik->i", V, P, V))
    return V * scale[:, None]


def check_terminal(model, ti: TerminalIngredients, target: SteadyTarget, u_box,
                   n_points: int = 200, seed: int = 0, slack: float = 0.0,
                   alpha: float | None = None):
    """Sampled check of the terminal-ingredient conditions on the set boundary.

    Returns ``(ok, worst_decrease_margin)`` where the margin is
    max over points of V_f(z+) - V_f(z) + O(z, k(z)) - l_s.
    """
    f = _predict_fn(model)
    z_s = target.z_s.as_array()
    u_s = np.atleast_1d(target.u_s).astype(np.float64)
    spec = target.z_s.spec
    alpha = ti.alpha_set if alpha is None else alpha
    E = boundary_points(ti.P, alpha, n_points, np.random.default_rng(seed))
    lo, hi = u_box
    ok = True
    worst = -np.inf
    for e in E:
        z = z_s + e
        u = ti.K @ e + u_s
        if np.any(u < lo) or np.any(u > hi):
            ok = False
        cost = f(np.concatenate([z, u]))
        zp = z.copy()
        zp[1:spec.n_a] = z[: spec.n_a - 1]
        zp[0] = cost
        zp[spec.n_a + spec.m:] = z[spec.n_a: spec.n_z - spec.m]
        zp[spec.n_a: spec.n_a + spec.m] = u
        margin = ti.cost(zp) - ti.cost(z) + cost - target.ell_s
        worst = max(worst, margin)
        if margin > slack:
            ok = False
        if ti.level(zp, z_s) > alpha * (1 + 1e-12):
            ok = False
    return ok, float(worst)


def synth_terminal(model, target: SteadyTarget, u_box, *, Qz=None, R=None,
                   fd_step: float = 1e-4, n_points: int = 200, seed: int = 0,
                   alpha_max: float = 1.0, alpha_min: float = 1e-12,
                   shrink: float = 0.5) -> TerminalIngredients:
    """Terminal ingredients from the linearisation at the oracle equilibrium.

    K from a discrete Riccati equation with weights ``Qz`` (default I) and
    ``R`` (default 0.1 I); Q_f from the closed-loop Lyapunov equation with an
    upper bound on the stage cost's curvature; q_f from the oracle gradient;
    alpha_set is the largest level on a geometric grid whose sampled boundary
    satisfies the decrease and invariance conditions.
    """
    spec = target.z_s.spec
    nz, m = spec.n_z, spec.m
    z_s = target.z_s.as_array()
    u_s = np.atleast_1d(target.u_s).astype(np.float64)
    A, B, gz, gu = linearize(model, z_s, u_s, spec, fd_step)
    Qz = np.eye(nz) if Qz is None else np.asarray(Qz, dtype=np.float64)
    R = 0.1 * np.eye(m) if R is None else np.asarray(R, dtype=np.float64)
    try:
        P = scipy.linalg.solve_discrete_are(A, B, Qz, R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise TerminalSynthesisError(
            "linearisation is not stabilisable; use the terminal-equality variant") from exc
    K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    Acl = A + B @ K
    if np.max(np.abs(np.linalg.eigvals(Acl))) >= 1.0:
        raise TerminalSynthesisError(
            "Riccati gain does not stabilise the linearisation; use the terminal-equality variant")
    f = _predict_fn(model)
    H = _closed_loop_hessian(f, z_s, u_s, K, fd_step)
    h = max(0.0, float(np.linalg.eigvalsh(0.5 * (H + H.T)).max()))
    W = Qz + K.T @ R @ K + h * np.eye(nz)
    Q_f = scipy.linalg.solve_discrete_lyapunov(Acl.T, W)
    Q_f = 0.5 * (Q_f + Q_f.T)
    c = gz + K.T @ gu
    p_f = np.linalg.solve((np.eye(nz) - Acl).T, c)
    q_f = p_f - Q_f @ z_s
    P = 0.5 * (P + P.T)
    alpha = alpha_max
    while alpha >= alpha_min:
        ti = TerminalIngredients(K, Q_f, q_f, P, alpha, A, B)
        ok, _ = check_terminal(model, ti, target, u_box, n_points, seed)
        if ok:
            return ti
        alpha *= shrink
    raise TerminalSynthesisError("no admissible terminal-set level found")


def estimate_eta(model, target: SteadyTarget, step: float = 1e-4) -> np.ndarray:
    """Linear terminal weight from the sensitivity of the equilibrium cost.

    Perturbing the fixed-point condition z = F(z, u_s) + eps changes the
    equilibrium cost by c' (I - A)^{-1} eps, so eta = (I - A)^{-T} c.
    """
    spec = target.z_s.spec
    A, _, gz, _ = linearize(model, target.z_s.as_array(), target.u_s, spec, step)
    return np.linalg.solve((np.eye(spec.n_z) - A).T, gz)


# -- receding horizon --------------------------------------------------------------


class OracleController:
    """Stateful receding-horizon loop for the oracle-based variants.

    The regressor is advanced with the *measured* cost of the input applied
    at the previous step. When a solve comes back infeasible after a
    feasible one, the previous plan is shifted and its next input applied
    instead; every infeasible step is recorded in ``events``.
    """

    def __init__(self, cfg: EmpcConfig, model):
        if cfg.variant is Variant.MODEL_TERMINAL_EQ:
            raise ValueError("use ModelController for the model-based variant")
        self.cfg = cfg
        self.model = model
        self._solve = _ORACLE_SOLVERS[cfg.variant]
        self.z = None
        self.reset_plan()

    def reset_plan(self) -> None:
        self.plan = None
        self.last = None
        self.last_u = None
        self.events: list[int] = []
        self.k = 0

    def reset(self, z0: RegressorState) -> None:
        self.z = z0.as_array().copy()
        self.reset_plan()

    def _shifted(self):
        if self.last is None:
            return None
        cfg = self.cfg
        nxt = cfg.target.u_s
        if cfg.variant is Variant.ORACLE_TERMINAL_INGREDIENTS and cfg.N_p > cfg.N:
            # the terminal law's first input completes the standard candidate
            nxt = float(self.last.trajectory.inputs[cfg.N, 0])
        return np.concatenate([self.last.plan[1:], [nxt]])

    def control(self) -> ControlDecision:
        if self.z is None:
            raise RuntimeError("controller not initialised; call reset(z0)")
        shifted = self._shifted()
        dec = self._solve(self.z, self.cfg, self.model, warm=shifted)
        if not dec.feasible:
            self.events.append(self.k)
            if self.last is not None and (self.last.feasible or self.last.degraded):
                dec = ControlDecision(float(shifted[0]), dec.cost_opt, dec.trajectory,
                                      False, dec.eq_residual, shifted, dec.solve,
                                      degraded=True)
        self.last = dec
        self.plan = dec.plan
        self.last_u = float(np.clip(dec.u0, self.cfg.lower, self.cfg.upper))
        return dec

    def update(self, measured_cost: float) -> None:
        """Shift the measured cost of the last applied input into the regressor."""
        spec = self.cfg.spec
        z = self.z
        z[1:spec.n_a] = z[: spec.n_a - 1].copy()
        z[0] = measured_cost
        z[spec.n_a + spec.m:] = z[spec.n_a: spec.n_z - spec.m].copy()
        z[spec.n_a: spec.n_a + spec.m] = self.last_u
        self.k += 1

    def step(self, measured_cost: float) -> ControlDecision:
        """Receding-horizon step: absorb the measurement, then solve."""
        self.update(measured_cost)
        return self.control()


class ModelController:
    """Ideal state-feedback EMPC with terminal equality constraint.

    ``warm_solver`` replaces the solver settings once a warm start exists
    (the capture experiment runs warm solves from the warm start alone).
    """

    def __init__(self, cfg: EmpcConfig, params: plant.PlantParams,
                 terminal_form: str = "state",
                 warm_solver: SolverSettings | None = None):
        if cfg.variant is not Variant.MODEL_TERMINAL_EQ:
            raise ValueError("config variant must be ModelTerminalEq")
        self.cfg = cfg
        self.cfg_warm = cfg if warm_solver is None else dataclasses.replace(
            cfg, solver=warm_solver)
        self.params = params
        self.terminal_form = terminal_form
        self.reset()

    def reset(self) -> None:
        self.plan = None
        self.last = None
        self.events: list[int] = []
        self.k = 0

    def control(self, x, observer=None) -> ControlDecision:
        warm = None if self.last is None else np.concatenate(
            [self.last.plan[1:], [self.cfg.target.u_s]])
        cfg = self.cfg if warm is None else self.cfg_warm
        dec = solve_model_terminal_eq(x, cfg, self.params, warm=warm,
                                      observer=observer,
                                      terminal_form=self.terminal_form)
        if not dec.feasible:
            self.events.append(self.k)
            if self.last is not None and (self.last.feasible or self.last.degraded):
                dec = ControlDecision(float(warm[0]), dec.cost_opt, dec.trajectory,
                                      False, dec.eq_residual, warm, dec.solve,
                                      degraded=True)
        self.last = dec
        self.plan = dec.plan
        self.k += 1
        return dec
