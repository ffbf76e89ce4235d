"""Experiment drivers: data generation, ideal estimation, closed loops,
online learning and cross-validation.

Every driver is deterministic given its seeds. Per-trial random streams are
``np.random.default_rng([seed, trial, stream])`` so trials can run in any
order (or in parallel) and still produce identical results.
"""

from __future__ import annotations

import dataclasses

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from oempc import kernels, oracle, plant
from oempc.empc import (EmpcConfig, ModelController, OracleController,
                        SolverSettings, Variant, solve_model_terminal_eq,
                        solve_oracle_terminal_eq)
from oempc.narx import RegressorSpec, RegressorState
from oempc.sstarget import SteadyTarget

log = logging.getLogger(__name__)

STREAM_INIT, STREAM_NOISE, STREAM_IDEAL_NOISE = 0, 1, 2


# -- datasets ------------------------------------------------------------------


def regressor_table(costs, inputs, spec: RegressorSpec, experiment: str = "",
                    first_index: int = 0) -> oracle.Dataset:
    """One sample per time index with a full history.

    ``costs[k]`` is the (measured) cost incurred by ``inputs[k]``.
    """
    c = np.asarray(costs, dtype=np.float64).ravel()
    U = np.asarray(inputs, dtype=np.float64).reshape(len(c), spec.m)
    mem = spec.memory
    if len(c) <= mem:
        raise ValueError(f"need more than {mem} samples")
    rows = np.arange(mem, len(c))
    cols = [c[rows - i][:, None] for i in range(1, spec.n_a + 1)]
    cols += [U[rows - i] for i in range(1, spec.n_b + 1)]
    cols.append(U[rows])
    Q = np.hstack(cols)
    return oracle.Dataset(spec, Q, c[rows], [experiment] * rows.size,
                          rows + first_index)


def simulate_measured(inputs, params: plant.PlantParams, noise_seed: int = 0,
                      x0=None):
    """Open-loop run; returns ``(states, true_costs, measured_costs)``."""
    U = np.asarray(inputs, dtype=np.float64).ravel()
    if x0 is None:
        x0 = plant.steady_state(float(U[0]), params)
    X, c = plant.simulate(x0, U, params)
    m = plant.measure_costs(c, np.random.default_rng(noise_seed), params)
    return X, c, m


def build_dataset(inputs, params: plant.PlantParams, spec: RegressorSpec,
                  noise_seed: int = 0, x0=None, experiment: str = "") -> oracle.Dataset:
    """Simulate the plant under ``inputs`` and tabulate measured costs.

    The run starts at the equilibrium of the first input unless ``x0`` is
    given. Both the regressor entries and the labels are measured costs.
    """
    if len(inputs) <= spec.memory:
        raise ValueError(f"need more than {spec.memory} inputs")
    _, _, m = simulate_measured(inputs, params, noise_seed, x0)
    return regressor_table(m, inputs, spec, experiment)


@dataclass
class ValidationRun:
    t: np.ndarray
    ell_true: np.ndarray
    ell_pred: np.ndarray
    bound: oracle.ErrorBound

    @property
    def residual(self) -> np.ndarray:
        return self.ell_true - self.ell_pred

    @property
    def mu90(self) -> float:
        return self.bound.residual_quantiles[90]


def run_validation(model: oracle.LipschitzModel, inputs, params: plant.PlantParams,
                   noise_seed: int = 1, x0=None) -> ValidationRun:
    """One-step-ahead predictions along a held-out run.

    Regressors are built from measured costs; predictions are compared with
    the noise-free cost.
    """
    spec = model.spec
    U = np.asarray(inputs, dtype=np.float64).ravel()
    _, c, m = simulate_measured(U, params, noise_seed, x0)
    data = regressor_table(m, U, spec, "validation")
    pred = model.predict_many(data.Q)
    truth = c[spec.memory:]
    holdout = oracle.Dataset(spec, data.Q, truth)
    bound = oracle.validate(model, holdout)
    t = np.arange(spec.memory, len(c)) * params.tau_s
    return ValidationRun(t, truth, pred, bound)


# -- initial conditions ----------------------------------------------------------


def draw_initial(rng: np.random.Generator, params: plant.PlantParams,
                 spec: RegressorSpec, noisy: bool = True):
    """Random state in [0, 1]^2 followed by a random input warm-up.

    Returns ``(x0, z0)``: the state after the warm-up and the consistent
    regressor built from the (optionally noisy) costs measured during it.
    """
    x_init = rng.uniform(0.0, 1.0, 2)
    U = rng.uniform(params.u_lo, params.u_max, spec.memory)
    X, c = plant.simulate(plant.PlantState(*x_init), U, params)
    m = plant.measure_costs(c, rng, params) if noisy else c
    n = spec.memory
    z0 = RegressorState(tuple(float(m[n - 1 - i]) for i in range(spec.n_a)),
                        tuple(float(U[n - 1 - i]) for i in range(spec.n_b)))
    return plant.PlantState(float(X[-1, 0]), float(X[-1, 1])), z0


# -- capture of solver-visited predictions ---------------------------------------------


class CaptureLog:
    """Observer for the model-based solver that records, for every candidate
    input sequence, the regressors and true costs it would produce.

    The sequence is extended to ``N_p`` steps with the input held at ``u_s``
    (the oracle problem's terminal tail). Repeated queries are stored once.
    """

    def __init__(self, x, z0, params: plant.PlantParams, spec: RegressorSpec,
                 n_tail: int, u_s: float):
        if spec.m != 1:
            raise ValueError("capture supports scalar inputs")
        self.x = (float(x[0]), float(x[1]))
        self.params = params
        self.spec = spec
        self.tail = np.full(n_tail, float(u_s))
        z0 = np.asarray(z0.as_array() if isinstance(z0, RegressorState) else z0)
        # oldest first, so that sliding windows read forward in time
        self._hl = z0[: spec.n_a][::-1].copy()
        self._hu = z0[spec.n_a:][::-1].copy()
        self._rows: dict[bytes, tuple[np.ndarray, float]] = {}
        self.n_calls = 0

    def __call__(self, u) -> None:
        self.n_calls += 1
        p = self.params
        U = np.concatenate([np.asarray(u, dtype=np.float64), self.tail])
        k1, k2, V, cA0, tau, sub, var = p.kernel_args()
        _, c = kernels.cstr_rollout(self.x[0], self.x[1], U, k1, k2, V, cA0,
                                    p.alpha, tau, sub, var)
        n_a, n_b = self.spec.n_a, self.spec.n_b
        n = U.size
        hl = np.concatenate([self._hl, c])
        hu = np.concatenate([self._hu, U])
        L = sliding_window_view(hl, n_a)[:n, ::-1]
        B = sliding_window_view(hu, n_b)[:n, ::-1]
        Q = np.hstack([L, B, U[:, None]])
        rows = self._rows
        for j in range(n):
            key = Q[j].tobytes()
            if key not in rows:
                rows[key] = (Q[j].copy(), float(c[j]))

    def dataset(self) -> oracle.Dataset:
        if not self._rows:
            raise ValueError("nothing captured")
        vals = list(self._rows.values())
        Q = np.vstack([v[0] for v in vals])
        y = np.array([v[1] for v in vals])
        return oracle.Dataset(self.spec, Q, y, ["capture"] * len(y),
                              np.arange(len(y)))


# -- ideal estimation ---------------------------------------------------------------


@dataclass
class IdealTrial:
    trial: int
    draws: int
    u0_model: float
    u0_oracle: float
    model_feasible: bool
    oracle_feasible: bool
    n_data: int
    L: float
    interp_err: float
    oracle_residual: float

    @property
    def du0(self) -> float:
        return abs(self.u0_model - self.u0_oracle)

    @property
    def valid(self) -> bool:
        return self.model_feasible and self.oracle_feasible


@dataclass
class IdealReport:
    trials: list

    @property
    def valid(self) -> list:
        return [t for t in self.trials if t.valid]

    @property
    def n_valid(self) -> int:
        return len(self.valid)

    @property
    def max_du0(self) -> float:
        v = self.valid
        return max(t.du0 for t in v) if v else math.inf


def _ideal_configs(target: SteadyTarget, params, N, spec, solver):
    box = (params.u_lo, params.u_max)
    cm = EmpcConfig(Variant.MODEL_TERMINAL_EQ, N, target, box, spec, solver=solver)
    co = EmpcConfig(Variant.ORACLE_TERMINAL_EQ, N, target, box, spec, solver=solver)
    return cm, co


def ideal_trial(trial: int, seed: int, params: plant.PlantParams,
                target: SteadyTarget, *, N: int = 5,
                spec: RegressorSpec = RegressorSpec(), L0: float = 100.0,
                max_draws: int = 200, solver: SolverSettings = SolverSettings(),
                fixed_oracle: oracle.LipschitzModel | None = None) -> IdealTrial:
    """One ideal-estimation comparison.

    Initial conditions are redrawn until the model-based problem is feasible
    (x_s reachable in N steps). The model-based solve logs every regressor it
    visits; the oracle interpolates exactly these samples, with L raised from
    ``L0`` until the sample set is consistent. With ``fixed_oracle`` the
    capture is skipped and that oracle is used instead.
    """
    rng = np.random.default_rng([seed, trial, STREAM_INIT])
    cm, co = _ideal_configs(target, params, N, spec, solver)
    dm = cap = z0 = None
    draws = 0
    for draws in range(1, max_draws + 1):
        x0, z0 = draw_initial(rng, params, spec, noisy=False)
        cap = CaptureLog(x0, z0, params, spec, co.N_p - N, target.u_s)
        dm = solve_model_terminal_eq(x0, cm, params, observer=cap,
                                     terminal_form="output")
        if dm.feasible:
            break
    if not dm.feasible:
        return IdealTrial(trial, draws, dm.u0, math.nan, False, False, 0,
                          math.nan, math.nan, math.nan)
    if fixed_oracle is None:
        model, err = oracle.fit_consistent(cap.dataset(), L0)
    else:
        model, err = fixed_oracle, math.nan
    do = solve_oracle_terminal_eq(z0, co, model)
    return IdealTrial(trial, draws, dm.u0, do.u0, dm.feasible, do.feasible,
                      len(model.dataset), model.L, err, do.eq_residual)


def run_ideal_estimation(n_trials: int, seed: int, params: plant.PlantParams,
                         target: SteadyTarget, **kw) -> IdealReport:
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    params = params.with_(noise_std_frac=0.0)
    trials = [ideal_trial(i, seed, params, target, **kw) for i in range(n_trials)]
    return IdealReport(trials)


# -- closed loop ----------------------------------------------------------------------


RUNLOG_COLUMNS = ("k", "t", "u", "ell_true", "ell_meas", "cA", "cB", "V_opt",
                  "feasible")


@dataclass
class RunLog:
    """One record per sampling period. ``solve_time`` is kept in memory only
    so that written logs are bitwise reproducible."""

    tau_s: float
    u: list = field(default_factory=list)
    ell_true: list = field(default_factory=list)
    ell_meas: list = field(default_factory=list)
    cA: list = field(default_factory=list)
    cB: list = field(default_factory=list)
    V_opt: list = field(default_factory=list)
    feasible: list = field(default_factory=list)
    solve_time: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.u)

    def append(self, u, ell_true, ell_meas, x, V, feasible, solve_time):
        vals = (u, ell_true, ell_meas, x[0], x[1], V)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("non-finite log entry")
        self.u.append(float(u))
        self.ell_true.append(float(ell_true))
        self.ell_meas.append(float(ell_meas))
        self.cA.append(float(x[0]))
        self.cB.append(float(x[1]))
        self.V_opt.append(float(V))
        self.feasible.append(bool(feasible))
        self.solve_time.append(float(solve_time))

    def rows(self):
        for k in range(len(self)):
            yield (k, k * self.tau_s, self.u[k], self.ell_true[k], self.ell_meas[k],
                   self.cA[k], self.cB[k], self.V_opt[k], int(self.feasible[k]))

    def segment(self, start: int, stop: int) -> "RunLog":
        out = RunLog(self.tau_s)
        for name in ("u", "ell_true", "ell_meas", "cA", "cB", "V_opt",
                     "feasible", "solve_time"):
            setattr(out, name, getattr(self, name)[start:stop])
        return out

    def concat(self, other: "RunLog") -> "RunLog":
        out = RunLog(self.tau_s)
        for name in ("u", "ell_true", "ell_meas", "cA", "cB", "V_opt",
                     "feasible", "solve_time"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        return out


def perf_index(run: RunLog) -> float:
    """Cumulative true economic cost over the run (exactly rounded sum)."""
    return math.fsum(run.ell_true)


class OraclePolicy:
    def __init__(self, ctrl: OracleController):
        self.ctrl = ctrl

    def reset(self, x0, z0):
        self.ctrl.reset(z0)

    def act(self, x):
        dec = self.ctrl.control()
        return self.ctrl.last_u, dec.cost_opt, dec.feasible

    def observe(self, measured):
        self.ctrl.update(measured)


class ModelPolicy:
    def __init__(self, ctrl: ModelController):
        self.ctrl = ctrl

    def reset(self, x0, z0):
        self.ctrl.reset()

    def act(self, x):
        dec = self.ctrl.control(x)
        u = float(np.clip(dec.u0, self.ctrl.cfg.lower, self.ctrl.cfg.upper))
        return u, dec.cost_opt, dec.feasible

    def observe(self, measured):
        pass


class CapturePolicy:
    """Oracle-based terminal-equality EMPC whose oracle is rebuilt at every
    step from the predictions the model-based solver visits at the current
    (consistent) state. Nominal operation only."""

    def __init__(self, params: plant.PlantParams, target: SteadyTarget, N: int = 5,
                 spec: RegressorSpec = RegressorSpec(), L0: float = 100.0,
                 solver: SolverSettings = SolverSettings()):
        self.params = params
        self.target = target
        self.spec = spec
        self.L0 = L0
        self.cm, self.co = _ideal_configs(target, params, N, spec, solver)
        # with a warm start both solvers run from it alone; the paths match
        single = dataclasses.replace(solver, multistart=False)
        self.cm_warm, self.co_warm = _ideal_configs(target, params, N, spec, single)
        self.du0: list[float] = []

    def reset(self, x0, z0):
        self.z = z0.as_array().copy()
        self.plan = None
        self.last_ok = False
        self.last_u = None
        self.du0 = []

    def act(self, x):
        warm = None if self.plan is None else np.concatenate(
            [self.plan[1:], [self.target.u_s]])
        cm, co = (self.cm, self.co) if warm is None else (self.cm_warm, self.co_warm)
        cap = CaptureLog(x, self.z, self.params, self.spec,
                         co.N_p - co.N, self.target.u_s)
        dm = solve_model_terminal_eq(x, cm, self.params, warm=warm,
                                     observer=cap, terminal_form="output")
        model, _ = oracle.fit_consistent(cap.dataset(), self.L0)
        do = solve_oracle_terminal_eq(self.z, co, model, warm=warm)
        self.du0.append(abs(do.u0 - dm.u0))
        plan = do.plan
        if not do.feasible and self.last_ok:
            plan = warm  # same shift-and-hold fallback as the controllers
        self.last_ok = do.feasible or self.last_ok
        self.plan = plan
        self.last_u = float(np.clip(plan[0], self.co.lower, self.co.upper))
        return self.last_u, do.cost_opt, do.feasible

    def observe(self, measured):
        s = self.spec
        z = self.z
        z[1:s.n_a] = z[: s.n_a - 1].copy()
        z[0] = measured
        z[s.n_a + 1:] = z[s.n_a: s.n_z - 1].copy()
        z[s.n_a] = self.last_u


def closed_loop(policy, x0, z0, n_steps: int, params: plant.PlantParams,
                rng: np.random.Generator) -> RunLog:
    """Run ``policy`` on the plant for ``n_steps`` sampling periods.

    At step k the policy acts on information up to k - 1; the cost incurred
    by its input is then measured (with noise per ``params``) and fed back.
    """
    run = RunLog(params.tau_s)
    policy.reset(x0, z0)
    x = plant.PlantState(*x0)
    for _ in range(n_steps):
        t0 = time.perf_counter()
        u, V, feas = policy.act(x)
        dt = time.perf_counter() - t0
        if not params.u_lo <= u <= params.u_max:
            raise RuntimeError(f"policy applied inadmissible input {u}")
        c = plant.stage_cost(x, u, params)
        m = plant.measure_cost(c, rng, params)
        run.append(u, c, m, x, V, feas, dt)
        x = plant.step(x, u, params)
        policy.observe(m)
    return run


@dataclass
class ClosedLoopResult:
    run: int
    phi_oracle: float
    phi_ideal: float
    log_oracle: RunLog = field(repr=False)
    log_ideal: RunLog | None = field(repr=False, default=None)

    @property
    def rel_gap(self) -> float:
        return (self.phi_oracle - self.phi_ideal) / abs(self.phi_ideal)

    def tail_deviation(self, ell_s: float, n_last: int = 50) -> float:
        tail = np.asarray(self.log_oracle.ell_true[-n_last:])
        return float(np.mean(np.abs(tail - ell_s)))

    def inputs_admissible(self, box) -> bool:
        u = np.asarray(self.log_oracle.u)
        return bool(np.all((u >= box[0]) & (u <= box[1])))


def closedloop_trial(run: int, seed: int, params: plant.PlantParams,
                     make_oracle_policy, make_ideal_policy, n_steps: int,
                     spec: RegressorSpec = RegressorSpec()) -> ClosedLoopResult:
    """Oracle-based and ideal controllers from the same initial condition.

    The ideal controller measures the state exactly; its noise stream is
    independent of the oracle run's.
    """
    rng = np.random.default_rng([seed, run, STREAM_INIT])
    x0, z0 = draw_initial(rng, params, spec, noisy=True)
    log_o = closed_loop(make_oracle_policy(), x0, z0, n_steps, params,
                        np.random.default_rng([seed, run, STREAM_NOISE]))
    log_i = None
    phi_i = math.nan
    if make_ideal_policy is not None:
        log_i = closed_loop(make_ideal_policy(), x0, z0, n_steps, params,
                            np.random.default_rng([seed, run, STREAM_IDEAL_NOISE]))
        phi_i = perf_index(log_i)
    return ClosedLoopResult(run, perf_index(log_o), phi_i, log_o, log_i)


def run_closedloop(seed: int, params: plant.PlantParams, make_oracle_policy,
                   make_ideal_policy=None, n_init: int = 100, n_steps: int = 400,
                   spec: RegressorSpec = RegressorSpec(), workers: int = 1) -> list:
    """``n_init`` paired closed-loop runs; results sorted by run index."""
    runs = range(n_init)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            futs = [ex.submit(closedloop_trial, r, seed, params, make_oracle_policy,
                              make_ideal_policy, n_steps, spec) for r in runs]
            out = [f.result() for f in futs]
    else:
        out = [closedloop_trial(r, seed, params, make_oracle_policy,
                                make_ideal_policy, n_steps, spec) for r in runs]
    return sorted(out, key=lambda r: r.run)


# -- online learning ------------------------------------------------------------------


@dataclass
class OnlineResult:
    phi: list
    phi_ideal: list
    dataset_sizes: list
    log: RunLog = field(repr=False)


def run_online_learning(model: oracle.LipschitzModel, cfg: EmpcConfig,
                        params: plant.PlantParams, *, iterations: int = 20,
                        window: int = 40, seed: int = 0, update: bool = True,
                        ideal_cfg: EmpcConfig | None = None) -> OnlineResult:
    """Periodic disturbance (state reset to a fixed initial state) with the
    transient's samples appended to the oracle's data after each window.

    Before the first window the plant sits at the optimal equilibrium, so the
    controller starts from the steady regressor.
    """
    spec = model.spec
    rng0 = np.random.default_rng([seed, 0, STREAM_INIT])
    x_init = plant.PlantState(*rng0.uniform(0.0, 1.0, 2))
    noise = np.random.default_rng([seed, 0, STREAM_NOISE])
    t = cfg.target
    ctrl = OracleController(cfg, model)
    ctrl.reset(RegressorState.steady(t.ell_s, t.u_s, spec))
    run = RunLog(params.tau_s)
    phi, phi_ideal, sizes = [], [], []
    for it in range(iterations):
        x = x_init
        Q, y = [], []
        seg_start = len(run)
        for _ in range(window):
            z = ctrl.z.copy()
            t0 = time.perf_counter()
            dec = ctrl.control()
            dt = time.perf_counter() - t0
            u = ctrl.last_u
            c = plant.stage_cost(x, u, params)
            m = plant.measure_cost(c, noise, params)
            run.append(u, c, m, x, dec.cost_opt, dec.feasible, dt)
            Q.append(np.concatenate([z, [u]]))
            y.append(m)
            x = plant.step(x, u, params)
            ctrl.update(m)
        phi.append(perf_index(run.segment(seg_start, len(run))))
        if update:
            new = oracle.Dataset(spec, np.vstack(Q), np.array(y),
                                 [f"online{it}"] * window,
                                 np.arange(seg_start, len(run)))
            model = oracle.add_samples(model, new)
            ctrl.model = model
        sizes.append(len(model.dataset))
    if ideal_cfg is not None:
        ideal_noise = np.random.default_rng([seed, 0, STREAM_IDEAL_NOISE])
        ideal = ModelController(ideal_cfg, params)
        for _ in range(iterations):
            seg = closed_loop(ModelPolicy(ideal), x_init, None, window, params,
                              ideal_noise)
            phi_ideal.append(perf_index(seg))
    return OnlineResult(phi, phi_ideal, sizes, run)


# -- cross-validation -------------------------------------------------------------------


@dataclass
class CvEntry:
    n_a: int
    n_b: int
    L: float
    score: float


def cross_validate(train, valid, n_a_grid, n_b_grid, L_grid, *, stride: int = 1,
                   tie_tol: float = 1e-12):
    """Grid search over memory horizons and Lipschitz constants.

    ``train`` and ``valid`` are ``(measured_costs, inputs)`` sequence pairs
    (regressors depend on the horizons, so tables are rebuilt per grid
    point). Score is the worst absolute validation residual; scores within
    ``tie_tol`` of the best are ties, broken by smaller n_a + n_b, then
    smaller L, then smaller n_a. ``None`` in ``L_grid`` means "estimate".
    Returns ``(best_spec, best_L, entries)``.
    """
    entries = []
    for n_a in n_a_grid:
        for n_b in n_b_grid:
            spec = RegressorSpec(int(n_a), int(n_b))
            tr = regressor_table(*train, spec).subsample(stride)
            va = regressor_table(*valid, spec)
            for L in L_grid:
                model = oracle.fit(tr, None if L is None else float(L))
                score = oracle.validate(model, va).mu
                entries.append(CvEntry(spec.n_a, spec.n_b, model.L, score))
                log.info("cv n_a=%d n_b=%d L=%.4g score=%.6g", n_a, n_b, model.L, score)
    best = min(e.score for e in entries)
    ties = [e for e in entries if e.score <= best + tie_tol]
    pick = min(ties, key=lambda e: (e.n_a + e.n_b, e.L, e.n_a))
    return RegressorSpec(pick.n_a, pick.n_b), pick.L, entries
