"""Cost oracle learned by Lipschitz interpolation (kinky inference).

For a query q = (z, u) the prediction is the midpoint of the tightest
Lipschitz ceiling and floor through the data::

    f(q) = 0.5 * min_i (y_i + L d(q, q_i)) + 0.5 * max_i (y_i - L d(q, q_i))

with d the weighted max-norm. Noise-free training points are reproduced
exactly whenever the data are L-consistent.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from oempc import kernels
from oempc.narx import PredictedTrajectory, RegressorSpec, RegressorState


@dataclass(frozen=True)
class Sample:
    z: RegressorState
    u: object
    cost: float
    tag: tuple = ("", -1)


class Dataset:
    """Append-only table of (z, u) -> measured cost samples.

    Rows are stored flattened as ``[z..., u...]`` in a float array, with a
    provenance tag (experiment id, time index) per row.
    """

    def __init__(self, spec: RegressorSpec, Q=None, y=None, experiment=None,
                 index=None):
        self.spec = spec
        width = spec.n_z + spec.m
        self.Q = (np.empty((0, width)) if Q is None
                  else np.ascontiguousarray(Q, dtype=np.float64).reshape(-1, width))
        self.y = (np.empty(0) if y is None
                  else np.ascontiguousarray(y, dtype=np.float64).reshape(-1))
        n = len(self.y)
        if self.Q.shape[0] != n:
            raise ValueError("Q and y row counts differ")
        self.experiment = (list(experiment) if experiment is not None
                           else [""] * n)
        self.index = (np.asarray(index, dtype=np.int64) if index is not None
                      else np.full(n, -1, dtype=np.int64))
        if len(self.experiment) != n or len(self.index) != n:
            raise ValueError("tag columns must match the number of rows")
        if not (np.all(np.isfinite(self.Q)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset entries must be finite")
        self.Q.setflags(write=False)
        self.y.setflags(write=False)

    def __len__(self) -> int:
        return len(self.y)

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, spec={self.spec})"

    @classmethod
    def from_samples(cls, samples: Iterable[Sample], spec: RegressorSpec) -> "Dataset":
        rows, ys, exps, idx = [], [], [], []
        for s in samples:
            if s.z.spec != spec:
                raise ValueError("sample regressor does not match the dataset spec")
            rows.append(np.concatenate([s.z.as_array(),
                                        np.asarray(s.u, dtype=np.float64).reshape(-1)]))
            ys.append(s.cost)
            exps.append(str(s.tag[0]))
            idx.append(int(s.tag[1]))
        if not rows:
            return cls(spec)
        return cls(spec, np.vstack(rows), ys, exps, idx)

    @property
    def samples(self) -> list[Sample]:
        nz = self.spec.n_z
        out = []
        for i in range(len(self)):
            z = RegressorState.from_array(self.Q[i, :nz], self.spec)
            u = self.Q[i, nz:]
            out.append(Sample(z, float(u[0]) if self.spec.m == 1 else tuple(u),
                              float(self.y[i]), (self.experiment[i], int(self.index[i]))))
        return out

    def concat(self, other: "Dataset") -> "Dataset":
        if other.spec != self.spec:
            raise ValueError("dimension mismatch between datasets")
        return Dataset(self.spec, np.vstack([self.Q, other.Q]),
                       np.concatenate([self.y, other.y]),
                       self.experiment + other.experiment,
                       np.concatenate([self.index, other.index]))

    def subsample(self, stride: int) -> "Dataset":
        if stride < 1:
            raise ValueError("stride must be >= 1")
        if stride == 1:
            return self
        sl = slice(0, None, stride)
        return Dataset(self.spec, self.Q[sl], self.y[sl], self.experiment[sl],
                       self.index[sl])

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.spec, self.Q[rows], self.y[rows],
                       [self.experiment[i] for i in rows], self.index[rows])

    # -- persistence ---------------------------------------------------

    def header(self) -> list[str]:
        s = self.spec

        def ucol(lag, j):
            return lag if s.m == 1 else f"{lag}[{j}]"

        cols = [f"l_k-{i}" for i in range(1, s.n_a + 1)]
        cols += [ucol(f"u_k-{i}", j) for i in range(1, s.n_b + 1) for j in range(s.m)]
        cols += [ucol("u_k", j) for j in range(s.m)]
        return cols + ["l_k", "experiment", "index"]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for i in range(len(self)):
                w.writerow([format(v, ".17g") for v in self.Q[i]]
                           + [format(self.y[i], ".17g"), self.experiment[i],
                              int(self.index[i])])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        n_a = sum(1 for h in header if h.startswith("l_k-"))
        lags = {int(mt.group(1)) for h in header
                if (mt := re.match(r"u_k-(\d+)", h))}
        n_b = len(lags)
        m = sum(1 for h in header if re.fullmatch(r"u_k(\[\d+\])?", h))
        spec = RegressorSpec(n_a, n_b, m)
        width = spec.n_z + m
        if not rows:
            return cls(spec)
        Q = np.array([[float(v) for v in r[:width]] for r in rows])
        y = np.array([float(r[width]) for r in rows])
        exps = [r[width + 1] for r in rows]
        idx = [int(r[width + 2]) for r in rows]
        return cls(spec, Q, y, exps, idx)


class OracleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LipschitzModel:
    """Immutable Lipschitz-interpolation oracle.

    ``L_overridden`` records whether ``L`` was fixed by the user (in which
    case online updates never change it). ``n_conflicts`` counts checked
    sample pairs violating the Lipschitz bound, which noise makes normal.
    """

    dataset: Dataset
    L: float
    weights: np.ndarray
    L_overridden: bool = True
    raw_quotient: float = 0.0
    safety: float = 1.5
    n_conflicts: int = 0
    _X: np.ndarray = field(init=False, repr=False)
    _y: np.ndarray = field(init=False, repr=False)
    _keys: np.ndarray = field(init=False, repr=False)
    _col: int = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.dataset) == 0:
            raise OracleError("empty dataset")
        if not self.L > 0:
            raise OracleError("Lipschitz constant must be positive")
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.shape != (self.dataset.Q.shape[1],) or np.any(w <= 0):
            raise OracleError("weights must be positive, one per (z, u) coordinate")
        Q, y = self.dataset.Q, self.dataset.y
        spread = w * (Q.max(axis=0) - Q.min(axis=0))
        col = int(np.argmax(spread))
        order = np.argsort(Q[:, col], kind="stable")
        X = np.ascontiguousarray(Q[order])
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_X", X)
        object.__setattr__(self, "_y", np.ascontiguousarray(y[order]))
        object.__setattr__(self, "_keys", np.ascontiguousarray(X[:, col]))
        object.__setattr__(self, "_col", col)

    @property
    def spec(self) -> RegressorSpec:
        return self.dataset.spec

    def _args(self):
        return (self._X, self._y, self._keys, self.weights, float(self.L),
                self._col, float(self._y.min()), float(self._y.max()))

    def predict_flat(self, q) -> float:
        q = np.ascontiguousarray(q, dtype=np.float64)
        return float(kernels.ki_predict(*self._args(), q))

    def predict_many(self, Q) -> np.ndarray:
        Q = np.ascontiguousarray(np.atleast_2d(Q), dtype=np.float64)
        return kernels.ki_predict_many(*self._args(), Q)

    def predict(self, z: RegressorState, u) -> float:
        q = np.concatenate([z.as_array(), np.asarray(u, dtype=np.float64).reshape(-1)])
        return self.predict_flat(q)

    __call__ = predict

    def rollout_arrays(self, z0, U):
        """Compiled rollout on flat arrays; returns ``(costs, states)``."""
        s = self.spec
        z0 = np.ascontiguousarray(z0, dtype=np.float64)
        U = np.ascontiguousarray(np.asarray(U, dtype=np.float64).reshape(-1, s.m))
        return kernels.ki_rollout(*self._args(), z0, U, s.n_a, s.n_b, s.m)

    def rollout(self, z0: RegressorState, u_seq) -> PredictedTrajectory:
        costs, Z = self.rollout_arrays(z0.as_array(), u_seq)
        states = tuple(RegressorState.from_array(r, self.spec) for r in Z)
        U = np.asarray(u_seq, dtype=np.float64).reshape(-1, self.spec.m)
        return PredictedTrajectory(states, costs, U)

    def rollout_feedback(self, z0, U_free, Np, K, z_ref, u_ref, u_lo, u_hi):
        """Free inputs first, then the saturated law u = K (z - z_ref) + u_ref."""
        s = self.spec
        f64 = lambda a: np.ascontiguousarray(a, dtype=np.float64)  # noqa: E731
        return kernels.ki_rollout_feedback(
            *self._args(), f64(z0), f64(np.asarray(U_free).reshape(-1, s.m)),
            int(Np), f64(np.asarray(K).reshape(s.m, s.n_z)), f64(z_ref),
            f64(np.asarray(u_ref).reshape(s.m)), f64(np.asarray(u_lo).reshape(s.m)),
            f64(np.asarray(u_hi).reshape(s.m)), s.n_a, s.n_b, s.m)


# -- Lipschitz constant estimation ---------------------------------------------


def _sampled_pairs(n, max_pairs, rng):
    """Pair index arrays (i < j): all pairs if few, else consecutive + random."""
    if n * (n - 1) // 2 <= max_pairs:
        i, j = np.triu_indices(n, k=1)
        return i, j
    i1 = np.arange(n - 1)
    j1 = i1 + 1
    k = max(max_pairs - (n - 1), 0)
    a = rng.integers(0, n, size=k)
    b = rng.integers(0, n, size=k)
    keep = a != b
    a, b = a[keep], b[keep]
    return (np.concatenate([i1, np.minimum(a, b)]),
            np.concatenate([j1, np.maximum(a, b)]))


def _quotients(Q, y, i, j, w, chunk=1 << 18):
    """(|dy| / d) over pairs, plus the raw d and |dy| arrays."""
    ds, dys = [], []
    for s in range(0, len(i), chunk):
        ii, jj = i[s:s + chunk], j[s:s + chunk]
        ds.append((w * np.abs(Q[ii] - Q[jj])).max(axis=1))
        dys.append(np.abs(y[ii] - y[jj]))
    d = np.concatenate(ds) if ds else np.empty(0)
    dy = np.concatenate(dys) if dys else np.empty(0)
    return d, dy


def fit(data: Dataset, L_override: float | None = None, *, weights=None,
        safety: float = 1.5, stride: int = 1, max_pairs: int = 200_000,
        seed: int = 0) -> LipschitzModel:
    """Build a Lipschitz oracle from ``data``.

    With ``L_override`` the constant is used as given. Otherwise it is the
    largest difference quotient over a (sub)sampled pair set, inflated by
    ``safety``.
    """
    if len(data) == 0:
        raise OracleError("cannot fit an empty dataset")
    data = data.subsample(stride)
    width = data.Q.shape[1]
    w = np.ones(width) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (width,) or np.any(w <= 0):
        raise OracleError("weights must be positive, one per (z, u) coordinate")
    rng = np.random.default_rng(seed)
    i, j = _sampled_pairs(len(data), max_pairs, rng)
    d, dy = _quotients(data.Q, data.y, i, j, w)
    pos = d > 0
    raw = float((dy[pos] / d[pos]).max()) if np.any(pos) else 0.0
    if L_override is not None:
        L = float(L_override)
        overridden = True
    else:
        L = safety * raw if raw > 0 else 1.0
        overridden = False
    conflicts = int(np.count_nonzero(dy > L * d))
    return LipschitzModel(data, L, w, overridden, raw, safety, conflicts)


def fit_consistent(data: Dataset, L0: float = 100.0, *, L_max: float = 1e15,
                   weights=None) -> tuple[LipschitzModel, float]:
    """Oracle with the smallest L >= ``L0`` that makes the data consistent.

    Exact interpolation at q_i holds iff |y_i - y_j| <= L d_ij for all j, so
    only the points mispredicted at ``L0`` need their quotients checked.
    Repeated queries with differing labels cannot be reconciled; L is then
    capped at ``L_max``. Returns the model and its worst training error.
    """
    if not L0 > 0:
        raise ValueError("L0 must be positive")
    model = fit(data, L0, weights=weights)
    err = np.abs(model.predict_many(data.Q) - data.y)
    bad = np.flatnonzero(err > 0.0)
    if bad.size == 0:
        return model, 0.0
    w = model.weights
    need = float(L0)
    for i in bad:
        d = (w * np.abs(data.Q - data.Q[i])).max(axis=1)
        dy = np.abs(data.y - data.y[i])
        if np.any((d == 0) & (dy > 0)):
            need = L_max
            break
        pos = d > 0
        need = max(need, float((dy[pos] / d[pos]).max()))
    L = min(np.nextafter(need, np.inf) * (1 + 1e-12), L_max)
    model = fit(data, L, weights=weights)
    err = np.abs(model.predict_many(data.Q) - data.y)
    return model, float(err.max())


def add_samples(model: LipschitzModel, new: Dataset | Sequence[Sample]) -> LipschitzModel:
    """Append samples; re-estimates L against the existing points only if it
    was estimated in the first place (never decreasing it)."""
    if not isinstance(new, Dataset):
        new = Dataset.from_samples(new, model.spec)
    if new.spec != model.spec:
        raise OracleError("dimension mismatch")
    if len(new) == 0:
        return model
    data = model.dataset.concat(new)
    w = model.weights
    n_old = len(model.dataset)
    # quotients of every new point against all points before it: O(n_D |D|)
    d_list, dy_list = [], []
    for k in range(len(new)):
        row = n_old + k
        d_list.append((w * np.abs(data.Q[:row] - data.Q[row])).max(axis=1))
        dy_list.append(np.abs(data.y[:row] - data.y[row]))
    d = np.concatenate(d_list)
    dy = np.concatenate(dy_list)
    pos = d > 0
    raw_new = float((dy[pos] / d[pos]).max()) if np.any(pos) else 0.0
    raw = max(model.raw_quotient, raw_new)
    if model.L_overridden:
        L = model.L
    else:
        L = max(model.L, model.safety * raw)
    conflicts = model.n_conflicts + int(np.count_nonzero(dy > L * d))
    return LipschitzModel(data, L, w, model.L_overridden, raw, model.safety,
                          conflicts)


@dataclass(frozen=True)
class ErrorBound:
    mu: float
    residual_quantiles: dict
    residuals: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


def validate(model: LipschitzModel, holdout: Dataset) -> ErrorBound:
    """Empirical prediction error on held-out samples."""
    if len(holdout) == 0:
        raise OracleError("empty holdout set")
    if holdout.spec != model.spec:
        raise OracleError("dimension mismatch")
    res = holdout.y - model.predict_many(holdout.Q)
    a = np.abs(res)
    q = {p: float(np.quantile(a, p / 100.0)) for p in (50, 90, 99)}
    return ErrorBound(float(a.max()), q, res)
