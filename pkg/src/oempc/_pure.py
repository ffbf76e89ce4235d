"""Pure-Python/numpy implementations of the compiled kernels.

Same signatures and the same floating-point operation order as
``_kernels.pyx``; the Lipschitz query here is a brute-force scan (no
pruning), which yields identical values because min/max are exact.
"""

from __future__ import annotations

import numpy as np


def ki_predict(X, y, keys, w, L, col, ymin, ymax, q):
    dist = (w * np.abs(q - X)).max(axis=1)
    t = L * dist
    return float(0.5 * (y + t).min() + 0.5 * (y - t).max())


def ki_predict_many(X, y, keys, w, L, col, ymin, ymax, Q):
    Q = np.asarray(Q, dtype=np.float64)
    out = np.empty(Q.shape[0])
    for j in range(Q.shape[0]):
        out[j] = ki_predict(X, y, keys, w, L, col, ymin, ymax, Q[j])
    return out


def _shift(q, u, cost, n_a, n_b, m):
    nz = n_a + n_b * m
    q[1:n_a] = q[0 : n_a - 1].copy()
    q[0] = cost
    q[n_a + m : nz] = q[n_a : nz - m].copy()
    q[n_a : n_a + m] = u


def ki_rollout(X, y, keys, w, L, col, ymin, ymax, z0, U, n_a, n_b, m):
    nz = n_a + n_b * m
    Np = U.shape[0]
    costs = np.empty(Np)
    Z = np.empty((Np + 1, nz))
    q = np.empty(nz + m)
    q[:nz] = z0
    Z[0] = z0
    for j in range(Np):
        q[nz:] = U[j]
        costs[j] = ki_predict(X, y, keys, w, L, col, ymin, ymax, q)
        _shift(q, U[j], costs[j], n_a, n_b, m)
        Z[j + 1] = q[:nz]
    return costs, Z


def ki_rollout_feedback(X, y, keys, w, L, col, ymin, ymax, z0, U, Np, K,
                        z_ref, u_ref, u_lo, u_hi, n_a, n_b, m):
    nz = n_a + n_b * m
    Nc = U.shape[0]
    costs = np.empty(Np)
    Z = np.empty((Np + 1, nz))
    Uout = np.empty((Np, m))
    q = np.empty(nz + m)
    q[:nz] = z0
    Z[0] = z0
    for j in range(Np):
        if j < Nc:
            Uout[j] = U[j]
        else:
            for r in range(m):
                acc = 0.0
                for i in range(nz):
                    acc = acc + K[r, i] * (q[i] - z_ref[i])
                acc = acc + u_ref[r]
                if acc < u_lo[r]:
                    acc = u_lo[r]
                if acc > u_hi[r]:
                    acc = u_hi[r]
                Uout[j, r] = acc
        q[nz:] = Uout[j]
        costs[j] = ki_predict(X, y, keys, w, L, col, ymin, ymax, q)
        _shift(q, Uout[j], costs[j], n_a, n_b, m)
        Z[j + 1] = q[:nz]
    return costs, Z, Uout


def _rhs(a, b, u, r1, r2, V, cA0, variant):
    da = u / V * (cA0 - a) - r1 * a
    if variant == 0:
        db = (-u) / V * b + r1 * a - r2 * b
    else:
        db = (-u) / V * a + r1 * a - r2 * b
    return da, db


def cstr_step(a, b, u, r1, r2, V, cA0, tau, substeps, variant):
    a = float(a)
    b = float(b)
    u = float(u)
    h = tau / substeps
    h2 = 0.5 * h
    h6 = h / 6.0
    for _ in range(substeps):
        ka1, kb1 = _rhs(a, b, u, r1, r2, V, cA0, variant)
        ka2, kb2 = _rhs(a + h2 * ka1, b + h2 * kb1, u, r1, r2, V, cA0, variant)
        ka3, kb3 = _rhs(a + h2 * ka2, b + h2 * kb2, u, r1, r2, V, cA0, variant)
        ka4, kb4 = _rhs(a + h * ka3, b + h * kb3, u, r1, r2, V, cA0, variant)
        a = a + h6 * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4)
        b = b + h6 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4)
    if a < 0.0:
        a = 0.0
    if b < 0.0:
        b = 0.0
    return a, b


def cstr_rollout(a, b, U, r1, r2, V, cA0, alpha, tau, substeps, variant):
    n = U.shape[0]
    X = np.empty((n + 1, 2))
    costs = np.empty(n)
    X[0] = (a, b)
    for j in range(n):
        costs[j] = U[j] * (cA0 - alpha * b)
        a, b = cstr_step(a, b, U[j], r1, r2, V, cA0, tau, substeps, variant)
        X[j + 1] = (a, b)
    return X, costs
