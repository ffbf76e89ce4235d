# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Lipschitz-interpolant queries, oracle rollouts and
CSTR integration.

Every routine mirrors ``oempc._pure`` operation for operation so that both
backends return bitwise-identical floats (the extension is compiled without
FMA contraction).
"""

import numpy as np

from libc.math cimport fabs, INFINITY

cdef Py_ssize_t _lower_bound(const double[::1] keys, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0
    cdef Py_ssize_t hi = keys.shape[0]
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) // 2
        if keys[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef double _query(const double[:, ::1] X, const double[::1] y,
                   const double[::1] keys, const double[::1] w, double L,
                   Py_ssize_t col, double ymin, double ymax,
                   const double* q) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t dim = X.shape[1]
    cdef Py_ssize_t i, k, pos
    cdef double upper = INFINITY
    cdef double lower = -INFINITY
    cdef double qc = q[col]
    cdef double wc = w[col]
    cdef double g, lg, dist, t, a, b

    pos = _lower_bound(keys, qc)
    # Points sorted by one coordinate; that coordinate's weighted gap is a
    # lower bound on the max-norm distance, so the scan stops once neither
    # cone can tighten.
    i = pos
    while i < n:
        g = wc * fabs(qc - keys[i])
        lg = L * g
        if ymin + lg >= upper and ymax - lg <= lower:
            break
        dist = 0.0
        for k in range(dim):
            t = w[k] * fabs(q[k] - X[i, k])
            if t > dist:
                dist = t
        t = L * dist
        a = y[i] + t
        b = y[i] - t
        if a < upper:
            upper = a
        if b > lower:
            lower = b
        i += 1
    i = pos - 1
    while i >= 0:
        g = wc * fabs(qc - keys[i])
        lg = L * g
        if ymin + lg >= upper and ymax - lg <= lower:
            break
        dist = 0.0
        for k in range(dim):
            t = w[k] * fabs(q[k] - X[i, k])
            if t > dist:
                dist = t
        t = L * dist
        a = y[i] + t
        b = y[i] - t
        if a < upper:
            upper = a
        if b > lower:
            lower = b
        i -= 1
    return 0.5 * upper + 0.5 * lower


def ki_predict(const double[:, ::1] X, const double[::1] y,
               const double[::1] keys, const double[::1] w, double L,
               Py_ssize_t col, double ymin, double ymax,
               const double[::1] q):
    return _query(X, y, keys, w, L, col, ymin, ymax, &q[0])


def ki_predict_many(const double[:, ::1] X, const double[::1] y,
                    const double[::1] keys, const double[::1] w, double L,
                    Py_ssize_t col, double ymin, double ymax,
                    const double[:, ::1] Q):
    cdef Py_ssize_t nq = Q.shape[0]
    cdef Py_ssize_t j
    out = np.empty(nq, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for j in range(nq):
            o[j] = _query(X, y, keys, w, L, col, ymin, ymax, &Q[j, 0])
    return out


cdef void _shift(double* z, const double* u, double cost,
                 Py_ssize_t n_a, Py_ssize_t n_b, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n_a - 1, 0, -1):
        z[i] = z[i - 1]
    z[0] = cost
    for i in range(n_a + n_b * m - 1, n_a + m - 1, -1):
        z[i] = z[i - m]
    for i in range(m):
        z[n_a + i] = u[i]


def ki_rollout(const double[:, ::1] X, const double[::1] y,
               const double[::1] keys, const double[::1] w, double L,
               Py_ssize_t col, double ymin, double ymax,
               const double[::1] z0, const double[:, ::1] U,
               Py_ssize_t n_a, Py_ssize_t n_b, Py_ssize_t m):
    """Open-loop oracle rollout; returns (costs[Np], states[Np+1, n_z])."""
    cdef Py_ssize_t nz = n_a + n_b * m
    cdef Py_ssize_t Np = U.shape[0]
    cdef Py_ssize_t j, i
    costs = np.empty(Np, dtype=np.float64)
    Z = np.empty((Np + 1, nz), dtype=np.float64)
    qbuf = np.empty(nz + m, dtype=np.float64)
    cdef double[::1] c = costs
    cdef double[:, ::1] zz = Z
    cdef double[::1] q = qbuf
    with nogil:
        for i in range(nz):
            q[i] = z0[i]
            zz[0, i] = z0[i]
        for j in range(Np):
            for i in range(m):
                q[nz + i] = U[j, i]
            c[j] = _query(X, y, keys, w, L, col, ymin, ymax, &q[0])
            _shift(&q[0], &U[j, 0], c[j], n_a, n_b, m)
            for i in range(nz):
                zz[j + 1, i] = q[i]
    return costs, Z


def ki_rollout_feedback(const double[:, ::1] X, const double[::1] y,
                        const double[::1] keys, const double[::1] w, double L,
                        Py_ssize_t col, double ymin, double ymax,
                        const double[::1] z0, const double[:, ::1] U,
                        Py_ssize_t Np, const double[:, ::1] K,
                        const double[::1] z_ref, const double[::1] u_ref,
                        const double[::1] u_lo, const double[::1] u_hi,
                        Py_ssize_t n_a, Py_ssize_t n_b, Py_ssize_t m):
    """Free inputs U for the first rows, then saturated u = K (z - z_ref) + u_ref.

    Returns (costs[Np], states[Np+1, n_z], inputs[Np, m]).
    """
    cdef Py_ssize_t nz = n_a + n_b * m
    cdef Py_ssize_t Nc = U.shape[0]
    cdef Py_ssize_t j, i, r
    cdef double acc
    costs = np.empty(Np, dtype=np.float64)
    Z = np.empty((Np + 1, nz), dtype=np.float64)
    Uout = np.empty((Np, m), dtype=np.float64)
    qbuf = np.empty(nz + m, dtype=np.float64)
    cdef double[::1] c = costs
    cdef double[:, ::1] zz = Z
    cdef double[:, ::1] uu = Uout
    cdef double[::1] q = qbuf
    with nogil:
        for i in range(nz):
            q[i] = z0[i]
            zz[0, i] = z0[i]
        for j in range(Np):
            if j < Nc:
                for i in range(m):
                    uu[j, i] = U[j, i]
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
                    uu[j, r] = acc
            for i in range(m):
                q[nz + i] = uu[j, i]
            c[j] = _query(X, y, keys, w, L, col, ymin, ymax, &q[0])
            _shift(&q[0], &uu[j, 0], c[j], n_a, n_b, m)
            for i in range(nz):
                zz[j + 1, i] = q[i]
    return costs, Z, Uout


cdef inline void _rhs(double a, double b, double u, double r1, double r2,
                      double V, double cA0, int variant,
                      double* da, double* db) noexcept nogil:
    da[0] = u / V * (cA0 - a) - r1 * a
    if variant == 0:
        db[0] = (-u) / V * b + r1 * a - r2 * b
    else:
        db[0] = (-u) / V * a + r1 * a - r2 * b


cdef inline void _rk4(double* a, double* b, double u, double r1, double r2,
                      double V, double cA0, double tau, int substeps,
                      int variant) noexcept nogil:
    cdef double h = tau / substeps
    cdef double h2 = 0.5 * h
    cdef double h6 = h / 6.0
    cdef double ka1, kb1, ka2, kb2, ka3, kb3, ka4, kb4
    cdef int s
    for s in range(substeps):
        _rhs(a[0], b[0], u, r1, r2, V, cA0, variant, &ka1, &kb1)
        _rhs(a[0] + h2 * ka1, b[0] + h2 * kb1, u, r1, r2, V, cA0, variant, &ka2, &kb2)
        _rhs(a[0] + h2 * ka2, b[0] + h2 * kb2, u, r1, r2, V, cA0, variant, &ka3, &kb3)
        _rhs(a[0] + h * ka3, b[0] + h * kb3, u, r1, r2, V, cA0, variant, &ka4, &kb4)
        a[0] = a[0] + h6 * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4)
        b[0] = b[0] + h6 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4)
    if a[0] < 0.0:
        a[0] = 0.0
    if b[0] < 0.0:
        b[0] = 0.0


def cstr_step(double a, double b, double u, double r1, double r2, double V,
              double cA0, double tau, int substeps, int variant):
    _rk4(&a, &b, u, r1, r2, V, cA0, tau, substeps, variant)
    return a, b


def cstr_rollout(double a, double b, const double[::1] U, double r1,
                 double r2, double V, double cA0, double alpha, double tau,
                 int substeps, int variant):
    """Returns (states[n+1, 2], costs[n]) with costs[j] = l(x(j), u(j))."""
    cdef Py_ssize_t n = U.shape[0]
    cdef Py_ssize_t j
    X = np.empty((n + 1, 2), dtype=np.float64)
    costs = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] xx = X
    cdef double[::1] c = costs
    with nogil:
        xx[0, 0] = a
        xx[0, 1] = b
        for j in range(n):
            c[j] = U[j] * (cA0 - alpha * b)
            _rk4(&a, &b, U[j], r1, r2, V, cA0, tau, substeps, variant)
            xx[j + 1, 0] = a
            xx[j + 1, 1] = b
    return X, costs
