# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled solver core: scalar proximal kernels and the full ADMM loop.

Semantics are identical to the pure-NumPy fallback in ``_kernels``; the
equivalence is pinned by tests.  Loss kind codes match ``loss.py``:
0 = L1, 1 = LP, 2 = L2, 3 = HUBER.
"""

from libc.math cimport fabs, sqrt, pow, isfinite, INFINITY

cdef double _LP_RESID_TOL = 1e-10
cdef int _LP_MAX_ITERS = 200


cdef inline double _max(double a, double b) nogil:
    return a if a > b else b


cdef double _loss_eval(int kind, double p, double radius, double z) nogil:
    if kind == 0:
        return fabs(z)
    elif kind == 1:
        return pow(fabs(z), p)
    elif kind == 2:
        return z * z
    else:
        if fabs(z) <= radius:
            return z * z
        return 2.0 * radius * fabs(z) - radius * radius


cdef double _lp_root(double p, double tau, double b) except? -1.0:
    # bisection for the positive root of (a-b)/tau + p*a**(p-1) on [0, b];
    # geometric probes while the lower end is 0 (the root can underflow
    # for p near 1, in which case 0 is returned)
    cdef double sign = 1.0
    cdef double lo, hi, mid, val, nxt, width_tol
    cdef int it
    if b < 0.0:
        sign = -1.0
        b = -b
    lo = 0.0
    hi = b
    width_tol = 1e-14 * _max(1.0, b)
    mid = 0.0
    val = 0.0
    for it in range(_LP_MAX_ITERS):
        if lo == 0.0:
            nxt = hi * 0.0009765625
        else:
            nxt = 0.5 * (lo + hi)
        if nxt <= lo or nxt >= hi:
            break
        mid = nxt
        val = (mid - b) / tau + p * pow(mid, p - 1.0)
        if val == 0.0:
            return sign * mid
        if val < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= width_tol and fabs(val) <= _LP_RESID_TOL:
            return sign * mid
    if lo == 0.0:
        return 0.0
    if fabs(val) > _LP_RESID_TOL:
        raise ArithmeticError(
            f"lp_root failed to converge: p={p}, tau={tau}, b={sign * b}, residual={val:g}"
        )
    return sign * mid


cdef double _prox(int kind, double p, double radius, double tau, double b) except? -1.0:
    cdef double a, obj_a, obj_0
    if kind == 0:
        return _max(b - tau, 0.0) - _max(-b - tau, 0.0)
    elif kind == 2:
        return b / (1.0 + 2.0 * tau)
    elif kind == 3:
        return b - 2.0 * tau * radius * b / _max(fabs(b), radius + 2.0 * tau * radius)
    else:
        if b == 0.0:
            return 0.0
        a = _lp_root(p, tau, b)
        obj_a = pow(fabs(a), p) + (a - b) * (a - b) / (2.0 * tau)
        obj_0 = b * b / (2.0 * tau)
        return a if obj_a <= obj_0 else 0.0


def prox_scalar(int kind, double p, double radius, double tau, double b):
    """Scalar prox, exposed for backend-equivalence tests."""
    return _prox(kind, p, radius, tau, b)


def lp_root_scalar(double p, double tau, double b):
    return _lp_root(p, tau, b)


def solve_kernel(const double[:, ::1] sensors, const double[::1] r,
                 int kind, double p, double radius,
                 double rho, double delta, int max_iters, bint want_trace,
                 double[::1] x, double[::1] d,
                 double[:, ::1] beta, double[:, ::1] lam,
                 double[:, ::1] trace,
                 double[::1] px, double[::1] pd,
                 double[:, ::1] pbeta, double[:, ::1] plam):
    """Run the ADMM loop in place; returns (iterations, converged, stop_value, min_d).

    ``x, d, beta, lam`` hold the initial iterate and are updated in place.
    When ``want_trace`` is set, row k of ``trace`` receives
    [objective, aug_lagrangian, stop_sum, dx, dd, dbeta, dlambda, x...]
    for the state after k iterations; ``px/pd/pbeta/plam`` are caller-
    provided scratch buffers for the previous iterate.
    """
    cdef Py_ssize_t L = sensors.shape[0]
    cdef Py_ssize_t H = sensors.shape[1]
    cdef double inv_rho = 1.0 / rho
    cdef double tau = inv_rho
    cdef double min_d = INFINITY
    cdef double s_entry, fired, final_stop, nv, acc, resid, b, dist, lin, quad, fsum
    cdef double dx, dd, dbeta_n, dlam_n, tmp
    cdef Py_ssize_t i, h, k
    cdef int iterations = 0
    cdef bint converged = False
    cdef double[64] vbuf  # per-sensor work vector; H is small
    if H > 64:
        raise ValueError("dimension too large for the compiled kernel")

    if want_trace:
        _trace_state(trace, 0, sensors, r, kind, p, radius, rho, x, d, beta, lam)
        for h in range(7, 7 + H):
            trace[0, h] = x[h - 7]
        trace[0, 3] = 0.0
        trace[0, 4] = 0.0
        trace[0, 5] = 0.0
        trace[0, 6] = 0.0

    for k in range(1, max_iters + 1):
        # stopping sum of the entry state; the rule is checked after the
        # multiplier update, exactly as the iteration is specified
        s_entry = 0.0
        for i in range(L):
            acc = 0.0
            for h in range(H):
                resid = x[h] - sensors[i, h] - beta[i, h] * d[i]
                acc += resid * resid
            s_entry += sqrt(acc)
        if want_trace:
            trace[k - 1, 2] = s_entry
            for h in range(H):
                px[h] = x[h]
            for i in range(L):
                pd[i] = d[i]
                for h in range(H):
                    pbeta[i, h] = beta[i, h]
                    plam[i, h] = lam[i, h]

        # x-update: mean of x_i + beta_i * d_i - lam_i / rho
        for h in range(H):
            acc = 0.0
            for i in range(L):
                acc += sensors[i, h] + beta[i, h] * d[i] - lam[i, h] * inv_rho
            x[h] = acc / L
            if not isfinite(x[h]):
                raise FloatingPointError(
                    f"non-finite iterate in x update at iteration {k}"
                )

        # beta- and d-updates, one sensor at a time
        for i in range(L):
            acc = 0.0
            for h in range(H):
                vbuf[h] = x[h] - sensors[i, h] + lam[i, h] * inv_rho
                acc += vbuf[h] * vbuf[h]
            nv = sqrt(acc)
            if nv > 0.0:
                for h in range(H):
                    beta[i, h] = vbuf[h] / nv
            # nv == 0: any unit vector is optimal; keep the previous one
            b = r[i] - nv
            d[i] = r[i] - _prox(kind, p, radius, tau, b)
            if not isfinite(d[i]):
                raise FloatingPointError(
                    f"non-finite iterate in d update at iteration {k}"
                )
            if d[i] < min_d:
                min_d = d[i]

        # multiplier ascent
        for i in range(L):
            for h in range(H):
                lam[i, h] += rho * (x[h] - sensors[i, h] - beta[i, h] * d[i])
                if not isfinite(lam[i, h]):
                    raise FloatingPointError(
                        f"non-finite iterate in lambda update at iteration {k}"
                    )

        iterations = k
        if want_trace:
            _trace_state(trace, k, sensors, r, kind, p, radius, rho, x, d, beta, lam)
            dx = 0.0
            for h in range(H):
                tmp = x[h] - px[h]
                dx += tmp * tmp
            dd = 0.0
            dbeta_n = 0.0
            dlam_n = 0.0
            for i in range(L):
                tmp = d[i] - pd[i]
                dd += tmp * tmp
                for h in range(H):
                    tmp = beta[i, h] - pbeta[i, h]
                    dbeta_n += tmp * tmp
                    tmp = lam[i, h] - plam[i, h]
                    dlam_n += tmp * tmp
            trace[k, 3] = sqrt(dx)
            trace[k, 4] = sqrt(dd)
            trace[k, 5] = sqrt(dbeta_n)
            trace[k, 6] = sqrt(dlam_n)
            for h in range(H):
                trace[k, 7 + h] = x[h]

        if s_entry < delta:
            converged = True
            fired = s_entry
            break

    final_stop = 0.0
    for i in range(L):
        acc = 0.0
        for h in range(H):
            resid = x[h] - sensors[i, h] - beta[i, h] * d[i]
            acc += resid * resid
        final_stop += sqrt(acc)
    if want_trace:
        trace[iterations, 2] = final_stop

    return iterations, converged, (fired if converged else final_stop), min_d


cdef void _trace_state(double[:, ::1] trace, Py_ssize_t row,
                       const double[:, ::1] sensors, const double[::1] r,
                       int kind, double p, double radius, double rho,
                       double[::1] x, double[::1] d,
                       double[:, ::1] beta, double[:, ::1] lam):
    # objective (loss of range residuals) and augmented Lagrangian at a state
    cdef Py_ssize_t L = sensors.shape[0]
    cdef Py_ssize_t H = sensors.shape[1]
    cdef double fsum = 0.0, lag = 0.0, acc, resid, dist
    cdef Py_ssize_t i, h
    for i in range(L):
        acc = 0.0
        for h in range(H):
            resid = x[h] - sensors[i, h]
            acc += resid * resid
        dist = sqrt(acc)
        fsum += _loss_eval(kind, p, radius, r[i] - dist)
    lag = 0.0
    for i in range(L):
        acc = 0.0
        for h in range(H):
            resid = x[h] - sensors[i, h] - beta[i, h] * d[i]
            lag += lam[i, h] * resid
            acc += resid * resid
        lag += 0.5 * rho * acc
        lag += _loss_eval(kind, p, radius, r[i] - d[i])
    trace[row, 0] = fsum
    trace[row, 1] = lag
