"""Pure-NumPy fallback for the compiled solver core.

Same call signature and semantics as ``_core.solve_kernel``; used when the
extension is not built (or when forced via ``TOALOC_BACKEND=python``).
Vectorized over sensors, so it stays usable for large L, but the
per-iteration Python overhead makes it noticeably slower than the
compiled loop — see ``benchmarks/bench_backends.py``.
"""

from __future__ import annotations

import numpy as np

from .loss import CODE_HUBER, CODE_L1, CODE_L2, CODE_LP, lp_root

_TRACE_FIXED_COLS = 7


def prox_scalar(kind: int, p: float, radius: float, tau: float, b: float) -> float:
    b = float(b)
    if kind == CODE_L1:
        return max(b - tau, 0.0) - max(-b - tau, 0.0)
    if kind == CODE_L2:
        return b / (1.0 + 2.0 * tau)
    if kind == CODE_HUBER:
        return b - 2.0 * tau * radius * b / max(abs(b), radius + 2.0 * tau * radius)
    if b == 0.0:
        return 0.0
    a = lp_root(p, tau, b)
    obj_a = abs(a) ** p + (a - b) ** 2 / (2.0 * tau)
    obj_0 = b * b / (2.0 * tau)
    return a if obj_a <= obj_0 else 0.0


def _prox_vector(kind: int, p: float, radius: float, tau: float, b: np.ndarray):
    if kind == CODE_L1:
        return np.maximum(b - tau, 0.0) - np.maximum(-b - tau, 0.0)
    if kind == CODE_L2:
        return b / (1.0 + 2.0 * tau)
    if kind == CODE_HUBER:
        return b - 2.0 * tau * radius * b / np.maximum(np.abs(b), radius + 2.0 * tau * radius)
    return np.array([prox_scalar(kind, p, radius, tau, bi) for bi in b])


def _loss_eval_vector(kind: int, p: float, radius: float, z: np.ndarray):
    if kind == CODE_L1:
        return np.abs(z)
    if kind == CODE_LP:
        return np.abs(z) ** p
    if kind == CODE_L2:
        return z * z
    az = np.abs(z)
    return np.where(az <= radius, z * z, 2.0 * radius * az - radius * radius)


def _trace_state(trace, row, sensors, r, kind, p, radius, rho, x, d, beta, lam):
    diff = x - sensors
    dist = np.linalg.norm(diff, axis=1)
    trace[row, 0] = float(np.sum(_loss_eval_vector(kind, p, radius, r - dist)))
    resid = diff - beta * d[:, None]
    trace[row, 1] = float(
        np.sum(_loss_eval_vector(kind, p, radius, r - d))
        + np.sum(lam * resid)
        + 0.5 * rho * np.sum(resid * resid)
    )


def solve_kernel(sensors, r, kind, p, radius, rho, delta, max_iters, want_trace,
                 x, d, beta, lam, trace, px, pd, pbeta, plam):
    """ADMM loop on NumPy arrays; mirrors the compiled kernel exactly."""
    L, H = sensors.shape
    inv_rho = 1.0 / rho
    tau = inv_rho
    min_d = np.inf
    iterations = 0
    converged = False
    fired = np.nan

    if want_trace:
        _trace_state(trace, 0, sensors, r, kind, p, radius, rho, x, d, beta, lam)
        trace[0, 3:_TRACE_FIXED_COLS] = 0.0
        trace[0, _TRACE_FIXED_COLS:] = x

    for k in range(1, max_iters + 1):
        resid = (x - sensors) - beta * d[:, None]
        s_entry = float(np.sum(np.linalg.norm(resid, axis=1)))
        if want_trace:
            trace[k - 1, 2] = s_entry
            px[:] = x
            pd[:] = d
            pbeta[:] = beta
            plam[:] = lam

        x[:] = np.mean(sensors + beta * d[:, None] - lam * inv_rho, axis=0)
        if not np.isfinite(x).all():
            raise FloatingPointError(f"non-finite iterate in x update at iteration {k}")

        v = (x - sensors) + lam * inv_rho
        nv = np.linalg.norm(v, axis=1)
        nonzero = nv > 0.0
        beta[nonzero] = v[nonzero] / nv[nonzero, None]
        # nv == 0: any unit vector is optimal; keep the previous one
        d[:] = r - _prox_vector(kind, p, radius, tau, r - nv)
        if not np.isfinite(d).all():
            raise FloatingPointError(f"non-finite iterate in d update at iteration {k}")
        md = float(d.min())
        if md < min_d:
            min_d = md

        lam += rho * ((x - sensors) - beta * d[:, None])
        if not np.isfinite(lam).all():
            raise FloatingPointError(
                f"non-finite iterate in lambda update at iteration {k}"
            )

        iterations = k
        if want_trace:
            _trace_state(trace, k, sensors, r, kind, p, radius, rho, x, d, beta, lam)
            trace[k, 3] = float(np.linalg.norm(x - px))
            trace[k, 4] = float(np.linalg.norm(d - pd))
            trace[k, 5] = float(np.linalg.norm(beta - pbeta))
            trace[k, 6] = float(np.linalg.norm(lam - plam))
            trace[k, _TRACE_FIXED_COLS:] = x

        if s_entry < delta:
            converged = True
            fired = s_entry
            break

    resid = (x - sensors) - beta * d[:, None]
    final_stop = float(np.sum(np.linalg.norm(resid, axis=1)))
    if want_trace:
        trace[iterations, 2] = final_stop

    return iterations, converged, (fired if converged else final_stop), float(min_d)
