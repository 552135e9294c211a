"""Reference estimators: weighted Gauss-Newton and IRLS for |.|^p fitting.

Both start from the sensor centroid (the same default as the ADMM) and
take damped Gauss-Newton steps with a halving line search on their own
outer objective.  IRLS reweights the squared residuals by
``max(|residual|, eps)**(p-2)`` before every step, which reduces exactly
to the plain least-squares path at p = 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .admm import SolveResult
from .model import Measurements, Scenario

__all__ = ["BaselineKind", "BaselineConfig", "solve_gn_l2", "solve_irls_lp"]

_DIST_FLOOR = 1e-12
_RANK_RTOL = 1e-8
_MAX_HALVINGS = 40


class BaselineKind(Enum):
    GAUSS_NEWTON_L2 = "gauss_newton_l2"
    IRLS_LP = "irls_lp"


@dataclass(frozen=True)
class BaselineConfig:
    kind: BaselineKind = BaselineKind.GAUSS_NEWTON_L2
    p: float = 1.3
    tol: float = 1e-8
    max_iters: int = 500
    irls_epsilon: float = 1e-8

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.kind == BaselineKind.IRLS_LP and not (1.0 <= self.p <= 2.0):
            # robust range is [1, 2); p = 2 is allowed and reduces to the
            # plain least-squares path
            raise ValueError("IRLS exponent p must be in [1, 2]")
        if not self.irls_epsilon > 0:
            raise ValueError("irls_epsilon must be > 0")


def _residuals_and_jacobian(x, sensors, r):
    diff = x - sensors
    dist = np.maximum(np.linalg.norm(diff, axis=1), _DIST_FLOOR)
    g = r - dist
    J = -diff / dist[:, None]  # d(r_i - ||x - x_i||)/dx
    return g, J


def _gn_solve(scenario, measurements, objective, weights_fn, tol, max_iters):
    """Shared damped-GN loop.

    ``objective(g)`` is the outer merit the line search must decrease;
    ``weights_fn(g)`` gives the per-residual weights for the normal
    equations.  Convergence additionally requires the Jacobian to have
    full column rank at the solution, so underdetermined geometries are
    reported as failures instead of arbitrary fixes.
    """
    sensors = scenario.sensors
    r = measurements.ranges
    if len(r) != scenario.n_sensors:
        raise ValueError("measurements length does not match the scenario")
    x = sensors.mean(axis=0)
    iterations = 0
    step_small = False

    for _ in range(max_iters):
        g, J = _residuals_and_jacobian(x, sensors, r)
        w = weights_fn(g)
        f0 = objective(g)
        A = (J * w[:, None]).T @ J
        b = -(J * w[:, None]).T @ g
        try:
            # reject nearly-singular systems, not just exactly singular ones
            if np.linalg.cond(A) > 1e12:
                raise np.linalg.LinAlgError
            delta = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            mu = 1e-6
            while True:
                try:
                    delta = np.linalg.solve(A + mu * np.eye(len(x)), b)
                    break
                except np.linalg.LinAlgError:
                    mu *= 10.0
                    if mu > 1e12:
                        delta = np.zeros_like(x)
                        break

        alpha = 1.0
        for _ in range(_MAX_HALVINGS):
            g_new, _ = _residuals_and_jacobian(x + alpha * delta, sensors, r)
            if objective(g_new) < f0:
                break
            alpha *= 0.5
        else:
            alpha = 0.0

        step = alpha * delta
        x = x + step
        iterations += 1
        if np.linalg.norm(step) < tol:
            step_small = True
            break

    _, J = _residuals_and_jacobian(x, sensors, r)
    s = np.linalg.svd(J, compute_uv=False)
    identifiable = len(s) >= len(x) and s[len(x) - 1] > _RANK_RTOL * s[0]
    g, _ = _residuals_and_jacobian(x, sensors, r)
    return SolveResult(
        estimate=x,
        iterations=iterations,
        converged=bool(step_small and identifiable),
        primal_residual=float(np.linalg.norm(g)),
    )


def solve_gn_l2(
    scenario: Scenario, measurements: Measurements, config: BaselineConfig | None = None
) -> SolveResult:
    """Least-squares fit of the ranges, weighted by 1/sigma_i**2."""
    if config is None:
        config = BaselineConfig(kind=BaselineKind.GAUSS_NEWTON_L2)
    inv_var = 1.0 / measurements.sigma**2

    def weights(g):
        return inv_var

    def objective(g):
        return float(np.sum(inv_var * g * g))

    return _gn_solve(scenario, measurements, objective, weights, config.tol, config.max_iters)


def solve_irls_lp(
    scenario: Scenario, measurements: Measurements, config: BaselineConfig | None = None
) -> SolveResult:
    """Iteratively reweighted fit of sum_i |r_i - ||x - x_i|||**p."""
    if config is None:
        config = BaselineConfig(kind=BaselineKind.IRLS_LP)
    p, eps = config.p, config.irls_epsilon

    if p == 2.0:
        # unit weights; identical floating-point path to solve_gn_l2 with
        # unit sigmas
        def weights(g):
            return np.ones_like(g)

        def objective(g):
            return float(np.sum(g * g))

    else:

        def weights(g):
            return np.maximum(np.abs(g), eps) ** (p - 2.0)

        def objective(g):
            return float(np.sum(np.abs(g) ** p))

    return _gn_solve(scenario, measurements, objective, weights, config.tol, config.max_iters)
