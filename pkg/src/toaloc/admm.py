"""Two-block ADMM for robust range-based source localization.

The estimator minimizes ``sum_i f(r_i - ||x - x_i||)`` through an equivalent
constrained form with per-sensor distance variables ``d_i >= 0`` and unit
direction vectors ``beta_i``:

    x - x_i = beta_i * d_i,   ||beta_i|| = 1.

Each iteration takes a closed-form average for ``x``, normalizes ``beta``,
solves L scalar proximal problems for ``d`` and performs a dual ascent on
the multipliers.  The iteration loop runs in the compiled core when built
(see ``backend``); the per-update functions here are the NumPy reference
surface used by the fallback path and by the oracle tests.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .loss import LossSpec, eval_loss, loss_derivative, prox
from .model import Measurements, NegativeRangeWarning, Scenario, rng_from_seed

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "AdmmTrace",
    "SolveResult",
    "KktReport",
    "init_state",
    "x_update",
    "beta_update",
    "d_update",
    "lambda_update",
    "admm_step",
    "solve",
    "objective_value",
    "augmented_lagrangian",
    "kkt_residuals",
]

_D_FLOOR = 1e-6
_BETA_INIT_EPS = 1e-12
_D_NONNEG_TOL = -1e-12
TRACE_FIXED_COLS = 7


@dataclass(frozen=True)
class AdmmConfig:
    """Solver parameters: penalty rho, stopping tolerance delta, iteration cap."""

    rho: float = 5.0
    delta: float = 1e-5
    max_iters: int = 2000
    trace: bool = False

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be > 0")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def to_json(self) -> dict:
        return {
            "rho": self.rho,
            "delta": self.delta,
            "max_iters": self.max_iters,
            "trace": self.trace,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AdmmConfig":
        return cls(
            rho=float(obj.get("rho", 5.0)),
            delta=float(obj.get("delta", 1e-5)),
            max_iters=int(obj.get("max_iters", 2000)),
            trace=bool(obj.get("trace", False)),
        )


@dataclass(frozen=True)
class AdmmState:
    """One iterate: position x (H,), distances d (L,), directions beta (L, H),
    multipliers lam (L, H), iteration counter k."""

    x: np.ndarray
    d: np.ndarray
    beta: np.ndarray
    lam: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class AdmmTrace:
    """Per-iteration diagnostics; row k describes the state after k iterations."""

    objective: np.ndarray
    aug_lagrangian: np.ndarray
    primal_residual: np.ndarray
    dx: np.ndarray
    dd: np.ndarray
    dbeta: np.ndarray
    dlambda: np.ndarray
    x: np.ndarray  # (rows, H)

    @property
    def n_rows(self) -> int:
        return len(self.objective)

    def header(self) -> list[str]:
        H = self.x.shape[1]
        return [
            "k",
            "objective",
            "aug_lagrangian",
            "primal_residual",
            "dx",
            "dd",
            "dbeta",
            "dlambda",
        ] + [f"x{h}" for h in range(H)]

    def rows(self):
        for k in range(self.n_rows):
            yield [
                k,
                self.objective[k],
                self.aug_lagrangian[k],
                self.primal_residual[k],
                self.dx[k],
                self.dd[k],
                self.dbeta[k],
                self.dlambda[k],
                *self.x[k],
            ]


@dataclass(frozen=True)
class SolveResult:
    """Solver output.

    ``primal_residual`` is the stopping-rule sum at termination: the value
    that fired the rule when ``converged``, else the sum at the final
    iterate.  ``min_d`` is the smallest distance variable produced by any
    d-update during the run (nonnegative for valid inputs).
    """

    estimate: np.ndarray
    iterations: int
    converged: bool
    primal_residual: float
    state: AdmmState | None = None
    trace: AdmmTrace | None = None
    min_d: float = float("nan")


@dataclass(frozen=True)
class KktReport:
    """First-order optimality residuals at a solver iterate.

    ``beta_stationarity`` is reported for completeness but is not a
    convergence gate: the sphere constraint's own multiplier is absent from
    the plain Lagrangian this residual is derived from, so it need not
    vanish at a constrained optimum.
    """

    dual_x_residual: float
    d_stationarity: float
    beta_stationarity: float
    primal_feasibility: float
    beta_norm_violation: float


def _clamped_ranges(measurements: Measurements, warn: bool = False) -> np.ndarray:
    r = measurements.ranges
    if measurements.has_negative:
        if warn:
            warnings.warn(
                f"{int((r < 0).sum())} negative range(s) clamped to 0 for the solver",
                NegativeRangeWarning,
                stacklevel=3,
            )
        r = np.maximum(r, 0.0)
    return np.array(r, dtype=float)


def init_state(
    scenario: Scenario,
    measurements: Measurements,
    seed: int | None = None,
) -> AdmmState:
    """Default deterministic start, or a random feasible one when seeded.

    Deterministic: x at the sensor centroid, d at the (floored) measured
    ranges, beta pointing from each sensor to x, zero multipliers.
    """
    sensors = scenario.sensors
    L, H = sensors.shape
    r = np.maximum(_clamped_ranges(measurements), _D_FLOOR)
    if seed is None:
        x = sensors.mean(axis=0)
        d = r
        diff = x - sensors
        nrm = np.linalg.norm(diff, axis=1)
        beta = np.zeros((L, H))
        ok = nrm >= _BETA_INIT_EPS
        beta[ok] = diff[ok] / nrm[ok, None]
        beta[~ok, 0] = 1.0
    else:
        gen = rng_from_seed(seed)
        lo, hi = sensors.min(axis=0), sensors.max(axis=0)
        x = gen.uniform(lo, hi)
        d = r * gen.uniform(0.5, 1.5, size=L)
        beta = gen.standard_normal((L, H))
        beta /= np.linalg.norm(beta, axis=1)[:, None]
    return AdmmState(x=x, d=d, beta=beta, lam=np.zeros((L, H)), k=0)


def x_update(state: AdmmState, scenario: Scenario, config: AdmmConfig) -> np.ndarray:
    """Closed-form position update: the average of x_i + beta_i*d_i - lam_i/rho."""
    w = scenario.sensors + state.beta * state.d[:, None] - state.lam / config.rho
    return w.mean(axis=0)


def beta_update(state: AdmmState, scenario: Scenario, config: AdmmConfig) -> np.ndarray:
    """Direction update: normalize v_i = x - x_i + lam_i/rho.

    Uses the already-updated x with the not-yet-updated multipliers.  A
    zero v_i leaves the previous direction in place (every unit vector is
    optimal there).
    """
    v = (state.x - scenario.sensors) + state.lam / config.rho
    nv = np.linalg.norm(v, axis=1)
    beta = np.array(state.beta)
    ok = nv > 0.0
    beta[ok] = v[ok] / nv[ok, None]
    return beta


def d_update(
    state: AdmmState,
    scenario: Scenario,
    measurements: Measurements,
    loss: LossSpec,
    config: AdmmConfig,
) -> np.ndarray:
    """Distance update via the scalar proximal mapping with weight 1/rho.

    d_i = r_i - prox(r_i - ||v_i||).  For ranges clamped at zero and any
    supported loss the result is nonnegative; a violation means the loss
    breaks that guarantee and is reported as an error.
    """
    r = _clamped_ranges(measurements)
    v = (state.x - scenario.sensors) + state.lam / config.rho
    nv = np.linalg.norm(v, axis=1)
    tau = 1.0 / config.rho
    d = np.array([r[i] - prox(loss, tau, r[i] - nv[i]) for i in range(len(r))])
    if d.min() < _D_NONNEG_TOL:
        raise ArithmeticError(
            f"d update produced a negative distance ({d.min():g}); "
            "the configured loss violates the nonnegativity guarantee"
        )
    return d


def lambda_update(state: AdmmState, scenario: Scenario, config: AdmmConfig) -> np.ndarray:
    """Dual ascent with step rho on the per-sensor residuals."""
    resid = (state.x - scenario.sensors) - state.beta * state.d[:, None]
    return state.lam + config.rho * resid


def admm_step(
    state: AdmmState,
    scenario: Scenario,
    measurements: Measurements,
    loss: LossSpec,
    config: AdmmConfig,
) -> AdmmState:
    """One full iteration: x, then (beta, d), then the multipliers."""
    s = replace(state, x=x_update(state, scenario, config))
    s = replace(s, beta=beta_update(s, scenario, config))
    s = replace(s, d=d_update(s, scenario, measurements, loss, config))
    s = replace(s, lam=lambda_update(s, scenario, config))
    return replace(s, k=state.k + 1)


def stopping_sum(state: AdmmState, scenario: Scenario) -> float:
    """Sum over sensors of ||x - x_i - beta_i * d_i||."""
    resid = (state.x - scenario.sensors) - state.beta * state.d[:, None]
    return float(np.sum(np.linalg.norm(resid, axis=1)))


def objective_value(
    x: np.ndarray, scenario: Scenario, measurements: Measurements, loss: LossSpec
) -> float:
    """Robustified fitting objective sum_i f(r_i - ||x - x_i||)."""
    r = _clamped_ranges(measurements)
    dist = np.linalg.norm(x - scenario.sensors, axis=1)
    return float(sum(eval_loss(loss, zi) for zi in r - dist))


def augmented_lagrangian(
    state: AdmmState,
    scenario: Scenario,
    measurements: Measurements,
    loss: LossSpec,
    config: AdmmConfig,
) -> float:
    """Loss term + multiplier coupling + quadratic penalty on the residuals."""
    r = _clamped_ranges(measurements)
    resid = (state.x - scenario.sensors) - state.beta * state.d[:, None]
    out = float(sum(eval_loss(loss, zi) for zi in r - state.d))
    out += float(np.sum(state.lam * resid))
    out += 0.5 * config.rho * float(np.sum(resid * resid))
    return out


def solve(
    scenario: Scenario,
    measurements: Measurements,
    loss: LossSpec,
    config: AdmmConfig | None = None,
    init: AdmmState | None = None,
    backend_name: str | None = None,
) -> SolveResult:
    """Run the ADMM to convergence or the iteration cap.

    The stopping rule compares the previous iterate's residual sum against
    ``config.delta`` after each multiplier update, so at least one iteration
    always runs.  Negative measured ranges are clamped to zero with a
    warning.  A non-finite iterate raises ``FloatingPointError`` naming the
    offending update.
    """
    if config is None:
        config = AdmmConfig()
    if not loss.has_prox:
        raise ValueError(f"{loss.kind.value} loss is not supported by the solver")
    sensors = np.ascontiguousarray(scenario.sensors, dtype=float)
    L, H = sensors.shape
    if len(measurements.ranges) != L:
        raise ValueError("measurements length does not match the scenario")
    r = _clamped_ranges(measurements, warn=True)

    state0 = init if init is not None else init_state(scenario, measurements)
    x = np.array(state0.x, dtype=float)
    d = np.array(state0.d, dtype=float)
    beta = np.ascontiguousarray(state0.beta, dtype=float)
    lam = np.ascontiguousarray(state0.lam, dtype=float)
    if x.shape != (H,) or d.shape != (L,) or beta.shape != (L, H) or lam.shape != (L, H):
        raise ValueError("init state shapes do not match the scenario")

    kind, p, radius = loss.kernel_args()
    n_cols = TRACE_FIXED_COLS + H
    trace_buf = (
        np.zeros((config.max_iters + 1, n_cols)) if config.trace else np.zeros((1, n_cols))
    )
    kernel = backend.get_kernel(backend_name)
    iterations, converged, stop_value, min_d = kernel.solve_kernel(
        sensors, r, kind, p, radius,
        config.rho, config.delta, config.max_iters, config.trace,
        x, d, beta, lam, trace_buf,
        np.empty(H), np.empty(L), np.empty((L, H)), np.empty((L, H)),
    )

    trace = None
    if config.trace:
        rows = trace_buf[: iterations + 1]
        trace = AdmmTrace(
            objective=rows[:, 0].copy(),
            aug_lagrangian=rows[:, 1].copy(),
            primal_residual=rows[:, 2].copy(),
            dx=rows[:, 3].copy(),
            dd=rows[:, 4].copy(),
            dbeta=rows[:, 5].copy(),
            dlambda=rows[:, 6].copy(),
            x=rows[:, TRACE_FIXED_COLS:].copy(),
        )
    final_state = AdmmState(x=x, d=d, beta=beta, lam=lam, k=iterations)
    return SolveResult(
        estimate=x,
        iterations=int(iterations),
        converged=bool(converged),
        primal_residual=float(stop_value),
        state=final_state,
        trace=trace,
        min_d=float(min_d),
    )


def kkt_residuals(
    result: SolveResult,
    scenario: Scenario,
    measurements: Measurements,
    loss: LossSpec,
) -> KktReport:
    """First-order residuals at the result's final iterate.

    The distance-block residual uses the loss derivative, picking the
    subgradient element closest to the dual target at the absolute-value
    kink.  Computed for any result, converged or not.
    """
    if result.state is None:
        raise ValueError("result does not retain the final state")
    state = result.state
    r = _clamped_ranges(measurements)
    sensors = scenario.sensors
    resid = (state.x - sensors) - state.beta * state.d[:, None]

    lam_dot_beta = np.sum(state.lam * state.beta, axis=1)
    d_stat = 0.0
    for i in range(len(r)):
        fprime = loss_derivative(
            loss, float(r[i] - state.d[i]), subgradient_target=-float(lam_dot_beta[i])
        )
        d_stat = max(d_stat, abs(-fprime - float(lam_dot_beta[i])))

    return KktReport(
        dual_x_residual=float(np.linalg.norm(state.lam.sum(axis=0))),
        d_stationarity=float(d_stat),
        beta_stationarity=float(
            np.max(np.abs(state.d) * np.linalg.norm(state.lam, axis=1))
        ),
        primal_feasibility=float(np.max(np.linalg.norm(resid, axis=1))),
        beta_norm_violation=float(
            np.max(np.abs(np.sum(state.beta**2, axis=1) - 1.0))
        ),
    )
