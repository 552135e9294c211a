"""Monte-Carlo benchmark harness: sweeps, RMSE aggregation, traces, timing.

Each run owns a deterministic noise/geometry stream derived from
``(seed, sweep-point index, run index)``, so results are reproducible and
independent of how runs are scheduled across workers.  All estimators in a
sweep consume the same measurements per run (paired comparison).
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .admm import AdmmConfig, SolveResult, solve
from .baselines import BaselineConfig, BaselineKind, solve_gn_l2, solve_irls_lp
from .loss import LossSpec
from .model import (
    Measurements,
    Scenario,
    StableParams,
    fixed_perimeter_scenario,
    gamma_for_gsnr,
    random_square_scenario,
    rng_from_seed,
    stable_draws,
    true_ranges,
)

__all__ = [
    "GeometrySpec",
    "EstimatorSpec",
    "SweepSpec",
    "FixedParams",
    "ExperimentConfig",
    "EstimatorStats",
    "SweepPoint",
    "SweepResult",
    "TimingReport",
    "rmse",
    "run_sweep",
    "convergence_trace",
    "timing_report",
]

SWEEP_PARAMETERS = ("gsnr", "sensors", "alpha")
_POINT_SHIFT = 40  # run stream = (point index << 40) | run index


@dataclass(frozen=True)
class GeometrySpec:
    """Scenario generator: per-run random square, or the fixed 8-sensor layout."""

    kind: str = "random_square"
    side: float = 20.0

    def __post_init__(self):
        if self.kind not in ("random_square", "fixed_perimeter8"):
            raise ValueError("geometry kind must be random_square or fixed_perimeter8")
        if not self.side > 0:
            raise ValueError("geometry side must be > 0")

    def draw(self, gen: np.random.Generator, n_sensors: int) -> Scenario:
        if self.kind == "fixed_perimeter8":
            return fixed_perimeter_scenario(half_side=self.side / 2.0)
        return random_square_scenario(gen, n_sensors, side=self.side)

    def to_json(self) -> dict:
        return {"kind": self.kind, "side": self.side}


@dataclass(frozen=True)
class EstimatorSpec:
    """A named estimator: ADMM with a loss, IRLS with an exponent, or plain LS."""

    name: str
    method: str  # admm | irls | gauss_newton
    loss: LossSpec | None = None
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    baseline: BaselineConfig | None = None

    def __post_init__(self):
        if self.method not in ("admm", "irls", "gauss_newton"):
            raise ValueError("method must be admm, irls or gauss_newton")
        if self.method == "admm":
            if self.loss is None:
                raise ValueError(f"estimator {self.name!r}: admm needs a loss")
            if not self.loss.has_prox:
                raise ValueError(
                    f"estimator {self.name!r}: {self.loss.kind.value} loss is not solvable"
                )
        elif self.baseline is None:
            kind = (
                BaselineKind.IRLS_LP
                if self.method == "irls"
                else BaselineKind.GAUSS_NEWTON_L2
            )
            object.__setattr__(self, "baseline", BaselineConfig(kind=kind))

    def run(self, scenario: Scenario, measurements: Measurements) -> SolveResult:
        if self.method == "admm":
            return solve(scenario, measurements, self.loss, self.admm)
        if self.method == "irls":
            return solve_irls_lp(scenario, measurements, self.baseline)
        return solve_gn_l2(scenario, measurements, self.baseline)


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")
        if len(self.values) < 1:
            raise ValueError("sweep needs at least one value")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class FixedParams:
    """Non-swept noise/geometry parameters."""

    alpha: float = 1.5
    gsnr_db: float = 20.0
    sensors: int = 8
    zeta: float = 0.0
    mu: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    estimators: tuple[EstimatorSpec, ...] = ()
    sweep: SweepSpec | None = None
    fixed: FixedParams = field(default_factory=FixedParams)
    n_mc: int = 200
    seed: int = 0
    noiseless: bool = False

    def __post_init__(self):
        if self.n_mc < 1:
            raise ValueError("n_mc must be >= 1")
        names = [e.name for e in self.estimators]
        if len(set(names)) != len(names):
            raise ValueError("estimator names must be unique")
        if (
            self.sweep is not None
            and self.sweep.parameter == "sensors"
            and self.geometry.kind == "fixed_perimeter8"
        ):
            raise ValueError("a sensors sweep needs the random_square geometry")

    def point_values(self) -> tuple:
        if self.sweep is None:
            return (
                {
                    "gsnr": self.fixed.gsnr_db,
                    "sensors": float(self.fixed.sensors),
                    "alpha": self.fixed.alpha,
                }["gsnr"],
            )
        return self.sweep.values

    def params_at(self, value: float) -> tuple[float, float, int]:
        """(alpha, gsnr_db, n_sensors) for one sweep point."""
        alpha, gsnr_db, L = self.fixed.alpha, self.fixed.gsnr_db, self.fixed.sensors
        if self.sweep is None:
            return alpha, gsnr_db, L
        if self.sweep.parameter == "gsnr":
            gsnr_db = value
        elif self.sweep.parameter == "alpha":
            alpha = value
        else:
            L = int(value)
        return alpha, gsnr_db, L


@dataclass(frozen=True)
class EstimatorStats:
    rmse: float
    conv_rate: float
    mean_iters: float
    mean_seconds: float
    n_finite: int


@dataclass(frozen=True)
class RunRecord:
    truth: np.ndarray
    estimates: dict
    converged: dict
    iterations: dict
    seconds: dict


@dataclass(frozen=True)
class SweepPoint:
    value: float
    stats: dict  # estimator name -> EstimatorStats
    runs: tuple[RunRecord, ...] | None = None


@dataclass(frozen=True)
class SweepResult:
    parameter: str
    points: tuple[SweepPoint, ...]

    def fingerprint(self) -> dict:
        """Everything deterministic (timings excluded), for reproducibility checks."""
        return {
            "parameter": self.parameter,
            "points": [
                {
                    "value": pt.value,
                    "stats": {
                        name: (s.rmse, s.conv_rate, s.mean_iters, s.n_finite)
                        for name, s in sorted(pt.stats.items())
                    },
                }
                for pt in self.points
            ],
        }

    def to_json(self) -> dict:
        return {
            "parameter": self.parameter,
            "points": [
                {
                    "value": pt.value,
                    "estimators": {
                        name: {
                            "rmse": s.rmse,
                            "conv_rate": s.conv_rate,
                            "mean_iters": s.mean_iters,
                            "mean_seconds": s.mean_seconds,
                            "n_finite": s.n_finite,
                        }
                        for name, s in sorted(pt.stats.items())
                    },
                }
                for pt in self.points
            ],
        }

    def csv_header(self) -> list[str]:
        return [
            "sweep_param",
            "value",
            "estimator",
            "rmse",
            "conv_rate",
            "mean_iters",
            "mean_seconds",
        ]

    def csv_rows(self):
        for pt in self.points:
            for name, s in sorted(pt.stats.items()):
                yield [
                    self.parameter,
                    pt.value,
                    name,
                    s.rmse,
                    s.conv_rate,
                    s.mean_iters,
                    s.mean_seconds,
                ]


def rmse(estimates, truths) -> float:
    """Root of the mean squared position error over runs."""
    estimates = np.asarray(estimates, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if estimates.shape != truths.shape or len(estimates) < 1:
        raise ValueError("estimates and truths must have equal nonzero length")
    return float(np.sqrt(np.mean(np.sum((estimates - truths) ** 2, axis=1))))


def _run_stream(point_idx: int, j: int) -> int:
    return (point_idx << _POINT_SHIFT) | j


def _measurements_for_run(
    config: ExperimentConfig, point_idx: int, value: float, j: int
) -> tuple[Scenario, Measurements]:
    alpha, gsnr_db, L = config.params_at(value)
    gen = rng_from_seed(config.seed, _run_stream(point_idx, j))
    scenario = config.geometry.draw(gen, L)
    if config.noiseless:
        return scenario, Measurements(ranges=true_ranges(scenario))
    # GSNR is held fixed, so gamma depends on this run's geometry
    gamma = gamma_for_gsnr(scenario, alpha, gsnr_db)
    params = StableParams(
        alpha=alpha, zeta=config.fixed.zeta, gamma=gamma, mu=config.fixed.mu
    )
    noise = stable_draws(gen, params, scenario.n_sensors)
    return scenario, Measurements(ranges=true_ranges(scenario) + noise, noise=noise)


def _mc_run(config: ExperimentConfig, point_idx: int, value: float, j: int) -> RunRecord:
    scenario, meas = _measurements_for_run(config, point_idx, value, j)
    estimates, converged, iterations, seconds = {}, {}, {}, {}
    H = scenario.dimension
    for spec in config.estimators:
        t0 = time.perf_counter()
        try:
            result = spec.run(scenario, meas)
            estimates[spec.name] = np.asarray(result.estimate, dtype=float)
            converged[spec.name] = bool(result.converged)
            iterations[spec.name] = int(result.iterations)
        except (FloatingPointError, ArithmeticError, np.linalg.LinAlgError):
            estimates[spec.name] = np.full(H, np.nan)
            converged[spec.name] = False
            iterations[spec.name] = 0
        seconds[spec.name] = time.perf_counter() - t0
    return RunRecord(
        truth=np.array(scenario.source),
        estimates=estimates,
        converged=converged,
        iterations=iterations,
        seconds=seconds,
    )


def _aggregate(config: ExperimentConfig, records) -> dict:
    stats = {}
    for spec in config.estimators:
        errs = []
        for rec in records:
            est = rec.estimates[spec.name]
            if np.isfinite(est).all():
                errs.append(float(np.sum((est - rec.truth) ** 2)))
        stats[spec.name] = EstimatorStats(
            rmse=float(np.sqrt(np.mean(errs))) if errs else float("nan"),
            conv_rate=float(np.mean([rec.converged[spec.name] for rec in records])),
            mean_iters=float(np.mean([rec.iterations[spec.name] for rec in records])),
            mean_seconds=float(np.mean([rec.seconds[spec.name] for rec in records])),
            n_finite=len(errs),
        )
    return stats


def _mc_run_star(args):
    return _mc_run(*args)


def run_sweep(
    config: ExperimentConfig, jobs: int = 1, keep_runs: bool = False
) -> SweepResult:
    """Run every estimator over every sweep point, n_mc runs each.

    Estimator failures are recorded per run; non-finite estimates are
    excluded from the RMSE but show up in the convergence rate.  With
    ``jobs > 1`` the runs go to a process pool; the per-run streams make
    the outcome identical to the sequential one.
    """
    if not config.estimators:
        raise ValueError("config has no estimators")
    values = config.point_values()
    points = []
    parameter = config.sweep.parameter if config.sweep is not None else "gsnr"
    for point_idx, value in enumerate(values):
        tasks = [(config, point_idx, value, j) for j in range(config.n_mc)]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                records = list(pool.map(_mc_run_star, tasks, chunksize=16))
        else:
            records = [_mc_run(*t) for t in tasks]
        points.append(
            SweepPoint(
                value=float(value),
                stats=_aggregate(config, records),
                runs=tuple(records) if keep_runs else None,
            )
        )
    return SweepResult(parameter=parameter, points=tuple(points))


def convergence_trace(
    loss: LossSpec,
    seed: int,
    admm: AdmmConfig | None = None,
    alpha: float = 1.5,
    gsnr_db: float = 20.0,
    noiseless: bool = False,
) -> SolveResult:
    """Single traced solve on the fixed 8-sensor scenario.

    The returned result's ``trace`` holds the per-iteration objective and
    position estimates (one row per iteration plus the initial point).
    """
    admm = replace(admm, trace=True) if admm is not None else AdmmConfig(trace=True)
    scenario = fixed_perimeter_scenario()
    if noiseless:
        meas = Measurements(ranges=true_ranges(scenario))
    else:
        gamma = gamma_for_gsnr(scenario, alpha, gsnr_db)
        params = StableParams(alpha=alpha, gamma=gamma)
        noise = stable_draws(rng_from_seed(seed), params, scenario.n_sensors)
        meas = Measurements(ranges=true_ranges(scenario) + noise, noise=noise)
    return solve(scenario, meas, loss, admm)


@dataclass(frozen=True)
class TimingReport:
    mean_seconds: dict  # estimator name -> mean seconds per run
    admm_scaling: dict  # admm estimator name -> time(L=64) / time(L=8), fixed iterations


def timing_report(
    config: ExperimentConfig,
    scaling_iters: int = 200,
    scaling_sensors: tuple[int, int] = (8, 64),
) -> TimingReport:
    """Mean per-run wall time per estimator, plus ADMM cost scaling in L.

    The scaling ratio reruns the ADMM estimators at a fixed iteration count
    (the stopping tolerance is effectively disabled) for the two sensor
    counts, isolating per-iteration cost, which grows linearly in L.
    """
    if not config.estimators:
        return TimingReport(mean_seconds={}, admm_scaling={})
    base = run_sweep(replace(config, sweep=None))
    mean_seconds = {
        name: s.mean_seconds for name, s in base.points[0].stats.items()
    }

    admm_scaling = {}
    admm_specs = [e for e in config.estimators if e.method == "admm"]
    for spec in admm_specs:
        pinned = replace(
            spec, admm=replace(spec.admm, delta=1e-300, max_iters=scaling_iters)
        )
        times = {}
        for L in scaling_sensors:
            cfg = replace(
                config,
                geometry=GeometrySpec(kind="random_square", side=config.geometry.side),
                estimators=(pinned,),
                sweep=None,
                fixed=replace(config.fixed, sensors=L),
            )
            res = run_sweep(cfg)
            times[L] = res.points[0].stats[spec.name].mean_seconds
        admm_scaling[spec.name] = times[scaling_sensors[1]] / times[scaling_sensors[0]]
    return TimingReport(mean_seconds=mean_seconds, admm_scaling=admm_scaling)
