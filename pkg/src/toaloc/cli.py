"""Command-line front end.

One JSON config document drives everything; flags only override the seed,
output directory, parallelism and verbosity.  Subcommands:

    solve       single estimation, prints the estimate and KKT residuals
    sweep       Monte-Carlo sweep, writes sweep.csv and sweep.json
    trace       per-iteration convergence trace, writes trace.csv
    prox-check  compares proximal mappings against the brute-force oracle

CSV artifacts are written to a temp file and renamed on completion, so a
crash never leaves a partial file with a valid name.  Floats are emitted
in their shortest round-trip representation.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from dataclasses import replace

import numpy as np

from . import backend
from .admm import AdmmConfig, kkt_residuals, solve
from .experiments import (
    EstimatorSpec,
    ExperimentConfig,
    FixedParams,
    GeometrySpec,
    SweepSpec,
    run_sweep,
)
from .loss import LossKind, LossSpec
from .model import (
    Measurements,
    Scenario,
    StableParams,
    gamma_for_gsnr,
    rng_from_seed,
    stable_draws,
    true_ranges,
)
from .proxcheck import run_prox_check

__all__ = ["main", "ConfigError"]


class ConfigError(Exception):
    """Carries every violated config field, not just the first."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, header: list[str], rows) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, obj) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# config parsing: collect all violations before raising


def _check_number(doc, errors, path, lo=None, hi=None, lo_open=False, default=None):
    parts = path.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.get(part, {}) if isinstance(node, dict) else {}
    if not isinstance(node, dict) or parts[-1] not in node:
        return default
    raw = node[parts[-1]]
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        errors.append(f"{path}: must be a number")
        return default
    val = float(raw)
    if not np.isfinite(val):
        errors.append(f"{path}: must be finite")
        return default
    if lo is not None and (val <= lo if lo_open else val < lo):
        errors.append(f"{path}: must be {'>' if lo_open else '>='} {lo}")
        return default
    if hi is not None and val > hi:
        errors.append(f"{path}: must be <= {hi}")
        return default
    return val


def _parse_loss(obj, errors, path) -> LossSpec | None:
    if not isinstance(obj, dict):
        errors.append(f"{path}: must be an object")
        return None
    kind = str(obj.get("kind", "")).lower()
    if kind not in [k.value for k in LossKind]:
        errors.append(f"{path}.kind: must be one of l1, lp, l2, huber, welsch")
        return None
    try:
        return LossSpec.from_json(obj)
    except (ValueError, TypeError) as exc:
        errors.append(f"{path}: {exc}")
        return None


def _parse_admm(obj, errors, path) -> AdmmConfig | None:
    if obj is None:
        return AdmmConfig()
    if not isinstance(obj, dict):
        errors.append(f"{path}: must be an object")
        return None
    rho = _check_number(obj, errors, "rho", lo=0, lo_open=True, default=5.0)
    delta = _check_number(obj, errors, "delta", lo=0, lo_open=True, default=1e-5)
    max_iters = _check_number(obj, errors, "max_iters", lo=1, default=2000)
    bad = [e for e in errors if e.startswith(("rho", "delta", "max_iters"))]
    for e in bad:
        errors.remove(e)
        errors.append(f"{path}.{e}")
    if any(e.startswith(path) for e in errors):
        return None
    return AdmmConfig(
        rho=rho, delta=delta, max_iters=int(max_iters), trace=bool(obj.get("trace", False))
    )


def _parse_geometry(doc, errors) -> tuple[GeometrySpec | None, Scenario | None]:
    scenario = None
    if "scenario" in doc:
        try:
            scenario = Scenario.from_json(doc["scenario"])
        except (ValueError, TypeError, KeyError) as exc:
            errors.append(f"scenario: {exc}")
        return None, scenario
    obj = doc.get("geometry", {"kind": "fixed_perimeter8"})
    if not isinstance(obj, dict):
        errors.append("geometry: must be an object")
        return None, None
    try:
        geometry = GeometrySpec(
            kind=str(obj.get("kind", "random_square")),
            side=float(obj.get("side", 20.0)),
        )
        return geometry, None
    except (ValueError, TypeError) as exc:
        errors.append(f"geometry: {exc}")
        return None, None


def _parse_noise(doc, errors):
    obj = doc.get("noise", {})
    if not isinstance(obj, dict):
        errors.append("noise: must be an object")
        obj = {}
    alpha = _check_number(obj, errors, "alpha", lo=0, hi=2.0, lo_open=True, default=1.5)
    zeta = _check_number(obj, errors, "zeta", lo=-1.0, hi=1.0, default=0.0)
    mu = _check_number(obj, errors, "mu", default=0.0)
    gamma = _check_number(obj, errors, "gamma", lo=0, lo_open=True, default=None)
    gsnr_db = _check_number(obj, errors, "gsnr_db", default=None)
    for name in ("alpha", "zeta", "mu", "gamma", "gsnr_db"):
        for e in list(errors):
            if e.startswith(name + ":"):
                errors.remove(e)
                errors.append(f"noise.{e}")
    if gamma is None and gsnr_db is None:
        gsnr_db = 20.0
    return alpha, zeta, mu, gamma, gsnr_db


def _parse_estimators(doc, errors) -> tuple[EstimatorSpec, ...]:
    entries = doc.get("estimators", [])
    if not isinstance(entries, list):
        errors.append("estimators: must be a list")
        return ()
    default_admm = _parse_admm(doc.get("admm"), errors, "admm") or AdmmConfig()
    specs = []
    for idx, entry in enumerate(entries):
        path = f"estimators[{idx}]"
        if not isinstance(entry, dict):
            errors.append(f"{path}: must be an object")
            continue
        name = entry.get("name")
        method = str(entry.get("method", "")).lower().replace("-", "_")
        if not name:
            errors.append(f"{path}.name: required")
            continue
        try:
            if method == "admm":
                loss = _parse_loss(entry.get("loss"), errors, f"{path}.loss")
                if loss is None:
                    continue
                admm_cfg = (
                    _parse_admm(entry["admm"], errors, f"{path}.admm")
                    if "admm" in entry
                    else default_admm
                )
                if admm_cfg is None:
                    continue
                specs.append(
                    EstimatorSpec(name=str(name), method="admm", loss=loss, admm=admm_cfg)
                )
            elif method == "irls":
                from .baselines import BaselineConfig, BaselineKind

                p = _check_number(entry, errors, "p", lo=1.0, hi=2.0, default=1.3)
                specs.append(
                    EstimatorSpec(
                        name=str(name),
                        method="irls",
                        baseline=BaselineConfig(kind=BaselineKind.IRLS_LP, p=p),
                    )
                )
            elif method == "gauss_newton":
                specs.append(EstimatorSpec(name=str(name), method="gauss_newton"))
            else:
                errors.append(f"{path}.method: must be admm, irls or gauss_newton")
        except ValueError as exc:
            errors.append(f"{path}: {exc}")
    return tuple(specs)


def load_experiment_config(doc: dict, seed_override: int | None = None) -> ExperimentConfig:
    errors: list[str] = []
    geometry, scenario = _parse_geometry(doc, errors)
    if scenario is not None:
        errors.append("scenario: sweeps need a geometry block, not a fixed scenario")
    estimators = _parse_estimators(doc, errors)
    if not estimators:
        errors.append("estimators: at least one estimator is required")
    n_mc = _check_number(doc, errors, "n_mc", lo=1, default=200)
    seed = _check_number(doc, errors, "seed", lo=0, default=0)

    sweep = None
    if "sweep" in doc:
        obj = doc["sweep"]
        if not isinstance(obj, dict):
            errors.append("sweep: must be an object")
        else:
            parameter = str(obj.get("parameter", ""))
            values = obj.get("values")
            if not isinstance(values, list) or not values:
                errors.append("sweep.values: must be a nonempty list of numbers")
            else:
                try:
                    sweep = SweepSpec(parameter=parameter, values=tuple(values))
                except (ValueError, TypeError) as exc:
                    errors.append(f"sweep: {exc}")

    fixed_doc = doc.get("fixed", {})
    alpha = _check_number(fixed_doc, errors, "alpha", lo=0, hi=2.0, lo_open=True, default=1.5)
    gsnr_db = _check_number(fixed_doc, errors, "gsnr_db", default=20.0)
    sensors = _check_number(fixed_doc, errors, "sensors", lo=1, default=8)

    if errors:
        raise ConfigError(errors)
    config = ExperimentConfig(
        geometry=geometry or GeometrySpec(),
        estimators=estimators,
        sweep=sweep,
        fixed=FixedParams(alpha=alpha, gsnr_db=gsnr_db, sensors=int(sensors)),
        n_mc=int(n_mc),
        seed=int(seed if seed_override is None else seed_override),
        noiseless=bool(doc.get("noiseless", False)),
    )
    return config


def build_single_run(doc: dict, seed_override: int | None = None):
    """Scenario, measurements, loss and solver config for solve/trace."""
    errors: list[str] = []
    geometry, scenario = _parse_geometry(doc, errors)
    loss = _parse_loss(doc.get("loss", {"kind": "huber", "radius": 1.0}), errors, "loss")
    admm_cfg = _parse_admm(doc.get("admm"), errors, "admm")
    alpha, zeta, mu, gamma, gsnr_db = _parse_noise(doc, errors)
    seed = _check_number(doc, errors, "seed", lo=0, default=0)
    sensors = _check_number(doc.get("fixed", {}), errors, "sensors", lo=1, default=8)
    if loss is not None and not loss.has_prox:
        errors.append(f"loss.kind: {loss.kind.value} has no proximal rule")
    if errors:
        raise ConfigError(errors)

    seed = int(seed if seed_override is None else seed_override)
    gen = rng_from_seed(seed, stream=0)
    if scenario is None:
        scenario = geometry.draw(gen, int(sensors))
    if doc.get("noiseless", False):
        meas = Measurements(ranges=true_ranges(scenario))
    else:
        if gamma is None:
            gamma = gamma_for_gsnr(scenario, alpha, gsnr_db)
        params = StableParams(alpha=alpha, zeta=zeta, gamma=gamma, mu=mu)
        noise = stable_draws(gen, params, scenario.n_sensors)
        meas = Measurements(ranges=true_ranges(scenario) + noise, noise=noise)
    return scenario, meas, loss, admm_cfg, seed


# ---------------------------------------------------------------------------
# subcommands


def _load_doc(path: str) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(["config: top level must be a JSON object"])
    return doc


def _cmd_solve(args) -> int:
    doc = _load_doc(args.config)
    scenario, meas, loss, admm_cfg, _ = build_single_run(doc, args.seed)
    result = solve(scenario, meas, loss, admm_cfg)
    report = kkt_residuals(result, scenario, meas, loss)
    lines = [
        f"backend: {backend.BACKEND}",
        "estimate: " + " ".join(repr(float(v)) for v in result.estimate),
        f"iterations: {result.iterations}",
        f"converged: {str(result.converged).lower()}",
        f"primal_residual: {result.primal_residual!r}",
        f"kkt.dual_x_residual: {report.dual_x_residual!r}",
        f"kkt.d_stationarity: {report.d_stationarity!r}",
        f"kkt.beta_stationarity: {report.beta_stationarity!r}",
        f"kkt.primal_feasibility: {report.primal_feasibility!r}",
        f"kkt.beta_norm_violation: {report.beta_norm_violation!r}",
    ]
    print("\n".join(lines))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(
            os.path.join(args.out, "solve.json"),
            {
                "estimate": [float(v) for v in result.estimate],
                "iterations": result.iterations,
                "converged": result.converged,
                "primal_residual": result.primal_residual,
                "kkt": {
                    "dual_x_residual": report.dual_x_residual,
                    "d_stationarity": report.d_stationarity,
                    "beta_stationarity": report.beta_stationarity,
                    "primal_feasibility": report.primal_feasibility,
                    "beta_norm_violation": report.beta_norm_violation,
                },
            },
        )
    return 0


def _cmd_sweep(args) -> int:
    doc = _load_doc(args.config)
    config = load_experiment_config(doc, args.seed)
    result = run_sweep(config, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "sweep.csv")
    _write_csv(csv_path, result.csv_header(), result.csv_rows())
    _write_json(os.path.join(args.out, "sweep.json"), result.to_json())
    if not args.quiet:
        for pt in result.points:
            for name, s in sorted(pt.stats.items()):
                print(
                    f"{result.parameter}={pt.value:g} {name}: rmse={s.rmse:.4g} "
                    f"conv={s.conv_rate:.2f} iters={s.mean_iters:.1f}"
                )
        print(f"wrote {csv_path}")
    return 0


def _cmd_trace(args) -> int:
    doc = _load_doc(args.config)
    scenario, meas, loss, admm_cfg, _ = build_single_run(doc, args.seed)
    result = solve(scenario, meas, loss, replace(admm_cfg, trace=True))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "trace.csv")
    _write_csv(path, result.trace.header(), result.trace.rows())
    if not args.quiet:
        print(
            f"iterations: {result.iterations}  converged: {str(result.converged).lower()}"
        )
        print(f"wrote {path}")
    return 0


def _cmd_prox_check(args) -> int:
    deviations = run_prox_check(n_per_kind=args.n, seed=args.seed or 0)
    worst = max(deviations.values())
    for kind, dev in sorted(deviations.items()):
        print(f"prox-check {kind}: max deviation {dev:.3e}")
    print(f"prox-check overall: max deviation {worst:.3e}")
    if worst > 1e-4:
        print("error: prox-check: deviation exceeds 1e-4", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="toaloc",
        description="Outlier-robust TOA source localization: solver and benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True, help="JSON config document")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--quiet", action="store_true")

    sp = sub.add_parser("solve", help="single estimation with a KKT report")
    add_common(sp)
    sp.set_defaults(func=_cmd_solve)

    sp = sub.add_parser("sweep", help="Monte-Carlo sweep, CSV/JSON artifacts")
    add_common(sp)
    sp.add_argument("--jobs", type=int, default=1, help="parallel MC workers")
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("trace", help="per-iteration convergence trace CSV")
    add_common(sp)
    sp.set_defaults(func=_cmd_trace)

    sp = sub.add_parser("prox-check", help="proximal mappings vs brute-force oracle")
    add_common(sp, needs_config=False)
    sp.add_argument("--n", type=int, default=1000, help="instances per loss kind")
    sp.set_defaults(func=_cmd_prox_check)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: config: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: config: not valid JSON: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
