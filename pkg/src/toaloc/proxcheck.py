"""Brute-force scalar minimization used to cross-check proximal mappings.

Independent route: a dense grid over the shrinkage interval followed by a
golden-section refinement.  All supported prox objectives are convex in
the scalar argument, so the combination pins the minimizer tightly.
"""

from __future__ import annotations

import numpy as np

from .loss import LossSpec, eval_loss, prox
from .model import rng_from_seed

__all__ = ["prox_oracle", "run_prox_check"]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def prox_oracle(loss: LossSpec, tau: float, b: float, grid_points: int = 100_000) -> float:
    """argmin of f(a) + (a - b)**2/(2 tau) by grid search plus golden section."""
    lo, hi = min(0.0, b), max(0.0, b)
    if hi - lo == 0.0:
        return 0.0
    grid = np.linspace(lo, hi, grid_points)
    if loss.kind.value == "l1":
        vals = np.abs(grid)
    elif loss.kind.value == "lp":
        vals = np.abs(grid) ** loss.p
    elif loss.kind.value == "l2":
        vals = grid * grid
    elif loss.kind.value == "huber":
        R = loss.radius
        vals = np.where(np.abs(grid) <= R, grid * grid, 2 * R * np.abs(grid) - R * R)
    else:
        vals = np.array([eval_loss(loss, a) for a in grid])
    vals = vals + (grid - b) ** 2 / (2.0 * tau)
    i = int(np.argmin(vals))
    a, c = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]

    def obj(t):
        return eval_loss(loss, t) + (t - b) ** 2 / (2.0 * tau)

    # golden-section refinement on the bracketing cell pair
    x1 = c - _GOLDEN * (c - a)
    x2 = a + _GOLDEN * (c - a)
    f1, f2 = obj(x1), obj(x2)
    while c - a > 1e-12 * max(1.0, abs(b)):
        if f1 < f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - _GOLDEN * (c - a)
            f1 = obj(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (c - a)
            f2 = obj(x2)
    return 0.5 * (a + c)


def _random_spec(kind: str, gen: np.random.Generator) -> LossSpec:
    if kind == "l1":
        return LossSpec.l1()
    if kind == "l2":
        return LossSpec.l2()
    if kind == "lp":
        return LossSpec.lp(float(gen.uniform(1.0 + 1e-6, 2.0 - 1e-6)))
    return LossSpec.huber(float(gen.uniform(0.1, 5.0)))


def run_prox_check(n_per_kind: int = 1000, seed: int = 0, grid_points: int = 100_000):
    """Max |prox - oracle| over random instances, per loss kind."""
    gen = rng_from_seed(seed, stream=0xB0)
    out = {}
    for kind in ("l1", "lp", "l2", "huber"):
        worst = 0.0
        for _ in range(n_per_kind):
            spec = _random_spec(kind, gen)
            b = float(gen.uniform(-20.0, 20.0))
            tau = float(gen.uniform(0.01, 10.0))
            dev = abs(prox(spec, tau, b) - prox_oracle(spec, tau, b, grid_points))
            worst = max(worst, dev)
        out[kind] = worst
    return out
