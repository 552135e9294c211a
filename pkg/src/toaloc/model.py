"""Localization scenarios, range measurements and alpha-stable noise.

A scenario is a source position plus a set of sensor positions in H
dimensions (meters).  Range measurements are true source-sensor distances
corrupted by i.i.d. alpha-stable noise; the relative noise level is
quantified by a generalized SNR that uses ``gamma**alpha`` in place of the
(undefined, for ``alpha < 2``) noise variance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NegativeRangeWarning",
    "Scenario",
    "Measurements",
    "StableParams",
    "rng_from_seed",
    "true_ranges",
    "stable_draws",
    "sample_stable",
    "measure",
    "gsnr",
    "gamma_for_gsnr",
    "fixed_perimeter_scenario",
    "random_square_scenario",
]

_MASK64 = (1 << 64) - 1


class NegativeRangeWarning(UserWarning):
    """A range measurement was negative (impulsive noise can do that)."""


def rng_from_seed(seed: int, stream: int = 0) -> np.random.Generator:
    """Deterministic counter-based generator for ``(seed, stream)``.

    Philox is keyed directly with the two 64-bit words, so every
    (seed, stream) pair owns an independent, platform-stable stream.
    Monte-Carlo workers derive their stream from the run index, making
    results independent of scheduling.
    """
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Scenario:
    """Source/sensor geometry in ``dimension``-dimensional space (meters).

    ``sensors`` has shape (L, dimension).  Fewer than ``dimension + 1``
    sensors make the fix ill-posed and trigger a warning; duplicate sensor
    positions are rejected.  A source coinciding with a sensor is allowed
    (degenerate but well-defined ranges) and warned about.
    """

    dimension: int
    source: np.ndarray
    sensors: np.ndarray

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        source = np.asarray(self.source, dtype=float)
        sensors = np.atleast_2d(np.asarray(self.sensors, dtype=float))
        if source.shape != (self.dimension,):
            raise ValueError(f"source must have length {self.dimension}")
        if sensors.ndim != 2 or sensors.shape[1] != self.dimension:
            raise ValueError(f"sensors must have shape (L, {self.dimension})")
        if not (np.isfinite(source).all() and np.isfinite(sensors).all()):
            raise ValueError("positions must be finite")
        L = sensors.shape[0]
        for i in range(L):
            for j in range(i + 1, L):
                if np.linalg.norm(sensors[i] - sensors[j]) < 1e-12:
                    raise ValueError(f"sensors {i} and {j} coincide")
        if L < self.dimension + 1:
            warnings.warn(
                f"only {L} sensors for a {self.dimension}-D fix; the problem "
                "is ill-posed",
                UserWarning,
                stacklevel=2,
            )
        if np.min(np.linalg.norm(sensors - source, axis=1)) < 1e-12:
            warnings.warn(
                "source coincides with a sensor; degenerate geometry",
                UserWarning,
                stacklevel=2,
            )
        source.setflags(write=False)
        sensors.setflags(write=False)
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "sensors", sensors)

    @property
    def n_sensors(self) -> int:
        return self.sensors.shape[0]

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "source": self.source.tolist(),
            "sensors": self.sensors.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Scenario":
        return cls(
            dimension=int(obj["dimension"]),
            source=np.asarray(obj["source"], dtype=float),
            sensors=np.asarray(obj["sensors"], dtype=float),
        )


@dataclass(frozen=True)
class Measurements:
    """Range measurements ``r`` (meters) with optional per-sensor weights.

    ``sigma`` is only consumed by the least-squares baseline.  Negative
    ranges are kept as-is (solvers clamp them with a warning); ``noise``
    optionally records the noise realization for diagnostics.
    """

    ranges: np.ndarray
    sigma: np.ndarray | None = None
    noise: np.ndarray | None = None

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=float)
        if r.ndim != 1:
            raise ValueError("ranges must be a vector")
        if not np.isfinite(r).all():
            raise ValueError("ranges must be finite")
        sigma = self.sigma
        sigma = np.ones_like(r) if sigma is None else np.asarray(sigma, dtype=float)
        if sigma.shape != r.shape or not (sigma > 0).all():
            raise ValueError("sigma must be positive and match ranges")
        r.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "ranges", r)
        object.__setattr__(self, "sigma", sigma)
        if self.noise is not None:
            noise = np.asarray(self.noise, dtype=float)
            noise.setflags(write=False)
            object.__setattr__(self, "noise", noise)

    @property
    def has_negative(self) -> bool:
        return bool((self.ranges < 0).any())


@dataclass(frozen=True)
class StableParams:
    """Alpha-stable noise parameterization (1-type).

    alpha: stability in (0, 2]; zeta: skewness in [-1, 1]; gamma: scale > 0;
    mu: location.  The 1-type convention is used throughout so that
    ``alpha = 2`` reduces to Normal(mu, 2 * gamma**2), consistent with the
    ``gamma**alpha`` term of the generalized SNR.
    """

    alpha: float
    zeta: float = 0.0
    gamma: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError("alpha must be in (0, 2]")
        if not (-1.0 <= self.zeta <= 1.0):
            raise ValueError("zeta must be in [-1, 1]")
        if not self.gamma > 0.0:
            raise ValueError("gamma must be > 0")
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "zeta": self.zeta,
            "gamma": self.gamma,
            "mu": self.mu,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StableParams":
        return cls(
            alpha=float(obj["alpha"]),
            zeta=float(obj.get("zeta", 0.0)),
            gamma=float(obj["gamma"]),
            mu=float(obj.get("mu", 0.0)),
        )


def true_ranges(scenario: Scenario) -> np.ndarray:
    """Noiseless source-sensor distances, one per sensor."""
    return np.linalg.norm(scenario.source - scenario.sensors, axis=1)


def stable_draws(
    gen: np.random.Generator, params: StableParams, n: int
) -> np.ndarray:
    """Draw ``n`` i.i.d. variates from the given stable law.

    Uses the Chambers-Mallows-Stuck transform: one uniform angle on
    (-pi/2, pi/2) and one unit exponential per draw, combined in closed
    form.  Exact and rejection-free for the whole parameter range.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    alpha, zeta, gamma, mu = params.alpha, params.zeta, params.gamma, params.mu
    u = gen.uniform(-np.pi / 2, np.pi / 2, size=n)
    w = gen.standard_exponential(size=n)
    if alpha == 1.0:
        bu = np.pi / 2 + zeta * u
        z = (2 / np.pi) * (
            bu * np.tan(u) - zeta * np.log((np.pi / 2) * w * np.cos(u) / bu)
        )
        # extra location term is the 1-type convention at alpha = 1
        return gamma * z + mu + (2 / np.pi) * zeta * gamma * np.log(gamma)
    t = zeta * np.tan(np.pi * alpha / 2)
    b0 = np.arctan(t) / alpha
    scale0 = (1 + t * t) ** (1 / (2 * alpha))
    z = (
        scale0
        * np.sin(alpha * (u + b0))
        / np.cos(u) ** (1 / alpha)
        * (np.cos(u - alpha * (u + b0)) / w) ** ((1 - alpha) / alpha)
    )
    return gamma * z + mu


def sample_stable(
    params: StableParams, n: int, seed: int, stream: int = 0
) -> np.ndarray:
    """Deterministic stable sample for ``(seed, stream)``."""
    return stable_draws(rng_from_seed(seed, stream), params, n)


def measure(
    scenario: Scenario, params: StableParams, seed: int, stream: int = 0
) -> Measurements:
    """Noisy TOA ranges: true distances plus stable noise.

    Pure function of (scenario, params, seed, stream); the realized noise
    vector is recorded on the result for diagnostics.
    """
    noise = sample_stable(params, scenario.n_sensors, seed, stream)
    return Measurements(ranges=true_ranges(scenario) + noise, noise=noise)


def gsnr(scenario: Scenario, params: StableParams) -> float:
    """Generalized SNR in dB: 10*log10(sum_i ||x - x_i||^2 / (L * gamma**alpha))."""
    d2 = float(np.sum(true_ranges(scenario) ** 2))
    L = scenario.n_sensors
    return 10.0 * np.log10(d2 / (L * params.gamma**params.alpha))


def gamma_for_gsnr(scenario: Scenario, alpha: float, target_db: float) -> float:
    """Scale gamma that realizes ``target_db`` of generalized SNR.

    Closed-form inversion; round-trips through :func:`gsnr` to 1e-10 dB.
    """
    if not np.isfinite(target_db):
        raise ValueError("target GSNR must be finite")
    if not (0.0 < alpha <= 2.0):
        raise ValueError("alpha must be in (0, 2]")
    d2 = float(np.sum(true_ranges(scenario) ** 2))
    L = scenario.n_sensors
    return float((d2 / (L * 10.0 ** (target_db / 10.0))) ** (1.0 / alpha))


def fixed_perimeter_scenario(source=(2.0, 3.0), half_side: float = 10.0) -> Scenario:
    """Reproducibility scenario: 8 sensors evenly spaced on the perimeter
    of an origin-centered square (corners plus edge midpoints), source at
    (2, 3) m by default."""
    h = float(half_side)
    sensors = np.array(
        [
            [-h, -h],
            [0.0, -h],
            [h, -h],
            [h, 0.0],
            [h, h],
            [0.0, h],
            [-h, h],
            [-h, 0.0],
        ]
    )
    return Scenario(dimension=2, source=np.asarray(source, dtype=float), sensors=sensors)


def random_square_scenario(
    gen: np.random.Generator, n_sensors: int, side: float = 20.0, dimension: int = 2
) -> Scenario:
    """Source and sensors i.i.d. uniform in an origin-centered square."""
    h = side / 2.0
    source = gen.uniform(-h, h, size=dimension)
    sensors = gen.uniform(-h, h, size=(n_sensors, dimension))
    return Scenario(dimension=dimension, source=source, sensors=sensors)
