"""Robust scalar losses and their proximal mappings.

Supported losses: absolute value, |z|**p for 1 < p < 2, squared, and the
Huber function (quadratic inside a radius, linear outside).  Each is even,
nonnegative, zero at the origin and strictly increasing on the nonnegative
semi-axis.  The proximal mapping

    prox(tau, b) = argmin_a  f(a) + (a - b)**2 / (2 * tau)

is closed-form for all kinds except |z|**p, which needs a scalar root of
``(a - b)/tau + p * a**(p-1)`` found by bisection.

The Welsch loss is provided for evaluation only; it has no proximal rule
here and the solver rejects it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

__all__ = [
    "LossKind",
    "LossSpec",
    "eval_loss",
    "prox",
    "lp_root",
    "loss_derivative",
]

# numeric codes shared with the compiled kernel
CODE_L1, CODE_LP, CODE_L2, CODE_HUBER = 0, 1, 2, 3

_LP_RESID_TOL = 1e-10
_LP_MAX_ITERS = 200


class LossKind(enum.Enum):
    L1 = "l1"
    LP = "lp"
    L2 = "l2"
    HUBER = "huber"
    WELSCH = "welsch"


@dataclass(frozen=True)
class LossSpec:
    """A robust loss choice with its parameters.

    ``p`` is required for LP and must lie in [1, 2]; the endpoints are
    normalized to the L1/L2 kinds so closed forms are used wherever they
    exist.  ``radius`` is required (and > 0) for HUBER; ``sigma_w`` for
    WELSCH.
    """

    kind: LossKind
    p: float | None = None
    radius: float | None = None
    sigma_w: float | None = None

    def __post_init__(self):
        kind = self.kind
        if kind == LossKind.LP:
            if self.p is None or not (1.0 <= self.p <= 2.0):
                raise ValueError("LP loss needs exponent p in [1, 2]")
            if self.p == 1.0:
                object.__setattr__(self, "kind", LossKind.L1)
                object.__setattr__(self, "p", None)
            elif self.p == 2.0:
                object.__setattr__(self, "kind", LossKind.L2)
                object.__setattr__(self, "p", None)
        elif kind == LossKind.HUBER:
            if self.radius is None or not self.radius > 0:
                raise ValueError("Huber loss needs radius > 0")
        elif kind == LossKind.WELSCH:
            if self.sigma_w is None or not self.sigma_w > 0:
                raise ValueError("Welsch loss needs sigma_w > 0")

    @classmethod
    def l1(cls) -> "LossSpec":
        return cls(LossKind.L1)

    @classmethod
    def l2(cls) -> "LossSpec":
        return cls(LossKind.L2)

    @classmethod
    def lp(cls, p: float) -> "LossSpec":
        return cls(LossKind.LP, p=p)

    @classmethod
    def huber(cls, radius: float) -> "LossSpec":
        return cls(LossKind.HUBER, radius=radius)

    @classmethod
    def welsch(cls, sigma_w: float) -> "LossSpec":
        return cls(LossKind.WELSCH, sigma_w=sigma_w)

    @property
    def has_prox(self) -> bool:
        return self.kind != LossKind.WELSCH

    def kernel_args(self) -> tuple[int, float, float]:
        """(code, p, radius) triple consumed by the solver kernels."""
        if self.kind == LossKind.L1:
            return CODE_L1, 0.0, 0.0
        if self.kind == LossKind.LP:
            return CODE_LP, self.p, 0.0
        if self.kind == LossKind.L2:
            return CODE_L2, 0.0, 0.0
        if self.kind == LossKind.HUBER:
            return CODE_HUBER, 0.0, self.radius
        raise ValueError(f"{self.kind.value} loss has no proximal rule")

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind.value}
        if self.p is not None:
            out["p"] = self.p
        if self.radius is not None:
            out["radius"] = self.radius
        if self.sigma_w is not None:
            out["sigma_w"] = self.sigma_w
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "LossSpec":
        kind = LossKind(str(obj["kind"]).lower())
        return cls(
            kind,
            p=float(obj["p"]) if "p" in obj else None,
            radius=float(obj["radius"]) if "radius" in obj else None,
            sigma_w=float(obj["sigma_w"]) if "sigma_w" in obj else None,
        )


def eval_loss(loss: LossSpec, z: float) -> float:
    """Value of the loss at ``z``."""
    z = float(z)
    if loss.kind == LossKind.L1:
        return abs(z)
    if loss.kind == LossKind.LP:
        return abs(z) ** loss.p
    if loss.kind == LossKind.L2:
        return z * z
    if loss.kind == LossKind.HUBER:
        R = loss.radius
        return z * z if abs(z) <= R else 2.0 * R * abs(z) - R * R
    if loss.kind == LossKind.WELSCH:
        s = loss.sigma_w
        return 1.0 - math.exp(-(z * z) / (2.0 * s * s))
    raise ValueError(f"unknown loss kind {loss.kind}")


def loss_derivative(
    loss: LossSpec, z: float, subgradient_target: float | None = None
) -> float:
    """Derivative f'(z); at the L1 kink z == 0 a subgradient element is chosen.

    When ``subgradient_target`` is given, the element of [-1, 1] closest to
    it is returned at the kink, which is what stationarity residuals need:
    the residual vanishes iff the target lies in the subdifferential.
    """
    z = float(z)
    if loss.kind == LossKind.L1:
        if z != 0.0:
            return math.copysign(1.0, z)
        if subgradient_target is None:
            return 0.0
        return min(1.0, max(-1.0, subgradient_target))
    if loss.kind == LossKind.LP:
        if z == 0.0:
            return 0.0
        return loss.p * abs(z) ** (loss.p - 1.0) * math.copysign(1.0, z)
    if loss.kind == LossKind.L2:
        return 2.0 * z
    if loss.kind == LossKind.HUBER:
        R = loss.radius
        return 2.0 * z if abs(z) <= R else math.copysign(2.0 * R, z)
    raise ValueError(f"no derivative rule for {loss.kind}")


def _lp_stationarity(p: float, tau: float, b: float, a: float) -> float:
    # stationarity of |a|^p + (a-b)^2/(2 tau) for a, b > 0
    return (a - b) / tau + p * a ** (p - 1.0)


def lp_root(p: float, tau: float, b: float) -> float:
    """Root of the |z|**p prox stationarity equation by bisection.

    For b > 0, the unique positive root of (a - b)/tau + p*a**(p-1) on
    [0, b]; odd in b.  Converges to a stationarity residual <= 1e-10.
    While the lower bracket end is still 0 the probe descends
    geometrically, since for p near 1 the root behaves like
    exp(-c / (p - 1)) and plain midpoints cannot reach it; a root below
    the smallest positive double is returned as exactly 0.
    """
    if not (1.0 < p < 2.0):
        raise ValueError("p must be in (1, 2)")
    if not tau > 0:
        raise ValueError("tau must be > 0")
    if b == 0.0:
        raise ValueError("b must be nonzero")
    if b < 0.0:
        return -lp_root(p, tau, -b)

    lo, hi = 0.0, b
    width_tol = 1e-14 * max(1.0, b)
    mid = float("nan")
    val = float("nan")
    for _ in range(_LP_MAX_ITERS):
        nxt = hi * 0.0009765625 if lo == 0.0 else 0.5 * (lo + hi)
        if nxt <= lo or nxt >= hi:
            break
        mid = nxt
        val = _lp_stationarity(p, tau, b, mid)
        if val == 0.0:
            return mid
        if val < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= width_tol and abs(val) <= _LP_RESID_TOL:
            return mid
    if lo == 0.0:
        return 0.0  # root underflows the representable range
    if abs(val) > _LP_RESID_TOL:
        raise ArithmeticError(
            f"lp_root failed to converge: p={p}, tau={tau}, b={b}, residual={val:g}"
        )
    return mid


def prox(loss: LossSpec, tau: float, b: float) -> float:
    """Proximal mapping argmin_a f(a) + (a - b)**2 / (2*tau).

    Closed form for L1 (soft threshold), L2 and Huber; for LP the objective
    is compared at 0 and at the stationary point from :func:`lp_root`.
    b = 0 returns 0 directly (unique minimizer of an even loss).
    """
    if not tau > 0:
        raise ValueError("tau must be > 0")
    b = float(b)
    kind = loss.kind
    if kind == LossKind.L1:
        return max(b - tau, 0.0) - max(-b - tau, 0.0)
    if kind == LossKind.L2:
        return b / (1.0 + 2.0 * tau)
    if kind == LossKind.HUBER:
        R = loss.radius
        return b - 2.0 * tau * R * b / max(abs(b), R + 2.0 * tau * R)
    if kind == LossKind.LP:
        if b == 0.0:
            return 0.0
        a = lp_root(loss.p, tau, b)
        obj_a = abs(a) ** loss.p + (a - b) ** 2 / (2.0 * tau)
        obj_0 = b * b / (2.0 * tau)
        return a if obj_a <= obj_0 else 0.0
    raise ValueError(f"{kind.value} loss has no proximal rule")
