"""Per-coordinate self-concordant barriers for intervals.

Three domain cases are supported: half-lines bounded below or above use a
log barrier, finite intervals use the trigonometric barrier
``-log cos(a*x + b)`` whose third-derivative inequality is tight.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDomain, OutOfDomain

# Relative distance to a finite boundary below which evaluation errors out
# instead of returning huge finite derivatives.
BOUNDARY_GUARD = 1e-14


class BarrierKind(enum.Enum):
    LOWER_ONLY = "lower"
    UPPER_ONLY = "upper"
    TWO_SIDED = "two_sided"


@dataclass(frozen=True)
class BarrierDerivs:
    """Value and first three derivatives of a barrier at a point."""

    phi: float
    d1: float
    d2: float
    d3: float


@dataclass(frozen=True)
class Barrier1D:
    """Barrier for one coordinate domain.

    ``a`` and ``b_shift`` are only meaningful for the two-sided kind, where
    the barrier is ``-log cos(a*x + b_shift)`` with ``a = pi/(u - l)`` and
    ``b_shift = -(pi/2)(u + l)/(u - l)``.
    """

    kind: BarrierKind
    l: float
    u: float
    a: float = 0.0
    b_shift: float = 0.0

    def eval(self, x: float) -> BarrierDerivs:
        return eval_barrier(self, x)

    def contains(self, x: float) -> bool:
        """True if x is strictly interior and clear of the boundary guard."""
        try:
            self._guard(x)
        except OutOfDomain:
            return False
        return True

    def _guard(self, x: float) -> None:
        if self.kind is BarrierKind.LOWER_ONLY:
            tol = BOUNDARY_GUARD * max(1.0, abs(self.l))
            if x - self.l < tol:
                raise OutOfDomain(f"x={x} too close to lower bound {self.l}")
        elif self.kind is BarrierKind.UPPER_ONLY:
            tol = BOUNDARY_GUARD * max(1.0, abs(self.u))
            if self.u - x < tol:
                raise OutOfDomain(f"x={x} too close to upper bound {self.u}")
        else:
            tol = BOUNDARY_GUARD * (self.u - self.l)
            if x - self.l < tol or self.u - x < tol:
                raise OutOfDomain(f"x={x} too close to [{self.l}, {self.u}] boundary")


def make_barrier(l: float | None, u: float | None) -> Barrier1D:
    """Build the barrier for the domain (l, u); ``None`` marks an infinite bound.

    Raises DegenerateDomain for an empty/singleton interval or a fully
    unbounded coordinate.
    """
    if l is None and u is None:
        raise DegenerateDomain("coordinate must have at least one finite bound")
    if l is not None and u is not None:
        if not (l < u):
            raise DegenerateDomain(f"need l < u, got l={l}, u={u}")
        width = u - l
        return Barrier1D(
            kind=BarrierKind.TWO_SIDED,
            l=float(l),
            u=float(u),
            a=math.pi / width,
            b_shift=-(math.pi / 2.0) * (u + l) / width,
        )
    if l is not None:
        return Barrier1D(kind=BarrierKind.LOWER_ONLY, l=float(l), u=math.inf)
    return Barrier1D(kind=BarrierKind.UPPER_ONLY, l=-math.inf, u=float(u))


def eval_barrier(bar: Barrier1D, x: float) -> BarrierDerivs:
    """Evaluate phi and its first three derivatives at an interior point.

    Raises OutOfDomain when x is outside the open interval or within the
    boundary guard distance of a finite bound.
    """
    bar._guard(x)
    if bar.kind is BarrierKind.LOWER_ONLY:
        s = x - bar.l
        return BarrierDerivs(-math.log(s), -1.0 / s, 1.0 / s**2, -2.0 / s**3)
    if bar.kind is BarrierKind.UPPER_ONLY:
        s = bar.u - x
        return BarrierDerivs(-math.log(s), 1.0 / s, 1.0 / s**2, 2.0 / s**3)
    # Shifted argument computed as a*(x - mid): one subtraction before
    # scaling, so narrow boxes far from the origin do not cancel digits.
    theta = bar.a * (x - 0.5 * (bar.u + bar.l))
    c = math.cos(theta)
    t = math.tan(theta)
    a = bar.a
    return BarrierDerivs(
        -math.log(c),
        a * t,
        a**2 / c**2,
        2.0 * a**3 * t / c**2,
    )


class CoordinateBarriers:
    """Vectorized barrier evaluation over all m coordinates of a boxed domain.

    Bounds are given as float arrays with +-inf marking absent bounds
    (converted from the explicit ``None`` markers at construction sites).
    """

    def __init__(self, lower: np.ndarray, upper: np.ndarray):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DegenerateDomain("bounds must be equal-length vectors")
        if np.any(~np.isfinite(lower) & ~np.isfinite(upper)):
            raise DegenerateDomain("every coordinate needs at least one finite bound")
        if np.any(lower >= upper):
            raise DegenerateDomain("need l < u for every coordinate")
        self.lower = lower
        self.upper = upper
        self.m = lower.size
        self._lo_only = np.isfinite(lower) & ~np.isfinite(upper)
        self._up_only = ~np.isfinite(lower) & np.isfinite(upper)
        self._two = np.isfinite(lower) & np.isfinite(upper)
        width = np.where(self._two, upper - lower, 1.0)
        self._a = np.where(self._two, np.pi / width, 0.0)
        self._mid = np.where(self._two, 0.5 * (upper + lower), 0.0)
        self._guard_lo = BOUNDARY_GUARD * np.where(
            self._two, upper - lower, np.maximum(1.0, np.abs(lower))
        )
        self._guard_up = BOUNDARY_GUARD * np.where(
            self._two, upper - lower, np.maximum(1.0, np.abs(upper))
        )

    @classmethod
    def from_bounds(cls, bounds) -> "CoordinateBarriers":
        """Build from a sequence of (l, u) pairs with None for infinite bounds."""
        lo = np.array([-np.inf if l is None else float(l) for l, _ in bounds])
        up = np.array([np.inf if u is None else float(u) for _, u in bounds])
        return cls(lo, up)

    def interior_mask(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ok = np.ones(self.m, dtype=bool)
        has_lo = self._lo_only | self._two
        has_up = self._up_only | self._two
        ok &= ~has_lo | (x - self.lower >= self._guard_lo)
        ok &= ~has_up | (self.upper - x >= self._guard_up)
        return ok

    def is_interior(self, x: np.ndarray) -> bool:
        return bool(np.all(self.interior_mask(x)))

    def derivs(self, x: np.ndarray):
        """Return (phi, d1, d2, d3) arrays at an interior point x.

        Raises OutOfDomain if any coordinate is outside its guarded interval.
        """
        x = np.asarray(x, dtype=float)
        bad = ~self.interior_mask(x)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise OutOfDomain(
                f"coordinate {i} (x={x[i]}) outside ({self.lower[i]}, {self.upper[i]})"
            )
        phi = np.empty(self.m)
        d1 = np.empty(self.m)
        d2 = np.empty(self.m)
        d3 = np.empty(self.m)

        lo = self._lo_only
        if np.any(lo):
            s = x[lo] - self.lower[lo]
            phi[lo] = -np.log(s)
            d1[lo] = -1.0 / s
            d2[lo] = 1.0 / s**2
            d3[lo] = -2.0 / s**3
        up = self._up_only
        if np.any(up):
            s = self.upper[up] - x[up]
            phi[up] = -np.log(s)
            d1[up] = 1.0 / s
            d2[up] = 1.0 / s**2
            d3[up] = 2.0 / s**3
        tw = self._two
        if np.any(tw):
            theta = self._a[tw] * (x[tw] - self._mid[tw])
            c = np.cos(theta)
            t = np.tan(theta)
            a = self._a[tw]
            phi[tw] = -np.log(c)
            d1[tw] = a * t
            d2[tw] = a**2 / c**2
            d3[tw] = 2.0 * a**3 * t / c**2
        return phi, d1, d2, d3

    def slack(self, x: np.ndarray) -> np.ndarray:
        """Distance of each coordinate to its nearer finite bound."""
        x = np.asarray(x, dtype=float)
        lo = np.where(np.isfinite(self.lower), x - self.lower, np.inf)
        up = np.where(np.isfinite(self.upper), self.upper - x, np.inf)
        return np.minimum(lo, up)
