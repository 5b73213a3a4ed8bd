"""Closed-form critical catenoid: the exact reference solution.

The catenoid ``a (cosh s cos phi, cosh s sin phi, s)`` meets the unit sphere
orthogonally along ``s = +-s0`` exactly when ``s0 tanh s0 = 1`` and
``a**2 (cosh(s0)**2 + s0**2) = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def bisect_root(fn, lo: float, hi: float, tol: float = 1e-15, max_iter: int = 200) -> float:
    """Plain bisection; ``fn(lo)`` and ``fn(hi)`` must differ in sign."""
    flo = fn(lo)
    if flo == 0.0:
        return lo
    if flo * fn(hi) > 0:
        raise ValueError("root not bracketed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0.0 or (hi - lo) < tol:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=None)
def critical_s0() -> float:
    """Root of ``s tanh s = 1``."""
    return bisect_root(lambda s: s * math.tanh(s) - 1.0, 0.5, 2.0)


@dataclass(frozen=True)
class CriticalCatenoid:
    s0: float
    a: float  # neck radius; also the Hopf constant C0
    R: float  # conformal modulus of A(1, R)

    @property
    def log_R(self) -> float:
        return 2.0 * self.s0

    @property
    def C0(self) -> float:
        return self.a

    @property
    def boundary_radius(self) -> float:
        return self.a * math.cosh(self.s0)

    @property
    def h_scale(self) -> float:
        """``beta`` in ``h(xi) = beta exp(i xi)`` for the slab Weierstrass data."""
        return math.exp(self.s0) / self.a

    # -- closed forms in the annulus/slab radial variable t = log r = Im xi
    def w(self, t):
        """Lifted Liouville solution ``log sech^2(t - s0) / a^2``."""
        return -2.0 * np.log(np.cosh(np.asarray(t) - self.s0)) - 2.0 * math.log(self.a)

    def v(self, t):
        return self.w(t) - 2.0 * np.asarray(t)

    def Lambda(self, t):
        return self.a * np.cosh(np.asarray(t) - self.s0)

    def surface(self, x, y):
        """Analytic immersion of the slab, matching the Weierstrass data's orientation."""
        s = np.asarray(y) - self.s0
        ch = self.a * np.cosh(s)
        return np.stack(np.broadcast_arrays(ch * np.cos(x), ch * np.sin(x), -self.a * s), axis=-1)

    def area(self) -> float:
        return 2.0 * math.pi * self.a ** 2 * (self.s0 + math.sinh(self.s0) * math.cosh(self.s0))

    def boundary_length(self) -> float:
        return 2.0 * 2.0 * math.pi * self.boundary_radius

    def boundary_flux_z(self) -> float:
        """``|int nu ds|`` per boundary (vertical component)."""
        return 2.0 * math.pi * self.a ** 2 * self.s0 * math.cosh(self.s0)


@lru_cache(maxsize=None)
def critical_catenoid() -> CriticalCatenoid:
    s0 = critical_s0()
    a = 1.0 / math.sqrt(math.cosh(s0) ** 2 + s0 ** 2)
    return CriticalCatenoid(s0=s0, a=a, R=math.exp(2.0 * s0))


def substitution_residuals(s0: float, a: float, R: float) -> dict[str, float]:
    """Residuals of the defining relations, independent of the root finder."""
    return {
        "tanh_relation": abs(s0 * math.tanh(s0) - 1.0),
        "unit_ball": abs(a * a * (math.cosh(s0) ** 2 + s0 ** 2) - 1.0),
        "orthogonality": abs(math.cosh(s0) - s0 * math.sinh(s0)),
        "modulus": abs(math.log(R) - 2.0 * s0),
        "neck_alt": abs(a - math.sinh(s0) / math.cosh(s0) ** 2),
    }
