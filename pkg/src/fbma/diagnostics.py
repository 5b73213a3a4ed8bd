"""Hopf differential, Gauss-map winding numbers, and a boundary curvature formula.

Normal convention: patches store ``N`` as in the Weierstrass module, and the
second fundamental form is ``Re{Phi dz^2}`` with ``Phi = -2 X_zz . N``. On a
free-boundary annulus ``f = z^2 Phi`` is a real constant ``C0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import shapely

from .errors import ConfigurationError, IllConditionedError, SingularDataError
from .geomkit import AnnulusSpec, ComplexField, d_dz, d_dzbar, diff
from .weierstrass import SurfacePatch, WeierstrassData, conformality_residual

CONFORMAL_TOL = 1e-3
DEFECT_TOL = 0.1
GZ_FLOOR = 1e-8


@dataclass
class HopfData:
    Phi: ComplexField
    f: ComplexField
    C0_est: float
    deviation: float
    imag_max: float

    def holomorphy_residual(self, margin: int = 3) -> float:
        """Max ``|df/d(conj z)|`` away from the chart edges."""
        r = d_dzbar(self.f).values
        return float(np.max(np.abs(r[margin:-margin])))

    def to_dict(self) -> dict:
        return {"C0_est": self.C0_est, "deviation": self.deviation, "imag_max": self.imag_max}


def hopf_extract(patch: SurfacePatch, order: int = 4, conformal_tol: float = CONFORMAL_TOL,
                 margin: int = 0) -> HopfData:
    """``Phi = -2 X_zz . N`` and ``f = z^2 Phi`` from sampled positions.

    On an annulus ``z^2 X_zz . N = (X_tt - X_thth - 2i X_tth) . N / 4``; on a
    slab ``X_xixi . N = (X_xx - X_yy - 2i X_xy) . N / 4`` and, since
    ``dxi^2 = -dz^2 / z^2``, ``f = -Phi_xi``.
    """
    cr = conformality_residual(patch)
    if cr > conformal_tol:
        raise ConfigurationError(f"patch is not conformal (residual {cr:.3e})")
    X, N = patch.positions, patch.normal
    spec = patch.spec
    if patch.is_annulus:
        ha, hb = spec.h_t, spec.h_theta
        Xaa = diff(X, 0, ha, 2, order)
        Xbb = diff(X, 1, hb, 2, order, periodic=True)
        Xab = diff(diff(X, 1, hb, 1, order, periodic=True), 0, ha, 1, order)
    else:
        ha, hb = spec.h_x, spec.h_y
        Xaa = diff(X, 1, ha, 2, order)
        Xbb = diff(X, 0, hb, 2, order)
        Xab = diff(diff(X, 1, ha, 1, order), 0, hb, 1, order)
    q = 0.25 * np.einsum("...k,...k->...", Xaa - Xbb - 2j * Xab, N)
    if patch.is_annulus:
        Phi = -2.0 * q / spec.z ** 2
        f = spec.z ** 2 * Phi
    else:
        Phi = -2.0 * q
        f = -Phi
    core = (slice(margin, -margin or None), slice(None))
    C0_est = float(np.mean(f.real[core]))
    dev = float(np.max(np.abs(f[core] - C0_est)))
    im = float(np.max(np.abs(f.imag[core])))
    return HopfData(ComplexField(spec, Phi, order), ComplexField(spec, f, order), C0_est, dev, im)


# ---------------------------------------------------------------------------
# periodic compact differences


def _cyclic(n: int, off: float) -> sp.csc_matrix:
    e = np.ones(n)
    A = sp.diags([off * e[:-1], e, off * e[:-1]], [-1, 0, 1], format="lil")
    A[0, n - 1] = off
    A[n - 1, 0] = off
    return A.tocsc()


def periodic_derivative(f: np.ndarray, h: float, deriv: int = 1) -> np.ndarray:
    """Fourth-order compact (Pade) derivative of periodic samples."""
    f = np.asarray(f)
    n = len(f)
    fp, fm = np.roll(f, -1), np.roll(f, 1)
    if deriv == 1:
        rhs = 1.5 * (fp - fm) / (2 * h)
        A = _cyclic(n, 0.25)
    elif deriv == 2:
        rhs = 1.2 * (fp - 2 * f + fm) / h ** 2
        A = _cyclic(n, 0.1)
    else:
        raise ConfigurationError("only first and second derivatives")
    lu = spla.splu(A)
    if np.iscomplexobj(rhs):
        return lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
    return lu.solve(rhs)


# ---------------------------------------------------------------------------
# winding numbers


def _winding_values(g: np.ndarray, g_theta: np.ndarray, h: float, points: np.ndarray) -> np.ndarray:
    """``(1/2 pi i) sum g_theta / (g - a) h`` for many ``a`` at once."""
    a = np.asarray(points, dtype=complex).ravel()
    out = np.empty(a.shape, dtype=complex)
    step = max(1, 2 ** 22 // max(len(g), 1))
    for s in range(0, len(a), step):
        blk = a[s:s + step]
        out[s:s + step] = (g_theta[None, :] / (g[None, :] - blk[:, None])).sum(axis=1)
    return out * h / (2j * math.pi)


def winding_number(g_boundary, a: complex, g_theta=None, closeness: float = 1.0) -> tuple[int, float]:
    """Winding number of the closed sampled curve ``g_boundary`` about ``a``.

    Samples are uniform in a periodic parameter (the start is not repeated).
    Returns ``(n, defect)``; ``defect`` is the distance of the trapezoid
    integral from the nearest integer.
    """
    g = np.asarray(g_boundary, dtype=complex)
    n = len(g)
    if n < 8:
        raise ConfigurationError("need at least 8 boundary samples")
    h = 2 * math.pi / n
    gt = periodic_derivative(g, h) if g_theta is None else np.asarray(g_theta, complex)
    seg = float(np.max(np.abs(np.roll(g, -1) - g)))
    if np.min(np.abs(g - a)) < closeness * seg:
        raise IllConditionedError(f"point {a} lies within {closeness} segment lengths of the curve")
    val = _winding_values(g, gt, h, np.array([a]))[0]
    k = int(round(val.real))
    defect = float(abs(val - k))
    if defect >= DEFECT_TOL:
        raise IllConditionedError(f"winding integral {val:.4f} is not near an integer")
    return k, defect


def is_simple_polyline(g: np.ndarray) -> bool:
    """Closed polyline through the samples is free of self-intersections."""
    pts = np.column_stack([np.real(g), np.imag(g)])
    ring = shapely.LinearRing(pts)
    if not shapely.is_simple(ring):
        return False
    # a multiply traversed curve may have coincident but non-crossing vertices
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1) if len(pts) <= 4096 else None
    if d is not None:
        seg = np.max(np.linalg.norm(np.roll(pts, -1, 0) - pts, axis=1))
        n = len(pts)
        idx = np.arange(n)
        gap = np.abs(idx[:, None] - idx[None, :])
        gap = np.minimum(gap, n - gap)
        if np.any((d < 1e-9 * max(seg, 1e-300)) & (gap > 0)):
            return False
    return True


def cover_multiplicity(g: np.ndarray, rel_tol: float = 1e-9) -> int:
    """Largest ``k`` such that the samples repeat with period ``n / k``."""
    g = np.asarray(g, dtype=complex)
    n = len(g)
    scale = max(float(np.max(np.abs(g - g.mean()))), 1e-300)
    for k in range(n // 4, 1, -1):
        if n % k == 0 and np.max(np.abs(np.roll(g, -(n // k)) - g)) < rel_tol * scale:
            return k
    return 1


@dataclass
class InjectivityReport:
    points: np.ndarray
    evaluated: np.ndarray
    n_inner: np.ndarray
    n_outer: np.ndarray
    difference: np.ndarray
    between: np.ndarray
    max_defect: float
    min_gz: float
    inner_simple: bool
    outer_simple: bool
    verdict: str
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = self.difference[self.evaluated]
        return {"verdict": self.verdict, "max_defect": self.max_defect, "min_gz": self.min_gz,
                "inner_simple": self.inner_simple, "outer_simple": self.outer_simple,
                "evaluated_points": int(self.evaluated.sum()),
                "difference_values": sorted({int(x) for x in d}), "notes": self.notes}


def injectivity_report(data: WeierstrassData, n_test: int = 64, exclusion: float = 2.0,
                       gz_floor: float = GZ_FLOOR) -> InjectivityReport:
    """Argument-principle count of preimages for a grid of target points."""
    spec = data.g.spec
    if not isinstance(spec, AnnulusSpec):
        raise ConfigurationError("injectivity_report needs annulus data")
    g = data.g.values
    if not np.all(np.isfinite(g)):
        raise SingularDataError("g has poles on the grid")
    gz = np.abs(d_dz(ComplexField(spec, g, 4)).values)
    min_gz = float(np.min(gz))
    scale = float(np.max(np.abs(g)))
    notes = []
    if min_gz <= gz_floor * max(scale, 1.0):
        notes.append("g' vanishes somewhere on the closed annulus")
    h = spec.h_theta
    g1, g2 = g[0], g[-1]
    gt1, gt2 = periodic_derivative(g1, h), periodic_derivative(g2, h)
    allpts = np.concatenate([g1, g2])
    lo = np.array([allpts.real.min(), allpts.imag.min()])
    hi = np.array([allpts.real.max(), allpts.imag.max()])
    pad = 0.1 * (hi - lo)
    xs = np.linspace(lo[0] - pad[0], hi[0] + pad[0], n_test)
    ys = np.linspace(lo[1] - pad[1], hi[1] + pad[1], n_test)
    A = xs[None, :] + 1j * ys[:, None]
    seg = max(np.max(np.abs(np.roll(g1, -1) - g1)), np.max(np.abs(np.roll(g2, -1) - g2)))
    dist = np.minimum(np.min(np.abs(A.ravel()[:, None] - g1[None, :]), axis=1),
                      np.min(np.abs(A.ravel()[:, None] - g2[None, :]), axis=1)).reshape(A.shape)
    ok = dist > exclusion * seg
    w1 = np.zeros(A.shape, complex)
    w2 = np.zeros(A.shape, complex)
    w1[ok] = _winding_values(g1, gt1, h, A[ok])
    w2[ok] = _winding_values(g2, gt2, h, A[ok])
    n1 = np.rint(w1.real).astype(int)
    n2 = np.rint(w2.real).astype(int)
    defect = float(max(np.max(np.abs(w1[ok] - n1[ok]), initial=0.0),
                       np.max(np.abs(w2[ok] - n2[ok]), initial=0.0)))
    if defect >= DEFECT_TOL:
        raise IllConditionedError(f"winding rounding defect {defect:.3f}")
    diffn = n2 - n1
    s1, s2 = is_simple_polyline(g1), is_simple_polyline(g2)
    pts_xy = (A.real, A.imag)
    poly = lambda c: shapely.Polygon(np.column_stack([c.real, c.imag]))
    between = np.zeros(A.shape, bool)
    if s1 and s2:
        between = shapely.contains_xy(poly(g2), *pts_xy) ^ shapely.contains_xy(poly(g1), *pts_xy)
    d = diffn[ok]
    # a curve that is not simple but merely traverses a simple curve k times
    # does not cross itself; its multiplicity shows up in the counts instead
    crossing = any(not s and cover_multiplicity(c) == 1 for s, c in ((s1, g1), (s2, g2)))
    if crossing:
        verdict = "boundary not embedded"
    elif np.any(d >= 2) or np.any(d < 0) or not (s1 and s2):
        verdict = "not injective"
    elif np.all(d == between[ok].astype(int)):
        verdict = "consistent with injectivity"
    else:
        verdict = "not injective"
    return InjectivityReport(A, ok, n1, n2, diffn, between, defect, min_gz, s1, s2, verdict, notes)


# ---------------------------------------------------------------------------
# geodesic curvature from the Gauss map


@dataclass
class KappaGProfile:
    kappa_g: np.ndarray
    bracket: np.ndarray
    g_theta_modulus: np.ndarray

    @property
    def modulus_spread(self) -> float:
        return float(np.ptp(self.g_theta_modulus))


def remark42_kappa_g(g_boundary, c: float, theta=None, g_theta=None, g_thetatheta=None) -> KappaGProfile:
    """Geodesic curvature of a free boundary curve from its Gauss-map image.

    ``kappa_g = (1/|c|) B |g_th|^2`` with the parametrization-free bracket
    ``B = 2/(1+|g|^2) / |g_th| * Im(g_thth / g_th - 2|g|^2/(1+|g|^2) g_th / g)``.
    ``c`` is the real Hopf constant of the annulus. Derivatives default to
    compact fourth-order periodic differences in a uniform parameter on
    ``[0, 2 pi)``.
    """
    g = np.asarray(g_boundary, dtype=complex)
    if c == 0:
        raise ConfigurationError("c must be nonzero")
    n = len(g)
    h = 2 * math.pi / n
    gt = periodic_derivative(g, h) if g_theta is None else np.asarray(g_theta, complex)
    gtt = periodic_derivative(g, h, 2) if g_thetatheta is None else np.asarray(g_thetatheta, complex)
    if np.min(np.abs(g)) == 0.0 or np.min(np.abs(gt)) < 1e-14 * max(np.max(np.abs(gt)), 1e-300):
        raise SingularDataError("g or its derivative vanishes on the curve")
    m2 = np.abs(g) ** 2
    mod = np.abs(gt)
    inner = np.imag(gtt / gt - (2 * m2 / (1 + m2)) * (gt / g))
    bracket = (2.0 / (1 + m2)) / mod * inner
    return KappaGProfile(bracket * mod ** 2 / abs(c), bracket, mod)
