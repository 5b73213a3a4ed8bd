"""Space curves: Frenet data, spherical curves, and orthogonal-sphere certificates.

A curve with non-vanishing torsion lies on a sphere of radius ``rho`` iff
``(1/kappa)^2 + ((1/kappa)')^2 / tau^2 = rho^2``; the outward sphere normal is
then ``-n / (rho kappa) + kappa' b / (rho kappa^2 tau)``.

The certifier turns intrinsic data of a curve ``Gamma`` on a surface (a line
of curvature with constant geodesic curvature ``c``) into the sphere of
radius ``1/|c|`` that meets the surface orthogonally along ``Gamma``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline, make_interp_spline

from .errors import (ConfigurationError, DegenerateCurveError, InconsistencyError,
                     NotCertifiableError)
from .geomkit import AnnulusSpec, diff, fd_weights

KAPPA_FLOOR = 1e-8
TAU_FLOOR = 1e-6
REL_TOL = 1e-4
FLAT_FRACTION = 0.05
CONDITION_FRACTION = 0.05
SIGN_TIE_RATIO = 0.10


class DegenerateCurveWarning(UserWarning):
    pass


@dataclass
class SpaceCurve:
    points: np.ndarray
    closed: bool
    arclength: np.ndarray
    t: np.ndarray
    n: np.ndarray
    b: np.ndarray
    kappa: np.ndarray
    tau: np.ndarray
    kappa_prime: np.ndarray
    speed: np.ndarray
    length: float
    flags: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @property
    def kappa_floor(self) -> float:
        return KAPPA_FLOOR / self.length

    @property
    def tau_floor(self) -> float:
        return TAU_FLOOR * float(np.nanmax(self.kappa))

    def generic_mask(self) -> np.ndarray:
        return (self.kappa > self.kappa_floor) & (np.abs(self.tau) > self.tau_floor)

    def conditioned_mask(self, fraction: float = CONDITION_FRACTION) -> np.ndarray:
        """Generic nodes whose torsion is not close to one of its zeros."""
        m = self.generic_mask()
        if not m.any():
            return m
        return m & (np.abs(self.tau) >= fraction * np.max(np.abs(self.tau[m])))

    def frenet_residuals(self) -> dict[str, float]:
        """Max norms of ``t' - kn``, ``n' + kt - tau b`` and ``b' + tau n``."""
        d = lambda f: _param_diff(f, self.closed, 1) / self.speed[:, None]
        k, tau = self.kappa[:, None], self.tau[:, None]
        m = self.kappa > 10 * self.kappa_floor
        r1 = d(self.t) - k * self.n
        r2 = d(self.n) + k * self.t - tau * self.b
        r3 = d(self.b) + tau * self.n
        inner = slice(None) if self.closed else slice(3, -3)
        out = {}
        for name, r in (("t", r1), ("n", r2), ("b", r3)):
            rr = np.linalg.norm(r, axis=1)[inner][m[inner]]
            out[name] = float(np.max(rr)) if rr.size else 0.0
        return out


def _param_diff(f: np.ndarray, closed: bool, deriv: int) -> np.ndarray:
    """Derivative w.r.t. the node index (unit parameter step)."""
    if closed:
        return diff(f, 0, 1.0, deriv, 6, periodic=True)
    return diff(f, 0, 1.0, deriv, 4)


def frenet_from_samples(points: np.ndarray, closed: bool) -> SpaceCurve:
    """Frenet data from samples uniform in *some* smooth parameter.

    All formulas are reparametrization invariant, so no arclength resampling
    is needed.
    """
    X = np.asarray(points, dtype=float)
    d1 = _param_diff(X, closed, 1)
    d2 = _param_diff(X, closed, 2)
    d3 = _param_diff(X, closed, 3)
    speed = np.linalg.norm(d1, axis=1)
    t = d1 / speed[:, None]
    cr = np.cross(d1, d2)
    ncr = np.linalg.norm(cr, axis=1)
    kappa = ncr / speed ** 3
    with np.errstate(invalid="ignore", divide="ignore"):
        b = cr / ncr[:, None]
        tau = np.einsum("ij,ij->i", cr, d3) / ncr ** 2
    n = np.cross(b, t)
    kp = _param_diff(kappa, closed, 1) / speed
    # cumulative arclength by the trapezoid rule on the speed
    seg = 0.5 * (speed[1:] + speed[:-1])
    s = np.concatenate([[0.0], np.cumsum(seg)])
    length = float(s[-1] + (0.5 * (speed[-1] + speed[0]) if closed else 0.0))
    curve = SpaceCurve(X, closed, s, t, n, b, kappa, tau, kp, speed, length)
    low = kappa <= curve.kappa_floor
    curve.tau = np.where(low, 0.0, tau)
    curve.n[low] = np.nan
    curve.b[low] = np.nan
    if low.mean() > 0.5:
        curve.flags["degenerate"] = True
        warnings.warn("curve is nearly straight on most nodes", DegenerateCurveWarning, stacklevel=2)
    return curve


def _gauss_legendre(f, a: np.ndarray, b: np.ndarray, n: int = 8) -> np.ndarray:
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    return half * (f(nodes) @ w)


def arclength_resample(points: np.ndarray, closed: bool, n_out: int | None = None,
                       degree: int = 5) -> tuple[np.ndarray, float]:
    """Resample to uniform arclength via a spline in the chord-length parameter."""
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or P.shape[1] != 3:
        raise ConfigurationError("points must be an (n, 3) array")
    if len(P) < 8:
        raise DegenerateCurveError("need at least 8 points")
    chords = np.linalg.norm(np.diff(P, axis=0), axis=1)
    if np.any(chords == 0.0):
        raise DegenerateCurveError("duplicate consecutive points")
    if closed:
        close = np.linalg.norm(P[0] - P[-1])
        if close == 0.0:
            P = P[:-1]
            chords = chords[:-1]
            close = np.linalg.norm(P[0] - P[-1])
        Pk = np.vstack([P, P[:1]])
        u = np.concatenate([[0.0], np.cumsum(np.append(chords, close))])
        spl = make_interp_spline(u, Pk, k=degree, bc_type="periodic")
    else:
        u = np.concatenate([[0.0], np.cumsum(chords)])
        spl = make_interp_spline(u, P, k=min(degree, len(P) - 1))
    n_out = n_out or len(P)
    dspl = spl.derivative()
    speed = lambda uu: np.linalg.norm(dspl(uu), axis=-1)
    seg = _gauss_legendre(speed, u[:-1], u[1:])
    S = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(S[-1])
    targets = total * np.arange(n_out) / (n_out if closed else n_out - 1)
    k = np.clip(np.searchsorted(S, targets, side="right") - 1, 0, len(u) - 2)
    uu = u[k] + (targets - S[k]) / (S[k + 1] - S[k]) * (u[k + 1] - u[k])
    for _ in range(6):
        sk = S[k] + _gauss_legendre(speed, u[k], uu)
        uu = uu - (sk - targets) / speed(uu)
    return spl(uu), total


def frenet_analyze(points, closed: bool, n_out: int | None = None) -> SpaceCurve:
    """Frenet analysis after uniform-arclength resampling."""
    Q, total = arclength_resample(points, closed, n_out)
    curve = frenet_from_samples(Q, closed)
    curve.flags["resampled_length"] = total
    return curve


# ---------------------------------------------------------------------------
# spherical curves


@dataclass
class SphericalVerdict:
    verdict: str  # "spherical", "planar circle", "not spherical"
    radius: float | None
    quantity: np.ndarray
    generic: np.ndarray
    conditioned: np.ndarray
    deviation: float


def spherical_criterion(curve: SpaceCurve, rel_tol: float = REL_TOL) -> SphericalVerdict:
    """Evaluate ``(1/k)^2 + ((1/k)')^2 / tau^2`` and decide sphericity."""
    gen = curve.generic_mask()
    cond = curve.conditioned_mask()
    with np.errstate(invalid="ignore", divide="ignore"):
        inv_k_prime = -curve.kappa_prime / curve.kappa ** 2
        q = 1.0 / curve.kappa ** 2 + inv_k_prime ** 2 / curve.tau ** 2
    q = np.where(gen, q, np.nan)
    interior = np.ones(len(curve), bool)
    if not curve.closed:
        interior[:4] = interior[-4:] = False
    if cond.any() and (cond & interior).sum() >= 3:
        vals = q[cond & interior]
        med = float(np.median(vals))
        dev = float(np.max(np.abs(vals - med)) / med)
        if dev < rel_tol:
            return SphericalVerdict("spherical", math.sqrt(med), q, gen, cond, dev)
        return SphericalVerdict("not spherical", None, q, gen, cond, dev)
    k = curve.kappa[interior]
    if np.all(k > curve.kappa_floor):
        km = float(np.mean(k))
        dev = float(np.max(np.abs(k - km)) / km)
        if dev < rel_tol:
            return SphericalVerdict("planar circle", 1.0 / km, q, gen, cond, dev)
        return SphericalVerdict("not spherical", None, q, gen, cond, dev)
    return SphericalVerdict("not spherical", None, q, gen, cond, math.inf)


def sphere_normal_field(curve: SpaceCurve, R: float, mask: np.ndarray | None = None,
                        ) -> tuple[np.ndarray, np.ndarray, float]:
    """Outward unit sphere normal per node and the implied center.

    Returns ``(normals, center, spread)`` where ``center = X - R * normal``
    is averaged over well-conditioned generic nodes. Of the two possible
    signs the one with the tighter center cloud is kept.
    """
    m = curve.conditioned_mask() if mask is None else mask
    if not m.any():
        raise ConfigurationError("no generic-torsion nodes; use the planar branch")
    k, tau, kp = curve.kappa, curve.tau, curve.kappa_prime
    with np.errstate(invalid="ignore", divide="ignore"):
        U = (-(1.0 / (R * k))[:, None] * curve.n
             + (kp / (R * k ** 2 * tau))[:, None] * curve.b)
    best = None
    spreads = []
    for sgn in (1.0, -1.0):
        C = curve.points[m] - R * sgn * U[m]
        center = C.mean(axis=0)
        var = float(np.mean(np.sum((C - center) ** 2, axis=1)))
        spreads.append(var)
        if best is None or var < best[2]:
            best = (sgn, center, var)
    lo, hi = sorted(spreads)
    if hi == 0.0 or (hi - lo) <= SIGN_TIE_RATIO * hi:
        raise InconsistencyError("neither sign yields a consistent sphere center")
    sgn, center, var = best
    normals = np.where(m[:, None], sgn * U, np.nan)
    return normals, center, math.sqrt(var)


# ---------------------------------------------------------------------------
# curves on surfaces


@dataclass
class CurveOnSurface:
    curve: SpaceCurve
    host: object
    chart_trace: np.ndarray
    conormal: np.ndarray
    surface_normal: np.ndarray
    geodesic_curvature: np.ndarray
    normal_curvature: np.ndarray
    curvature_line_residual: np.ndarray
    frame_residual: float

    @property
    def points(self) -> np.ndarray:
        return self.curve.points

    def transformed(self, motion) -> "CurveOnSurface":
        """Image under a rigid motion (for equivariance checks)."""
        Rm = motion.rotation
        c = self.curve
        moved = SpaceCurve(motion.apply(c.points), c.closed, c.arclength, c.t @ Rm.T,
                           c.n @ Rm.T, c.b @ Rm.T, c.kappa, c.tau, c.kappa_prime, c.speed,
                           c.length, dict(c.flags))
        return CurveOnSurface(moved, self.host, self.chart_trace, self.conormal @ Rm.T,
                              self.surface_normal @ Rm.T, self.geodesic_curvature,
                              self.normal_curvature, self.curvature_line_residual,
                              self.frame_residual)


def _chart_axes(host):
    spec = host.spec
    if isinstance(spec, AnnulusSpec):
        return spec.t, spec.theta, True
    return spec.x, spec.y, False


def _sample_host(host, path: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Positions and normals of ``host`` at chart points ``path[:, (re, im)]``."""
    a_ax, b_ax, annulus = _chart_axes(host)
    if annulus:
        # arrays are [t, theta]
        ia = np.interp(path[:, 0], a_ax, np.arange(len(a_ax)))
        ib = np.mod(path[:, 1], 2 * math.pi) / host.spec.h_theta
        grid_i, grid_j = ia, ib
    else:
        # arrays are [y, x]; path is (x, y)
        grid_i = np.interp(path[:, 1], b_ax, np.arange(len(b_ax)))
        grid_j = np.interp(path[:, 0], a_ax, np.arange(len(a_ax)))
    ri, rj = np.rint(grid_i), np.rint(grid_j)
    if np.all(np.abs(grid_i - ri) < 1e-9) and np.all(np.abs(grid_j - rj) < 1e-9):
        ii = ri.astype(int)
        jj = rj.astype(int) % host.positions.shape[1]
        return host.positions[ii, jj], host.normal[ii, jj]
    rows = np.arange(host.positions.shape[0])
    cols = np.arange(host.positions.shape[1])
    P, Nn = host.positions, host.normal
    if annulus:
        pad = 4
        cols = np.arange(-pad, len(cols) + pad)
        P = np.concatenate([P[:, -pad:], P, P[:, :pad]], axis=1)
        Nn = np.concatenate([Nn[:, -pad:], Nn, Nn[:, :pad]], axis=1)
    out = []
    for F in (P, Nn):
        comps = [RectBivariateSpline(rows, cols, F[..., c], kx=3, ky=3)(grid_i, grid_j, grid=False)
                 for c in range(3)]
        out.append(np.stack(comps, axis=-1))
    Nq = out[1] / np.linalg.norm(out[1], axis=1, keepdims=True)
    return out[0], Nq


def curve_on_surface(host, chart_path, closed: bool | None = None) -> CurveOnSurface:
    """Intrinsic/extrinsic data of the image of ``chart_path`` on ``host``.

    ``chart_path`` is an ``(m, 2)`` array of ``(re, im)`` chart coordinates,
    i.e. ``(t, theta)`` on an annulus and ``(x, y)`` on a slab, sampled
    uniformly in a smooth parameter. Closed paths must not repeat the start.
    """
    path = np.asarray(chart_path, dtype=float)
    a_ax, b_ax, annulus = _chart_axes(host)
    if annulus:
        lo, hi = a_ax[0], a_ax[-1]
        coord = path[:, 0]
    else:
        coord = path[:, 1]
        lo, hi = b_ax[0], b_ax[-1]
        xs = path[:, 0]
        if np.any(xs < a_ax[0] - 1e-12) or np.any(xs > a_ax[-1] + 1e-12):
            raise ConfigurationError("chart path leaves the slab")
    if np.any(coord < lo - 1e-12) or np.any(coord > hi + 1e-12):
        raise ConfigurationError("chart path leaves the chart")
    if closed is None:
        closed = annulus and np.allclose(path[:, 0], path[0, 0])
    X, N = _sample_host(host, path)
    curve = frenet_from_samples(X, closed)
    d1 = _param_diff(X, closed, 1)
    d2 = _param_diff(X, closed, 2)
    sp2 = np.sum(d1 * d1, axis=1)
    accel = (d2 - (np.sum(d2 * d1, axis=1) / sp2)[:, None] * d1) / sp2[:, None]
    t = curve.t
    nu = np.cross(N, t)
    nnu = np.linalg.norm(nu, axis=1, keepdims=True)
    nu = nu / nnu
    kg = np.sum(accel * nu, axis=1)
    kn = np.sum(accel * N, axis=1)
    dN = _param_diff(N, closed, 1) / curve.speed[:, None]
    line_res = np.sum(dN * nu, axis=1)
    frame_res = float(np.max(np.abs(np.sum(N * t, axis=1))))
    return CurveOnSurface(curve, host, path, nu, N, kg, kn, line_res, frame_res)


# ---------------------------------------------------------------------------
# certification


@dataclass
class SphereCertificate:
    branch: str  # "plane", "generic-torsion", "planar", "piecewise"
    center: np.ndarray | None
    radius: float
    c: float
    orthogonality_residual: float
    sphericity_residual: float
    contact_angle: np.ndarray
    plane_normal: np.ndarray | None = None
    plane_offset: float | None = None
    pieces: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, per_node_path: str | None = None) -> dict:
        return {
            "branch": self.branch,
            "center": None if self.center is None else [float(x) for x in self.center],
            "radius": self.radius, "c": self.c,
            "orthogonality_residual": self.orthogonality_residual,
            "sphericity_residual": self.sphericity_residual,
            "plane_normal": None if self.plane_normal is None else [float(x) for x in self.plane_normal],
            "plane_offset": self.plane_offset,
            "pieces": [{"branch": p["branch"], "nodes": p["nodes"],
                        "center": [float(x) for x in p["center"]]} for p in self.pieces],
            "diagnostics": self.diagnostics,
            "per_node": per_node_path,
        }


def _runs(mask: np.ndarray, closed: bool) -> list[tuple[bool, np.ndarray]]:
    """Maximal runs of equal mask value as index arrays (cyclic if closed)."""
    n = len(mask)
    change = np.flatnonzero(mask[1:] != mask[:-1]) + 1
    bounds = [0, *change.tolist(), n]
    runs = [(bool(mask[a]), np.arange(a, b)) for a, b in zip(bounds[:-1], bounds[1:])]
    if closed and len(runs) > 1 and runs[0][0] == runs[-1][0]:
        first = runs.pop(0)
        runs[-1] = (first[0], np.concatenate([runs[-1][1], first[1]]))
    return runs


def certify_orthogonal_sphere(gamma: CurveOnSurface, rel_tol: float = REL_TOL,
                              line_tol: float = 1e-4, flat_fraction: float = FLAT_FRACTION,
                              center_tol: float | None = None) -> SphereCertificate:
    """Orthogonal sphere (or plane) along a line of curvature of constant
    geodesic curvature."""
    curve = gamma.curve
    n = len(curve)
    interior = np.ones(n, bool)
    if not curve.closed:
        interior[:3] = interior[-3:] = False
    kmax = float(np.nanmax(curve.kappa[interior]))
    scale = max(kmax, 1.0 / curve.length)
    line_res = float(np.max(np.abs(gamma.curvature_line_residual[interior])))
    if line_res > line_tol * scale:
        raise NotCertifiableError(f"not a line of curvature (residual {line_res:.3e})")
    kg = gamma.geodesic_curvature[interior]
    c = float(np.mean(kg))
    kn = gamma.normal_curvature[interior]
    flat = np.abs(kn) < 1e-8 * scale
    if flat.mean() >= flat_fraction:
        raise NotCertifiableError("normal curvature vanishes on too many nodes")
    X, N = curve.points, gamma.surface_normal
    Xi = X[interior]
    diag = {"line_residual": line_res, "c_spread": float(np.max(np.abs(kg - c))),
            "frame_residual": gamma.frame_residual}

    if abs(c) <= rel_tol * scale:
        # principal geodesic: plane curve, plane orthogonal to the surface
        nu_bar = gamma.conormal[interior].mean(axis=0)
        nu_bar /= np.linalg.norm(nu_bar)
        offset = float(np.mean(Xi @ nu_bar))
        planarity = float(np.max(np.abs(Xi @ nu_bar - offset)))
        ortho = float(np.max(np.abs(N[interior] @ nu_bar)))
        diag["planarity_residual"] = planarity
        return SphereCertificate("plane", None, math.inf, c, ortho, planarity,
                                 np.zeros(n), nu_bar, offset, [], diag)

    if np.max(np.abs(kg - c)) > rel_tol * abs(c):
        raise NotCertifiableError(
            f"geodesic curvature is not constant (spread {np.max(np.abs(kg - c)):.3e}, c={c:.6g})")
    rho = 1.0 / abs(c)
    center_tol = center_tol if center_tol is not None else 10 * rel_tol * rho

    # contact angle between the osculating and surface frames: b = cos(th) N + sin(th) nu
    theta = np.arctan2(np.sum(curve.b * gamma.conormal, axis=1), np.sum(curve.b * N, axis=1))

    generic = curve.generic_mask()
    centers = np.full((n, 3), np.nan)
    well = curve.conditioned_mask()
    # torsion branch: center from the sphere-normal formula, sign by center spread
    if well.any():
        _, gen_center, _ = sphere_normal_field(curve, rho, well)
        with np.errstate(invalid="ignore", divide="ignore"):
            U = (-(1.0 / (rho * curve.kappa))[:, None] * curve.n
                 + (curve.kappa_prime / (rho * curve.kappa ** 2 * curve.tau))[:, None] * curve.b)
        for sgn in (1.0, -1.0):
            cand = X - rho * sgn * U
            if np.nanmean(np.linalg.norm(cand[well] - gen_center, axis=1)) < center_tol:
                centers[well] = cand[well]
                break
    # planar branch: circle center offset along the binormal
    planar = ~generic & (curve.kappa > curve.kappa_floor)
    if planar.any():
        k = curve.kappa[planar]
        Cc = X[planar] + curve.n[planar] / k[:, None]
        d = np.sqrt(np.maximum(rho ** 2 - 1.0 / k ** 2, 0.0))[:, None]
        bb = curve.b[planar]
        best = None
        for sgn in (1.0, -1.0):
            cand = Cc + sgn * d * bb
            ortho = np.abs(np.sum(N[planar] * (X[planar] - cand), axis=1))
            if best is None or ortho.mean() < best[0]:
                best = (ortho.mean(), cand)
        centers[planar] = best[1]

    pieces = []
    for is_gen, idx in _runs(generic, curve.closed):
        use = idx[interior[idx] & np.all(np.isfinite(centers[idx]), axis=1)]
        if len(use) == 0:
            continue
        pieces.append({"branch": "generic-torsion" if is_gen else "planar",
                       "nodes": int(len(idx)), "center": centers[use].mean(axis=0),
                       "weight": len(use)})
    if not pieces:
        raise NotCertifiableError("no usable nodes for a sphere center")
    w = np.array([p["weight"] for p in pieces], float)
    C = np.array([p["center"] for p in pieces])
    center = (w[:, None] * C).sum(axis=0) / w.sum()
    spread = float(np.max(np.linalg.norm(C - center, axis=1)))
    diag["piece_center_spread"] = spread
    branches = {p["branch"] for p in pieces}
    if spread > center_tol:
        branch = "piecewise"
        ortho_res = max(float(np.max(np.abs(np.sum(N[idx] * (X[idx] - p["center"]), 1))))
                        for p, (_, idx) in zip(pieces, _runs(generic, curve.closed)))
        sph_res = max(float(np.max(np.abs(np.linalg.norm(X[idx] - p["center"], axis=1) - rho)))
                      for p, (_, idx) in zip(pieces, _runs(generic, curve.closed)))
        return SphereCertificate(branch, None, rho, c, ortho_res, sph_res, theta,
                                 pieces=pieces, diagnostics=diag)
    branch = "generic-torsion" if "generic-torsion" in branches else "planar"
    Y = Xi - center
    ortho = float(np.max(np.abs(np.sum(N[interior] * Y, axis=1))))
    sph = float(np.max(np.abs(np.linalg.norm(Y, axis=1) - rho)))
    return SphereCertificate(branch, center, rho, c, ortho, sph, theta, pieces=pieces,
                             diagnostics=diag)


def torsion_angle_residual(gamma: CurveOnSurface, cert: SphereCertificate) -> np.ndarray:
    """``tau + d(theta)/ds`` per node on the generic branch."""
    th = np.unwrap(cert.contact_angle)
    dth = _param_diff(th, gamma.curve.closed, 1) / gamma.curve.speed
    return np.where(gamma.curve.generic_mask(), gamma.curve.tau + dth, np.nan)


def write_certificate_nodes(path, gamma: CurveOnSurface, cert: SphereCertificate) -> None:
    """Per-node diagnostics CSV referenced by the certificate report."""
    cols = ["x", "y", "z", "kappa", "tau", "geodesic_curvature", "normal_curvature",
            "curvature_line_residual", "contact_angle"]
    c = gamma.curve
    data = np.column_stack([c.points, c.kappa, c.tau, gamma.geodesic_curvature,
                            gamma.normal_curvature, gamma.curvature_line_residual,
                            cert.contact_angle])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
