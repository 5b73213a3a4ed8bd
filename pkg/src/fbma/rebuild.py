"""Minimal immersion from a slab Liouville field by frame integration.

Given ``vtilde`` with ``Lambda^2 = exp(-vtilde)`` and the constant quadratic
differential ``-C0 dxi^2``, the Gauss-Weingarten system for the frame
``(e1, e2, N)`` with ``X_x = Lambda e1``, ``X_y = Lambda e2`` and
``N = e1 x e2`` reads (``l = log Lambda``, shape coefficients ``L = C0``,
``M = 0``, ``Nn = -C0`` with respect to ``N``)::

    d/dx e1 = -l_y e2 + (L/Lambda) N     d/dy e1 =  l_x e2
    d/dx e2 =  l_y e1                    d/dy e2 = -l_x e1 + (Nn/Lambda) N
    d/dx N  = -(L/Lambda) e1             d/dy N  = -(Nn/Lambda) e2

The stored normal is ``e1 x e2``; ``Re{-C0 dxi^2}`` is the second fundamental
form with respect to ``-N``, the same convention as the Weierstrass module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .curvelab import SphereCertificate, certify_orthogonal_sphere, curve_on_surface
from .errors import ConfigurationError, InconsistencyError, SingularDataError
from .geomkit import RigidMotion, SlabSpec, diff, fit_rigid_motion, simpson_weights, trapezoid_weights
from .liouville import LiouvilleSolution, slab_interior_residual
from .weierstrass import SurfacePatch

COMPAT_TOL = 1e-3
N_MAX = 64
ANGLE_TOL = 1e-6
IDENTITY_TOL = 1e-3
C_TOL = 1e-4


@dataclass
class FrameField:
    slab: SlabSpec
    positions: np.ndarray  # (n_im, n_cols, 3)
    frames: np.ndarray  # (n_im, n_cols, 3, 3) rows e1, e2, N
    Lambda: np.ndarray  # (n_im, n_cols)
    C0: float
    drift: dict = field(default_factory=dict)

    @property
    def II_coeff(self) -> float:
        return -self.C0

    @property
    def normal(self) -> np.ndarray:
        return self.frames[..., 2, :]

    def gram_residual(self) -> float:
        G = np.einsum("...ik,...jk->...ij", self.frames, self.frames)
        return float(np.max(np.abs(G - np.eye(3))))

    def patch(self, cols: slice | None = None) -> SurfacePatch:
        """The integrated surface as a slab patch (tangents from the frame)."""
        cols = cols or slice(None)
        lam = self.Lambda[:, cols]
        F = self.frames[:, cols]
        spec = self.slab
        if cols != slice(None):
            n = F.shape[1]
            spec = _SubSlab(self.slab, cols.start or 0, n)
        II = np.full(lam.shape, self.II_coeff, dtype=complex)
        return SurfacePatch(spec, self.positions[:, cols], lam[..., None] * F[..., 0, :],
                            lam[..., None] * F[..., 1, :], F[..., 2, :], lam, II,
                            {"source": "frame_integrate"})

    def transformed(self, motion: RigidMotion) -> "FrameField":
        Rm = motion.rotation
        return FrameField(self.slab, motion.apply(self.positions), self.frames @ Rm.T,
                          self.Lambda, self.C0, dict(self.drift))


class _SubSlab(SlabSpec):
    """Column window of a slab (used for split pieces)."""

    def __init__(self, parent: SlabSpec, start: int, n_cols: int):
        object.__setattr__(self, "R", parent.R)
        object.__setattr__(self, "n_im", parent.n_im)
        object.__setattr__(self, "n_re", parent.n_re)
        object.__setattr__(self, "delta", parent.delta)
        object.__setattr__(self, "periods", parent.periods)
        object.__setattr__(self, "_start", start)
        object.__setattr__(self, "_n", n_cols)

    @property
    def n_cols(self) -> int:
        return self._n

    @property
    def x(self) -> np.ndarray:
        return self.h_x * (self._start + np.arange(self._n))


# ---------------------------------------------------------------------------
# integration


def _mid_lines(f: np.ndarray, periodic: bool) -> np.ndarray:
    """Cubic interpolation to the half nodes along axis 0."""
    if periodic:
        fm1, f0 = np.roll(f, 1, 0), f
        f1, f2 = np.roll(f, -1, 0), np.roll(f, -2, 0)
        return (-fm1 + 9 * f0 + 9 * f1 - f2) / 16.0
    n = f.shape[0]
    out = np.empty((n - 1,) + f.shape[1:])
    out[1:-1] = (-f[:-3] + 9 * f[1:-2] + 9 * f[2:-1] - f[3:]) / 16.0
    out[0] = (5 * f[0] + 15 * f[1] - 5 * f[2] + f[3]) / 16.0
    out[-1] = (5 * f[-1] + 15 * f[-2] - 5 * f[-3] + f[-4]) / 16.0
    return out


def _gram_schmidt(F: np.ndarray) -> tuple[np.ndarray, float]:
    e1 = F[..., 0, :] / np.linalg.norm(F[..., 0, :], axis=-1, keepdims=True)
    e2 = F[..., 1, :] - np.sum(F[..., 1, :] * e1, -1, keepdims=True) * e1
    e2 /= np.linalg.norm(e2, axis=-1, keepdims=True)
    G = np.stack([e1, e2, np.cross(e1, e2)], axis=-2)
    return G, float(np.max(np.abs(G - F)))


def _rk4_line(F0, X0, coef, coef_mid, h, direction):
    """Integrate frame+position along a line; coefficient arrays are indexed
    [step, batch]. Returns arrays indexed [step, batch, ...] and drift stats."""
    n = coef[0].shape[0]
    Fs = np.empty((n,) + F0.shape)
    Xs = np.empty((n,) + X0.shape)
    Fs[0], Xs[0] = F0, X0
    worst, total = 0.0, 0.0

    def rhs(F, c):
        a, k, lam = c  # connection, curvature term, Lambda
        e1, e2, N = F[..., 0, :], F[..., 1, :], F[..., 2, :]
        a, k, lam = a[..., None], k[..., None], lam[..., None]
        if direction == "x":
            d = np.stack([-a * e2 + k * N, a * e1, -k * e1], axis=-2)
            return d, lam * e1
        d = np.stack([a * e2, -a * e1 + k * N, -k * e2], axis=-2)
        return d, lam * e2

    F, X = F0, X0
    for s in range(n - 1):
        c0 = tuple(arr[s] for arr in coef)
        cm = tuple(arr[s] for arr in coef_mid)
        c1 = tuple(arr[s + 1] for arr in coef)
        k1, l1 = rhs(F, c0)
        k2, l2 = rhs(F + 0.5 * h * k1, cm)
        k3, l3 = rhs(F + 0.5 * h * k2, cm)
        k4, l4 = rhs(F + h * k3, c1)
        Fn = F + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        X = X + h / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4)
        F, corr = _gram_schmidt(Fn)
        worst = max(worst, corr)
        total += corr
        Fs[s + 1], Xs[s + 1] = F, X
    return Fs, Xs, worst, total


def _coefficients(ell: np.ndarray, slab: SlabSpec, C0: float, order: int) -> dict:
    """Connection/shape coefficients at nodes and at half nodes.

    ``x``: (l_y, C0/Lambda, Lambda); ``y``: (l_x, -C0/Lambda, Lambda).
    """
    period = slab.cols_per_period
    core = ell[:, :period]
    lx = diff(core, 1, slab.h_x, 1, order, periodic=True)
    ly = diff(core, 0, slab.h_y, 1, order)
    lam = np.exp(core)
    xs = (ly, C0 / lam, lam)
    ys = (lx, -C0 / lam, lam)
    idx = np.arange(slab.n_cols) % period
    mid_idx = np.arange(slab.n_cols - 1) % period
    return {
        "x": tuple(a[:, idx] for a in xs),
        "x_mid": tuple(_mid_lines(a.T, True).T[:, mid_idx] for a in xs),
        "y": tuple(a[:, idx] for a in ys),
        "y_mid": tuple(_mid_lines(a, False)[:, idx] for a in ys),
        "lam": lam[:, idx],
    }


def compatibility_residual(vtilde: np.ndarray, slab: SlabSpec, C0: float) -> float:
    """Relative max residual of the slab Liouville (Gauss) equation."""
    res = slab_interior_residual(vtilde[:, : slab.n_re], slab.with_periods(1), C0)
    scale = float(np.max(2.0 * C0 * C0 * np.exp(vtilde)))
    return float(np.max(np.abs(res))) / scale


def frame_integrate(vtilde: np.ndarray, slab: SlabSpec, C0: float, seed=None,
                    compat_tol: float = COMPAT_TOL, order: int = 4) -> FrameField:
    """Integrate the Gauss-Weingarten system on the slab.

    The ``x = 0`` column is integrated first in ``y``; every row is then
    integrated in ``x`` from that column. ``seed`` is ``(position, frame)``
    at node ``(0, 0)``; by default the origin with the standard frame.
    """
    vt = np.asarray(vtilde, dtype=float)
    if vt.shape != slab.shape:
        raise ConfigurationError(f"field shape {vt.shape} does not match slab {slab.shape}")
    if C0 == 0:
        raise ConfigurationError("C0 must be nonzero")
    compat = compatibility_residual(vt, slab, C0)
    if compat > compat_tol:
        raise InconsistencyError(
            f"field violates the Gauss compatibility equation (relative residual {compat:.3e})")
    ell = -0.5 * vt
    if np.min(ell) < math.log(1e-12) + np.max(ell):
        raise SingularDataError("metric factor degenerates")
    co = _coefficients(ell, slab, C0, order)

    if seed is None:
        X0, F0 = np.zeros(3), np.eye(3)
    else:
        X0, F0 = np.asarray(seed[0], float), np.asarray(seed[1], float)

    # seed column, along y
    col = tuple(a[:, 0] for a in co["y"])
    col_mid = tuple(a[:, 0] for a in co["y_mid"])
    Fc, Xc, w1, t1 = _rk4_line(F0, X0, col, col_mid, slab.h_y, "y")

    # every row, along x (batched over rows); arrays indexed [column, row]
    rows = tuple(a.T for a in co["x"])
    rows_mid = tuple(a.T for a in co["x_mid"])
    Fr, Xr, w2, t2 = _rk4_line(Fc, Xc, rows, rows_mid, slab.h_x, "x")
    positions = np.transpose(Xr, (1, 0, 2))
    frames = np.transpose(Fr, (1, 0, 2, 3))
    lam = co["lam"]
    drift = {"max_step_correction": max(w1, w2), "total_correction": t1 + t2,
             "compatibility_residual": compat}
    return FrameField(slab, positions, frames, lam, float(C0), drift)


def integrate_along_path(frame: FrameField, vtilde: np.ndarray, target: tuple[int, int],
                         order: int = 4) -> np.ndarray:
    """Position of node ``target = (row, col)`` reached by the other route:
    along the bottom row in ``x`` first, then up the column in ``y``."""
    slab = frame.slab
    i, j = target
    co = _coefficients(-0.5 * np.asarray(vtilde, float), slab, frame.C0, order)
    F0, X0 = frame.frames[0, 0], frame.positions[0, 0]
    r = tuple(a[0, : j + 1] for a in co["x"])
    r_mid = tuple(a[0, :j] for a in co["x_mid"])
    Fr, Xr, _, _ = _rk4_line(F0, X0, r, r_mid, slab.h_x, "x")
    c = tuple(a[: i + 1, j] for a in co["y"])
    c_mid = tuple(a[:i, j] for a in co["y_mid"])
    _, Xc, _, _ = _rk4_line(Fr[-1], Xr[-1], c, c_mid, slab.h_y, "y")
    return Xc[-1]


def verify_condition_1(solution: LiouvilleSolution, frame: FrameField, order: int = 4) -> float:
    """Max ``|v - log(1 / (Lambda_emp^2 |e^{-i xi}|^2))|`` over the fundamental strip.

    ``Lambda_emp`` comes from finite differences of the integrated positions.
    """
    slab = frame.slab
    P = frame.positions[:, : slab.n_re]
    Xx = diff(P, 1, slab.h_x, 1, order)
    Xy = diff(P, 0, slab.h_y, 1, order)
    lam2 = 0.5 * (np.sum(Xx * Xx, -1) + np.sum(Xy * Xy, -1))
    spec = solution.grid
    cols = (-np.arange(slab.n_re)) % spec.n_theta
    v = solution.v[:, cols]
    y = slab.y[:, None]
    res = v - (-np.log(lam2) - 2.0 * y)
    return float(np.max(np.abs(res)))


# ---------------------------------------------------------------------------
# spheres


@dataclass
class SphereFinding:
    O1: np.ndarray
    O2: np.ndarray
    radii: tuple[float, float]
    certificates: tuple[SphereCertificate, SphereCertificate]
    concentric: bool
    separation: float

    def residuals(self) -> dict:
        return {name: {"orthogonality": c.orthogonality_residual,
                       "sphericity": c.sphericity_residual}
                for name, c in zip(("Gamma1", "Gamma2"), self.certificates)}


def boundary_curves(frame: FrameField):
    """The two boundary level curves over one period as curves on the patch."""
    slab = frame.slab
    patch = frame.patch()
    n = slab.cols_per_period
    closure = np.linalg.norm(frame.positions[:, n] - frame.positions[:, 0], axis=-1).max()
    scale = np.ptp(frame.positions[:, : n + 1].reshape(-1, 3), axis=0).max()
    closed = closure < 1e-6 * scale
    m = n if closed else n + 1
    out = []
    for row in (0, slab.n_im - 1):
        path = np.c_[slab.x[:m], np.full(m, slab.y[row])]
        out.append(curve_on_surface(patch, path, closed=closed))
    return out


def find_spheres(frame: FrameField, c_tol: float = C_TOL, center_tol: float = 1e-4,
                 **cert_kw) -> SphereFinding:
    """Certify the orthogonal unit spheres along both boundary curves."""
    certs = []
    for k, gamma in enumerate(boundary_curves(frame)):
        kg = gamma.geodesic_curvature
        dev = float(np.max(np.abs(np.abs(kg) - 1.0)))
        if dev > c_tol:
            raise InconsistencyError(f"boundary {k + 1}: |geodesic curvature| deviates from 1 by {dev:.3e}")
        certs.append(certify_orthogonal_sphere(gamma, **cert_kw))
    O1, O2 = certs[0].center, certs[1].center
    if O1 is None or O2 is None:
        raise InconsistencyError("boundary certificate has no single center")
    sep = float(np.linalg.norm(O1 - O2))
    return SphereFinding(O1, O2, (certs[0].radius, certs[1].radius), tuple(certs),
                         sep < center_tol, sep)


# ---------------------------------------------------------------------------
# fundamental pieces


@dataclass
class FundamentalDecomposition:
    T: RigidMotion
    classification: str  # "identity", "rotation", "non-closing"
    N: int | None
    k: int | None
    axis: np.ndarray | None
    angle: float
    piece_mesh: SurfacePatch
    residuals: dict
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "classification": self.classification, "N": self.N, "k": self.k,
            "angle": self.angle,
            "axis": None if self.axis is None else [float(x) for x in self.axis],
            "rotation": [[float(x) for x in row] for row in self.T.rotation],
            "translation": [float(x) for x in self.T.translation],
            "residuals": self.residuals, "notes": self.notes,
        }


def rational_angle(angle: float, n_max: int = N_MAX, tol: float = ANGLE_TOL) -> tuple[int, int] | None:
    """``(k, N)`` with ``|angle * N - 2 pi k| < tol`` and ``N <= n_max``, or None."""
    frac = Fraction(angle / (2 * math.pi)).limit_denominator(n_max)
    k, N = frac.numerator, frac.denominator
    if abs(angle * N - 2 * math.pi * k) < tol:
        return k, N
    return None


def decompose(frame, identity_tol: float = IDENTITY_TOL, n_max: int = N_MAX,
              angle_tol: float = ANGLE_TOL, center=None) -> FundamentalDecomposition:
    """Rigid motion between consecutive copies of the fundamental strip.

    ``frame`` is anything with ``slab`` and ``positions`` spanning at least
    two periods. ``center`` (the common sphere center, when known) enables
    the check that ``T`` fixes it.
    """
    slab = frame.slab
    n = slab.cols_per_period
    P = frame.positions
    copies = (P.shape[1] - 1) // n
    if copies < 2:
        raise ConfigurationError("decompose needs at least 2 periods")
    piece = lambda m: P[:, m * n: (m + 1) * n + 1].reshape(-1, 3)
    T, rms1 = fit_rigid_motion(piece(0), piece(1))
    scale = float(np.ptp(piece(0), axis=0).max())
    res = {"rms_T1": rms1}
    if copies >= 3:
        res["rms_T2"] = float(np.sqrt(np.mean(np.sum((T.power(2).apply(piece(0)) - piece(2)) ** 2, 1))))
    angle = T.angle
    notes = ["T is the least-squares motion; pieces with extra symmetry admit alternatives"]
    piece_patch = frame.patch(slice(0, n + 1)) if isinstance(frame, FrameField) else None
    if center is not None:
        drift = float(np.linalg.norm(T.apply(np.asarray(center, float)) - center))
        res["center_drift"] = drift
        if drift > identity_tol * scale:
            raise InconsistencyError(f"T moves the sphere center by {drift:.3e}; not in SO(3)")
    if angle < identity_tol and np.linalg.norm(T.translation) < identity_tol * scale:
        return FundamentalDecomposition(T, "identity", 1, 0, None, angle, piece_patch, res, notes)
    rat = rational_angle(angle, n_max, angle_tol)
    if rat is None:
        notes.append("rotation angle is not 2 pi k / N for N <= %d; immersion lives on the universal cover" % n_max)
        return FundamentalDecomposition(T, "non-closing", None, None, T.axis, angle, piece_patch, res, notes)
    k, N = rat
    TN = T.power(N)
    res["T^N_identity_defect"] = float(max(np.max(np.abs(TN.rotation - np.eye(3))),
                                           np.linalg.norm(TN.translation) / scale))
    if res["T^N_identity_defect"] > max(identity_tol, 1e-6):
        raise InconsistencyError("T^N is not the identity")
    return FundamentalDecomposition(T, "rotation", N, k, T.axis, angle, piece_patch, res, notes)


# ---------------------------------------------------------------------------
# flux, area and torque


@dataclass
class BoundarySegment:
    label: str
    points: np.ndarray  # (m, 3)
    conormal: np.ndarray  # outward unit conormal (m, 3)
    weights: np.ndarray  # arclength quadrature weights (m,)
    closed: bool = False


def _line_weights(n: int, h: float, closed: bool) -> np.ndarray:
    if closed:
        return trapezoid_weights(n, h, periodic=True)
    return simpson_weights(n, h)


def patch_boundaries(patch: SurfacePatch, closed: bool | None = None) -> dict[str, BoundarySegment]:
    """Labeled boundary segments with outward conormals.

    ``Gamma1``/``Gamma2`` are the inner/outer level curves; on an open slab
    window the cut seams ``C1`` (left) and ``C2`` (right) are added.
    """
    Xa, Xb = patch.tangent_re, patch.tangent_im
    unit = lambda V: V / np.linalg.norm(V, axis=-1, keepdims=True)
    segs = {}
    if patch.is_annulus:
        ht, hth = patch.spec.h_t, patch.spec.h_theta
        n = patch.positions.shape[1]
        for lab, row, sgn in (("Gamma1", 0, -1.0), ("Gamma2", -1, 1.0)):
            w = _line_weights(n, hth, True) * np.linalg.norm(Xb[row], axis=-1)
            segs[lab] = BoundarySegment(lab, patch.positions[row], sgn * unit(Xa[row]), w, True)
        return segs
    hx, hy = patch.spec.h_x, patch.spec.h_y
    P = patch.positions
    if closed is None:
        closure = np.linalg.norm(P[:, -1] - P[:, 0], axis=-1).max()
        closed = closure < 1e-6 * np.ptp(P.reshape(-1, 3), axis=0).max()
    cols = slice(0, P.shape[1] - 1) if closed else slice(None)
    ncol = P[:, cols].shape[1]
    for lab, row, sgn in (("Gamma1", 0, -1.0), ("Gamma2", -1, 1.0)):
        w = _line_weights(ncol, hx, closed) * np.linalg.norm(Xa[row, cols], axis=-1)
        segs[lab] = BoundarySegment(lab, P[row, cols], sgn * unit(Xb[row, cols]), w, closed)
    if not closed:
        for lab, col, sgn in (("C1", 0, -1.0), ("C2", -1, 1.0)):
            w = simpson_weights(P.shape[0], hy) * np.linalg.norm(Xb[:, col], axis=-1)
            segs[lab] = BoundarySegment(lab, P[:, col], sgn * unit(Xa[:, col]), w)
    return segs


def patch_area(patch: SurfacePatch, closed: bool | None = None) -> float:
    """Area by Simpson across the level curves and trapezoid/Simpson along them."""
    if patch.is_annulus:
        spec = patch.spec
        dens = np.sum(np.cross(patch.tangent_re, patch.tangent_im) ** 2, -1) ** 0.5
        return float(simpson_weights(spec.n_r, spec.h_t) @ dens
                     @ trapezoid_weights(spec.n_theta, spec.h_theta, periodic=True))
    dens = np.linalg.norm(np.cross(patch.tangent_re, patch.tangent_im), axis=-1)
    P = patch.positions
    if closed is None:
        closed = np.linalg.norm(P[:, -1] - P[:, 0], axis=-1).max() < 1e-6 * np.ptp(P.reshape(-1, 3), axis=0).max()
    wy = simpson_weights(P.shape[0], patch.spec.h_y)
    if closed:
        return float(wy @ dens[:, :-1] @ trapezoid_weights(P.shape[1] - 1, patch.spec.h_x, True))
    return float(wy @ dens @ simpson_weights(P.shape[1], patch.spec.h_x))


def flux_and_torque(piece: SurfacePatch, boundaries: dict[str, BoundarySegment] | None = None,
                    origin=(0.0, 0.0, 0.0), area: float | None = None,
                    concentric: bool = True, tol: float = 1e-5) -> dict:
    """Area, boundary lengths, fluxes and torques of a piece about ``origin``."""
    segs = patch_boundaries(piece) if boundaries is None else boundaries
    for key in segs:
        if key not in ("Gamma1", "Gamma2", "C1", "C2"):
            raise ConfigurationError(f"unlabeled boundary segment {key!r}")
    O = np.asarray(origin, float)
    A = patch_area(piece) if area is None else area
    out = {"area": A, "segments": {}}
    total_div = 0.0
    torque = np.zeros(3)
    for lab, s in segs.items():
        Y = s.points - O
        flux = s.weights @ s.conormal
        ydotnu = float(s.weights @ np.sum(Y * s.conormal, -1))
        tq = s.weights @ np.cross(Y, s.conormal)
        out["segments"][lab] = {"length": float(s.weights.sum()), "flux": flux.tolist(),
                                "Y_dot_nu": ydotnu, "torque": tq.tolist()}
        total_div += ydotnu
        torque += tq
    out["divergence_gap"] = abs(2 * A - total_div)
    out["divergence_ok"] = out["divergence_gap"] < tol
    out["torque"] = torque.tolist()
    out["torque_norm"] = float(np.linalg.norm(torque))
    if not concentric:
        fl = {lab: float(np.linalg.norm(out["segments"][lab]["flux"]))
              for lab in ("Gamma1", "Gamma2") if lab in out["segments"]}
        out["flux_vanishing"] = {lab: f < tol for lab, f in fl.items()}
    return out
