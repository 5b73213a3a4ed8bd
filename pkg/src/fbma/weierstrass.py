"""Weierstrass data ``(g, omega)`` to minimal immersions.

The immersion is ``X = Re int [ (1-g^2) w / 2, i (1+g^2) w / 2, g w ] dzeta``
with ``omega = w dzeta`` in the chart coordinate ``zeta`` (``z`` on the
annulus, ``xi`` on the slab).

Orientation convention (used by every report): ``normal`` is the
stereographic lift of ``g``, ``N = (2 Re g, 2 Im g, |g|^2 - 1) / (1 + |g|^2)``,
which coincides with ``X_u x X_v / |X_u x X_v|`` for ``zeta = u + i v``. The
stored quadratic-differential coefficient ``II = g_zeta * w`` makes
``Re{II dzeta^2}`` the second fundamental form taken with respect to
``-normal``; equivalently ``X_zetazeta . normal = -II / 2``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SingularDataError
from .geomkit import AnnulusSpec, ComplexField, SlabSpec, d_dz, diff, write_obj

POLE_THRESHOLD = 1e8
ZERO_THRESHOLD = 1e-8
ORIENTATION = "normal = stereographic(g) = X_u x X_v (south pole at g = 0); Re{g' w dzeta^2} is II w.r.t. -normal"


@dataclass
class WeierstrassData:
    g: ComplexField
    omega: ComplexField

    def __post_init__(self):
        if self.g.spec != self.omega.spec:
            raise ConfigurationError("g and omega must live on the same chart")

    @property
    def chart(self):
        return self.g.spec

    @property
    def chart_name(self) -> str:
        return "annulus(z)" if isinstance(self.chart, AnnulusSpec) else "slab(xi)"

    @classmethod
    def from_functions(cls, spec, g_fn, omega_fn, order: int = 2) -> "WeierstrassData":
        zeta = spec.z if isinstance(spec, AnnulusSpec) else spec.xi
        with np.errstate(all="ignore"):
            g = np.broadcast_to(np.asarray(g_fn(zeta), dtype=complex), zeta.shape)
            w = np.broadcast_to(np.asarray(omega_fn(zeta), dtype=complex), zeta.shape)
        return cls(ComplexField(spec, g.copy(), order), ComplexField(spec, w.copy(), order))

    def pole_mask(self, threshold: float = POLE_THRESHOLD) -> np.ndarray:
        g = self.g.values
        return ~np.isfinite(g) | (np.abs(np.nan_to_num(g, nan=np.inf)) > threshold)

    def check_compatibility(self, pole_threshold: float = POLE_THRESHOLD,
                            zero_threshold: float = ZERO_THRESHOLD) -> dict:
        """Thresholded surrogate for "order-n pole of g <=> order-2n zero of omega"."""
        poles = self.pole_mask(pole_threshold)
        w = np.abs(self.omega.values)
        bad = poles & ~(w < zero_threshold)
        return {"pole_nodes": int(poles.sum()), "incompatible_nodes": int(bad.sum()),
                "ok": not bad.any()}

    def integrand(self) -> np.ndarray:
        """The three component one-form coefficients, shape ``(n0, n1, 3)``."""
        g, w = self.g.values, self.omega.values
        with np.errstate(all="ignore"):
            phi = np.stack([0.5 * (1 - g * g) * w, 0.5j * (1 + g * g) * w, g * w], axis=-1)
        phi[self.pole_mask()] = np.nan
        return phi

    def chart_velocity(self) -> tuple[np.ndarray, np.ndarray]:
        """``dzeta/da`` for the real and imaginary chart directions ``a``."""
        if isinstance(self.chart, AnnulusSpec):
            z = self.chart.z
            return z, 1j * z
        one = np.ones(self.chart.shape, dtype=complex)
        return one, 1j * one


@dataclass
class SurfacePatch:
    """Sampled immersion with its frame, on an annulus or slab chart.

    ``tangent_re``/``tangent_im`` are derivatives along the real/imaginary
    chart directions (``t, theta`` or ``x, y``). ``lam`` is the metric factor
    with respect to the complex chart coordinate (``z`` or ``xi``).
    """

    spec: AnnulusSpec | SlabSpec
    positions: np.ndarray
    tangent_re: np.ndarray
    tangent_im: np.ndarray
    normal: np.ndarray
    lam: np.ndarray
    II: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def is_annulus(self) -> bool:
        return isinstance(self.spec, AnnulusSpec)

    @property
    def chart_scale(self) -> np.ndarray:
        """Length of either chart tangent, ``lam * |dzeta/da|``."""
        if self.is_annulus:
            return self.lam * np.abs(self.spec.z)
        return self.lam

    @property
    def periodic_angular(self) -> bool:
        return self.is_annulus

    def grid_steps(self) -> tuple[float, float]:
        if self.is_annulus:
            return self.spec.h_t, self.spec.h_theta
        return self.spec.h_x, self.spec.h_y

    @classmethod
    def from_positions(cls, spec, positions: np.ndarray, order: int = 4) -> "SurfacePatch":
        """Build a patch from sampled positions of a conformal parametrization."""
        X = np.asarray(positions, dtype=float)
        if isinstance(spec, AnnulusSpec):
            Xa = diff(X, 0, spec.h_t, 1, order)
            Xb = diff(X, 1, spec.h_theta, 1, order, periodic=True)
            scale = np.abs(spec.z)
        else:
            Xa = diff(X, 1, spec.h_x, 1, order)
            Xb = diff(X, 0, spec.h_y, 1, order)
            scale = 1.0
        n = np.cross(Xa, Xb)
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        lam = np.sqrt(0.5 * (np.sum(Xa * Xa, -1) + np.sum(Xb * Xb, -1))) / scale
        return cls(spec, X, Xa, Xb, n, lam)

    def export_obj(self, path, comment: str | None = None) -> None:
        head = f"grid {self.spec.shape[0]} {self.spec.shape[1]} R {self.spec.R!r} chart " \
               f"{'annulus' if self.is_annulus else 'slab'}"
        if not self.is_annulus:
            head += f" n_re {self.spec.n_re}"
        head += f"\norientation {ORIENTATION}"
        if comment:
            head += "\n" + comment
        write_obj(path, self.positions, self.normal, periodic_cols=self.is_annulus, comment=head)


def gauss_sphere_map(data: WeierstrassData) -> np.ndarray:
    """Stereographic lift of ``g`` to the unit sphere; poles go to the north pole."""
    return stereographic(data.g.values, data.pole_mask())


def stereographic(g: np.ndarray, poles: np.ndarray | None = None) -> np.ndarray:
    g = np.asarray(g, dtype=complex)
    with np.errstate(all="ignore"):
        m = np.abs(g) ** 2
        N = np.stack([2 * g.real, 2 * g.imag, m - 1.0], axis=-1) / (1.0 + m)[..., None]
    if poles is None:
        poles = ~np.isfinite(g) | (np.abs(np.nan_to_num(g, nan=np.inf)) > POLE_THRESHOLD)
    N[poles] = (0.0, 0.0, 1.0)
    return N


def _line_integral(f: np.ndarray, h: float, periodic_source: np.ndarray | None = None) -> np.ndarray:
    """Cumulative integral along axis 0 from node 0: trapezoid plus the
    Euler-Maclaurin endpoint correction ``-h^2/12 (f'(s) - f'(0))``."""
    if len(f) == 1:
        return np.zeros_like(f)
    trap = np.concatenate([np.zeros_like(f[:1]), np.cumsum(0.5 * h * (f[1:] + f[:-1]), axis=0)])
    if len(f) < 6:
        return trap
    if periodic_source is not None:
        fp = periodic_source
    else:
        fp = diff(f, 0, h, 1, 4)
    return trap - h * h / 12.0 * (fp - fp[0])


def integrate_immersion(data: WeierstrassData, basepoint: tuple[int, int] = (0, 0),
                        base_position=(0.0, 0.0, 0.0)) -> SurfacePatch:
    """Integrate the Weierstrass one-forms over a spanning tree of grid edges.

    The tree runs along the basepoint's angular row, then along every radial
    column. Each line uses the corrected trapezoidal rule. Nodes where the
    integrand is singular are routed around by a breadth-first tree with plain
    trapezoidal edges; unreachable regular nodes raise :class:`SingularDataError`.
    """
    spec = data.chart
    phi = data.integrand()
    va, vb = data.chart_velocity()
    Ta = np.real(phi * va[..., None])  # dX/da, a = t or x
    Tb = np.real(phi * vb[..., None])  # dX/db, b = theta or y
    blocked = ~np.all(np.isfinite(Ta) & np.isfinite(Tb), axis=-1)
    i0, j0 = basepoint
    n0, n1 = spec.shape
    if blocked[i0, j0]:
        raise SingularDataError("basepoint sits on a singular node")
    base = np.asarray(base_position, dtype=float)
    annulus = isinstance(spec, AnnulusSpec)
    if annulus:
        h_rad, h_ang = spec.h_t, spec.h_theta
        T_rad, T_ang = Ta, Tb
    else:
        h_rad, h_ang = spec.h_y, spec.h_x
        T_rad, T_ang = Tb, Ta

    X = np.full((n0, n1, 3), np.nan)
    if not blocked.any():
        # angular row through the basepoint
        if annulus:
            order = (j0 + np.arange(n1)) % n1
            row = T_ang[i0, order]
            fp = diff(T_ang[i0], 0, h_ang, 1, 4, periodic=True)[order]
            X[i0, order] = base + _line_integral(row, h_ang, fp)
        else:
            fwd = _line_integral(T_ang[i0, j0:], h_ang)
            bwd = _line_integral(T_ang[i0, j0::-1], -h_ang)
            X[i0, j0:] = base + fwd
            X[i0, :j0 + 1] = base + bwd[::-1]
        up = _line_integral(T_rad[i0:], h_rad)
        down = _line_integral(T_rad[i0::-1], -h_rad)
        X[i0:] = X[i0][None] + up
        X[:i0 + 1] = X[i0][None] + down[::-1]
        tree = "structured"
    else:
        X = _bfs_integrate(T_rad, T_ang, h_rad, h_ang, blocked, (i0, j0), base, annulus)
        tree = "bfs"

    normal = gauss_sphere_map(data)
    g, w = data.g.values, data.omega.values
    with np.errstate(all="ignore"):
        lam = 0.5 * (1.0 + np.abs(g) ** 2) * np.abs(w)
        II = d_dz(data.g).values * w
    diagnostics = {"tree": tree, "blocked_nodes": int(blocked.sum()),
                   "orientation": ORIENTATION, "chart": data.chart_name}
    if annulus:
        diagnostics["ring_closure_defect"] = float(np.linalg.norm(
            period_integral(data, ring_loop(spec, i0)))) if not blocked[i0].any() else None
    return SurfacePatch(spec, X, Ta, Tb, normal, lam, II, diagnostics)


def _bfs_integrate(T_rad, T_ang, h_rad, h_ang, blocked, start, base, periodic):
    n0, n1 = blocked.shape
    X = np.full((n0, n1, 3), np.nan)
    X[start] = base
    seen = np.zeros_like(blocked)
    seen[start] = True
    queue = deque([start])
    while queue:
        i, j = queue.popleft()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ii, jj = i + di, j + dj
            if periodic:
                jj %= n1
            if not (0 <= ii < n0 and 0 <= jj < n1) or seen[ii, jj] or blocked[ii, jj]:
                continue
            if di:
                step = 0.5 * di * h_rad * (T_rad[i, j] + T_rad[ii, jj])
            else:
                step = 0.5 * dj * h_ang * (T_ang[i, j] + T_ang[ii, jj])
            X[ii, jj] = X[i, j] + step
            seen[ii, jj] = True
            queue.append((ii, jj))
    if np.any(~seen & ~blocked):
        raise SingularDataError("singular nodes disconnect the chart; cannot reroute integration")
    return X


def ring_loop(spec: AnnulusSpec, i: int) -> list[tuple[int, int]]:
    """Counter-clockwise node cycle along the circle ``t = t_i``."""
    return [(i, j) for j in range(spec.n_theta)] + [(i, 0)]


def rectangle_loop(i0: int, i1: int, j0: int, j1: int) -> list[tuple[int, int]]:
    """Positively oriented node cycle around the chart rectangle ``[i0,i1] x [j0,j1]``."""
    path = [(i0, j) for j in range(j0, j1)]
    path += [(i, j1) for i in range(i0, i1)]
    path += [(i1, j) for j in range(j1, j0, -1)]
    path += [(i, j0) for i in range(i1, i0, -1)]
    return path + [(i0, j0)]


def period_integral(data: WeierstrassData, loop) -> np.ndarray:
    """``Re`` of the loop integral of the three one-forms (trapezoidal rule in
    the chart parameter along each grid edge)."""
    spec = data.chart
    phi = data.integrand()
    va, vb = data.chart_velocity()
    n0, n1 = spec.shape
    annulus = isinstance(spec, AnnulusSpec)
    total = np.zeros(3, dtype=complex)
    for (i, j), (k, l) in zip(loop[:-1], loop[1:]):
        dj = l - j
        if annulus and abs(dj) > 1:
            dj = -int(np.sign(dj))  # wrapped around theta
        di = k - i
        if abs(di) + abs(dj) != 1:
            raise ConfigurationError(f"loop step {(i, j)} -> {(k, l)} is not a grid edge")
        if annulus:
            vel, h = (va, spec.h_t * di) if di else (vb, spec.h_theta * dj)
        else:
            vel, h = (vb, spec.h_y * di) if di else (va, spec.h_x * dj)
        fa = phi[i, j] * vel[i, j]
        fb = phi[k, l] * vel[k, l]
        if not (np.all(np.isfinite(fa)) and np.all(np.isfinite(fb))):
            raise SingularDataError(f"loop crosses a pole near node {(i, j)}")
        total += 0.5 * h * (fa + fb)
    return np.real(total)


def conformality_residual(patch: SurfacePatch) -> float:
    """Max of ``|<Xa, Xb>|`` and ``||Xa|^2 - |Xb|^2|`` relative to ``|Xa|^2``."""
    a, b = patch.tangent_re, patch.tangent_im
    na, nb = np.sum(a * a, -1), np.sum(b * b, -1)
    return float(np.nanmax(np.maximum(np.abs(np.sum(a * b, -1)), np.abs(na - nb)) / na))


def harmonicity_residual(patch: SurfacePatch, order: int = 2, margin: int = 1) -> float:
    """Max-norm of the chart Laplacian of the sampled positions (interior nodes)."""
    X = patch.positions
    if patch.is_annulus:
        lap = diff(X, 0, patch.spec.h_t, 2, order) + diff(X, 1, patch.spec.h_theta, 2, order, True)
        return float(np.nanmax(np.abs(lap[margin:-margin])))
    lap = diff(X, 0, patch.spec.h_y, 2, order) + diff(X, 1, patch.spec.h_x, 2, order)
    return float(np.nanmax(np.abs(lap[margin:-margin, margin:-margin])))


def metric_residual(patch: SurfacePatch) -> float:
    """Max relative gap between the formula ``lam`` and the measured tangent length."""
    scale = patch.chart_scale
    na = np.linalg.norm(patch.tangent_re, axis=-1)
    return float(np.nanmax(np.abs(na - scale) / scale))


def normal_residual(patch: SurfacePatch) -> float:
    """Max gap between the stored normal and the cross product of tangents."""
    n = np.cross(patch.tangent_re, patch.tangent_im)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return float(np.nanmax(np.linalg.norm(n - patch.normal, axis=-1)))


# ---------------------------------------------------------------------------
# named data sets


PRESETS = ("catenoid", "helicoid", "enneper", "flat")


def preset_data(name: str, spec, order: int = 2) -> tuple[WeierstrassData, dict]:
    """Named Weierstrass data on ``spec`` plus integration hints.

    ``catenoid`` is the critical catenoid (annulus: ``g = z e^{-s0}``,
    ``w = a e^{s0} / z^2``; slab: ``g = C0 h``, ``w = -1/h'`` with
    ``h = (e^{s0}/a) e^{i xi}``); ``helicoid`` is its conjugate surface, which
    has a real period around the annulus.
    """
    from .catenoid import critical_catenoid

    cat = critical_catenoid()
    s0, a = cat.s0, cat.a
    annulus = isinstance(spec, AnnulusSpec)
    hints: dict = {}
    if name in ("catenoid", "helicoid"):
        rot = 1.0 if name == "catenoid" else 1j
        if annulus:
            g_fn = lambda z: z * math.exp(-s0)
            w_fn = lambda z: rot * a * math.exp(s0) / z ** 2
            hints = {"basepoint": ((spec.n_r - 1) // 2, 0), "base_position": (-a, 0.0, 0.0)}
        else:
            beta = cat.h_scale
            g_fn = lambda xi: a * beta * np.exp(1j * xi)
            w_fn = lambda xi: rot * (1j / beta) * np.exp(-1j * xi)
    elif name == "enneper":
        g_fn = lambda z: z
        w_fn = lambda z: np.ones_like(z)
    elif name == "flat":
        g_fn = lambda z: np.zeros_like(z)
        w_fn = lambda z: np.ones_like(z)
    else:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return WeierstrassData.from_functions(spec, g_fn, w_fn, order), hints
