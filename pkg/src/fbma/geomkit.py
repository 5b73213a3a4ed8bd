"""Grids, sampled fields, finite differences and rigid motions.

Two charts are used throughout:

* the annulus ``A(1, R)`` sampled on a uniform ``(t, theta)`` grid with
  ``z = exp(t + i theta)``, ``t in [0, log R]`` and ``theta`` periodic;
* the slab ``{0 <= Im xi <= log R}`` sampled on a uniform ``(y, x)`` grid with
  ``xi = x + i y``; the covering map is ``z = exp(-i xi)``.

Arrays are always indexed ``[radial, angular]``: axis 0 is ``t`` (annulus) or
``y = Im xi`` (slab), axis 1 is ``theta`` or ``x = Re xi``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, RankError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class AnnulusSpec:
    """Uniform ``(t, theta)`` sampling of the closed annulus ``1 <= |z| <= R``."""

    R: float
    n_r: int
    n_theta: int
    epsilon: float = 0.0

    def __post_init__(self):
        if not (self.R > 1.0) or not math.isfinite(self.R):
            raise ConfigurationError(f"annulus needs R > 1, got R={self.R}")
        if self.n_r < 3:
            raise ConfigurationError(f"n_r must be >= 3, got {self.n_r}")
        if self.n_theta < 4:
            raise ConfigurationError(f"n_theta must be >= 4, got {self.n_theta}")
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be >= 0")
        if self.epsilon != 0.0:
            # the closed annulus is discretized; the Lewy margin is not represented
            raise ConfigurationError("only epsilon = 0 is supported numerically")

    @property
    def log_R(self) -> float:
        return math.log(self.R)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.log_R, self.n_r)

    @property
    def theta(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_theta) / self.n_theta

    @property
    def h_t(self) -> float:
        return self.log_R / (self.n_r - 1)

    @property
    def h_theta(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r, self.n_theta)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.t, self.theta, indexing="ij")

    @property
    def z(self) -> np.ndarray:
        T, TH = self.mesh()
        return np.exp(T + 1j * TH)

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.t)

    def inner_index(self) -> int:
        return 0

    def outer_index(self) -> int:
        return self.n_r - 1


@dataclass(frozen=True)
class SlabSpec:
    """Uniform sampling of ``log(1-delta) <= Im xi <= log(R+delta)``, ``0 <= Re xi <= 2 pi M``.

    ``n_re`` counts nodes of one fundamental period *including* both ends, so
    the full grid has ``(n_re - 1) * periods + 1`` columns.
    """

    R: float
    n_im: int
    n_re: int
    delta: float = 0.0
    periods: int = 1

    def __post_init__(self):
        if not (self.R > 1.0):
            raise ConfigurationError(f"slab needs R > 1, got R={self.R}")
        if not (0.0 <= self.delta < 1.0):
            raise ConfigurationError("delta must lie in [0, 1)")
        if self.n_im < 3 or self.n_re < 5:
            raise ConfigurationError("slab grid too small")
        if self.periods < 1:
            raise ConfigurationError("periods must be >= 1")

    @property
    def y(self) -> np.ndarray:
        return np.linspace(math.log(1.0 - self.delta), math.log(self.R + self.delta), self.n_im)

    @property
    def cols_per_period(self) -> int:
        return self.n_re - 1

    @property
    def n_cols(self) -> int:
        return self.cols_per_period * self.periods + 1

    @property
    def x(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_cols) / self.cols_per_period

    @property
    def h_y(self) -> float:
        return (self.y[-1] - self.y[0]) / (self.n_im - 1)

    @property
    def h_x(self) -> float:
        return TWO_PI / self.cols_per_period

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_im, self.n_cols)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.y, self.x, indexing="ij")

    @property
    def xi(self) -> np.ndarray:
        Y, X = self.mesh()
        return X + 1j * Y

    def with_periods(self, periods: int) -> "SlabSpec":
        return SlabSpec(self.R, self.n_im, self.n_re, self.delta, periods)

    @classmethod
    def from_annulus(cls, spec: AnnulusSpec, periods: int = 1) -> "SlabSpec":
        return cls(spec.R, spec.n_r, spec.n_theta + 1, 0.0, periods)


def make_annulus_grid(spec: AnnulusSpec) -> AnnulusSpec:
    """Validate ``spec`` and return it as the grid handle.

    An AnnulusSpec already exposes node coordinates (``t``, ``theta``, ``r``, ``z``)
    and the boundary row indices, so no separate handle object is needed.
    """
    if not isinstance(spec, AnnulusSpec):
        raise ConfigurationError("expected an AnnulusSpec")
    return spec


# ---------------------------------------------------------------------------
# finite differences


@lru_cache(maxsize=None)
def fd_weights(offsets: tuple[int, ...], deriv: int) -> np.ndarray:
    """Fornberg weights for the ``deriv``-th derivative on integer ``offsets``."""
    x = np.asarray(offsets, dtype=float)
    n = len(x)
    c = np.zeros((n, deriv + 1))
    c1, c4 = 1.0, x[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, deriv)
        c2, c5 = 1.0, c4
        c4 = x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    w = c[:, deriv].copy()
    w.setflags(write=False)
    return w


def _central_halfwidth(deriv: int, order: int) -> int:
    return (deriv + order - 1) // 2


def diff(values: np.ndarray, axis: int, h: float, deriv: int = 1, order: int = 2,
         periodic: bool = False) -> np.ndarray:
    """Finite-difference derivative of ``values`` along ``axis``.

    Central stencils of accuracy ``order`` in the interior; on a non-periodic
    axis the edge nodes use one-sided stencils of the same accuracy.
    """
    values = np.asarray(values)
    a = np.moveaxis(values, axis, 0)
    n = a.shape[0]
    p = _central_halfwidth(deriv, order)
    central = tuple(range(-p, p + 1))
    wc = fd_weights(central, deriv)
    out = np.zeros_like(a, dtype=np.result_type(a, float))
    if periodic:
        for w, k in zip(wc, central):
            if w != 0.0:
                out += w * np.roll(a, -k, axis=0)
        return np.moveaxis(out / h**deriv, 0, axis)
    width = deriv + order
    if n < width:
        raise ConfigurationError(f"need at least {width} nodes for this stencil, got {n}")
    for w, k in zip(wc, central):
        if w != 0.0:
            out[p:n - p] += w * a[p + k:n - p + k]
    for i in list(range(p)) + list(range(n - p, n)):
        start = min(max(i - p, 0), n - width)
        offs = tuple(range(start - i, start - i + width))
        ws = fd_weights(offs, deriv)
        out[i] = np.tensordot(ws, a[start:start + width], axes=(0, 0))
    return np.moveaxis(out / h**deriv, 0, axis)


# ---------------------------------------------------------------------------
# sampled complex fields


@dataclass
class ComplexField:
    """Complex samples on an annulus or slab grid, indexed ``[radial, angular]``."""

    spec: AnnulusSpec | SlabSpec
    values: np.ndarray
    order: int = 2

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.spec.shape:
            raise ConfigurationError(
                f"field shape {self.values.shape} does not match grid {self.spec.shape}")

    @property
    def is_annulus(self) -> bool:
        return isinstance(self.spec, AnnulusSpec)

    def chart_partials(self) -> tuple[np.ndarray, np.ndarray]:
        """Derivatives along the real and imaginary chart directions.

        Annulus: ``(d/dt, d/dtheta)``. Slab: ``(d/dx, d/dy)``.
        """
        return chart_partials(self.values, self.spec, self.order)

    def map(self, fn) -> "ComplexField":
        return ComplexField(self.spec, fn(self.values), self.order)


def chart_partials(values: np.ndarray, spec, order: int = 2) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(spec, AnnulusSpec):
        d_re = diff(values, 0, spec.h_t, 1, order)
        d_im = diff(values, 1, spec.h_theta, 1, order, periodic=True)
    else:
        d_re = diff(values, 1, spec.h_x, 1, order)
        d_im = diff(values, 0, spec.h_y, 1, order)
    return d_re, d_im


def d_dz(field: ComplexField) -> ComplexField:
    """Wirtinger derivative in the chart's complex coordinate (``z`` or ``xi``)."""
    a, b = field.chart_partials()
    w = 0.5 * (a - 1j * b)
    if field.is_annulus:
        w = w / field.spec.z
    return ComplexField(field.spec, w, field.order)


def d_dzbar(field: ComplexField) -> ComplexField:
    a, b = field.chart_partials()
    w = 0.5 * (a + 1j * b)
    if field.is_annulus:
        w = w / np.conj(field.spec.z)
    return ComplexField(field.spec, w, field.order)


def laplacian(values: np.ndarray, spec: AnnulusSpec, plane: bool = False,
              order: int = 2) -> np.ndarray:
    """``v_tt + v_theta_theta`` on the annulus grid.

    With ``plane=True`` the result is divided by ``r**2 = exp(2t)``, giving the
    flat Laplacian of the plane.
    """
    lap = (diff(values, 0, spec.h_t, 2, order)
           + diff(values, 1, spec.h_theta, 2, order, periodic=True))
    if plane:
        lap = lap * np.exp(-2.0 * spec.t)[:, None]
    return lap


# ---------------------------------------------------------------------------
# quadrature


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights on ``n`` nodes; an even interval count is
    integrated exactly by Simpson, otherwise the last 3 intervals use 3/8."""
    if n < 3:
        w = np.full(n, h)
        w[[0, -1]] = h / 2
        return w
    w = np.zeros(n)
    m = n - 1
    if m % 2 == 0:
        w[0:m:2] += 1.0
        w[1:m:2] += 4.0
        w[2:m + 1:2] += 1.0
        return w * h / 3.0
    if m == 1:
        return np.array([h / 2, h / 2])
    w[0:m - 3:2] += 1.0
    w[1:m - 3:2] += 4.0
    w[2:m - 2:2] += 1.0
    w[:m - 2] *= h / 3.0
    w[m - 3:] += np.array([1.0, 3.0, 3.0, 1.0]) * 3.0 * h / 8.0
    return w


def trapezoid_weights(n: int, h: float, periodic: bool = False) -> np.ndarray:
    w = np.full(n, h)
    if not periodic:
        w[0] = w[-1] = h / 2
    return w


# ---------------------------------------------------------------------------
# rigid motions


@dataclass(frozen=True)
class RigidMotion:
    """``x -> rotation @ x + translation`` with ``rotation`` in SO(3)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        Rm = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        tv = np.asarray(self.translation, dtype=float).reshape(3)
        if np.max(np.abs(Rm @ Rm.T - np.eye(3))) > 1e-9 or np.linalg.det(Rm) < 0:
            raise RankError("rotation part is not a proper orthogonal matrix")
        object.__setattr__(self, "rotation", Rm)
        object.__setattr__(self, "translation", tv)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def compose(self, other: "RigidMotion") -> "RigidMotion":
        """``self after other``."""
        return RigidMotion(self.rotation @ other.rotation,
                           self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidMotion":
        Rt = self.rotation.T
        return RigidMotion(Rt, -Rt @ self.translation)

    def power(self, n: int) -> "RigidMotion":
        out = RigidMotion()
        base = self if n >= 0 else self.inverse()
        for _ in range(abs(n)):
            out = base.compose(out)
        return out

    @property
    def angle(self) -> float:
        c = (np.trace(self.rotation) - 1.0) / 2.0
        s = 0.5 * np.linalg.norm(self._axis_vector())
        return math.atan2(s, c)

    def _axis_vector(self) -> np.ndarray:
        Rm = self.rotation
        return np.array([Rm[2, 1] - Rm[1, 2], Rm[0, 2] - Rm[2, 0], Rm[1, 0] - Rm[0, 1]])

    @property
    def axis(self) -> np.ndarray:
        """Unit rotation axis (sign chosen so the angle is in ``[0, pi]``)."""
        v = self._axis_vector()
        nv = np.linalg.norm(v)
        if nv > 1e-12:
            return v / nv
        # angle near 0 or pi: take the eigenvector of eigenvalue 1
        w, V = np.linalg.eig(self.rotation)
        k = int(np.argmin(np.abs(w - 1.0)))
        ax = np.real(V[:, k])
        return ax / np.linalg.norm(ax)

    def is_identity(self, tol: float) -> bool:
        return (np.max(np.abs(self.rotation - np.eye(3))) < tol
                and np.linalg.norm(self.translation) < tol)

    @classmethod
    def about_axis(cls, axis, angle: float, point=None) -> "RigidMotion":
        """Rotation by ``angle`` about the line through ``point`` along ``axis``."""
        k = np.asarray(axis, dtype=float)
        k = k / np.linalg.norm(k)
        K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        Rm = np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)
        p = np.zeros(3) if point is None else np.asarray(point, dtype=float)
        return cls(Rm, p - Rm @ p)


def fit_rigid_motion(source, target) -> tuple[RigidMotion, float]:
    """Least-squares proper rigid motion taking ``source`` onto ``target``.

    Closed form through the SVD of the cross-covariance (Kabsch). Returns the
    motion and the RMS distance between the moved source and the target.
    """
    A = np.asarray(source, dtype=float).reshape(-1, 3)
    B = np.asarray(target, dtype=float).reshape(-1, 3)
    if A.shape != B.shape:
        raise ConfigurationError("point clouds must have equal length")
    if len(A) < 3:
        raise RankError("need at least 3 points")
    ca, cb = A.mean(axis=0), B.mean(axis=0)
    A0, B0 = A - ca, B - cb
    sv = np.linalg.svd(A0, compute_uv=False)
    if sv[0] == 0.0 or sv[1] <= 1e-12 * sv[0]:
        raise RankError("source points are collinear")
    H = A0.T @ B0
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    Rm = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    motion = RigidMotion(Rm, cb - Rm @ ca)
    rms = float(np.sqrt(np.mean(np.sum((motion.apply(A) - B) ** 2, axis=1))))
    return motion, rms


# ---------------------------------------------------------------------------
# CSV field exchange


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_field_csv(path, spec, values: np.ndarray) -> None:
    """Row-major CSV dump of a real or complex field on a grid."""
    values = np.asarray(values)
    if isinstance(spec, AnnulusSpec):
        c0, c1 = spec.t, spec.theta
        head = ["t", "theta"]
    else:
        c0, c1 = spec.y, spec.x
        head = ["y", "x"]
    is_complex = np.iscomplexobj(values)
    head += ["re", "im"] if is_complex else ["value"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(head) + "\n")
        for i, a in enumerate(c0):
            sa = _fmt(a)
            for j, b in enumerate(c1):
                v = values[i, j]
                tail = f"{_fmt(v.real)},{_fmt(v.imag)}" if is_complex else _fmt(v)
                fh.write(f"{sa},{_fmt(b)},{tail}\n")


def read_field_csv(path) -> tuple[AnnulusSpec | None, np.ndarray, dict]:
    """Read a grid CSV back. Returns ``(annulus_spec_or_None, values, columns)``.

    For ``t,theta`` files the annulus spec is reconstructed from the node
    coordinates; slab files return ``None`` and the raw coordinate columns.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(x) for x in row] for row in reader if row])
    c0 = np.unique(rows[:, 0])
    c1 = np.unique(rows[:, 1])
    n0, n1 = len(c0), len(c1)
    if rows.shape[0] != n0 * n1:
        raise ConfigurationError(f"{path}: not a full rectangular grid")
    if header[-2:] == ["re", "im"]:
        values = (rows[:, -2] + 1j * rows[:, -1]).reshape(n0, n1)
    else:
        values = rows[:, -1].reshape(n0, n1)
    spec = None
    if header[:2] == ["t", "theta"]:
        spec = AnnulusSpec(float(math.exp(c0[-1])), n0, n1)
    return spec, values, {"axis0": c0, "axis1": c1, "header": header}


def write_points_csv(path, points: np.ndarray, header=("x", "y", "z")) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for p in np.asarray(points):
            fh.write(",".join(_fmt(c) for c in p) + "\n")


def read_points_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header[:3] != ["x", "y", "z"]:
            raise ConfigurationError(f"{path}: expected header x,y,z")
        return np.array([[float(x) for x in row[:3]] for row in reader if row])


def write_obj(path, positions: np.ndarray, normals: np.ndarray | None = None,
              periodic_cols: bool = False, comment: str | None = None) -> None:
    """Wavefront OBJ of a gridded surface; quad faces from grid cells."""
    P = np.asarray(positions).reshape(positions.shape[0], positions.shape[1], 3)
    n0, n1 = P.shape[:2]
    lines = []
    if comment:
        lines += [f"# {c}" for c in comment.splitlines()]
    for p in P.reshape(-1, 3):
        lines.append("v " + " ".join(_fmt(c) for c in p))
    if normals is not None:
        for q in np.asarray(normals).reshape(-1, 3):
            lines.append("vn " + " ".join(_fmt(c) for c in q))
    idx = np.arange(n0 * n1).reshape(n0, n1) + 1
    ncols = n1 if periodic_cols else n1 - 1
    for i in range(n0 - 1):
        for j in range(ncols):
            jn = (j + 1) % n1
            quad = (idx[i, j], idx[i, jn], idx[i + 1, jn], idx[i + 1, j])
            if normals is not None:
                lines.append("f " + " ".join(f"{k}//{k}" for k in quad))
            else:
                lines.append("f " + " ".join(str(k) for k in quad))
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path) -> tuple[np.ndarray, np.ndarray | None, list[str]]:
    verts, norms, comments = [], [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("v "):
            verts.append([float(x) for x in line.split()[1:4]])
        elif line.startswith("vn "):
            norms.append([float(x) for x in line.split()[1:4]])
        elif line.startswith("#"):
            comments.append(line[1:].strip())
    return np.array(verts), (np.array(norms) if norms else None), comments
