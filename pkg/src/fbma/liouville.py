"""The Liouville boundary value problem on the annulus ``A(1, R)``.

    Lap v + 2 C0^2 e^v = 0                 in A(1, R)
    dv/dn = 2 e^{-v/2} - 2                  on |z| = 1
    dv/dn = (2/R^2) e^{-v/2} + 2/R          on |z| = R

with ``n`` the inner unit normal. The grid is uniform in ``(t, theta)``,
``t = log r``; the flat Laplacian is ``e^{-2t} (v_tt + v_thetatheta)``.

Rotationally symmetric solutions are ``v = w(t) - 2t`` with
``w = log((alpha/C0)^2 sech^2(alpha (t - t0)))``, which solves
``w'' + 2 C0^2 e^w = 0``.
"""
from __future__ import annotations

import logging
import math
from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, ConvergenceError, OverflowGuardError
from .geomkit import (AnnulusSpec, ComplexField, SlabSpec, diff, simpson_weights,
                      trapezoid_weights)

log = logging.getLogger(__name__)

V_CAP = 700.0
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 50
DAMPING_FLOOR = 2.0 ** -20


@dataclass(frozen=True)
class LiouvilleProblem:
    R: float
    C0: float
    grid: AnnulusSpec
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    order: int = 2

    def __post_init__(self):
        if self.order not in (2, 4):
            raise ConfigurationError("order must be 2 or 4")
        if not self.R > 1.0:
            raise ConfigurationError(f"R must exceed 1, got {self.R}")
        if self.C0 == 0.0 or not math.isfinite(self.C0):
            raise ConfigurationError("C0 = 0 is the flat degenerate case and is rejected")
        if abs(self.grid.R - self.R) > 1e-14 * self.R:
            raise ConfigurationError("grid radius does not match problem R")

    @classmethod
    def build(cls, R: float, C0: float, n_r: int, n_theta: int, **kw) -> "LiouvilleProblem":
        return cls(R, C0, AnnulusSpec(R, n_r, n_theta), **kw)

    @property
    def C0sq(self) -> float:
        return self.C0 * self.C0


@dataclass
class LiouvilleSolution:
    problem: LiouvilleProblem
    v: np.ndarray
    residual_interior: float = float("nan")
    residual_boundary: float = float("nan")
    newton_trace: list = field(default_factory=list)
    converged: bool = True

    @property
    def grid(self) -> AnnulusSpec:
        return self.problem.grid

    @property
    def iterations(self) -> int:
        return len(self.newton_trace)

    def quadratic_constant(self, threshold: float = 1e-3) -> float | None:
        """``max ||s_{k+1}|| / ||s_k||^2`` over the tail where ``||s_k|| < threshold``."""
        steps = [rec["step_norm"] for rec in self.newton_trace]
        ratios = [b / a ** 2 for a, b in zip(steps[:-1], steps[1:]) if 0 < a < threshold and b > 0]
        return max(ratios) if ratios else None

    def report(self) -> dict:
        return {
            "R": self.problem.R, "C0": self.problem.C0,
            "n_r": self.grid.n_r, "n_theta": self.grid.n_theta,
            "converged": self.converged, "iterations": self.iterations,
            "residual_interior": self.residual_interior,
            "residual_boundary": self.residual_boundary,
            "quadratic_constant": self.quadratic_constant(),
            "newton_trace": self.newton_trace,
        }


# ---------------------------------------------------------------------------
# discrete operator


@lru_cache(maxsize=16)
def _operators(spec: AnnulusSpec, order: int):
    """Sparse pieces of the linear part: (boundary d/dt rows, interior r^2-scaled Laplacian)."""
    nr, nt = spec.shape
    D1 = diff(np.eye(nr), 0, spec.h_t, 1, order)
    D2 = diff(np.eye(nr), 0, spec.h_t, 2, order)
    Dth = diff(np.eye(nt), 0, spec.h_theta, 2, order, periodic=True)
    I = sp.identity(nt, format="csr")
    lap = (sp.kron(sp.csr_matrix(D2[1:-1]), I)
           + sp.kron(sp.eye(nr - 2, nr, 1), sp.csr_matrix(Dth))).tocsr()
    d_in = sp.kron(sp.csr_matrix(D1[:1]), I).tocsr()
    d_out = sp.kron(sp.csr_matrix(D1[-1:]), I).tocsr()
    return d_in, lap, d_out


def _boundary_dt(v: np.ndarray, problem: LiouvilleProblem) -> tuple[np.ndarray, np.ndarray]:
    d_in, _, d_out = _operators(problem.grid, problem.order)
    return d_in @ v.ravel(), d_out @ v.ravel()


def boundary_residual(v: np.ndarray, problem: LiouvilleProblem) -> tuple[np.ndarray, np.ndarray]:
    """Per-node residuals of the two Robin conditions (``v_r = e^{-t} v_t``)."""
    R = problem.R
    vt0, vtR = _boundary_dt(v, problem)
    inner = vt0 - (2.0 * np.exp(-0.5 * v[0]) - 2.0)
    outer = -vtR / R - ((2.0 / R ** 2) * np.exp(-0.5 * v[-1]) + 2.0 / R)
    return inner, outer


def interior_residual(v: np.ndarray, problem: LiouvilleProblem, scaled: bool = False) -> np.ndarray:
    """``Lap v + 2 C0^2 e^v`` on interior rows; ``scaled`` multiplies by ``r^2``."""
    spec = problem.grid
    t = spec.t[1:-1, None]
    _, lap, _ = _operators(spec, problem.order)
    res = (lap @ v.ravel()).reshape(spec.n_r - 2, spec.n_theta)
    res = res + 2.0 * problem.C0sq * np.exp(v[1:-1] + 2.0 * t)
    return res if scaled else res * np.exp(-2.0 * t)


def _residual_vector(v: np.ndarray, problem: LiouvilleProblem) -> np.ndarray:
    inner, outer = boundary_residual(v, problem)
    return np.concatenate([inner, interior_residual(v, problem, scaled=True).ravel(), outer])


def _jacobian(v: np.ndarray, problem: LiouvilleProblem) -> sp.csc_matrix:
    spec = problem.grid
    R = problem.R
    d_in, lap, d_out = _operators(spec, problem.order)
    A = sp.vstack([d_in, lap, -d_out / R]).tocsr()
    t = spec.t[1:-1, None]
    diag = np.concatenate([np.exp(-0.5 * v[0]),
                           (2.0 * problem.C0sq * np.exp(v[1:-1] + 2.0 * t)).ravel(),
                           (1.0 / R ** 2) * np.exp(-0.5 * v[-1])])
    return (A + sp.diags(diag)).tocsc()


# ---------------------------------------------------------------------------
# symmetric family


@dataclass(frozen=True)
class SymmetricSolution:
    alpha: float
    t0: float
    C0: float
    R: float

    def w(self, t):
        u = self.alpha * (np.asarray(t) - self.t0)
        return 2.0 * math.log(self.alpha / abs(self.C0)) - 2.0 * np.log(np.cosh(u))

    def dw(self, t):
        return -2.0 * self.alpha * np.tanh(self.alpha * (np.asarray(t) - self.t0))

    def v(self, t):
        return self.w(t) - 2.0 * np.asarray(t)

    def sample(self, spec: AnnulusSpec) -> np.ndarray:
        return np.repeat(self.v(spec.t)[:, None], spec.n_theta, axis=1)

    def first_integral(self) -> float:
        """``w'^2 / 4 + C0^2 e^w``, constant ``= alpha^2``."""
        return self.alpha ** 2

    def boundary_equations(self) -> np.ndarray:
        return _symmetric_equations(self.alpha, self.t0, abs(self.C0), math.log(self.R))


def _phi(u):
    return np.sinh(u) / np.cosh(u) ** 2


def _symmetric_equations(alpha, t0, C, L) -> np.ndarray:
    u1, u2 = alpha * t0, alpha * (L - t0)
    return np.array([alpha ** 2 * math.sinh(u1) - C * math.cosh(u1) ** 2,
                     alpha ** 2 * math.sinh(u2) - C * math.cosh(u2) ** 2])


def _symmetric_jacobian(alpha, t0, C, L) -> np.ndarray:
    u1, u2 = alpha * t0, alpha * (L - t0)

    def dE_du(u):
        return alpha ** 2 * math.cosh(u) - 2.0 * C * math.cosh(u) * math.sinh(u)

    d1, d2 = dE_du(u1), dE_du(u2)
    return np.array([[2 * alpha * math.sinh(u1) + d1 * t0, d1 * alpha],
                     [2 * alpha * math.sinh(u2) + d2 * (L - t0), -d2 * alpha]])


def solve_symmetric(problem: LiouvilleProblem, initial: tuple[float, float] | None = None,
                    tol: float = 1e-14, max_iter: int = 100) -> SymmetricSolution:
    """Damped Newton for ``(alpha, t0)`` on the two boundary equations.

    The default start ``(1, log(R)/2)`` is the critical-catenoid root for its
    own ``(R, C0)``; other pairs are reached by continuation from a nearby
    solution passed as ``initial``.
    """
    C = abs(problem.C0)
    L = math.log(problem.R)
    alpha, t0 = initial if initial is not None else (1.0, 0.5 * L)
    x = np.array([alpha, t0], dtype=float)

    def norm(y):
        try:
            return float(np.max(np.abs(_symmetric_equations(y[0], y[1], C, L))))
        except OverflowError:
            return math.inf

    res = norm(x)
    for _ in range(max_iter):
        if res < tol * max(1.0, C):
            break
        J = _symmetric_jacobian(x[0], x[1], C, L)
        try:
            step = -np.linalg.solve(J, _symmetric_equations(x[0], x[1], C, L))
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Jacobian in symmetric solve") from exc
        lam = 1.0
        while lam >= DAMPING_FLOOR:
            trial = x + lam * step
            tr = norm(trial)
            if tr < res:
                break
            lam *= 0.5
        else:
            raise ConvergenceError(f"no symmetric solution found for R={problem.R}, C0={problem.C0}")
        x, res = trial, tr
    else:
        raise ConvergenceError(f"symmetric solve hit the iteration cap (residual {res:.3e})")
    if res >= 1e-10 * max(1.0, C):
        raise ConvergenceError(f"no symmetric solution found for R={problem.R}, C0={problem.C0}")
    return SymmetricSolution(abs(float(x[0])), float(x[1]), problem.C0, problem.R)


def two_sphere_symmetric(u1: float, alpha: float = 1.0) -> tuple[SymmetricSolution, float]:
    """A symmetric solution whose two boundary equations use *different* roots
    of ``sinh(u)/cosh(u)^2 = C0/alpha^2``; returns it and ``C0``.

    These are catenoidal pieces meeting two unit spheres with distinct centers.
    """
    c = float(_phi(u1))
    if not (0 < c < 0.5):
        raise ConfigurationError("u1 must be positive and not the fold point")
    um = math.asinh(1.0)
    lo, hi = (um, 50.0) if u1 < um else (1e-12, um)
    # the partner root on the other side of the fold
    from .catenoid import bisect_root
    u2 = bisect_root(lambda u: float(_phi(u)) - c, lo, hi)
    C0 = c * alpha ** 2
    L = (u1 + u2) / alpha
    return SymmetricSolution(alpha, u1 / alpha, C0, math.exp(L)), C0


# ---------------------------------------------------------------------------
# Newton solve of the full problem


def evaluate(v: np.ndarray, problem: LiouvilleProblem) -> tuple[float, float]:
    inner, outer = boundary_residual(v, problem)
    ri = float(np.max(np.abs(interior_residual(v, problem))))
    rb = float(max(np.max(np.abs(inner)), np.max(np.abs(outer))))
    return ri, rb


def initial_guess(problem: LiouvilleProblem, initial) -> np.ndarray:
    spec = problem.grid
    if isinstance(initial, np.ndarray):
        if initial.shape != spec.shape:
            raise ConfigurationError("initial field has the wrong shape")
        return np.array(initial, dtype=float)
    if isinstance(initial, SymmetricSolution):
        return initial.sample(spec)
    if initial in (None, "symmetric"):
        try:
            return solve_symmetric(problem).sample(spec)
        except ConvergenceError:
            log.info("no symmetric seed; falling back to a constant start")
            initial = "constant"
    if initial == "constant":
        # v = 0 satisfies the inner condition with zero slope
        return np.zeros(spec.shape)
    if isinstance(initial, (int, float)):
        return np.full(spec.shape, float(initial))
    raise ConfigurationError(f"unknown initial guess {initial!r}")


def solve_full(problem: LiouvilleProblem, initial="symmetric") -> LiouvilleSolution:
    """Damped Newton on the discretized boundary value problem.

    Interior rows are multiplied by ``r^2`` for conditioning; acceptance uses
    that scaled residual, which bounds the flat-Laplacian residual from above.
    """
    v = initial_guess(problem, initial)
    if not np.all(np.isfinite(v)):
        raise ConfigurationError("initial guess is not finite")
    F = _residual_vector(v, problem)
    res = float(np.max(np.abs(F)))
    trace = []
    for it in range(problem.max_iter):
        if res < problem.tol:
            break
        J = _jacobian(v, problem)
        step = spla.spsolve(J, -F).reshape(v.shape)
        if not np.all(np.isfinite(step)):
            raise ConvergenceError("linear solve produced non-finite step", trace)
        lam = 1.0
        while True:
            trial = v + lam * step
            if np.max(trial) > V_CAP:
                lam *= 0.5
            else:
                with np.errstate(over="ignore"):
                    Ft = _residual_vector(trial, problem)
                rt = float(np.max(np.abs(Ft)))
                if np.isfinite(rt) and rt < res:
                    break
                lam *= 0.5
            if lam < DAMPING_FLOOR:
                if np.max(v + step) > V_CAP:
                    raise OverflowGuardError("iterate exceeds exp overflow guard", trace)
                raise ConvergenceError(
                    f"damping floor reached at iteration {it} (residual {res:.3e})", trace)
        v, F, res = trial, Ft, rt
        trace.append({"iteration": it + 1, "step_norm": float(lam * np.max(np.abs(step))),
                      "damping": lam, "residual": res})
        log.debug("newton %d: |F| = %.3e, damping %.3g", it + 1, res, lam)
    converged = res < problem.tol
    ri, rb = evaluate(v, problem)
    sol = LiouvilleSolution(problem, v, ri, rb, trace, converged)
    if not converged:
        raise ConvergenceError(
            f"Newton did not reach tol {problem.tol:g} in {problem.max_iter} iterations "
            f"(residual {res:.3e})", trace)
    return sol


def exact_solution(problem: LiouvilleProblem, sym: SymmetricSolution) -> LiouvilleSolution:
    """Wrap the sampled closed form as a solution object (residuals evaluated)."""
    v = sym.sample(problem.grid)
    ri, rb = evaluate(v, problem)
    return LiouvilleSolution(problem, v, ri, rb, [], True)


# ---------------------------------------------------------------------------
# slab lift and its diagnostics


def lift_to_slab(solution: LiouvilleSolution, periods: int = 1) -> tuple[SlabSpec, np.ndarray]:
    """``vtilde(xi) = v(e^{-i xi}) + 2 Im xi`` on ``periods`` copies of the
    fundamental strip. ``Im xi = t`` and ``Re xi = -theta``."""
    spec = solution.grid
    slab = SlabSpec.from_annulus(spec, periods)
    n = spec.n_theta
    cols = (-np.arange(slab.n_cols)) % n
    vt = solution.v[:, cols] + 2.0 * spec.t[:, None]
    return slab, vt


def slab_boundary_residual(vtilde: np.ndarray, slab: SlabSpec) -> tuple[np.ndarray, np.ndarray]:
    """``d vtilde/dn - 2 exp(-vtilde/2)`` on both slab edges (inner normal)."""
    h = slab.h_y
    d0 = (-3.0 * vtilde[0] + 4.0 * vtilde[1] - vtilde[2]) / (2 * h)
    d1 = -(3.0 * vtilde[-1] - 4.0 * vtilde[-2] + vtilde[-3]) / (2 * h)
    return d0 - 2.0 * np.exp(-0.5 * vtilde[0]), d1 - 2.0 * np.exp(-0.5 * vtilde[-1])


def slab_interior_residual(vtilde: np.ndarray, slab: SlabSpec, C0: float) -> np.ndarray:
    """``vtilde_xx + vtilde_yy + 2 C0^2 e^vtilde`` on interior nodes (x periodic)."""
    core = vtilde[:, :-1]  # drop the duplicated column at the period end
    lap = (diff(core, 0, slab.h_y, 2, 2) + diff(core, 1, slab.h_x, 2, 2, periodic=True))
    return (lap + 2.0 * C0 * C0 * np.exp(core))[1:-1]


def q_function(vtilde: np.ndarray, slab: SlabSpec, order: int = 2) -> ComplexField:
    """``Q = vtilde_xixi - vtilde_xi^2 / 2`` (holomorphic iff vtilde solves Liouville)."""
    core = vtilde[:, :-1]
    hx, hy = slab.h_x, slab.h_y
    vx = diff(core, 1, hx, 1, order, periodic=True)
    vy = diff(core, 0, hy, 1, order)
    vxx = diff(core, 1, hx, 2, order, periodic=True)
    vyy = diff(core, 0, hy, 2, order)
    vxy = diff(vx, 0, hy, 1, order)
    v_xi = 0.5 * (vx - 1j * vy)
    v_xixi = 0.25 * (vxx - 2j * vxy - vyy)
    Q = v_xixi - 0.5 * v_xi ** 2
    Q = np.concatenate([Q, Q[:, :1]], axis=1)
    return ComplexField(slab.with_periods(1) if slab.periods == 1 else slab, Q, order)


def antiholomorphy_residual(Q: ComplexField, margin: int = 2, order: int = 2) -> float:
    """Max ``|dQ/d(conj xi)|`` away from the slab edges."""
    slab = Q.spec
    core = Q.values[:, :-1]
    qx = diff(core, 1, slab.h_x, 1, order, periodic=True)
    qy = diff(core, 0, slab.h_y, 1, order)
    res = 0.5 * (qx + 1j * qy)
    return float(np.max(np.abs(res[margin:-margin])))


def area_perimeter_check(solution: LiouvilleSolution) -> tuple[float, float, float]:
    """Twice the area versus the boundary length, both from ``v`` alone.

    ``2 int int r^-3 e^-v dr dtheta`` against
    ``int e^{-v(1,.)/2} dtheta + int R^-1 e^{-v(R,.)/2} dtheta``.
    Simpson in ``t``, periodic trapezoid in ``theta``.
    """
    spec = solution.grid
    v = solution.v
    wt = simpson_weights(spec.n_r, spec.h_t)
    wth = trapezoid_weights(spec.n_theta, spec.h_theta, periodic=True)
    integrand = np.exp(-v - 2.0 * spec.t[:, None])  # r^-3 e^-v dr = r^-2 e^-v dt
    lhs = 2.0 * float(wt @ integrand @ wth)
    rhs = float(np.exp(-0.5 * v[0]) @ wth + (np.exp(-0.5 * v[-1]) / spec.R) @ wth)
    return lhs, rhs, abs(lhs - rhs)
