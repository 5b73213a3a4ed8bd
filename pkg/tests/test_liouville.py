import math

import numpy as np
import pytest

from fbma import liouville as lv
from fbma.errors import ConfigurationError, ConvergenceError
from fbma.geomkit import AnnulusSpec

from conftest import catenoid_solution, observed_order


def problem(n_r, cat, **kw):
    return lv.LiouvilleProblem.build(cat.R, cat.C0, n_r, 2 * (n_r - 1), **kw)


def test_zero_field_boundary_residuals():
    pb = lv.LiouvilleProblem.build(3.0, 0.5, 9, 16)
    inner, outer = lv.boundary_residual(np.zeros(pb.grid.shape), pb)
    assert np.all(inner == 0.0)
    assert np.allclose(outer, -(2 / 9 + 2 / 3))


def test_closed_form_boundary_equations(cat):
    sym = lv.solve_symmetric(problem(9, cat))
    assert np.max(np.abs(sym.boundary_equations())) < 1e-10


def test_symmetric_catenoid_root(cat):
    sym = lv.solve_symmetric(problem(9, cat))
    assert abs(sym.alpha - 1) < 1e-10
    assert abs(sym.t0 - math.log(cat.R) / 2) < 1e-10
    assert np.allclose(sym.w(np.linspace(0, 2, 5)), cat.w(np.linspace(0, 2, 5)), atol=1e-12)


@pytest.mark.parametrize("factor", [0.9, 1.1])
def test_symmetric_continuation(cat, factor):
    base = lv.solve_symmetric(problem(9, cat))
    pb = lv.LiouvilleProblem.build(cat.R, factor * cat.C0, 9, 16)
    try:
        sym = lv.solve_symmetric(pb, initial=(base.alpha, base.t0))
    except ConvergenceError:
        return
    assert np.max(np.abs(sym.boundary_equations())) < 1e-10 * max(1, pb.C0)
    assert abs(sym.alpha - 1) < 0.5


def test_zero_C0_rejected(cat):
    with pytest.raises(ConfigurationError):
        lv.LiouvilleProblem.build(cat.R, 0.0, 9, 16)
    with pytest.raises(ConfigurationError):
        lv.LiouvilleProblem.build(1.0, 0.5, 9, 16)
    with pytest.raises(ConfigurationError):
        lv.LiouvilleProblem.build(2.0, 0.5, 9, 16, order=3)


def test_symmetric_start_converges_fast(cat):
    sol = lv.solve_full(problem(129, cat))
    assert sol.iterations <= 3
    assert max(sol.residual_interior, sol.residual_boundary) < 1e-10
    assert np.max(np.ptp(sol.v, axis=1)) < 1e-9


def test_constant_start_reaches_same_solution(cat):
    pb = problem(65, cat)
    ref = lv.solve_full(pb)
    sym = lv.solve_symmetric(pb)
    vbar = float(sym.v(math.log(cat.R) / 2))
    sol = lv.solve_full(pb, vbar)
    assert np.max(np.abs(sol.v - ref.v)) < 1e-8
    # the zero start also works and needs more steps
    assert lv.solve_full(pb, "constant").iterations > ref.iterations


def test_closed_form_residual_order(cat):
    res = []
    for n in (65, 129, 257):
        pb = problem(n, cat)
        v = lv.solve_symmetric(pb).sample(pb.grid)
        res.append(max(lv.evaluate(v, pb)))
    assert np.all(observed_order(res, [1, 0.5, 0.25]) >= 1.9)


def test_interior_closed_form_second_order(cat):
    res = []
    for n in (65, 129, 257):
        pb = problem(n, cat)
        v = lv.solve_symmetric(pb).sample(pb.grid)
        res.append(np.max(np.abs(lv.interior_residual(v, pb))))
    assert np.all(observed_order(res, [1, 0.5, 0.25]) >= 1.9)


def test_fourth_order_operator(cat):
    res = []
    for n in (33, 65, 129):
        pb = problem(n, cat, order=4)
        res.append(max(lv.evaluate(lv.solve_symmetric(pb).sample(pb.grid), pb)))
    assert np.all(observed_order(res, [1, 0.5, 0.25]) >= 3.8)


def test_newton_quadratic_tail():
    cat_like = lv.LiouvilleProblem.build(6.0, 0.35, 33, 64)
    sol = lv.solve_full(cat_like, "constant")
    K = sol.quadratic_constant()
    assert K is not None and math.isfinite(K)
    steps = [r["step_norm"] for r in sol.newton_trace]
    tail = [(a, b) for a, b in zip(steps[:-1], steps[1:]) if a < 1e-3]
    assert all(b <= K * a * a * (1 + 1e-12) for a, b in tail)


def test_nonconvergence_reports_trace(cat):
    pb = lv.LiouvilleProblem.build(cat.R, cat.C0, 33, 64, max_iter=1)
    with pytest.raises(ConvergenceError) as exc:
        lv.solve_full(pb, "constant")
    assert len(exc.value.trace) == 1


def test_maximum_principle_on_radial_lines(cat):
    v = catenoid_solution(65, 2).v
    inner = v[1:-1]
    assert np.all(inner.max(axis=0) <= np.maximum(v[0], v[-1]) + 1e-12)
    # v = w - 2t is concave in t here, so the minimum sits on a boundary circle
    assert np.all(np.argmin(v, axis=0) % (v.shape[0] - 1) == 0)


def test_lift_of_symmetric_solution(cat):
    pb = problem(33, cat)
    sol = lv.exact_solution(pb, lv.solve_symmetric(pb))
    slab, vt = lv.lift_to_slab(sol, periods=2)
    assert vt.shape == slab.shape
    assert np.max(np.ptp(vt, axis=1)) < 1e-12
    assert np.allclose(vt[:, 0], cat.w(slab.y), atol=1e-12)
    n = slab.n_re - 1
    assert np.array_equal(vt[:, :n], vt[:, n:2 * n])


def test_lift_boundary_matches_annulus_residual(cat):
    sol = lv.solve_full(problem(129, cat))
    slab, vt = lv.lift_to_slab(sol)
    b0, b1 = lv.slab_boundary_residual(vt, slab)
    assert max(np.max(np.abs(b0)), np.max(np.abs(b1))) < 1e-8


def test_q_function_constant_on_catenoid(cat):
    pb = problem(129, cat)
    slab, vt = lv.lift_to_slab(lv.exact_solution(pb, lv.solve_symmetric(pb)))
    Q = lv.q_function(vt, slab, order=4)
    # Q = alpha^2 / 2 with alpha = 1
    assert np.max(np.abs(Q.values[3:-3] - 0.5)) < 1e-6


def test_q_negative_control_does_not_refine(cat):
    res = []
    for n in (65, 129, 257):
        slab, vt = lv.lift_to_slab(catenoid_solution(n, 4))
        Y, X = slab.mesh()
        res.append(lv.antiholomorphy_residual(lv.q_function(vt + 0.05 * np.exp(-Y) * np.cos(X), slab)))
    assert res[-1] > 0.5 * res[0]


def test_area_identity_on_catenoid(cat):
    gaps = [lv.area_perimeter_check(catenoid_solution(n, 4))[2] for n in (65, 129, 257)]
    assert gaps[1] < 1e-6
    assert np.all(observed_order(gaps, [1, 0.5, 0.25]) >= 1.9)


def test_area_identity_fails_for_two_sphere_pair():
    sym, C0 = lv.two_sphere_symmetric(0.4)
    pb = lv.LiouvilleProblem.build(sym.R, C0, 65, 128)
    sol = lv.solve_full(pb, sym)
    lhs, rhs, gap = lv.area_perimeter_check(sol)
    # recorded value 1.3119 at 129 x 256
    assert gap > 1.0


def test_report_is_json_ready(cat):
    rep = lv.solve_full(problem(17, cat)).report()
    assert rep["converged"] and rep["n_theta"] == 32 and isinstance(rep["newton_trace"], list)


def test_initial_guess_validation(cat):
    pb = problem(9, cat)
    with pytest.raises(ConfigurationError):
        lv.initial_guess(pb, np.zeros((3, 3)))
    with pytest.raises(ConfigurationError):
        lv.initial_guess(pb, "sideways")
