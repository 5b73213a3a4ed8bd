import math

import numpy as np
import pytest

from fbma import liouville as lv
from fbma import rebuild as rb
from fbma import weierstrass as ws
from fbma.errors import ConfigurationError, InconsistencyError
from fbma.geomkit import AnnulusSpec, RigidMotion, SlabSpec, diff, fit_rigid_motion

from conftest import FLUX_Z_ORACLE, catenoid_frame, catenoid_solution, observed_order, screw_sheet


def test_catenoid_matches_closed_form(cat):
    frame = catenoid_frame(129)
    n = frame.slab.n_re
    Y, X = frame.slab.with_periods(1).mesh()
    _, rms = fit_rigid_motion(frame.positions[:, :n], cat.surface(X, Y))
    assert rms < 1e-6


def test_flat_input_rejected(cat):
    slab = SlabSpec(cat.R, 9, 17)
    with pytest.raises(ConfigurationError):
        rb.frame_integrate(np.zeros(slab.shape), slab, 0.0)


def test_round_sphere_refused_by_compatibility():
    slab = SlabSpec(3.0, 33, 65)
    Y, _ = slab.mesh()
    vt = 2 * np.log(np.cosh(Y - 0.5))  # spherical metric sech^2
    with pytest.raises(InconsistencyError):
        rb.frame_integrate(vt, slab, 0.4)


def test_path_independence(cat):
    errs = []
    for n in (65, 129):
        sol = catenoid_solution(n, 2)
        slab, vt = lv.lift_to_slab(sol)
        frame = rb.frame_integrate(vt, slab, cat.C0)
        target = (slab.n_im - 1, slab.n_re - 1)
        errs.append(np.linalg.norm(rb.integrate_along_path(frame, vt, target) - frame.positions[target]))
    assert errs[1] < 1e-6 and errs[1] < errs[0]


def test_frame_drift_and_periodicity(cat):
    sol = catenoid_solution(129, 2)
    slab, vt = lv.lift_to_slab(sol, periods=2)
    frame = rb.frame_integrate(vt, slab, cat.C0)
    assert frame.drift["max_step_correction"] < 1e-10
    assert frame.drift["total_correction"] < 1e-6
    assert frame.gram_residual() < 1e-12
    n = slab.n_re - 1
    assert np.array_equal(frame.Lambda[:, :n], frame.Lambda[:, n:2 * n])


def _second_forms(frame):
    """Discrete Gauss curvature * Lambda^4 and |sigma|^2 * Lambda^4 from positions."""
    s = frame.slab
    P = frame.positions
    Xx, Xy = diff(P, 1, s.h_x, 1, 2), diff(P, 0, s.h_y, 1, 2)
    Xxx, Xyy = diff(P, 1, s.h_x, 2, 2), diff(P, 0, s.h_y, 2, 2)
    Xxy = diff(Xx, 0, s.h_y, 1, 2)
    N = np.cross(Xx, Xy)
    N /= np.linalg.norm(N, axis=-1, keepdims=True)
    L, M, Nn = (np.sum(A * N, -1) for A in (Xxx, Xxy, Xyy))
    E, G = np.sum(Xx * Xx, -1), np.sum(Xy * Xy, -1)
    lam4 = E * G
    K = (L * Nn - M * M) / lam4
    sig2 = (L * L + 2 * M * M + Nn * Nn) / lam4
    inner = (slice(2, -2), slice(2, -2))
    return (K * lam4)[inner], sig2[inner], lam4[inner]


def test_gauss_equation_and_sigma_identity(cat):
    gauss, sig = [], []
    for n in (65, 129, 257):
        KL4, sig2, lam4 = _second_forms(catenoid_frame(n, periods=1))
        gauss.append(np.max(np.abs(KL4 + cat.C0 ** 2)))
        sig.append(np.max(np.abs(sig2 * lam4 - 2 * cat.C0 ** 2)))
    assert np.all(observed_order(gauss, [1, 0.5, 0.25]) >= 1.9)
    assert np.all(observed_order(sig, [1, 0.5, 0.25]) >= 1.9)


def test_condition_1(cat):
    sol = catenoid_solution(129, 4)
    frame = catenoid_frame(129)
    assert rb.verify_condition_1(sol, frame) < 1e-5
    scaled = rb.FrameField(frame.slab, 1.01 * frame.positions, frame.frames, frame.Lambda, frame.C0)
    assert abs(rb.verify_condition_1(sol, scaled) - math.log(1.01 ** 2)) < 1e-4
    slab, vt = lv.lift_to_slab(sol, periods=2)
    assert np.max(np.abs(frame.Lambda ** 2 - np.exp(-vt))) < 1e-15


def test_catenoid_spheres_concentric():
    found = rb.find_spheres(catenoid_frame(129))
    assert found.concentric
    assert np.linalg.norm(found.O1) < 1e-8 and np.linalg.norm(found.O2) < 1e-4
    assert all(abs(r - 1) < 1e-4 for r in found.radii)


def test_two_sphere_solution_is_not_concentric():
    sym, C0 = lv.two_sphere_symmetric(0.4)
    pb = lv.LiouvilleProblem.build(sym.R, C0, 129, 256, order=4)
    slab, vt = lv.lift_to_slab(lv.solve_full(pb, sym))
    found = rb.find_spheres(rb.frame_integrate(vt, slab, C0))
    assert not found.concentric
    assert found.separation > 0.1


def test_decompose_catenoid_identity():
    dec = rb.decompose(catenoid_frame(129), center=np.zeros(3))
    assert dec.classification == "identity" and dec.N == 1
    assert dec.residuals["rms_T1"] < 1e-6


def test_decompose_three_fold():
    dec = rb.decompose(screw_sheet(2 * math.pi / 3))
    assert (dec.classification, dec.N, dec.k) == ("rotation", 3, 1)
    assert np.allclose(np.abs(dec.axis), [0, 0, 1])
    assert dec.residuals["rms_T2"] < 1e-12


def test_decompose_one_radian():
    dec = rb.decompose(screw_sheet(1.0))
    assert dec.classification == "non-closing" and dec.N is None
    assert abs(dec.angle - 1.0) < 1e-12


def test_decompose_needs_two_periods():
    with pytest.raises(ConfigurationError):
        rb.decompose(screw_sheet(1.0, periods=1))


def test_decompose_center_check():
    with pytest.raises(InconsistencyError):
        rb.decompose(screw_sheet(2 * math.pi / 3), center=np.array([5.0, 0, 0]))


def test_rational_angle():
    assert rb.rational_angle(2 * math.pi * 3 / 7) == (3, 7)
    assert rb.rational_angle(1.0) is None


def test_catenoid_flux(cat):
    frame = catenoid_frame(257, periods=1)
    Y, X = frame.slab.mesh()
    T, _ = fit_rigid_motion(frame.positions, cat.surface(X, Y))
    rep = rb.flux_and_torque(frame.transformed(T).patch(), origin=np.zeros(3))
    assert rep["divergence_gap"] < 1e-5
    for lab in ("Gamma1", "Gamma2"):
        f = np.array(rep["segments"][lab]["flux"])
        assert np.max(np.abs(f[:2])) < 1e-6
        assert abs(abs(f[2]) - FLUX_Z_ORACLE) < 1e-5
    assert rep["torque_norm"] < 1e-6


def test_seam_cancellation():
    frame = catenoid_frame(65, periods=1)
    n = frame.slab.n_re
    k = n // 3
    a, b = frame.patch(slice(0, k + 1)), frame.patch(slice(k, n))
    origin = np.array([0.3, -0.2, 0.1])
    ra = rb.flux_and_torque(a, origin=origin)
    rb_ = rb.flux_and_torque(b, origin=origin)
    seams = sum(r["segments"][lab]["Y_dot_nu"] for r in (ra, rb_) for lab in ("C1", "C2"))
    assert abs(seams) < 1e-6
    assert abs(ra["area"] + rb_["area"] - rb.patch_area(frame.patch())) < 1e-6


def test_flat_annulus_divergence_identity():
    rho = 3.0
    spec = AnnulusSpec(rho, 65, 256)
    z = spec.z
    patch = ws.SurfacePatch.from_positions(spec, np.stack([z.real, z.imag, 0 * z.real], -1))
    rep = rb.flux_and_torque(patch)
    assert abs(rep["segments"]["Gamma2"]["Y_dot_nu"] - 2 * math.pi * rho * rho) < 1e-6
    assert abs(rep["area"] - math.pi * (rho ** 2 - 1)) < 1e-6
    assert rep["divergence_gap"] < 1e-5


def test_unlabeled_segment_rejected():
    frame = catenoid_frame(65, periods=1)
    segs = rb.patch_boundaries(frame.patch())
    segs["seam"] = segs["Gamma1"]
    with pytest.raises(ConfigurationError):
        rb.flux_and_torque(frame.patch(), segs)


def test_non_concentric_flux_flag():
    frame = catenoid_frame(65, periods=1)
    rep = rb.flux_and_torque(frame.patch(), concentric=False)
    assert rep["flux_vanishing"] == {"Gamma1": False, "Gamma2": False}


def test_transformed_frame_moves_positions():
    frame = catenoid_frame(65, periods=1)
    T = RigidMotion.about_axis([1, 0, 0], 0.4, point=[0, 1, 0])
    moved = frame.transformed(T)
    assert np.allclose(moved.positions, T.apply(frame.positions))
    assert moved.gram_residual() < 1e-12
