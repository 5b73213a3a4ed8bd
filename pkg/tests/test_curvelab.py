import math
import warnings

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from fbma import curvelab as cl
from fbma import weierstrass as ws
from fbma.errors import ConfigurationError, DegenerateCurveError, NotCertifiableError
from fbma.geomkit import AnnulusSpec, RigidMotion, SlabSpec


def lissajous(s, A=0.5, B=0.4):
    """A closed curve on the unit sphere with non-vanishing torsion on most of it."""
    P = np.stack([np.cos(s), np.sin(s), A * np.sin(2 * s) + B * np.cos(3 * s)], -1)
    return P / np.linalg.norm(P, axis=-1)[..., None]


def circle(n, rho=1.0):
    s = 2 * np.pi * np.arange(n) / n
    return rho * np.stack([np.cos(s), np.sin(s), np.zeros(n)], -1)


def cone_over_lissajous(n=800):
    slab = SlabSpec(math.exp(0.2), 21, n + 1)
    Y, X = slab.mesh()
    host = ws.SurfacePatch.from_positions(slab, np.exp(Y)[..., None] * lissajous(X))
    return host, np.c_[slab.x[:-1], np.zeros(n)]


def sphere_host(rho=2.0, y0=0.3):
    slab = SlabSpec(math.exp(1.0), 41, 401)
    Y, X = slab.mesh()
    u = Y - y0
    pos = rho * np.stack([np.cos(X) / np.cosh(u), np.sin(X) / np.cosh(u), np.tanh(u)], -1)
    return slab, ws.SurfacePatch.from_positions(slab, pos)


def test_planar_circle():
    c = cl.frenet_analyze(circle(200, 2.0), closed=True)
    assert np.max(np.abs(c.kappa - 0.5)) < 1e-10
    assert np.max(np.abs(c.tau)) < 1e-10
    v = cl.spherical_criterion(c)
    assert v.verdict == "planar circle" and v.radius == pytest.approx(2.0, abs=1e-8)


def test_helix_curvature_and_torsion():
    a, b = 1.5, 0.5
    s = np.linspace(0, 4 * np.pi, 600)
    c = cl.frenet_analyze(np.stack([a * np.cos(s), a * np.sin(s), b * s], -1), closed=False)
    inner = slice(10, -10)
    assert np.max(np.abs(c.kappa[inner] - a / (a * a + b * b))) < 1e-6
    assert np.max(np.abs(c.tau[inner] - b / (a * a + b * b))) < 1e-5
    assert max(c.frenet_residuals().values()) < 1e-4


def test_latitude_on_unit_sphere():
    h = 0.6
    r = math.sqrt(1 - h * h)
    pts = circle(256, r) + [0, 0, h]
    c = cl.frenet_analyze(pts, closed=True)
    assert np.max(np.abs(c.kappa - 1 / r)) < 1e-9


def test_lissajous_on_unit_sphere():
    c = cl.frenet_analyze(lissajous(np.linspace(0, 2 * np.pi, 1600, endpoint=False)), closed=True)
    v = cl.spherical_criterion(c)
    assert v.verdict == "spherical"
    assert abs(v.radius - 1) < 1e-6
    _, center, _ = cl.sphere_normal_field(c, v.radius)
    assert np.linalg.norm(center) < 1e-6


def test_translated_lissajous_center():
    pts = lissajous(np.linspace(0, 2 * np.pi, 1600, endpoint=False)) + [1, 2, 3]
    c = cl.frenet_analyze(pts, closed=True)
    _, center, _ = cl.sphere_normal_field(c, 1.0)
    assert np.linalg.norm(center - [1, 2, 3]) < 1e-6


def test_ellipse_not_spherical():
    s = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    c = cl.frenet_analyze(np.stack([2 * np.cos(s), np.sin(s), 0 * s], -1), closed=True)
    assert cl.spherical_criterion(c).verdict == "not spherical"


def test_great_circle_routed_to_planar():
    c = cl.frenet_analyze(circle(300, 2.0), closed=True)
    with pytest.raises(ConfigurationError):
        cl.sphere_normal_field(c, 2.0)


def test_degenerate_inputs():
    with pytest.raises(DegenerateCurveError):
        cl.arclength_resample(np.zeros((5, 3)), closed=False)
    line = np.outer(np.arange(20.0), [1, 0, 0])
    with pytest.raises(DegenerateCurveError):
        cl.arclength_resample(np.vstack([line[:3], line[2:]]), closed=False)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        c = cl.frenet_from_samples(line, closed=False)
    assert c.flags.get("degenerate") and any(issubclass(w.category, cl.DegenerateCurveWarning) for w in rec)
    assert np.all(np.isnan(c.n))


def test_catenoid_boundary_geodesic_curvature(cat):
    spec = AnnulusSpec(cat.R, 129, 256)
    data, hints = ws.preset_data("catenoid", spec)
    patch = ws.integrate_immersion(data, **hints)
    for row in (0, spec.n_r - 1):
        g = cl.curve_on_surface(patch, np.c_[np.full(spec.n_theta, spec.t[row]), spec.theta])
        assert np.max(np.abs(np.abs(g.geodesic_curvature) - 1)) < 1e-4
        cert = cl.certify_orthogonal_sphere(g)
        assert np.linalg.norm(cert.center) < 1e-5
        assert cert.radius == pytest.approx(1.0, abs=1e-4)
        assert cert.orthogonality_residual < 1e-5


def test_sphere_equator_is_geodesic():
    slab, host = sphere_host(y0=0.5)
    j = np.argmin(np.abs(slab.y - 0.5))
    assert abs(slab.y[j] - 0.5) < 1e-12
    g = cl.curve_on_surface(host, np.c_[slab.x[:-1], np.full(400, slab.y[j])], closed=True)
    assert np.max(np.abs(g.geodesic_curvature)) < 1e-8


def test_flat_circle_geodesic_curvature():
    spec = AnnulusSpec(3.0, 33, 128)
    host = ws.SurfacePatch.from_positions(spec, np.stack([spec.z.real, spec.z.imag, 0 * spec.z.real], -1))
    row = 16
    g = cl.curve_on_surface(host, np.c_[np.full(128, spec.t[row]), spec.theta])
    r = math.exp(spec.t[row])
    assert np.max(np.abs(np.abs(g.geodesic_curvature) - 1 / r)) < 1e-8


def test_straight_line_gives_plane_certificate():
    slab = SlabSpec(3.0, 17, 33)
    Y, X = slab.mesh()
    host = ws.SurfacePatch.from_positions(slab, np.stack([X, Y, 0.1 * X * Y], -1))
    # x = 1 is a straight ruling of the saddle z = 0.1 x y
    path = np.c_[np.full(40, 1.0), np.linspace(0.05, 1.0, 40)]
    host2 = ws.SurfacePatch.from_positions(slab, np.stack([X, Y, np.sin(X)], -1))
    g = cl.curve_on_surface(host2, np.c_[np.linspace(0.3, 5.0, 60), np.full(60, slab.y[8])])
    cert = cl.certify_orthogonal_sphere(g)
    assert cert.branch == "plane"
    assert cert.orthogonality_residual < 1e-6
    assert cert.sphericity_residual < 1e-10
    with pytest.warns(cl.DegenerateCurveWarning):
        ruling = cl.curve_on_surface(host, path)
    with pytest.raises(NotCertifiableError):
        cl.certify_orthogonal_sphere(ruling)


def test_sphere_latitudes_against_pencil():
    rho, y0 = 2.0, 0.3
    slab, host = sphere_host(rho, y0)
    for j in (0, 40):
        g = cl.curve_on_surface(host, np.c_[slab.x[:-1], np.full(400, slab.y[j])], closed=True)
        cert = cl.certify_orthogonal_sphere(g)
        u = slab.y[j] - y0
        h, rc = rho * math.tanh(u), rho / math.cosh(u)
        assert abs(abs(cert.c) - abs(h) / (rho * rc)) < 1e-6
        assert np.linalg.norm(cert.center - [0, 0, rho ** 2 / h]) < 1e-5 * rho ** 2 / abs(h)
        assert cert.orthogonality_residual < 1e-5


def test_cone_generic_branch_and_identities():
    host, path = cone_over_lissajous()
    g = cl.curve_on_surface(host, path, closed=True)
    cert = cl.certify_orthogonal_sphere(g)
    assert cert.branch == "generic-torsion"
    assert np.linalg.norm(cert.center) < 1e-6
    k = g.curve.kappa
    assert np.max(np.abs(cert.c ** 2 - k ** 2 * np.cos(cert.contact_angle) ** 2)) < 1e-6
    m = g.curve.generic_mask()
    crit = (1 / k[m] ** 2) * (1 + np.tan(cert.contact_angle[m]) ** 2)
    assert np.max(np.abs(crit - 1 / cert.c ** 2)) < 1e-6
    assert np.nanmax(np.abs(cl.torsion_angle_residual(g, cert))) < 1e-5


def test_torsion_angle_refines():
    res = []
    for n in (200, 400, 800):
        host, path = cone_over_lissajous(n)
        g = cl.curve_on_surface(host, path, closed=True)
        res.append(np.nanmax(np.abs(cl.torsion_angle_residual(g, cl.certify_orthogonal_sphere(g)))))
    assert res[2] < res[1] < res[0]


def test_certificate_equivariance():
    host, path = cone_over_lissajous()
    g = cl.curve_on_surface(host, path, closed=True)
    cert = cl.certify_orthogonal_sphere(g)
    T = RigidMotion.about_axis([1, -2, 0.5], 1.1, point=[0.3, 0.1, -2])
    moved = cl.certify_orthogonal_sphere(g.transformed(T))
    assert np.linalg.norm(moved.center - T.apply(cert.center)) < 1e-10
    assert abs(moved.orthogonality_residual - cert.orthogonality_residual) < 1e-10
    assert abs(moved.sphericity_residual - cert.sphericity_residual) < 1e-10


def test_reparametrization_invariance():
    s = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
    u = s + 0.3 * np.sin(s)
    a = cl.frenet_from_samples(lissajous(s), closed=True)
    b = cl.frenet_from_samples(lissajous(u), closed=True)
    # compare at the same points of the curve
    bi = CubicSpline(np.append(u, 2 * np.pi), np.append(b.kappa, b.kappa[0]), bc_type="periodic")(s)
    assert np.max(np.abs(a.kappa - bi)) < 1e-4
    va, vb = cl.spherical_criterion(a), cl.spherical_criterion(b)
    assert va.verdict == vb.verdict == "spherical"
    assert abs(va.radius - vb.radius) < 1e-6


def test_certificate_nodes_csv(tmp_path):
    host, path = cone_over_lissajous(200)
    g = cl.curve_on_surface(host, path, closed=True)
    cert = cl.certify_orthogonal_sphere(g)
    cl.write_certificate_nodes(tmp_path / "n.csv", g, cert)
    lines = (tmp_path / "n.csv").read_text().splitlines()
    assert len(lines) == 201 and lines[0].startswith("x,y,z,kappa")
    assert cert.to_dict("n.csv")["per_node"] == "n.csv"
