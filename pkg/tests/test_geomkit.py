import math

import numpy as np
import pytest

from fbma.errors import ConfigurationError, RankError
from fbma.geomkit import (AnnulusSpec, ComplexField, RigidMotion, SlabSpec, d_dz, d_dzbar,
                          fit_rigid_motion, laplacian, make_annulus_grid, read_field_csv,
                          read_obj, read_points_csv, simpson_weights, trapezoid_weights,
                          write_field_csv, write_obj, write_points_csv)

from conftest import R_ORACLE, observed_order


def test_grid_for_catenoid_modulus():
    spec = make_annulus_grid(AnnulusSpec(R_ORACLE, 129, 256))
    assert spec.t[0] == 0.0
    assert spec.t[-1] == pytest.approx(math.log(R_ORACLE), abs=1e-15)
    assert spec.shape == (129, 256)
    assert np.allclose(np.abs(spec.z[0]), 1.0)
    assert np.allclose(np.abs(spec.z[-1]), R_ORACLE)


def test_minimal_legal_grid():
    spec = AnnulusSpec(2.0, 3, 4)
    assert spec.shape == (3, 4)
    assert spec.h_theta == pytest.approx(math.pi / 2)


@pytest.mark.parametrize("kw", [dict(R=1.0, n_r=9, n_theta=8), dict(R=0.5, n_r=9, n_theta=8),
                                dict(R=2.0, n_r=2, n_theta=8), dict(R=2.0, n_r=9, n_theta=3),
                                dict(R=2.0, n_r=9, n_theta=8, epsilon=0.1)])
def test_illegal_grids_rejected(kw):
    with pytest.raises(ConfigurationError):
        AnnulusSpec(**kw)


def test_slab_column_count():
    slab = SlabSpec(3.0, 9, 17, periods=3)
    assert slab.n_cols == 49
    assert slab.x[-1] == pytest.approx(6 * math.pi)
    assert slab.y[-1] == pytest.approx(math.log(3.0))


def _dz_error(n_r, fn, dfn, which=d_dz):
    spec = AnnulusSpec(2.0, n_r, 4 * (n_r - 1))
    z = spec.z
    out = which(ComplexField(spec, fn(z))).values
    return np.max(np.abs(out - dfn(z)))


def test_d_dz_of_z_squared_second_order():
    errs = [_dz_error(n, lambda z: z * z, lambda z: 2 * z) for n in (17, 33, 65)]
    assert errs[-1] < 2e-3
    assert np.all(observed_order(errs, [1, 0.5, 0.25]) > 1.9)


def test_wirtinger_of_conjugate():
    spec = AnnulusSpec(2.0, 65, 256)
    f = ComplexField(spec, np.conj(spec.z))
    assert np.max(np.abs(d_dz(f).values)) < 1e-3
    assert np.max(np.abs(d_dzbar(f).values - 1)) < 1e-3


def test_slab_derivative_of_exponential():
    slab = SlabSpec(3.0, 65, 129)
    f = ComplexField(slab, np.exp(1j * slab.xi), order=4)
    err = np.max(np.abs(d_dz(f).values - 1j * np.exp(1j * slab.xi)))
    assert err < 1e-6


@pytest.mark.parametrize("fn", [lambda z: np.log(np.abs(z)), lambda z: np.real(z * z),
                                lambda z: np.imag(z ** 3)])
def test_laplacian_of_harmonic_converges(fn):
    errs = []
    for n in (17, 33, 65):
        spec = AnnulusSpec(2.0, n, 4 * (n - 1))
        errs.append(np.max(np.abs(laplacian(fn(spec.z), spec, plane=True))) + 1e-300)
    # log r is exact on the stencil; the others converge at second order
    assert errs[-1] < 1e-2
    if errs[0] > 1e-10:
        assert np.all(observed_order(errs, [1, 0.5, 0.25]) > 1.9)


def test_laplacian_of_r_squared():
    spec = AnnulusSpec(2.0, 129, 256)
    lap = laplacian(np.abs(spec.z) ** 2, spec, plane=True)
    assert np.max(np.abs(lap - 4.0)) < 1e-3


def test_quadrature_weights():
    assert np.sum(simpson_weights(9, 0.125) * np.linspace(0, 1, 9) ** 3) == pytest.approx(0.25, abs=1e-15)
    th = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    assert np.sum(trapezoid_weights(16, 2 * np.pi / 16, periodic=True) * np.cos(th) ** 2) == pytest.approx(np.pi)


def test_fit_identity_and_quarter_turn():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(50, 3))
    m, rms = fit_rigid_motion(A, A)
    assert m.is_identity(1e-12) and rms < 1e-12
    q = RigidMotion.about_axis([0, 0, 1], math.pi / 2)
    m, rms = fit_rigid_motion(A, q.apply(A))
    assert np.max(np.abs(m.rotation - q.rotation)) < 1e-10
    assert rms < 1e-10


def test_fit_rejects_collinear():
    pts = np.outer(np.arange(5.0), [1, 2, 3])
    with pytest.raises(RankError):
        fit_rigid_motion(pts, pts)


def test_catenoid_piece_closes(cat):
    slab = SlabSpec(cat.R, 17, 33, periods=2)
    Y, X = slab.mesh()
    P = cat.surface(X, Y)
    m, rms = fit_rigid_motion(P[:, :33], P[:, 32:])
    assert m.is_identity(1e-10)


def test_motion_algebra():
    m = RigidMotion.about_axis([1, 1, 0], 0.7, point=[1, 2, 3])
    assert m.compose(m.inverse()).is_identity(1e-12)
    assert m.power(3).angle == pytest.approx(2.1)
    assert np.allclose(m.axis, np.array([1, 1, 0]) / math.sqrt(2))
    with pytest.raises(RankError):
        RigidMotion(np.diag([1.0, 1.0, -1.0]))


def test_csv_and_obj_round_trip(tmp_path):
    spec = AnnulusSpec(2.5, 5, 8)
    vals = spec.z ** 2
    write_field_csv(tmp_path / "f.csv", spec, vals)
    back_spec, back, _ = read_field_csv(tmp_path / "f.csv")
    assert back_spec == spec and np.array_equal(back, vals)
    pts = np.random.default_rng(1).normal(size=(7, 3))
    write_points_csv(tmp_path / "p.csv", pts)
    assert np.array_equal(read_points_csv(tmp_path / "p.csv"), pts)
    P = np.random.default_rng(2).normal(size=(3, 4, 3))
    write_obj(tmp_path / "s.obj", P, P, periodic_cols=True, comment="hello")
    v, n, c = read_obj(tmp_path / "s.obj")
    assert np.array_equal(v, P.reshape(-1, 3)) and np.array_equal(n, v) and c == ["hello"]
    faces = [l for l in (tmp_path / "s.obj").read_text().splitlines() if l.startswith("f ")]
    assert len(faces) == 2 * 4
