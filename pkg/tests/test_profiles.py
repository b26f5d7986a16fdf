import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yfs import profiles as P
from yfs.errors import DomainError, NotApplicable, OrbitError, OscillatoryRegime
from yfs.model import derive_exponents, similarity_params


def sp_of(N, beta):
    return similarity_params(derive_exponents(N), beta)


@pytest.fixture(scope="module")
def smooth33():
    return P.solve_smooth_profile(sp_of(3, 3.0), 1.0)


@pytest.fixture(scope="module")
def singular33():
    return P.solve_singular_profile(sp_of(3, 3.0), 1.0)


@pytest.fixture(scope="module")
def expander33():
    return P.solve_expander_profile(sp_of(3, 3.0), 1.0)


# ------------------------------------------------------------ closed forms


def test_cylinder_values():
    np.testing.assert_allclose(P.cylinder_profile(derive_exponents(3))(np.array([1.0])), [1.0])
    np.testing.assert_allclose(P.cylinder_profile(derive_exponents(6))(np.array([2.0])), [1.0])


@pytest.mark.parametrize("N, beta", [(3, None), (3, 3.0), (6, 1.5), (10, 0.73)])
def test_cylinder_residual(N, beta):
    assert P.ode_residual(P.cylinder_profile(derive_exponents(N), beta)) < 1e-10


def test_barenblatt_values():
    np.testing.assert_allclose(P.barenblatt_profile(derive_exponents(3), 1.0)(np.array([0.0])), [1.0])
    np.testing.assert_allclose(P.barenblatt_profile(derive_exponents(6), 2.0)(np.array([0.0])), [1.0])


def test_barenblatt_residual_and_tail():
    prof = P.barenblatt_profile(derive_exponents(3), 1.0, num=4000)
    assert P.ode_residual(prof) < 1e-8
    tf = prof.tailFit
    assert tf.gammaHat == pytest.approx(2.0, rel=0.02)
    assert tf.bHat == pytest.approx(1.25, rel=0.02)
    assert tf.sign == -1


def test_barenblatt_rejects_bad_lambda():
    with pytest.raises(DomainError):
        P.barenblatt_profile(derive_exponents(3), 0.0)


# ------------------------------------------------------------------ smooth


def test_smooth_matches_barenblatt_at_beta1():
    mp = derive_exponents(3)
    f = P.solve_smooth_profile(similarity_params(mp, mp.p / 2), 1.0)
    lam = math.sqrt(mp.cStar) * 1.0 ** (-mp.n / 2)
    b = P.barenblatt_profile(mp, lam)
    err = np.max(np.abs(f.values / b(f.grid) - 1))
    assert err < 1e-6


def test_smooth_regular_origin(smooth33):
    assert smooth33.origin_value == 1.0
    assert smooth33(np.array([0.0]))[0] == pytest.approx(1.0)
    assert np.all(np.diff(smooth33.values) <= 0)


def test_smooth_tail_exponent(smooth33):
    g1 = sp_of(3, 3.0).gamma1
    assert smooth33.tailFit.gammaHat == pytest.approx(g1, rel=0.02)
    assert smooth33.tailFit.sign == -1


def test_smooth_residual(smooth33):
    assert P.ode_residual(smooth33) < 1e-6


def test_smooth_scaling_covariance(smooth33):
    sp = sp_of(3, 3.0)
    n = sp.model.n
    lam = 2.0
    g = P.solve_smooth_profile(sp, lam ** (2 / n))
    r = np.geomspace(1e-2, 1e3, 50)
    np.testing.assert_allclose(g(r), lam ** (2 / n) * smooth33(lam * r), rtol=1e-6)
    assert g.tailFit.bHat == pytest.approx(smooth33.tailFit.bHat * lam ** (-sp.gamma1), rel=0.02)


def test_smooth_oscillatory_refused():
    with pytest.raises(OscillatoryRegime):
        P.solve_smooth_profile(sp_of(3, 1.5))


def test_smooth_rejects_bad_f0():
    with pytest.raises(DomainError):
        P.solve_smooth_profile(sp_of(3, 3.0), -1.0)


@pytest.mark.parametrize("N, beta, sign", [(3, 3.0, -1), (4, 1.45, 1), (10, 0.73, -1), (6, 1.5, -1)])
def test_smooth_tail_regimes(N, beta, sign):
    sp = sp_of(N, beta)
    prof = P.solve_smooth_profile(sp)
    assert prof.tailFit.gammaHat == pytest.approx(sp.gamma1, rel=0.02)
    assert prof.tailFit.sign == sign


def test_smooth_tail_monotone_beyond_beta1(smooth33):
    mp = smooth33.params.model
    q = smooth33.grid ** (2 / mp.n) * smooth33.values
    assert np.all(np.diff(q) >= -1e-12 * q[1:])


# ---------------------------------------------------------------- singular


def test_singular_origin_power(singular33):
    theta = sp_of(3, 3.0).theta
    pw = P.local_power(singular33, singular33.grid[:3])
    np.testing.assert_allclose(pw, theta, rtol=0.01)
    assert singular33.originAmplitude == 1.0


def test_singular_orbit_and_tail(singular33):
    orbit = P.to_phase_orbit(singular33)
    assert orbit.endpoint == "D"
    assert orbit.X[-1] == pytest.approx(-2.5, rel=0.01)
    assert orbit.X[0] == pytest.approx(-sp_of(3, 3.0).theta, rel=0.01)
    assert singular33.tailFit.sign == 1
    assert singular33.tailFit.gammaHat == pytest.approx(sp_of(3, 3.0).gamma1, rel=0.02)


def test_singular_above_cylinder(singular33):
    cyl = P.cylinder_profile(derive_exponents(3))
    assert np.all(singular33.values > cyl(singular33.grid))


def test_ordering_smooth_cylinder_singular(smooth33, singular33):
    cyl = P.cylinder_profile(derive_exponents(3))
    r = np.geomspace(1e-2, 1e4, 200)
    assert np.all(smooth33(r) < cyl(r))
    assert np.all(cyl(r) < singular33(r))


def test_singular_tail_monotone(singular33):
    mp = singular33.params.model
    q = singular33.grid ** (2 / mp.n) * singular33.values
    assert np.all(np.diff(q) <= 1e-12 * q[1:])


def test_singular_residual(singular33):
    assert P.ode_residual(singular33) < 1e-6


def test_singular_at_beta1_flagged():
    mp = derive_exponents(3)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        try:
            P.solve_singular_profile(similarity_params(mp, mp.p / 2), 1.0)
        except OrbitError:
            pass
    assert any("experimental" in str(w.message) for w in rec)


def test_singular_below_beta1_rejected():
    with pytest.raises(DomainError):
        P.solve_singular_profile(sp_of(3, 2.2), 1.0)


# ---------------------------------------------------------------- expander


def test_expander_powers(expander33):
    theta = sp_of(3, 3.0).theta
    assert P.local_power(expander33, expander33.grid[:1])[0] == pytest.approx(theta, rel=0.01)
    assert P.local_power(expander33, expander33.grid[-1:])[0] == pytest.approx(5.0, rel=0.02)
    assert P.to_phase_orbit(expander33).endpoint == "C"
    assert P.ode_residual(expander33) < 1e-6


def test_expander_K_scaling(expander33):
    sp = sp_of(3, 3.0)
    Ks = [0.5, 1.0, 2.0, 4.0]
    D = [P.solve_expander_profile(sp, K).farAmplitude for K in Ks]
    assert np.all(np.diff(D) > 0)
    h2 = P.solve_expander_profile(sp, 2.0)
    # K -> K lam^(2/n - theta) under f -> lam^(2/n) f(lam r)
    lam = 2.0 ** (1 / (2 / sp.model.n - sp.theta))
    r = np.geomspace(0.1, 10, 30)
    np.testing.assert_allclose(h2(r), lam ** (2 / sp.model.n) * expander33(lam * r), rtol=1e-6)


# ------------------------------------------------------------- phase plane


def test_cylinder_orbit_at_D():
    mp = derive_exponents(3)
    orbit = P.to_phase_orbit(P.cylinder_profile(mp))
    np.testing.assert_allclose(orbit.X, -2 / mp.n, rtol=1e-8)
    np.testing.assert_allclose(orbit.Y, mp.cStar, rtol=1e-10)
    assert orbit.endpoint == "D"


def test_barenblatt_orbit():
    orbit = P.to_phase_orbit(P.barenblatt_profile(derive_exponents(3), 1.0))
    assert orbit.endpoint == "D"
    assert orbit.start == "E"


def test_critical_points():
    cp = P.critical_points(derive_exponents(3))
    assert cp == {"E": (0.0, 0.0), "C": (-5.0, 0.0), "D": (-2.5, 1.0)}


@pytest.mark.parametrize("which", ["smooth33", "singular33", "expander33"])
def test_orbit_kinematics(which, request):
    prof = request.getfixturevalue(which)
    orbit = P.to_phase_orbit(prof)
    n = prof.params.model.n
    dY = np.gradient(orbit.Y, orbit.s, edge_order=2)
    rel = np.abs(dY - (2 + n * orbit.X) * orbit.Y) / np.maximum(np.abs(dY), np.abs(orbit.Y))
    # central differences on Y ~ exp(k s) carry a relative error of (k h)^2 / 6
    k = np.max(np.abs(2 + n * orbit.X))
    h = np.max(np.diff(orbit.s))
    assert np.max(rel[2:-2]) < 2 * (k * h) ** 2 / 6 + 1e-6


def test_phase_rhs_vanishes_at_critical_points():
    sp = sp_of(3, 3.0)
    for X, Y in P.critical_points(sp.model).values():
        dX, dY = P.phase_rhs(sp, X, Y)
        assert abs(dY) < 1e-12
        if Y == 0:
            assert abs(dX) < 1e-12


def test_orbit_solves_phase_system(smooth33):
    sp = smooth33.params
    orbit = P.to_phase_orbit(smooth33)
    dX, _ = P.phase_rhs(sp, orbit.X, orbit.Y)
    num = np.gradient(orbit.X, orbit.s, edge_order=2)
    sel = slice(10, -10)
    np.testing.assert_allclose(num[sel], dX[sel], atol=1e-4)


# ------------------------------------------------------------ cylindrical view


def test_cylinder_deviation_zero():
    dev = P.to_cylindrical_deviation(P.cylinder_profile(derive_exponents(3)))
    assert np.all(dev.w == 0)


def test_deviation_signs(smooth33):
    dev = P.to_cylindrical_deviation(smooth33)
    assert np.all(dev.w < 0) and np.all(dev.w > -1)
    dev4 = P.to_cylindrical_deviation(P.solve_smooth_profile(sp_of(4, 1.45)))
    far = dev4.s > dev4.s_ref + 0.5 * dev4.s_span
    assert np.all(dev4.w[far] > 0)


def test_deviation_matches_f_space_amplitude(smooth33):
    dev = P.to_cylindrical_deviation(smooth33)
    m = smooth33.params.model.m
    tf = smooth33.tailFit
    s = dev.s[-50:]
    np.testing.assert_allclose(dev.w[-50:], -m * tf.bHat * np.exp(-tf.gammaHat * s), rtol=0.02)


def test_expander_has_no_deviation(expander33):
    with pytest.raises(NotApplicable):
        P.to_cylindrical_deviation(expander33)


def test_slow_mode_identity(smooth33):
    chk = P.verify_slow_mode_amplitude(P.to_cylindrical_deviation(smooth33))
    assert chk.I1 > 0
    assert chk.mismatch < 0.10


def test_slow_mode_positive_tail():
    chk = P.verify_slow_mode_amplitude(P.to_cylindrical_deviation(P.solve_smooth_profile(sp_of(4, 1.45))))
    assert chk.predicted > 0 and chk.fitted > 0


def test_slow_mode_cylinder_degenerate():
    mp = derive_exponents(3)
    dev = P.to_cylindrical_deviation(P.cylinder_profile(mp, 3.0))
    chk = P.verify_slow_mode_amplitude(dev)
    assert chk.degenerate and chk.I1 == 0.0


def test_slow_mode_not_applicable_at_beta1():
    mp = derive_exponents(3)
    dev = P.to_cylindrical_deviation(P.barenblatt_profile(mp, 1.0))
    with pytest.raises(NotApplicable):
        P.verify_slow_mode_amplitude(dev)


# ----------------------------------------------------------------- scaling


@settings(max_examples=15)
@given(lam=st.floats(0.25, 4.0))
def test_rescaled_is_a_profile(smooth33, lam):
    g = P.rescaled(smooth33, lam)
    n = smooth33.params.model.n
    r = np.geomspace(1e-2, 1e2, 20)
    np.testing.assert_allclose(g(r), lam ** (2 / n) * smooth33(lam * r), rtol=1e-12)
    assert g.tailFit.bHat == pytest.approx(smooth33.tailFit.bHat * lam ** (-smooth33.tailFit.gammaHat))


def test_with_tail_amplitude(smooth33):
    g = P.with_tail_amplitude(smooth33, 0.25)
    refit = P.fit_tail(g)
    assert refit.bHat == pytest.approx(0.25, rel=0.02)


# ---------------------------------------------------------------------- io


def test_profile_csv_round_trip(tmp_path, singular33):
    path = tmp_path / "g.csv"
    P.write_profile_csv(singular33, path)
    assert path.read_text(encoding="utf-8").startswith("# kind,N,beta,amp\n# Singular,3,3.0,1.0\nr,f\n")
    r, f, meta = P.read_profile_csv(path)
    np.testing.assert_array_equal(r, singular33.grid)
    np.testing.assert_array_equal(f, singular33.values)
    assert meta == {"kind": "Singular", "N": 3, "beta": 3.0, "amp": 1.0}


def test_diagnostics_keys(singular33):
    d = P.profile_diagnostics(singular33)
    assert {"gammaHat", "bHat", "residual", "endpoint"} <= set(d)
    assert d["endpoint"] == "D"
