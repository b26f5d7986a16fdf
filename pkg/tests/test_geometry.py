import math

import numpy as np
import pytest
import sympy as sy

from yfs import flow as F
from yfs import profiles as P
from yfs.errors import DomainError
from yfs.geometry import CurvatureReport, cylinder_curvature, scalar_curvature
from yfs.model import derive_exponents, similarity_params


def symbolic_curvature(expr, rs, N):
    """``-(4(N-1)/(N-2)) u^-1 Lap(u^m)`` differentiated by sympy."""
    m = sy.Rational(N - 2, N + 2)
    w = expr**m
    lap = sy.diff(w, rs, 2) + (N - 1) / rs * sy.diff(w, rs)
    R = -sy.Rational(4 * (N - 1), N - 2) * lap / expr
    return sy.lambdify(rs, sy.simplify(R), "numpy")


def barenblatt_expr(N, lam, d):
    rs = sy.symbols("r", positive=True)
    mp = derive_exponents(N)
    n = sy.Rational(4, N + 2)
    cstar = N - 2
    b1 = sy.Rational(mp.p).limit_denominator(100) / 2
    expr = (cstar * d / (lam**2 * d ** (-2 * b1) + rs**2)) ** (1 / n)
    return rs, expr


def test_cylinder_closed_form():
    assert cylinder_curvature(3, 1.0, 0.0) == 2.0
    assert cylinder_curvature(6, 2.0, 1.0) == 5.0
    for bad in [(2, 1.0, 0.0), (3, 1.0, 1.0), (3, 1.0, 2.0)]:
        with pytest.raises(DomainError):
            cylinder_curvature(*bad)


@pytest.mark.parametrize("N", [3, 5, 10])
def test_cylinder_field_curvature(N):
    mp = derive_exponents(N)
    r = np.geomspace(1.0, 10.0, 400)
    u = F.cylinder_solution(mp, 1.0)(r, 0.5)
    rep = scalar_curvature(u, r=r, N=N, t=0.5)
    np.testing.assert_allclose(rep.R, cylinder_curvature(N, 1.0, 0.5), rtol=1e-3)
    assert rep.relative_variation < 1e-3
    assert rep.sign_pattern == "+"


def test_cylinder_symbolic_agrees():
    rs = sy.symbols("r", positive=True)
    R = symbolic_curvature((sy.Integer(1) * sy.Rational(1, 2) / rs**2) ** sy.Rational(5, 4), rs, 3)
    np.testing.assert_allclose(R(np.array([1.0, 3.0])), 4.0, rtol=1e-12)


@pytest.mark.parametrize("N, lam, d", [(3, 1, sy.Rational(1, 2)), (6, 2, sy.Integer(1)), (10, 1, sy.Rational(1, 4))])
def test_barenblatt_against_symbolic(N, lam, d):
    rs, expr = barenblatt_expr(N, lam, d)
    exact = symbolic_curvature(expr, rs, N)
    u = sy.lambdify(rs, expr, "numpy")
    errs = []
    for pts in (200, 400, 800):
        r = np.geomspace(1e-2, 1e2, pts)
        rep = scalar_curvature(u, r=r, N=N)
        errs.append(np.max(np.abs(rep.R / exact(rep.r) - 1)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)
    assert errs[-1] < 1e-3


def test_generic_function_against_symbolic():
    rs = sy.symbols("r", positive=True)
    expr = sy.Rational(1, 2) + sy.exp(-rs**2 / 4)
    exact = symbolic_curvature(expr, rs, 4)
    u = sy.lambdify(rs, expr, "numpy")
    errs = []
    for pts in (300, 600, 1200):
        r = np.geomspace(0.05, 8.0, pts)
        rep = scalar_curvature(u, r=r, N=4)
        errs.append(np.max(np.abs(rep.R - exact(rep.r))) / np.max(np.abs(exact(rep.r))))
    assert math.log2(errs[0] / errs[1]) >= 1.9 and math.log2(errs[1] / errs[2]) >= 1.9
    assert "-" in scalar_curvature(u, r=np.geomspace(0.05, 8.0, 600), N=4).sign_pattern


def test_nonuniform_grid_second_order():
    rs, expr = barenblatt_expr(3, 1, sy.Integer(1))
    exact = symbolic_curvature(expr, rs, 3)
    u = sy.lambdify(rs, expr, "numpy")
    errs = []
    for pts in (200, 400, 800):
        s = np.linspace(0, 1, pts)
        r = 1e-2 * 1e4 ** (s + 0.1 * np.sin(2 * np.pi * s) / (2 * np.pi))
        rep = scalar_curvature(u, r=r, N=3)
        errs.append(np.max(np.abs(rep.R / exact(rep.r) - 1)))
    assert math.log2(errs[1] / errs[2]) >= 1.9


def test_barenblatt_profile_positive():
    rep = scalar_curvature(P.barenblatt_profile(derive_exponents(3), 1.0))
    assert rep.min > 0 and rep.sign_pattern == "+"


@pytest.mark.parametrize("kind", ["smooth", "singular"])
def test_tail_curvature_tends_to_cylinder(kind):
    sp = similarity_params(derive_exponents(3), 3.0)
    solver = P.solve_smooth_profile if kind == "smooth" else P.solve_singular_profile
    prof = solver(sp, 1.0)
    rep = scalar_curvature(prof, window=(1e6, 1e9))
    # the rescaled profile is the solution at T - t = 1
    np.testing.assert_allclose(rep.R, cylinder_curvature(3, 1.0, 0.0), rtol=1e-2)


def test_field_input_and_window():
    mp = derive_exponents(3)
    grid = F.make_grid(3, 0.0, 10.0, 300)
    f = F.RadialField(grid=grid, values=F.barenblatt_solution(mp, 1.0, 1.0)(grid.r, 0.5), t=0.5,
                      inner=F.neumann(), outer=F.neumann())
    rep = scalar_curvature(f, window=(0.1, 5.0))
    assert rep.t == 0.5 and rep.N == 3
    assert rep.r[0] > 0.1 and rep.r[-1] < 5.0
    with pytest.raises(DomainError):
        scalar_curvature(f, r=grid.r)


@pytest.mark.parametrize("values", [[1.0, 0.0, 1.0, 1.0], [1.0, -1.0, 1.0, 1.0], [1.0, np.nan, 1.0, 1.0]])
def test_nonpositive_values_rejected(values):
    with pytest.raises(DomainError):
        scalar_curvature(np.array(values), r=np.array([1.0, 2.0, 3.0, 4.0]), N=3)


def test_input_validation():
    with pytest.raises(DomainError):
        scalar_curvature(np.ones(4), r=np.array([1.0, 3.0, 2.0, 4.0]), N=3)
    with pytest.raises(DomainError):
        scalar_curvature(np.ones(2), r=np.array([1.0, 2.0]), N=3)
    with pytest.raises(DomainError):
        scalar_curvature(np.ones(4), r=np.arange(1.0, 5.0))
    with pytest.raises(DomainError):
        scalar_curvature(np.ones(3), r=np.arange(1.0, 5.0), N=3)


def test_origin_dropped():
    r = np.array([0.0, 1.0, 2.0, 3.0])
    rep = scalar_curvature(lambda x: 1 + x, r=r, N=3)
    assert rep.r.tolist() == [2.0]


def test_report_csv(tmp_path):
    rep = CurvatureReport(r=np.array([1.0, 2.0]), R=np.array([3.0, -1.0]), N=3)
    assert rep.sign_pattern == "+-"
    rep.write_csv(tmp_path / "c.csv", header=["N=3"])
    lines = (tmp_path / "c.csv").read_text(encoding="utf-8").splitlines()
    assert lines == ["# N=3", "r,R", "1,3", "2,-1"]
    assert rep.summary()["min"] == -1.0
