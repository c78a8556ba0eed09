import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vbob import load_builtin
from vbob.fields import Field
from vbob.modelfile import leaf_sphere
from vbob.poisson import NotLeafTangent, area_scan, cotangent_algebroid, leaf_symplectic_area, mon_variation


def closed_area(r, e):
    return 4 * np.pi * r / (1 + e * e / 2)


def closed_grad(r, e):
    q = 1 + e * e / 2
    return np.array([4 * np.pi / q, -4 * np.pi * r * e / q ** 2])


@pytest.fixture(scope="module")
def su2():
    return load_builtin("su2-star")


@pytest.fixture(scope="module")
def piE(su2):
    return su2.poissons["E"]


@pytest.mark.parametrize("r,e", [(1.0, 0.0), (2.0, 1.0), (0.5, -0.7), (1.3, 0.4)])
def test_area_law(su2, piE, r, e):
    res = leaf_symplectic_area(piE, leaf_sphere(su2, r, e), detail=True)
    assert res.area == pytest.approx(closed_area(r, e), rel=1e-6)
    assert res.error_estimate < 1e-6
    assert res.max_tangency_residual < 1e-9


def test_worked_value(su2, piE):
    assert leaf_symplectic_area(piE, leaf_sphere(su2, 2.0, 1.0)) == pytest.approx(16.7551608191, abs=1e-6)


@pytest.mark.parametrize("lam", [0.5, 3.0])
def test_rescaling_inverts_area(su2, piE, lam):
    g = leaf_sphere(su2, 1.2, 0.3)
    a = leaf_symplectic_area(piE, g)
    assert leaf_symplectic_area(piE.scaled(lam), g) == pytest.approx(a / lam, rel=1e-10)


def test_sign_flips_orientation(su2, piE):
    g = leaf_sphere(su2, 1.0, 0.0)
    assert leaf_symplectic_area(piE, g, sign=+1) == pytest.approx(-leaf_symplectic_area(piE, g), rel=1e-14)


@pytest.mark.parametrize("r,e", [(1.0, 0.0), (1.0, 1.0), (1.5, -0.5)])
def test_variation_matches_closed_form(su2, piE, r, e):
    g = mon_variation(lambda a, b: leaf_symplectic_area(piE, leaf_sphere(su2, a, b), 101), (r, e))
    assert np.allclose(g, closed_grad(r, e), atol=1e-3)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(0.05, 1.0))
def test_parity_in_e(r, e):
    m = load_builtin("su2-star")
    P = m.poissons["E"]
    area = lambda a, b: leaf_symplectic_area(P, leaf_sphere(m, a, b), 51)
    gp, gm = mon_variation(area, (r, e)), mon_variation(area, (r, -e))
    assert gp[0] == pytest.approx(gm[0], rel=1e-8)
    assert gp[1] == pytest.approx(-gm[1], rel=1e-8)


def test_transverse_sphere_is_rejected(su2, piE):
    bad = Field.from_expressions(["sin(pi*s)*cos(2*pi*t)", "sin(pi*s)*sin(2*pi*t)", "cos(pi*s)",
                                 "0.3*sin(pi*s)*sin(2*pi*t)"], ["t", "s"])
    with pytest.raises(NotLeafTangent):
        leaf_symplectic_area(piE, bad, 21)


def test_grid_validation(su2, piE):
    with pytest.raises(ValueError):
        leaf_symplectic_area(piE, leaf_sphere(su2, 1, 0), 20)
    with pytest.raises(ValueError):
        mon_variation(lambda a, b: a, (1, 0), h=0)


def test_scan_order_and_values(su2, piE):
    rows = area_scan(piE, lambda r, e: leaf_sphere(su2, r, e), [0.5, 1.0], [-1.0, 0.0, 1.0], N=101)
    assert [(r.r, r.e) for r in rows] == [(a, b) for a in (0.5, 1.0) for b in (-1.0, 0.0, 1.0)]
    for row in rows:
        assert row.area == pytest.approx(closed_area(row.r, row.e), rel=1e-6)
        assert np.allclose([row.dA_dr, row.dA_de], closed_grad(row.r, row.e), atol=1e-3)
    assert set(rows[0].as_dict()) == {"r", "e", "area", "error_estimate", "dA_dr", "dA_de"}


def test_cotangent_algebroid_is_valid(piE):
    from vbob import check_axioms
    assert check_axioms(cotangent_algebroid(piE), n_points=40).passes(1e-9)
