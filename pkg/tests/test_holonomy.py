import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from vbob import (ASphereFrame, ASpherePullback, ChartDomain, Field, holonomy_curvature_residual, pullback_sphere,
                  sphere_morphism_residual, tangent_algebroid, tangent_lift, transport)
from vbob.holonomy import linear_family, slice_holonomies, synthetic_pullback, unit_sphere_map

K = np.array([[0.4, -1.3, 0.2], [0.9, 0.1, -0.5], [-0.3, 0.7, 0.6]])


@pytest.mark.parametrize("scale", [0.1, 0.5, 1.0])
def test_constant_form_matches_matrix_exponential(scale):
    th = scale * K
    res = transport(lambda t, s: th, 0.3, N=200)
    assert np.max(np.abs(res.holonomy - expm(-th))) <= 1e-10
    assert res.convention == "dtau=-theta*tau"


def test_scalar_transport_matches_quadrature():
    f = lambda t: np.sin(3 * t) + t ** 2
    res = transport(lambda t, s: f(t)[..., None, None], 0.0, N=200)
    assert res.holonomy[0, 0] == pytest.approx(np.exp(-quad(f, 0, 1)[0]), abs=1e-11)


def test_zero_form_gives_identity_exactly():
    res = transport(Field.zeros(2, (3, 3)), 0.5)
    assert np.array_equal(res.holonomy, np.eye(3))


def varying(t, s):
    return np.multiply.outer(np.sin(2 * t) + s, K) + np.multiply.outer(t ** 2, K.T)


def test_composition_law_on_a_fixed_grid():
    full = transport(varying, 0.4, 0.0, 1.0, 200).holonomy
    first = transport(varying, 0.4, 0.0, 0.35, 70).holonomy
    second = transport(varying, 0.4, 0.35, 1.0, 130).holonomy
    assert np.max(np.abs(second @ first - full)) <= 1e-9


def test_inverse_law():
    forward = transport(varying, 0.2, N=200).holonomy
    backward = transport(lambda t, s: -varying(1.0 - t, s), 0.2, N=200).holonomy
    assert np.max(np.abs(backward @ forward - np.eye(3))) <= 1e-9


def test_slice_holonomies_agree_with_transport():
    P = synthetic_pullback()
    tn = np.linspace(0, 1, 101)
    H = slice_holonomies(P.theta_e_t, tn, np.array([0.25, 0.6]))
    for j, s in enumerate((0.25, 0.6)):
        assert np.allclose(H[j, -1], transport(P.theta_e_t, s, N=100).holonomy, atol=1e-14)


def test_transport_rejects_bad_arguments():
    with pytest.raises(ValueError):
        transport(lambda t, s: K, 0.0, N=1)
    with pytest.raises(ValueError):
        transport(lambda t, s: K, 0.0, 0.7, 0.2)


PLANE = ChartDomain(((-1, 1), (-1, 1)), ("x", "y"))
BUMP = Field.from_expressions(["sin(pi*t)*sin(pi*s)^2", "t*s*(1 - t)*(1 - s)*(1 + t)"], ("t", "s"))


def test_tangent_lift_of_collapsing_map_over_the_plane():
    rep = sphere_morphism_residual(tangent_lift(tangent_algebroid(PLANE), BUMP))
    assert rep.passes(1e-6) and rep.interior_residual <= 1e-12


def test_tangent_lift_of_builtin_sphere():
    R3 = ChartDomain(((-2, 2),) * 3, ("x", "y", "z"))
    gamma = unit_sphere_map()
    rep = sphere_morphism_residual(tangent_lift(tangent_algebroid(R3), gamma))
    assert rep.passes(1e-6)
    pts = np.random.default_rng(0).uniform(0.05, 0.95, (200, 2))
    g, dg = gamma.jet(pts)
    assert np.allclose(np.linalg.norm(g, axis=-1), 1.0)
    orient = np.einsum("ni,ni->n", g, np.cross(dg[..., 0], dg[..., 1]))
    assert np.all(orient > 0)


def test_sphere_check_on_model_spheres(su2):
    assert sphere_morphism_residual(su2.spheres["iso"]).passes()
    bad = sphere_morphism_residual(su2.spheres["leaf-candidate"])
    assert bad.anchor_residual < 1e-9 and bad.pde_residual > 1.0


def test_non_collapsing_map_fails_boundary():
    gamma = Field.from_expressions(["0.5*t", "0.5*s"], ("t", "s"))
    rep = sphere_morphism_residual(tangent_lift(tangent_algebroid(PLANE), gamma))
    assert rep.interior_residual < 1e-12 and rep.boundary_residual > 0.1 and not rep.passes()


def test_pullback_is_bilinear_in_the_sphere(solid):
    sigma = solid.spheres["round"]
    V = solid.split
    pts = np.random.default_rng(1).uniform(0.1, 0.9, (50, 2))
    W = pullback_sphere(sigma, V).W.evaluate(pts)
    g = sigma.gamma.evaluate(pts)
    a, b = sigma.a.evaluate(pts), sigma.b.evaluate(pts)
    w = V.omega.evaluate(g)[..., 0, 0]
    direct = np.einsum("nij,ni,nj->n", w, a, b)
    assert np.allclose(W[:, 0, 0], direct, atol=1e-12)
    twice = ASphereFrame(sigma.base, sigma.gamma, sigma.a.scaled(2.0), sigma.b, "twice")
    assert np.allclose(pullback_sphere(twice, V).W.evaluate(pts), 2 * W, atol=1e-12)


def test_flat_family_holcheck():
    # Theta = g^-1 dg is flat; the identity then reduces to its boundary terms
    P = linear_family(np.zeros((2, 2)), np.zeros((2, 2)))
    assert holonomy_curvature_residual(P, "E", 64) == 0.0
    L = linear_family(K[:2, :2], K[1:, 1:])
    assert holonomy_curvature_residual(L, "C", 200) <= 1e-6


def test_holcheck_converges_at_second_order():
    P = synthetic_pullback()
    r1 = holonomy_curvature_residual(P, "E", 100)
    r2 = holonomy_curvature_residual(P, "E", 200)
    assert r2 <= 1e-4
    assert np.log2(r1 / r2) >= 1.9


def test_reparameterized_and_shifted_shapes():
    P = synthetic_pullback()
    Q = P.shifted(Field.zeros(2, (2, 2)), Field.zeros(2, (2, 2)))
    pts = np.array([[0.3, 0.7]])
    assert np.array_equal(Q.W.evaluate(pts), P.W.evaluate(pts))
    with pytest.raises(ValueError):
        ASpherePullback.trivial(Field.zeros(3, (1, 1)))
