import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.stats import ortho_group

from vbob import (ChartDomain, Field, FrameAlgebroid, SplitVBA, build_total_algebroid, check_axioms,
                  compat_residuals, curvature, decompose_regular, shift_splitting, tangent_algebroid)
from vbob.algebroid import StructuralError
from vbob.split import (antisymmetric_pairs, core_anchor_injective, decompose_matrix, decompose_path,
                        structural_degree_check)

PLANE = ChartDomain(((-1, 1), (-1, 1)), ("x", "y"))
KX = [["x*y", "1"], ["0", "y"]]
KY = [["0", "x^2"], ["sin(x)", "0"]]


def curved_plane():
    T = tangent_algebroid(PLANE)
    conn = {0: Field.from_expressions(KX, PLANE.names), 1: Field.from_expressions(KY, PLANE.names)}
    return SplitVBA.build(T, 2, 2, conn_e=conn, conn_c=conn, name="curved")


def leg_transport(G, p, q):
    """exp of the transport generator along the straight leg p -> q (midpoint rule)."""
    mid = 0.5 * (p + q)
    th = np.einsum("i,iab->ab", q - p, G(mid))
    return expm(-th)


@pytest.mark.parametrize("point", [(0.1, 0.2), (-0.4, 0.5), (0.3, -0.6)])
def test_curvature_matches_small_loop_holonomy(point):
    V = curved_plane()
    G = lambda x: V.conn_e.evaluate(np.asarray(x))
    R12 = curvature(V).evaluate(np.array(point))[0, 1]
    x0 = np.array(point)
    for eps in (2e-3, 1e-3):
        corners = [x0, x0 + [eps, 0], x0 + [eps, eps], x0 + [0, eps], x0]
        H = np.eye(2)
        for p, q in zip(corners[:-1], corners[1:]):
            H = leg_transport(G, p, q) @ H
        # hol = I - eps^2 R12 + O(eps^3)
        assert np.max(np.abs((H - np.eye(2)) / eps ** 2 + R12)) < 10 * eps


def test_curvature_is_exactly_antisymmetric():
    R = curvature(curved_plane(), "C").evaluate(PLANE.sample(20))
    assert np.array_equal(R, -np.swapaxes(R, 1, 2))


def test_builtin_splits_are_compatible(su2, solid):
    assert compat_residuals(su2.split).passes(1e-6)
    assert compat_residuals(solid.split).max_residual <= 1e-8


def test_solid_angle_form_is_closed_by_differences(solid):
    V = solid.split
    x = V.base.domain.sample(20, seed=9)
    h = 1e-5
    w = lambda p: V.omega.evaluate(p)[:, :, :, 0, 0]

    def d(k, i, j):
        e = np.zeros(3)
        e[k] = h
        return (w(x + e)[:, i, j] - w(x - e)[:, i, j]) / (2 * h)

    closed = d(0, 1, 2) + d(1, 2, 0) + d(2, 0, 1)
    assert np.max(np.abs(closed)) < 1e-6
    assert compat_residuals(V, points=x).omega_closed < 1e-8


def perturbed(V, extra):
    """Split data with ``extra`` added to the (0, 1) entry of omega."""
    m, r = V.base.dim, V.base.rank
    bump = antisymmetric_pairs(m, r, (V.rank_c, V.rank_e), {(0, 1): Field.from_expressions([[extra]], V.base.domain.names)})
    return V.with_omega(Field(m, V.omega.shape, lambda X: V.omega.apply(X) + bump.apply(X)), name="bumped")


@pytest.mark.parametrize("model,extra", [("su2", "0.01*x"), ("solid", "0.01*z")])
def test_omega_perturbation_is_detected(model, extra, request):
    V = request.getfixturevalue(model).split
    rep = compat_residuals(perturbed(V, extra))
    assert rep.omega_closed > 1e-3


@pytest.mark.parametrize("model", ["su2", "solid", "t1"])
def test_total_algebroid_passes_when_compat_passes(model, request):
    V = request.getfixturevalue(model).split
    assert compat_residuals(V).passes()
    assert check_axioms(build_total_algebroid(V)).passes(1e-6)


def test_total_algebroid_fails_when_compat_fails(su2):
    V = perturbed(su2.split, "0.01*x")
    assert not compat_residuals(V).passes()
    assert not check_axioms(build_total_algebroid(V)).passes(1e-6)


def test_total_bracket_table_matches_declared(su2):
    D = su2.algebroids["D"]
    T = build_total_algebroid(su2.split)
    x = D.domain.sample(100)
    assert np.max(np.abs(T.structure.evaluate(x) - D.structure.evaluate(x))) <= 1e-9
    assert np.max(np.abs(T.anchor.evaluate(x) - D.anchor.evaluate(x))) <= 1e-9
    flipped = build_total_algebroid(su2.split, sign=-1)
    assert np.max(np.abs(flipped.structure.evaluate(x) - D.structure.evaluate(x))) > 1.0


def test_degree_check(su2):
    D = su2.algebroids["D"]
    assert structural_degree_check(D).max_violation < 1e-12

    def fn(X):
        out = D.structure.apply(X).copy()
        out[3, 0, 1] = out[3, 0, 1] + X[3] * X[3]
        out[3, 1, 0] = out[3, 1, 0] - X[3] * X[3]
        return out

    bent = FrameAlgebroid(D.domain, D.rank, D.anchor, Field(D.dim, D.structure.shape, fn), D.frame,
                          linear_rank=3, base_dim=3)
    assert structural_degree_check(bent).linear_linear >= 0.5


def test_decompose_types(su2, t1):
    assert decompose_regular(su2.split, [0.3, 0.4, 0.5]).label == "type0"
    dec = decompose_regular(t1.split, [0.1, 0.2])
    assert dec.label == "type1" and dec.rank == 2
    assert core_anchor_injective(t1.split) and not core_anchor_injective(su2.split)


def test_nonregular_path_is_flagged():
    d = Field.from_expressions([["1", "0"], ["0", "x"]], PLANE.names)
    V = SplitVBA.build(tangent_algebroid(PLANE), 2, 2, core_anchor=d)
    assert decompose_regular(V, [0.5, 0.0]).label == "type1"
    assert decompose_regular(V, [0.0, 0.0]).label == "mixed"
    _, regular = decompose_path(V, [[-0.5, 0.0], [0.0, 0.0], [0.5, 0.0]])
    assert not regular
    _, regular = decompose_path(V, [[0.2, 0.0], [0.5, 0.3]])
    assert regular


def test_decomposition_bases_are_consistent(rng):
    d = rng.standard_normal((3, 2)) @ np.diag([1.0, 0.0]) @ rng.standard_normal((2, 2))
    dec = decompose_matrix(d)
    assert dec.rank == 1 and dec.label == "mixed"
    assert np.max(np.abs(d @ dec.kernel)) < 1e-12
    assert np.allclose(d @ dec.preimage, dec.image)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 3), st.integers(1, 3), st.integers(1, 3))
def test_decomposition_is_frame_invariant(seed, k, e, c):
    rng = np.random.default_rng(seed)
    k = min(k, e, c)
    d = rng.standard_normal((e, k)) @ rng.standard_normal((k, c))
    qe = ortho_group.rvs(e, random_state=seed) if e > 1 else np.array([[-1.0]])
    qc = ortho_group.rvs(c, random_state=seed + 1) if c > 1 else np.array([[1.0]])
    a, b = decompose_matrix(d), decompose_matrix(qe @ d @ qc)
    assert (a.rank, a.label) == (b.rank, b.label)


def test_shift_keeps_compatibility(solid):
    names = solid.split.base.domain.names
    phi = Field.from_expressions([[["x*y"]], [["sin(z)"]], [["x^2 - y"]]], names)
    W = shift_splitting(solid.split, phi)
    assert compat_residuals(W).max_residual < 1e-8
    with pytest.raises(StructuralError):
        shift_splitting(solid.split, Field.zeros(3, (3, 2, 1)))
