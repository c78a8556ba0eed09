import numpy as np
import pytest

from vbob import (ChartDomain, RepUTHGroupoid, builtin_names, differentiate_ruth, integrate_flat_split,
                  load_builtin, load_text, ruth_axiom_residuals, vb_groupoid_from_ruth)
from vbob.ruth import LITERAL, RuthAxiomError, flat_trivial_ruth

LINE = "name = probe\n[chart]\ncoordinates = x\nbounds = -1:1\n"


def ruth_model(body):
    return load_text(LINE + "[ruth]\nrank_e = 1\nrank_c = 1\n" + body).ruth


RUTH_MODELS = [n for n in builtin_names() if load_builtin(n).ruth is not None]


@pytest.mark.parametrize("name", RUTH_MODELS)
def test_builtin_representations_satisfy_axioms(name):
    rep = ruth_axiom_residuals(load_builtin(name).ruth)
    assert rep.passes(1e-9)
    assert rep.unitality <= 1e-10 and rep.normalization <= 1e-10


def test_flat_representation_is_exact():
    R = load_builtin("pair-ruth-flat").ruth
    assert ruth_axiom_residuals(R).max_residual() == 0.0
    D = differentiate_ruth(R, R.domain.sample(10))
    for arr in (D.conn_c, D.conn_e, D.omega, D.core_anchor):
        assert not np.any(arr)
    D = differentiate_ruth(flat_trivial_ruth(ChartDomain(((0, 1),) * 2), 2, 1), [[0.2, 0.3], [0.5, 0.9]])
    assert not np.any(D.conn_c) and not np.any(D.conn_e) and not np.any(D.omega)


def test_exponential_rate_matches_difference_quotient():
    R = load_builtin("pair-ruth-exp").ruth
    x = np.linspace(-0.9, 0.9, 7)[:, None]
    D = differentiate_ruth(R, x)
    h = 1e-6
    oracle = (np.exp((x + h) ** 2 - x ** 2) - np.exp((x - h) ** 2 - x ** 2)) / (2 * h)
    assert np.allclose(D.rate_c[:, 0, 0, 0], oracle[:, 0], atol=1e-7)
    assert np.allclose(D.conn_e[:, 0, 0, 0], -2 * x[:, 0], atol=1e-7)


@pytest.mark.parametrize("delta", [1e-3, 0.05, 0.4])
def test_known_defect_is_measured(delta):
    R = ruth_model(f"core_anchor = 1\nomega = {delta}\n")
    rep = ruth_axiom_residuals(R)
    assert rep.corrected["quasi_action_C"] == pytest.approx(delta, rel=1e-12)
    assert rep.corrected["quasi_action_E"] == pytest.approx(delta, rel=1e-12)
    assert rep.normalization == pytest.approx(delta, rel=1e-12)
    assert rep.corrected["cocycle"] < 1e-15


def test_off_cocycle_data_breaks_associativity():
    R = ruth_model("core_anchor = 0\nomega = 0.3*x_2*x_0 + 0.1*x_1\n")
    with pytest.raises(RuthAxiomError):
        vb_groupoid_from_ruth(R)
    _, rep = vb_groupoid_from_ruth(R, check=False)
    assert rep.associativity >= 1e-3


def test_vb_groupoid_structure_maps():
    R = load_builtin("pair-ruth-area").ruth
    V, rep = vb_groupoid_from_ruth(R)
    assert rep.source_residual == 0.0 and rep.associativity < 1e-12
    assert rep.target_residual < 1e-12
    assert R.groupoid.structure_residual() <= 1e-10
    e = np.array([[0.3]])
    c, g, e2 = V.unit(e, np.array([[0.1, 0.2]]))
    assert not np.any(c) and np.array_equal(e2, e)


def test_gauge_model_needs_the_corrected_convention():
    R = load_builtin("pair-ruth-gauge").ruth
    rep = ruth_axiom_residuals(R)
    assert rep.passes(1e-9)
    assert rep.max_residual(LITERAL) > 0.1
    with pytest.raises(RuthAxiomError):
        vb_groupoid_from_ruth(R, convention=LITERAL)


def test_area_cocycle_differentiates_to_constant_form():
    R = load_builtin("pair-ruth-area").ruth
    D = differentiate_ruth(R, R.domain.sample(10))
    assert np.allclose(D.omega[:, 0, 1, 0, 0], 1.7, atol=1e-6)
    assert np.allclose(D.omega[:, 1, 0, 0, 0], -1.7, atol=1e-6)


@pytest.mark.parametrize("name", ["pair-ruth-gauge", "t1-toy"])
def test_roundtrip_through_the_integrated_groupoid(name):
    V = load_builtin(name).split
    VG, rep = vb_groupoid_from_ruth(integrate_flat_split(V))
    assert rep.associativity < 1e-9
    x = V.base.domain.sample(12, seed=4) * 0.9
    D = differentiate_ruth(VG.rep, x)
    assert np.max(np.abs(D.conn_e - V.conn_e.evaluate(x))) <= 1e-5
    assert np.max(np.abs(D.conn_c - V.conn_c.evaluate(x))) <= 1e-5
    assert np.max(np.abs(D.core_anchor - V.core_anchor.evaluate(x))) == 0.0
    assert not np.any(D.omega)


def test_gauge_representation_differentiates_to_its_split_data():
    m = load_builtin("pair-ruth-gauge")
    x = m.split.base.domain.sample(12, seed=2) * 0.9
    D = differentiate_ruth(m.ruth, x)
    assert np.max(np.abs(D.conn_e - m.split.conn_e.evaluate(x))) <= 1e-6


def test_differentiation_is_linear_in_small_perturbations():
    x = np.array([[-0.3], [0.2], [0.6]])
    base = differentiate_ruth(ruth_model("delta_c = exp(x_t^2 - x_s^2)\n"), x).conn_c
    change = []
    for eps in (1e-3, 2e-3):
        R = ruth_model(f"delta_c = exp(x_t^2 - x_s^2) + {eps}*sin(3*(x_t - x_s))*(1 + x_s)\n")
        change.append(differentiate_ruth(R, x).conn_c - base)
    ratio = change[1] / change[0]
    assert np.all(np.abs(ratio - 2.0) < 0.1)


def test_shape_validation():
    dom = ChartDomain(((0, 1),))
    R = flat_trivial_ruth(dom, 1, 1)
    with pytest.raises(ValueError):
        RepUTHGroupoid(dom, 2, 1, R.core_anchor, R.delta_c, R.delta_e, R.omega)
    with pytest.raises(ValueError):
        differentiate_ruth(R, [[0.5]], step=0.0)
