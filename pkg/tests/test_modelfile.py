import numpy as np
import pytest

from vbob import (ModelError, builtin_names, check_axioms, compat_residuals, load_builtin, load_file, load_text,
                  morphism_residual, ruth_axiom_residuals)
from vbob.holonomy import ASphereFrame, sphere_morphism_residual
from vbob.models import UnknownModel, builtin_text, load_model

HEAD = "name = m\n[chart]\ncoordinates = x, y\nbounds = -1:1, -1:1\n"


def error_of(text):
    with pytest.raises(ModelError) as info:
        load_text(text)
    return info.value


def test_registry_lists_the_shipped_models():
    assert builtin_names() == ["pair-ruth-area", "pair-ruth-exp", "pair-ruth-flat", "pair-ruth-gauge",
                               "solid-angle", "sphere-trivial", "su2-star", "t1-toy"]
    with pytest.raises(UnknownModel):
        load_builtin("no-such-model")


@pytest.mark.parametrize("name", builtin_names())
def test_builtins_load_and_reload_identically(name, tmp_path):
    m = load_builtin(name)
    assert m.name == name
    path = tmp_path / f"{name}.vbm"
    path.write_text(builtin_text(name), encoding="utf-8")
    again = load_model(str(path))
    assert sorted(again.spheres) == sorted(m.spheres) and sorted(again.algebroids) == sorted(m.algebroids)


@pytest.mark.parametrize("name", builtin_names())
def test_builtins_pass_their_validity_suite(name):
    m = load_builtin(name)
    for A in m.algebroids.values():
        assert check_axioms(A, n_points=40).passes(1e-9), A.name
    if m.split is not None:
        assert compat_residuals(m.split, n_points=40).passes(1e-6)
    for mor in m.morphisms.values():
        r = morphism_residual(mor, n_points=40)
        assert max(r.anchor_residual, r.bracket_residual) <= 1e-7
    for k, sp in m.spheres.items():
        if isinstance(sp, ASphereFrame):
            ok = sphere_morphism_residual(sp, n_grid=21).passes(1e-6)
            assert ok == (m.sphere_meta[k]["expect"] == "valid"), k
    if m.ruth is not None:
        assert ruth_axiom_residuals(m.ruth, n_samples=60).passes(1e-9)


def test_unknown_key_is_located():
    err = error_of(HEAD + "  colour = red\n")
    assert (err.line, err.column) == (5, 3)
    assert "unknown key 'colour'" in str(err)


def test_unknown_section_is_located():
    err = error_of(HEAD + "[widget]\n")
    assert (err.line, err.column) == (5, 2)


@pytest.mark.parametrize("text,line", [
    (HEAD + "bounds = 0:1, 0:1\n", 5),
    (HEAD + "[chart]\ncoordinates = u\nbounds = 0:1\n", 5),
    ("name = a\nname = b\n", 2),
])
def test_duplicates_rejected(text, line):
    err = error_of(text)
    assert err.line == line and "duplicate" in str(err)


def test_expression_errors_point_into_the_value():
    text = HEAD + "[poisson]\npi(x,y) = x + * y\n"
    err = error_of(text)
    assert err.line == 6 and err.column == 15


def test_other_malformed_input():
    assert "name" in str(error_of("[chart]\ncoordinates = x\nbounds = 0:1\n"))
    assert error_of(HEAD + "just words\n").line == 5
    assert error_of(HEAD + "[sphere]\n").line == 5
    assert error_of("name = m\n[chart]\ncoordinates = x, y\nbounds = 0:1\n").line == 4
    assert error_of(HEAD + "[poisson]\npi(x,q) = 1\n").line == 6
    assert error_of(HEAD + "[poisson]\npi(x,y) = w\n").line == 6


def test_comments_and_blank_lines_are_ignored():
    m = load_text("# header\n\n" + HEAD.replace("bounds", "bounds  # trailing\nbounds", 0) +
                  "[poisson]\npi(x,y) = 1   # constant\n")
    P = m.poissons["main"]
    assert np.allclose(P.sharp(np.array([[0.1, 0.2]]))[0], [[0, -1], [1, 0]])


def test_source_name_in_message(tmp_path):
    p = tmp_path / "bad.vbm"
    p.write_text(HEAD + "oops = 1\n", encoding="utf-8")
    with pytest.raises(ModelError, match=r"bad\.vbm:5:1"):
        load_file(p)
