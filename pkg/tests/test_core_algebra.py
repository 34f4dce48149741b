import json

import numpy as np
import pytest
import repackage

repackage.up()
from src.carnot.core_algebra import (
    algebra_from_dict,
    algebra_to_dict,
    bracket,
    builtin,
    homogeneous_dimension,
    load_algebra,
    make_algebra,
    resolve_group,
    same_algebra,
    validate,
)
from src.carnot.exception import InputError


@pytest.fixture(scope="module", name="heisenberg")
def fixture_heisenberg():
    yield builtin("heisenberg", 1)


@pytest.fixture(scope="module", name="group_file")
def fixture_group_file(tmp_path_factory):
    definition = {
        "name": "my_heisenberg",
        "layers": [2, 1],
        "brackets": [{"i": 1, "j": 2, "k": 3, "c": 1.0}],
        "h_inner": [1, 0, 0, 1],
    }
    path = tmp_path_factory.mktemp("groups") / "h1.json"
    path.write_text(json.dumps(definition), encoding="utf-8")
    yield path


def test_heisenberg_labels(heisenberg):
    assert heisenberg.labels == ("X", "Y", "Z")


def test_heisenberg_bracket_xy_is_z(heisenberg):
    assert np.allclose(bracket(heisenberg, [1, 0, 0], [0, 1, 0]), [0, 0, 1])


def test_heisenberg_bracket_antisymmetric(heisenberg):
    assert np.allclose(bracket(heisenberg, [0, 1, 0], [1, 0, 0]), [0, 0, -1])


def test_bracket_dimension_mismatch(heisenberg):
    with pytest.raises(InputError, match="v"):
        bracket(heisenberg, [1, 0], [0, 1, 0])


@pytest.mark.parametrize(
    "name,params,expected",
    [
        ("heisenberg", (1,), 4),
        ("heisenberg", (2,), 6),
        ("engel", (), 7),
        ("abelian", (3,), 3),
        ("free_nilpotent", (2, 3), 10),
    ],
)
def test_homogeneous_dimension(name, params, expected):
    assert homogeneous_dimension(builtin(name, *params)) == expected


@pytest.mark.parametrize(
    "name,params",
    [("heisenberg", (1,)), ("heisenberg", (3,)), ("engel", ()), ("abelian", (2,)), ("free_nilpotent", (3, 2))],
)
def test_builtins_validate(name, params):
    assert validate(builtin(name, *params)).passed is True


def test_free_nilpotent_layers():
    alg = builtin("free_nilpotent", 2, 3)
    assert alg.grading.layer_dims == (2, 1, 2)


def test_validate_missing_generation():
    flat = make_algebra("flat", [2, 1], [])
    report = validate(flat)
    assert report.checks["bracket_generation"] is False


def test_validate_bad_grading():
    bad = make_algebra("bad", [2, 1], [(0, 1, 2, 1.0), (0, 2, 1, 1.0)])
    report = validate(bad)
    assert report.checks["grading"] is False


def test_validate_inconsistent_mirror():
    bad = make_algebra("bad", [2, 1], [(0, 1, 2, 1.0), (1, 0, 2, 1.0)])
    assert validate(bad).checks["antisymmetry"] is False


def test_validate_jacobi_failure():
    # [[e1, e2], e3] + [[e2, e3], e1] + [[e3, e1], e2] = e1
    bad = make_algebra("bad", [1, 1, 1], [(0, 1, 1, 1.0), (1, 2, 0, 1.0)])
    assert validate(bad).checks["jacobi"] is False


def test_validate_h_inner_not_positive():
    bad = make_algebra("bad", [2, 1], [(0, 1, 2, 1.0)], h_inner=[[1, 0], [0, -1]])
    assert validate(bad).checks["h_inner_positive_definite"] is False


def test_unknown_builtin():
    with pytest.raises(InputError, match="Unknown built-in"):
        builtin("sphere", 2)


def test_builtin_wrong_parameters():
    with pytest.raises(InputError, match="Wrong parameters"):
        builtin("heisenberg")


def test_free_nilpotent_step_too_deep():
    with pytest.raises(InputError, match="step"):
        builtin("free_nilpotent", 2, 6)


def test_load_algebra_matches_builtin(group_file, heisenberg):
    assert same_algebra(load_algebra(group_file), heisenberg) is True


def test_resolve_group_file(group_file):
    assert resolve_group(str(group_file)).name == "my_heisenberg"


def test_resolve_group_builtin_names():
    assert resolve_group("free_nilpotent_2_3").grading.layer_dims == (2, 1, 2)


def test_resolve_group_unknown():
    with pytest.raises(InputError, match="neither"):
        resolve_group("no_such_group")


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(InputError, match="not valid JSON"):
        load_algebra(path)


def test_dict_round_trip_keeps_hash(heisenberg):
    definition = algebra_to_dict(heisenberg)
    assert algebra_from_dict(definition).definition_hash == heisenberg.definition_hash


def test_hash_differs_between_groups():
    assert builtin("heisenberg", 1).definition_hash != builtin("engel").definition_hash


def test_hash_ignores_name(heisenberg):
    definition = {**algebra_to_dict(heisenberg), "name": "renamed"}
    assert algebra_from_dict(definition).definition_hash == heisenberg.definition_hash


def test_hash_depends_on_h_inner(heisenberg):
    definition = {**algebra_to_dict(heisenberg), "h_inner": [2.0, 0.0, 0.0, 1.0]}
    assert algebra_from_dict(definition).definition_hash != heisenberg.definition_hash
