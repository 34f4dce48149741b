import numpy as np
import pytest
import repackage

repackage.up()
from src.carnot.exception import InputError
from src.utilities.validators import ArrayValidator, GroupFileValidator, LadderValidator, NumericValidator


@pytest.fixture(scope="function", name="definition")
def fixture_definition():
    yield {"name": "h1", "layers": [2, 1], "brackets": [{"i": 1, "j": 2, "k": 3, "c": 1.0}]}


def test_is_valid_num_float():
    var = 1.1
    assert NumericValidator.is_valid_num(var) is True


def test_is_valid_num_int():
    var = 11
    assert NumericValidator.is_valid_num(var) is True


def test_is_valid_num_numpy():
    var = np.float64(0.5)
    assert NumericValidator.is_valid_num(var) is True


def test_is_valid_num_bool():
    var = True
    assert NumericValidator.is_valid_num(var) is False


def test_is_valid_num_string():
    var = "str"
    assert NumericValidator.is_valid_num(var) is False


def test_is_valid_num_nan():
    var = float("nan")
    assert NumericValidator.is_valid_num(var) is False


def test_validate_positive_valid():
    assert NumericValidator.validate_positive(2, "r") == 2.0


def test_validate_positive_zero():
    with pytest.raises(InputError, match="`r` param should be a real number greater than 0"):
        NumericValidator.validate_positive(0.0, "r")


def test_validate_positive_int_float():
    with pytest.raises(InputError, match="`n` param should be an int not less than 1"):
        NumericValidator.validate_positive_int(2.0, "n")


def test_validate_positive_int_minimum():
    with pytest.raises(InputError, match="not less than 3"):
        NumericValidator.validate_positive_int(2, "n", minimum=3)


def test_validate_open_unit_one():
    with pytest.raises(InputError, match=r"in \(0, 1\)"):
        NumericValidator.validate_open_unit(1.0, "slope")


def test_validate_ladder_valid():
    assert np.allclose(LadderValidator.validate_ladder([0.4, 0.2, 0.1], "radii"), [0.4, 0.2, 0.1])


def test_validate_ladder_increasing():
    with pytest.raises(InputError, match="strictly decreasing"):
        LadderValidator.validate_ladder([0.1, 0.2], "radii")


def test_validate_ladder_negative():
    with pytest.raises(InputError, match="positive real numbers only"):
        LadderValidator.validate_ladder([0.2, -0.1], "radii")


def test_validate_ladder_too_short():
    with pytest.raises(InputError, match="at least 3 rungs"):
        LadderValidator.validate_ladder([0.2, 0.1], "radii", 3)


def test_validate_ladder_strings():
    with pytest.raises(InputError, match="sequence of real numbers"):
        LadderValidator.validate_ladder(["a", "b"], "radii")


def test_validate_vector_shape():
    with pytest.raises(InputError, match="dimension 3"):
        ArrayValidator.validate_vector([1.0, 2.0], 3, "x")


def test_validate_rows_promotes_vector():
    assert ArrayValidator.validate_rows([1.0, 2.0, 3.0], 3).shape == (1, 3)


def test_validate_rows_wrong_width():
    with pytest.raises(InputError, match="3 columns"):
        ArrayValidator.validate_rows(np.zeros((4, 2)), 3)


@pytest.mark.parametrize("name", ["heisenberg1", "abelian3", "engel", "free_nilpotent_2_3"])
def test_is_builtin_name_valid(name):
    assert GroupFileValidator.is_builtin_name(name) is True


@pytest.mark.parametrize("name", ["heisenberg", "Engel", "free_nilpotent_2", "groups/h1.json"])
def test_is_builtin_name_invalid(name):
    assert GroupFileValidator.is_builtin_name(name) is False


def test_validate_group_dict_valid(definition):
    assert GroupFileValidator.validate_group_dict(definition) is None


def test_validate_group_dict_not_object():
    with pytest.raises(InputError, match="JSON object"):
        GroupFileValidator.validate_group_dict([1, 2])


def test_validate_group_dict_missing_key(definition):
    del definition["brackets"]
    with pytest.raises(InputError, match="missing `brackets`"):
        GroupFileValidator.validate_group_dict(definition)


def test_validate_group_dict_bad_layers(definition):
    definition["layers"] = [2, 0]
    with pytest.raises(InputError, match="list of positive ints"):
        GroupFileValidator.validate_group_dict(definition)


def test_validate_group_dict_bracket_keys(definition):
    definition["brackets"] = [{"i": 1, "j": 2, "k": 3}]
    with pytest.raises(InputError, match="keys i, j, k, c"):
        GroupFileValidator.validate_group_dict(definition)


def test_validate_group_dict_index_range(definition):
    definition["brackets"][0]["k"] = 4
    with pytest.raises(InputError, match=r"should be in 1\.\.3"):
        GroupFileValidator.validate_group_dict(definition)


def test_validate_group_dict_h_inner_size(definition):
    definition["h_inner"] = [[1.0, 0.0, 0.0]]
    with pytest.raises(InputError, match="2x2 entries"):
        GroupFileValidator.validate_group_dict(definition)


def test_validate_rows_nan():
    with pytest.raises(InputError, match="finite coordinates"):
        ArrayValidator.validate_rows([[0.5, np.nan, 0.1]], 3)


def test_validate_vector_inf():
    with pytest.raises(InputError, match="finite coordinates"):
        ArrayValidator.validate_vector([0.0, np.inf, 1.0], 3, "x")
