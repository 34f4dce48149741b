import numpy as np
import pytest
import repackage

repackage.up()
from src.carnot.core_algebra import builtin
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint
from src.measure.samplers import subspace_sample
from src.rectifiability.cones_rect import (
    ConeSpec,
    approximability_test,
    aptan_test,
    cone_contains,
    cone_mass_bound_check,
    double_cone_empty,
    holder_exponent,
    rectifiable_panel_check,
    saptan_test,
    subgroup_probes,
    tube_dist,
    tube_dist_rows,
)
from src.rectifiability.subspaces import (
    SubspaceSpec,
    orthogonal_complement,
    project_V,
    subgroup_classify,
    subspace_angle,
)

H1 = builtin("heisenberg", 1)
EYE = np.eye(3)
RADII = [0.5, 0.35, 0.25]


@pytest.fixture(scope="module", name="vertical_plane")
def fixture_vertical_plane():
    yield SubspaceSpec.from_basis(H1, EYE[1:])


@pytest.fixture(scope="module", name="transverse_plane")
def fixture_transverse_plane():
    yield SubspaceSpec.from_basis(H1, EYE[[0, 2]])


@pytest.fixture(scope="module", name="plane_sample")
def fixture_plane_sample():
    yield subspace_sample(H1, EYE[1:], 20000, seed=0)


def test_project_v(vertical_plane):
    projected = project_V(GroupPoint(np.array([1.0, 2.0, 3.0]), H1), vertical_plane)
    assert np.allclose(projected.coords, [0.0, 2.0, 3.0])


def test_orthogonal_complement(vertical_plane):
    assert subspace_angle(orthogonal_complement(vertical_plane), SubspaceSpec.from_basis(H1, EYE[[0]])) < 1e-12


def test_dependent_basis_rejected():
    with pytest.raises(InputError, match="linearly independent"):
        SubspaceSpec.from_basis(H1, [[0, 1, 0], [0, 2, 0]])


def test_classify_vertical_plane(vertical_plane):
    result = subgroup_classify(vertical_plane)
    assert result["isomorphic_to"] == "abelian2" and result["induced_grading"] == [1, 1]


def test_classify_center():
    result = subgroup_classify(SubspaceSpec.from_basis(H1, EYE[[2]]))
    assert result["induced_grading"] == [0, 1] and result["is_graded_subgroup"] is True


def test_classify_horizontal_plane():
    assert subgroup_classify(SubspaceSpec.from_basis(H1, EYE[:2]))["is_subalgebra"] is False


def test_classify_whole_group():
    assert subgroup_classify(SubspaceSpec.from_basis(H1, EYE))["isomorphic_to"] == "heisenberg1"


def test_tube_dist_unit(vertical_plane):
    assert tube_dist([1.0, 0.0, 0.0], vertical_plane) == pytest.approx(1.0, abs=1e-6)


def test_tube_dist_on_subgroup(vertical_plane):
    assert tube_dist([0.0, 0.3, -0.2], vertical_plane) == pytest.approx(0.0, abs=1e-9)


def test_tube_dist_rows_match(vertical_plane):
    rows = np.random.default_rng(0).uniform(-1, 1, size=(5, 3))
    assert np.allclose(tube_dist_rows(vertical_plane, rows), [tube_dist(r, vertical_plane) for r in rows])


def test_tube_dist_needs_subgroup():
    with pytest.raises(InputError, match="graded subgroup"):
        tube_dist([1.0, 0.0, 0.0], SubspaceSpec.from_basis(H1, EYE[:2]))


def test_cone_contains_inside(vertical_plane):
    assert cone_contains(ConeSpec(np.zeros(3), vertical_plane, 0.5), [0.0, 0.5, 0.0]) is True


def test_cone_contains_outside(vertical_plane):
    assert cone_contains(ConeSpec(np.zeros(3), vertical_plane, 0.5), [1.0, 0.0, 0.0]) is False


def test_cone_slope_range(vertical_plane):
    with pytest.raises(InputError, match="slope"):
        ConeSpec(np.zeros(3), vertical_plane, 1.5)


def test_subgroup_probes_on_subgroup(vertical_plane):
    probes = subgroup_probes(vertical_plane, 0.5, 20, np.random.default_rng(0))
    assert np.allclose(probes[:, 0], 0.0)


def test_holder_vertical_line():
    result = holder_exponent(SubspaceSpec.from_basis(H1, EYE[[2]]), seed=0)
    assert result["exponent"] == pytest.approx(0.5, abs=0.1)


def test_holder_abelian_control():
    plane = builtin("abelian", 2)
    result = holder_exponent(SubspaceSpec.from_basis(plane, np.eye(2)[[0]]), seed=0)
    assert result["exponent"] == pytest.approx(1.0, abs=0.05)


def test_holder_unknown_generator(vertical_plane):
    with pytest.raises(InputError, match="pair generator"):
        holder_exponent(vertical_plane, pair_generator="diagonal")


def test_approximability_subgroup_self_test(plane_sample, vertical_plane):
    result = approximability_test(plane_sample, np.zeros(3), vertical_plane, 0.5, RADII)
    assert result["passed"] is True


def test_aptan_subgroup_self_test(plane_sample, vertical_plane):
    assert aptan_test(plane_sample, np.zeros(3), vertical_plane, [0.5], RADII)["verdict"] == "pass"


def test_aptan_transverse_fails(plane_sample, transverse_plane):
    assert aptan_test(plane_sample, np.zeros(3), transverse_plane, [0.5], RADII)["verdict"] == "fail"


def test_aptan_not_applicable_off_set(plane_sample, vertical_plane):
    result = aptan_test(plane_sample, [0.9, 0.0, 0.0], vertical_plane, [0.5], [0.2, 0.1, 0.05])
    assert result["verdict"] == "not_applicable"


def test_double_cone_empty_horizontal_line():
    line = SubspaceSpec.from_basis(H1, EYE[[0]])
    assert double_cone_empty(np.zeros(3), line, 0.2, 0.1, seed=0)["empty"] is True


def test_saptan_exponents_ordered():
    line = SubspaceSpec.from_basis(H1, EYE[[0]])
    sample = subspace_sample(H1, EYE[[0]], 2000, seed=0)
    exponents = saptan_test(sample, np.zeros(3), line, 0.2, 0.1, RADII)["exponents"]
    assert exponents["k"] <= exponents["k_depth_subgroup"] <= exponents["k_depth_group"]


def test_saptan_unknown_mode(plane_sample, vertical_plane):
    with pytest.raises(InputError, match="exponent_mode"):
        saptan_test(plane_sample, np.zeros(3), vertical_plane, 0.2, 0.1, RADII, exponent_mode="k2")


def test_cone_mass_bound_saturated(plane_sample, vertical_plane):
    result = cone_mass_bound_check(plane_sample, vertical_plane, 0.5, None, 0.6, panel=5)
    assert result["saturated"] is True and result["lambda_emp"] > 0


def test_rectifiable_panel_on_plane(plane_sample, vertical_plane):
    points = [[0.0, 0.0, 0.0], [0.0, 0.2, 0.1], [0.0, -0.2, -0.1]]
    result = rectifiable_panel_check(plane_sample, vertical_plane.with_base, [0.5], RADII, points=points)
    assert result["pass_fraction"] == 1.0


def test_holder_abelian_control_quick_size():
    plane = builtin("abelian", 2)
    result = holder_exponent(SubspaceSpec.from_basis(plane, np.eye(2)[[0]]), n_pairs=4000, seed=1)
    assert result["exponent"] == pytest.approx(1.0, abs=0.05)
