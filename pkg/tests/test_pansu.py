import numpy as np
import pytest
import repackage

repackage.up()
from src.carnot.core_algebra import builtin
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint
from src.measure.samplers import box_sample
from src.measure.sets import box_membership
from src.pansu.graded_hom import GradedHom
from src.pansu.maps import (
    automorphism_map,
    contact_shear_map,
    dilation_map,
    fold_map,
    identity_map,
    projection_map,
    qnorm_map,
    resolve_map,
    translation_map,
)
from src.pansu.pansu import (
    approx_residual,
    area_check,
    jacobian,
    metric_diff,
    multiplicity,
    pansu_diff,
    richardson,
    zero_jacobian_image_check,
)

H1 = builtin("heisenberg", 1)
LINE = builtin("abelian", 1)


@pytest.fixture(scope="module", name="x")
def fixture_x():
    yield np.array([0.2, -0.1, 0.3])


@pytest.fixture(scope="module", name="box")
def fixture_box():
    yield box_sample(H1, 2000, seed=0)


def test_richardson_removes_linear_term():
    scales = np.array([0.1, 0.05, 0.025])
    tables = richardson(3.0 + 2.0 * scales, scales)
    assert tables[-1][-1] == pytest.approx(3.0)


def test_from_horizontal_induces_vertical_block():
    hom = GradedHom.from_horizontal(H1, H1, np.diag([2.0, 3.0]))
    assert np.allclose(hom.matrix, np.diag([2.0, 3.0, 6.0])) and hom.bracket_residual() < 1e-12


def test_graded_hom_rejects_mixed_layers():
    with pytest.raises(InputError, match="mixes layers"):
        GradedHom(H1, H1, [[1, 0, 1], [0, 1, 0], [0, 0, 1]])


def test_graded_hom_intertwines_dilations():
    assert GradedHom.from_horizontal(H1, H1, [[1.0, 2.0], [0.0, 1.0]]).intertwines(3.0) is True


def test_automorphism_differential(x):
    df = pansu_diff(automorphism_map(H1, [2.0, 3.0]), x)
    assert np.allclose(df.matrix, np.diag([2.0, 3.0, 6.0]), atol=1e-6) and df.residual < 1e-8


def test_dilation_differential(x):
    df = pansu_diff(dilation_map(H1, 2.0), x)
    assert np.allclose(df.matrix, np.diag([2.0, 2.0, 4.0]), atol=1e-6)


def test_translation_differential_is_identity(x):
    g = GroupPoint(np.array([1.0, 0.5, -0.5]), H1)
    df = pansu_diff(translation_map(g), x)
    assert np.allclose(df.matrix, np.eye(3), atol=1e-6)


def test_contact_shear_is_differentiable(x):
    df = pansu_diff(contact_shear_map(H1), x)
    assert df.differentiable is True and df.residual < 1e-6


def test_contact_shear_residual_decays(x):
    shear = contact_shear_map(H1)
    assert approx_residual(shear, x, pansu_diff(shear, x)).decays is True


def test_qnorm_corner_not_differentiable():
    assert pansu_diff(qnorm_map(H1), np.zeros(3)).differentiable is False


def test_fold_corner_not_differentiable():
    assert pansu_diff(fold_map(), [0.0]).differentiable is False


def test_contact_shear_needs_heisenberg1():
    with pytest.raises(InputError, match="heisenberg1"):
        contact_shear_map(builtin("engel"))


def test_metric_diff_dilation():
    y1, y2 = np.array([0.3, 0.1, 0.0]), np.array([-0.2, 0.4, 0.1])
    base = metric_diff(identity_map(H1), np.zeros(3), y1, y2).value
    assert metric_diff(dilation_map(H1, 2.0), np.zeros(3), y1, y2).value == pytest.approx(2.0 * base, rel=1e-6)


def test_jacobian_dilation(x):
    assert jacobian(dilation_map(H1, 2.0), x).value == pytest.approx(16.0, rel=0.1)


def test_jacobian_automorphism(x):
    assert jacobian(automorphism_map(H1, [2.0, 3.0]), x).value == pytest.approx(36.0, rel=0.1)


def test_jacobian_rejects_dimension_change(x):
    with pytest.raises(InputError, match="homogeneous dimensions"):
        jacobian(projection_map(H1), x)


def test_fold_multiplicity():
    line = box_sample(LINE, 2000, seed=0)
    assert multiplicity(fold_map(), line, [0.5], 0.01) == 2


def test_area_check_identity(box):
    report = area_check(identity_map(H1), box, box_membership(H1), n_samples=8000)
    assert report.ratio == pytest.approx(1.0, rel=0.15)


def test_area_check_dilation(box):
    report = area_check(dilation_map(H1, 2.0), box, box_membership(H1), n_samples=8000)
    assert report.ratio == pytest.approx(1.0, rel=0.15) and report.method == "inverse_oracle"


def test_zero_jacobian_projection(box):
    report = zero_jacobian_image_check(projection_map(H1), box.subset(np.arange(len(box)) < 500))
    assert report.dimension_mismatch is True and report.degenerate_fraction == 1.0


def test_resolve_map_names():
    assert resolve_map("dilation:3", H1).name == "dilation(3)"


def test_resolve_map_unknown():
    with pytest.raises(InputError, match="Unknown map"):
        resolve_map("rotation", H1)


def test_automorphism_must_be_invertible():
    with pytest.raises(InputError, match="invertible"):
        automorphism_map(H1, [1.0, 0.0])
