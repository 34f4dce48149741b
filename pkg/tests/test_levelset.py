import numpy as np
import pytest
import repackage
from hypothesis import given, settings
from hypothesis import strategies as st

repackage.up()
from src.carnot.core_algebra import builtin
from src.carnot.exception import CharacteristicPointError, EmptySlabError, InputError
from src.carnot.group import dilate_rows
from src.levelset.fields import (
    ScalarField,
    coordinate_field,
    qnorm_field,
    quasi_sphere,
    quasi_sphere_scaled,
    resolve_field,
)
from src.levelset.levelset import (
    ahlfors_check,
    characteristic_locus_sample,
    characteristic_points,
    characteristic_test,
    coarea_check,
    cond1_check,
    cond2_check,
    generic_test,
    hgrad_rows,
    horizontal_gradient,
    kernel_slope,
    kernel_subgroup,
    level_sample,
    level_sample_multiscale,
    newton_project,
    surface_density,
    tangent_approx_report,
)
from src.metrics.gauges import qnorm_rows
from src.rectifiability.subspaces import SubspaceSpec, subspace_angle

H1 = builtin("heisenberg", 1)

coordinates = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


@pytest.fixture(scope="module", name="sphere")
def fixture_sphere():
    yield quasi_sphere(H1)


@pytest.fixture(scope="module", name="flat")
def fixture_flat():
    yield coordinate_field(H1, 0)


@pytest.fixture(scope="module", name="annulus_coarea")
def fixture_annulus_coarea():
    def annulus(rows):
        norms = qnorm_rows(H1, rows)
        return ((norms > 0.3) & (norms < 0.8)).astype(float)

    yield coarea_check(qnorm_field(H1), annulus, n_samples=20000, n_level=200, seed=0)


@pytest.fixture(scope="module", name="generic_point")
def fixture_generic_point(sphere):
    p = np.array([0.6, 0.4, 0.3])
    yield dilate_rows(H1, 1.0 / sphere(p), p)[0]


def test_coordinate_gradient_is_frame(flat):
    # X a = 1 and Y a = 0 everywhere
    assert np.allclose(horizontal_gradient(flat, [0.3, -0.7, 2.0]), [1.0, 0.0])


def test_vertical_coordinate_gradient():
    a, b = 0.4, -0.8
    assert np.allclose(horizontal_gradient(coordinate_field(H1, 2), [a, b, 0.1]), [-b / 2, a / 2])


@settings(max_examples=40, deadline=None)
@given(st.lists(coordinates, min_size=3, max_size=3))
def test_quasi_sphere_closed_form_matches_differences(point):
    sphere = quasi_sphere(H1)
    p = np.array(point)
    if sphere(p) < 0.3:
        return
    assert np.allclose(hgrad_rows(sphere, p), hgrad_rows(sphere, p, method="fd"), atol=1e-5)


def test_unknown_gradient_method(sphere):
    with pytest.raises(InputError, match="gradient method"):
        horizontal_gradient(qnorm_field(H1), [0.1, 0.2, 0.3], method="spectral")


def test_quasi_sphere_homogeneous(sphere):
    p = np.array([0.3, -0.2, 0.5])
    assert sphere(dilate_rows(H1, 3.0, p)[0]) == pytest.approx(3.0 * sphere(p))


def test_quasi_sphere_needs_heisenberg1():
    with pytest.raises(InputError, match="heisenberg1"):
        quasi_sphere(builtin("engel"))


def test_surface_density_horizontal_gradient(flat):
    assert surface_density(flat, [0.3, 0.5, -0.2]) == pytest.approx(1.0, abs=1e-6)


def test_surface_density_vertical_coordinate():
    a, b = 0.6, -0.4
    horizontal = np.hypot(a, b) / 2
    expected = horizontal / np.sqrt(horizontal**2 + 1.0)
    assert surface_density(coordinate_field(H1, 2), [a, b, 0.2]) == pytest.approx(expected, rel=1e-5)


def test_surface_density_singular(sphere):
    assert np.isnan(surface_density(sphere, [0.0, 0.0, 0.0]))


def test_characteristic_poles(sphere):
    assert characteristic_test(sphere, 1.0, [0.0, 0.0, 1.0]) is True


def test_characteristic_generic(sphere, generic_point):
    assert characteristic_test(sphere, 1.0, generic_point) is False


def test_characteristic_off_level(sphere):
    with pytest.raises(InputError, match="off the level set"):
        characteristic_test(sphere, 1.0, [0.0, 0.0, 2.0])


def test_generic_point_has_both_components(sphere, generic_point):
    assert generic_test(sphere, generic_point) is True


def test_characteristic_points_of_sphere(sphere):
    points = characteristic_points(sphere, 1.0, seed=0)
    poles = sorted(points[:, 2].round(6).tolist())
    assert len(points) == 2 and poles == [-1.0, 1.0] and np.allclose(points[:, :2], 0.0, atol=1e-6)


def test_characteristic_points_of_plane(flat):
    assert len(characteristic_points(flat, 0.0, seed=0)) == 0


def test_characteristic_points_scaled_sphere():
    points = characteristic_points(quasi_sphere_scaled(H1), 1.0, seed=0)
    assert np.allclose(sorted(points[:, 2]), [-0.5, 0.5], atol=1e-6)


def test_newton_project_lands_on_level(sphere):
    rows = np.random.default_rng(0).uniform(-1, 1, size=(50, 3))
    rows = rows[sphere.rows(rows) > 0.3]
    _, residuals = newton_project(sphere, 1.0, rows)
    assert residuals.max() < 1e-8


def test_level_sample_residuals(sphere):
    level = level_sample(sphere, 1.0, radius=1.5, n=500, seed=0)
    assert level.residuals.max() < 1e-8 and np.allclose(sphere.rows(level.sample.points), 1.0, atol=1e-8)


def test_level_sample_measure_dimension(flat):
    level = level_sample(flat, 0.0, n=200, seed=0)
    assert level.sample.measure_dimension == 3


def test_level_sample_plane_weight(flat):
    # {a = 0} in Box(0, 1) has unit-density area 2 * 2
    level = level_sample(flat, 0.0, n=2000, seed=0)
    assert level.sample.total_weight == pytest.approx(4.0, rel=0.1)


def test_level_sample_constant_field():
    constant = ScalarField("one", H1, lambda rows: np.ones(rows.shape[0]))
    with pytest.raises(EmptySlabError):
        level_sample(constant, 0.0, n=10, seed=0)


def test_level_sample_multiscale_refines(sphere, generic_point):
    level = level_sample_multiscale(sphere, 1.0, generic_point, [0.4, 0.2, 0.1], 300, seed=0)
    assert len(level) > 600


def test_characteristic_locus(sphere):
    locus = characteristic_locus_sample(sphere, 1.0, n=300, seed=0)
    assert locus is not None and locus.measure_dimension == 0


def test_characteristic_locus_empty(flat):
    assert characteristic_locus_sample(flat, 0.0, n=200, seed=0) is None


def test_kernel_at_horizontal_point(sphere):
    kernel = kernel_subgroup(sphere, [1.0, 0.0, 0.0])
    assert subspace_angle(kernel, SubspaceSpec.from_basis(H1, np.eye(3)[1:])) < 1e-3


def test_kernel_is_graded_subgroup(sphere, generic_point):
    kernel = kernel_subgroup(sphere, generic_point)
    assert kernel.is_graded_subgroup is True and tuple(kernel.induced_grading) == (1, 1)


def test_kernel_at_pole(sphere):
    with pytest.raises(CharacteristicPointError):
        kernel_subgroup(sphere, [0.0, 0.0, 1.0])


@pytest.mark.parametrize("point", [[0.6, 0.4, 0.3], [-0.5, 0.7, -0.2], [0.8, -0.3, 0.6]])
def test_kernel_slope_formula(point):
    field = quasi_sphere_scaled(H1)
    p = np.array(point)
    alpha, beta, gamma = dilate_rows(H1, 1.0 / field(p), p)[0]
    expected = (gamma * beta - alpha**3 - alpha * beta**2) / (gamma * alpha + alpha**2 * beta + beta**3)
    assert kernel_slope(field, [alpha, beta, gamma]) == pytest.approx(expected, rel=1e-4, abs=1e-4)


def test_cond1_plane_is_flat(flat):
    result = cond1_check(flat, 0.0, [0.0, 0.1, 0.2], seed=0)
    assert result["passed"] is True and max(rung["ratio"] for rung in result["rungs"]) < 1e-6


def test_cond1_at_pole(sphere):
    with pytest.raises(CharacteristicPointError):
        cond1_check(sphere, 1.0, [0.0, 0.0, 1.0])


def test_cond2_sphere(sphere, generic_point):
    assert cond2_check(sphere, 1.0, generic_point, seed=0)["passed"] is True


def test_ahlfors_exponent(sphere, generic_point):
    radii = [0.4, 0.2, 0.1, 0.05, 0.025, 0.0125]
    level = level_sample_multiscale(sphere, 1.0, generic_point, radii, 1500, seed=0)
    result = ahlfors_check(level, generic_point, 0.0125, [0.2, 0.1, 0.05, 0.025], seed=0)
    assert result["exponent"] == pytest.approx(3.0, abs=0.3) and result["expected"] == 3


def test_ahlfors_too_few_rungs(flat):
    level = level_sample(flat, 0.0, n=100, seed=0)
    with pytest.raises(InputError, match="Too few resolved rungs"):
        ahlfors_check(level, level.sample.points[0], 0.01, [0.004, 0.002, 0.001], seed=0)


def test_coarea_ratio_independent_of_weight(flat):
    ones = coarea_check(flat, lambda rows: np.ones(rows.shape[0]), n_samples=6000, n_level=200, seed=0)
    half = coarea_check(
        flat, lambda rows: (np.abs(rows).max(axis=1) < 0.5).astype(float), n_samples=6000, n_level=200, seed=0
    )
    assert half["ratio"] == pytest.approx(ones["ratio"], rel=0.15)


def test_coarea_annulus_ratio_matches_flat_ratio(flat, annulus_coarea):
    ones = coarea_check(flat, lambda rows: np.ones(rows.shape[0]), n_samples=20000, n_level=200, seed=0)
    assert annulus_coarea["ratio"] == pytest.approx(ones["ratio"], rel=0.1)


def test_coarea_splits_strata_at_annulus_edge(annulus_coarea):
    refined = [level["t"] for level in annulus_coarea["levels"] if level["refined"]]
    assert refined and min(abs(t - 0.8) for t in refined) < 0.05


def test_coarea_zero_weight():
    def zero(rows):
        return np.zeros(rows.shape[0])

    result = coarea_check(coordinate_field(H1, 0), zero, n_samples=200, levels=4, n_level=20, seed=0)
    assert result["lhs"] == 0.0 and result["rhs"] == 0.0 and result["ratio"] is None


def test_coarea_rejects_negative_weight(flat):
    with pytest.raises(InputError, match="nonnegative"):
        coarea_check(flat, lambda rows: -np.ones(rows.shape[0]), n_samples=100, levels=2, n_level=20, seed=0)


def test_tangent_report_generic(sphere, generic_point):
    report = tangent_approx_report(sphere, 1.0, generic_point, seed=0)
    assert report["verdict"] == "pass"


def test_tangent_report_pole(sphere):
    assert tangent_approx_report(sphere, 1.0, [0.0, 0.0, 1.0])["verdict"] == "not_applicable"


def test_resolve_field_translated():
    field = resolve_field("coordinate:1@translated:1,0,0", H1)
    assert field([0.0, 0.0, 0.0]) == pytest.approx(1.0)


def test_resolve_field_unknown():
    with pytest.raises(InputError, match="Unknown field"):
        resolve_field("torus", H1)
