import numpy as np
import pytest
import repackage
from hypothesis import given, settings
from hypothesis import strategies as st

repackage.up()
from src.carnot.core_algebra import builtin
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint, dilate, multiply
from src.metrics.gauges import box_volume, qnorm_rows
from src.metrics.metrics import (
    _gauge_ratios,
    ball_box_check,
    box_contains,
    box_contains_rows,
    box_gauge,
    calibrate_equivalence,
    cc_upper,
    d_qn,
    distance_rows,
    qnorm,
    quasi_triangle_constant,
    unit_ball_volume,
)
from src.utilities.utils import as_generator, derive_seeds

H1 = builtin("heisenberg", 1)
ENGEL = builtin("engel")

coordinates = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)
h1_points = st.lists(coordinates, min_size=3, max_size=3).map(lambda c: GroupPoint(np.array(c), H1))


@pytest.fixture(scope="module", name="origin")
def fixture_origin():
    yield GroupPoint.identity(H1)


def test_qnorm_heisenberg():
    # (a^2 + b^2 + |c|)^(1/2)
    assert qnorm(GroupPoint(np.array([3.0, 0.0, 16.0]), H1)) == pytest.approx(5.0)


def test_box_gauge_heisenberg():
    assert box_gauge(GroupPoint(np.array([0.5, -0.2, 0.81]), H1)) == pytest.approx(0.9)


def test_box_contains(origin):
    assert box_contains(origin, 1.0, GroupPoint(np.array([0.5, 0.5, 0.5]), H1)) is True


def test_box_contains_rejects_radius(origin):
    with pytest.raises(InputError, match="r"):
        box_contains(origin, -1.0, origin)


def test_box_volume():
    assert box_volume(H1, 0.5) == pytest.approx(1.0 * 1.0 * 0.5)


def test_unknown_metric(origin):
    with pytest.raises(InputError, match="metric"):
        distance_rows(H1, np.zeros(3), np.ones((2, 3)), metric="euclid")


def test_unit_ball_volume_heisenberg():
    # a^2 + b^2 + |c| < 1 has volume pi
    assert unit_ball_volume(H1) == pytest.approx(np.pi, rel=0.02)


@settings(max_examples=60, deadline=None)
@given(h1_points, h1_points, h1_points)
def test_d_qn_left_invariant(g, p, q):
    assert d_qn(multiply(g, p), multiply(g, q)) == pytest.approx(d_qn(p, q), rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(h1_points, h1_points)
def test_d_qn_symmetric(p, q):
    assert d_qn(p, q) == pytest.approx(d_qn(q, p), rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(h1_points, st.floats(min_value=0.01, max_value=100.0))
def test_qnorm_homogeneous(p, t):
    assert qnorm(dilate(t, p)) == pytest.approx(t * qnorm(p), rel=1e-9, abs=1e-12)


def test_qnorm_homogeneous_engel():
    rows = np.random.default_rng(3).normal(size=(50, 4))
    scaled = rows * 3.0 ** ENGEL.grading.layer_index
    assert np.allclose(qnorm_rows(ENGEL, scaled), 3.0 * qnorm_rows(ENGEL, rows))


def test_quasi_triangle_constant_finite():
    constant = quasi_triangle_constant(H1, n_samples=2000)
    assert 1.0 <= constant < 10.0


def test_quasi_triangle_constant_at_least_one():
    assert quasi_triangle_constant(H1, n_samples=30, seed=5) >= 1.0


def test_quasi_triangle_constant_tight_on_horizontal_path():
    assert quasi_triangle_constant(builtin("abelian", 2), n_samples=300) == pytest.approx(1.0, abs=1e-12)


def test_ball_box_violations_use_fresh_sample():
    report = ball_box_check(H1, [1.0], n_samples=500, seed=3)
    _, check = derive_seeds(3, 2)
    outward, inward = _gauge_ratios(H1, 1.0, 500, as_generator(derive_seeds(check, 1)[0]), "qn", None)
    assert report.violations_at_half == int(np.count_nonzero(np.maximum(outward, inward) > report.constant / 2))


def test_ball_box_constant_scale_free():
    report = ball_box_check(H1, [1.0, 0.1, 0.01], n_samples=2000)
    assert 0.8 <= report.scale_ratio <= 1.25


def test_cc_unit_horizontal(origin):
    estimate = cc_upper(origin, GroupPoint(np.array([1.0, 0.0, 0.0]), H1), {"restarts": 4})
    assert estimate.upper == pytest.approx(1.0, abs=1e-3)


def test_cc_bounds_ordered(origin):
    estimate = cc_upper(origin, GroupPoint(np.array([0.3, 0.2, 0.4]), H1), {"restarts": 4})
    assert estimate.lower <= estimate.upper


def test_cc_vertical_isoperimetric(origin):
    # reaching (0, 0, 1) encloses unit signed area, so the length is sqrt(4 pi)
    estimate = cc_upper(origin, GroupPoint(np.array([0.0, 0.0, 1.0]), H1))
    assert estimate.upper == pytest.approx(np.sqrt(4 * np.pi), rel=0.05)


def test_cc_dilation_covariance(origin):
    p = GroupPoint(np.array([0.3, 0.2, 0.4]), H1)
    base = cc_upper(origin, p, {"restarts": 4}).upper
    scaled = cc_upper(origin, dilate(2.0, p), {"restarts": 4}).upper
    assert scaled == pytest.approx(2.0 * base, rel=0.02)


def test_cc_mixed_algebras(origin):
    with pytest.raises(InputError, match="different groups"):
        cc_upper(origin, GroupPoint(np.zeros(4), ENGEL))


def test_calibrate_equivalence_abelian():
    # straight segments are geodesics, so d_cc = d_qn
    constant = calibrate_equivalence(builtin("abelian", 2), n_samples=3, opts={"restarts": 2})
    assert constant == pytest.approx(1.0, abs=1e-2)


def test_calibrate_equivalence_heisenberg():
    assert 1.0 <= calibrate_equivalence(H1, n_samples=3, opts={"restarts": 2}) < 5.0


def test_box_contains_rows():
    rows = np.array([[0.5, 0.5, 0.5], [0.5, 0.5, 1.5], [1.5, 0.0, 0.0]])
    assert box_contains_rows(H1, np.zeros(3), 1.0, rows).tolist() == [True, False, False]
