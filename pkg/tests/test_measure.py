import numpy as np
import pytest
import repackage

repackage.up()
from src.carnot.core_algebra import builtin
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint, relative_rows
from src.measure.measure import (
    ball_fraction,
    ball_indices,
    ball_measure,
    cover_greedy,
    density,
    dim_estimate,
    farthest_point_order,
    hausdorff_estimate,
)
from src.measure.samplers import box_sample, membership_sample, multiscale_sample, subspace_sample
from src.measure.set_io import read_set_csv, write_set_csv
from src.measure.sets import MembershipSet, SetSample, box_membership
from src.metrics.gauges import qnorm_rows

H1 = builtin("heisenberg", 1)


@pytest.fixture(scope="module", name="box")
def fixture_box():
    yield box_sample(H1, 20000, seed=0)


@pytest.fixture(scope="module", name="vertical_plane")
def fixture_vertical_plane():
    yield subspace_sample(H1, [[0, 1, 0], [0, 0, 1]], 4000, seed=0)


def test_box_sample_total_weight(box):
    assert box.total_weight == pytest.approx(8.0)


def test_box_sample_inside_box(box):
    assert np.abs(box.points).max() <= 1.0


def test_subspace_sample_measure_dimension(vertical_plane):
    assert vertical_plane.measure_dimension == 3


def test_set_sample_rejects_nonpositive_weights():
    with pytest.raises(InputError, match="positive"):
        SetSample(H1, np.zeros((2, 3)), [1.0, 0.0])


def test_set_sample_rejects_empty():
    with pytest.raises(InputError, match="at least one point"):
        SetSample(H1, np.zeros((0, 3)))


def test_dilated_weights_scale(box):
    assert box.dilated(0.5).total_weight == pytest.approx(8.0 * 0.5**4)


def test_translated_keeps_weights(box):
    g = GroupPoint(np.array([1.0, -1.0, 0.5]), H1)
    assert box.translated(g).total_weight == pytest.approx(box.total_weight)


def test_ball_indices_match_brute_force(box):
    x = np.array([0.1, -0.2, 0.05])
    found = set(ball_indices(box, x, 0.3).tolist())
    distances = qnorm_rows(H1, relative_rows(H1, x, box.points))
    assert found == set(np.flatnonzero(distances <= 0.3).tolist())


def test_ball_measure_rejects_radius(box):
    with pytest.raises(InputError, match="r"):
        ball_measure(box, np.zeros(3), 0.0)


def test_ball_fraction_near_one(box):
    fractions = ball_fraction(box, np.zeros(3), [0.6, 0.5, 0.4])
    assert all(abs(f - 1.0) < 0.2 for f in fractions)


def test_density_of_haar_sample(box):
    # mass(B(0, r)) / r^4 tends to the unit ball volume pi
    estimate = density(box, np.zeros(3), 4.0, [0.6, 0.5, 0.4])
    assert estimate.lower == pytest.approx(np.pi, rel=0.2) and estimate.upper == pytest.approx(np.pi, rel=0.2)


def test_farthest_point_radii_non_increasing(vertical_plane):
    _, radii = farthest_point_order(vertical_plane, max_centers=200)
    assert np.all(np.diff(radii[1:]) <= 1e-12)


def test_cover_greedy_covers_sample(vertical_plane):
    small = vertical_plane.subset(np.arange(len(vertical_plane)) < 500)
    cover = cover_greedy(small, 0.4)
    covered = np.zeros(len(small), dtype=bool)
    for center, radius in cover:
        covered[ball_indices(small, center, radius)] = True
    assert covered.all()


def test_hausdorff_estimate_rows(vertical_plane):
    rows = hausdorff_estimate(vertical_plane, 3.0, [0.5, 0.25, 0.125])
    assert [d for d, _ in rows] == [0.5, 0.25, 0.125]


def test_dim_estimate_heisenberg_box():
    estimate = dim_estimate(box_sample(H1, 16000, seed=0))
    assert estimate.dimension == pytest.approx(4.0, abs=0.3)


def test_dim_estimate_fits_interior_volume_counts():
    estimate = dim_estimate(box_sample(H1, 8000, seed=1))
    assert estimate.used_interior is True and len(estimate.volume_counts) == len(estimate.deltas)


def test_dim_estimate_dilation_invariant(vertical_plane):
    base = dim_estimate(vertical_plane).dimension
    assert dim_estimate(vertical_plane.dilated(3.0)).dimension == pytest.approx(base, abs=0.05)


def test_dim_estimate_greedy_counts_without_interior():
    estimate = dim_estimate(box_sample(builtin("abelian", 2), 4000, seed=0), interior=False)
    assert estimate.used_interior is False and estimate.dimension == estimate.full_dimension


def test_dim_estimate_vertical_plane(vertical_plane):
    assert dim_estimate(vertical_plane).dimension == pytest.approx(3.0, abs=0.3)


def test_dim_estimate_abelian_box():
    estimate = dim_estimate(box_sample(builtin("abelian", 2), 4000, seed=0))
    assert estimate.dimension == pytest.approx(2.0, abs=0.2)


def test_dim_estimate_short_ladder(vertical_plane):
    with pytest.raises(InputError, match="4"):
        dim_estimate(vertical_plane, delta_ladder=[0.5, 0.25])


def test_membership_sample_volume():
    half = box_membership(H1, radius=1.0)
    upper = MembershipSet(H1, lambda rows: rows[:, 2] > 0, half.center, half.radius, name="upper_half")
    sample = membership_sample(upper, 4000, seed=0)
    assert sample.total_weight == pytest.approx(4.0, rel=0.05)


def test_membership_sample_rejects_empty_set():
    empty = MembershipSet(H1, lambda rows: np.zeros(rows.shape[0], dtype=bool), np.zeros(3), 1.0, name="empty")
    with pytest.raises(InputError, match="accepted only"):
        membership_sample(empty, 10, seed=0, batch=100)


def test_multiscale_sample_total_weight():
    sample = multiscale_sample(H1, None, [1.0, 0.5, 0.25], 1000, seed=0)
    assert sample.total_weight == pytest.approx(8.0, rel=0.05)


def test_csv_round_trip_keeps_weights(tmp_path, vertical_plane):
    path = write_set_csv(vertical_plane.subset(np.arange(len(vertical_plane)) < 10), tmp_path / "plane.csv")
    assert np.allclose(read_set_csv(path, H1).weights, vertical_plane.weights[:10])


def test_csv_wrong_width(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,4\n", encoding="utf-8")
    with pytest.raises(InputError, match="columns"):
        read_set_csv(path, H1)


def test_csv_non_numeric_cell(tmp_path):
    path = tmp_path / "words.csv"
    path.write_text("0.1,0.2,0.3\n0.1,abc,0\n", encoding="utf-8")
    with pytest.raises(InputError, match="non-numeric values in data row\\(s\\) 2"):
        read_set_csv(path, H1)


def test_csv_blank_cell(tmp_path):
    path = tmp_path / "blank.csv"
    path.write_text("0.5,,0.1\n0.1,0.2,0.3\n", encoding="utf-8")
    with pytest.raises(InputError, match="missing"):
        read_set_csv(path, H1)
