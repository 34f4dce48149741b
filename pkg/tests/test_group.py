import numpy as np
import pytest
import repackage
from hypothesis import given, settings
from hypothesis import strategies as st

repackage.up()
from src.carnot.core_algebra import builtin
from src.carnot.exception import InputError
from src.carnot.group import (
    GroupPoint,
    bch,
    conjugate,
    dilate,
    dilate_about,
    dilate_rows,
    exp_of,
    inverse,
    left_invariant_frame,
    left_translate,
    log_of,
    multiply,
    relative_rows,
)

H1 = builtin("heisenberg", 1)
ENGEL = builtin("engel")
FREE_2_4 = builtin("free_nilpotent", 2, 4)

coordinates = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)


def points_of(alg):
    return st.lists(coordinates, min_size=alg.dim, max_size=alg.dim).map(
        lambda c: GroupPoint(np.array(c), alg)
    )


@pytest.fixture(scope="module", name="p")
def fixture_p():
    yield GroupPoint(np.array([1.0, 2.0, 3.0]), H1)


@pytest.fixture(scope="module", name="q")
def fixture_q():
    yield GroupPoint(np.array([-0.5, 0.25, 1.0]), H1)


def test_heisenberg_product(p, q):
    # c' = c + c2 + (a b2 - b a2) / 2
    assert np.allclose(multiply(p, q).coords, [0.5, 2.25, 4.0 + 0.5 * (0.25 + 1.0)])


def test_relative_rows_formula(p, q):
    a, b, c = p.coords
    alpha, beta, gamma = q.coords
    expected = [alpha - a, beta - b, gamma - c + 0.5 * (alpha * b - a * beta)]
    assert np.allclose(relative_rows(H1, p.coords, q.coords)[0], expected)


def test_inverse_is_negation(p):
    assert np.allclose(inverse(p).coords, -p.coords)


def test_identity_is_neutral(p):
    e = GroupPoint.identity(H1)
    assert multiply(e, p).allclose(p) and multiply(p, e).allclose(p)


def test_dilation_scales_layers(p):
    assert np.allclose(dilate(2.0, p).coords, [2.0, 4.0, 12.0])


def test_dilation_rejects_nonpositive(p):
    with pytest.raises(InputError, match="t"):
        dilate(0.0, p)


def test_dilate_about_fixes_base(p, q):
    assert dilate_about(p, 3.0, p).allclose(p)


def test_conjugate_by_identity(p):
    assert conjugate(GroupPoint.identity(H1), p).allclose(p)


def test_mixed_algebras_rejected(p):
    with pytest.raises(InputError, match="different groups"):
        multiply(p, GroupPoint(np.zeros(4), ENGEL))


def test_bch_broadcasts_single_vector():
    rows = np.random.default_rng(0).normal(size=(5, 3))
    assert bch(H1, np.zeros(3), rows).shape == (5, 3)


def test_frame_at_identity_is_identity():
    assert np.allclose(left_invariant_frame(FREE_2_4, np.zeros(FREE_2_4.dim))[0], np.eye(FREE_2_4.dim))


def test_heisenberg_frame():
    a, b = 0.7, -1.3
    frame = left_invariant_frame(H1, [a, b, 0.4])[0]
    # X = d_a - (b / 2) d_c and Y = d_b + (a / 2) d_c
    assert np.allclose(frame[:, 0], [1, 0, -b / 2]) and np.allclose(frame[:, 1], [0, 1, a / 2])


@settings(max_examples=50, deadline=None)
@given(points_of(ENGEL), points_of(ENGEL), points_of(ENGEL))
def test_engel_associativity(x, y, z):
    left = multiply(multiply(x, y), z).coords
    right = multiply(x, multiply(y, z)).coords
    assert np.allclose(left, right, atol=1e-8 * (1 + np.abs(left).max()))


@settings(max_examples=50, deadline=None)
@given(points_of(FREE_2_4), points_of(FREE_2_4), points_of(FREE_2_4))
def test_free_nilpotent_associativity(x, y, z):
    left = multiply(multiply(x, y), z).coords
    right = multiply(x, multiply(y, z)).coords
    assert np.allclose(left, right, atol=1e-8 * (1 + np.abs(left).max()))


@settings(max_examples=50, deadline=None)
@given(points_of(FREE_2_4))
def test_inverse_cancels(x):
    assert np.allclose(multiply(x, inverse(x)).coords, 0.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(points_of(ENGEL), points_of(ENGEL), st.floats(min_value=0.1, max_value=10.0))
def test_dilation_is_automorphism(x, y, t):
    left = dilate(t, multiply(x, y)).coords
    right = multiply(dilate(t, x), dilate(t, y)).coords
    assert np.allclose(left, right, atol=1e-8 * (1 + np.abs(left).max()))


def test_dilation_group_law():
    rows = np.random.default_rng(1).normal(size=(10, FREE_2_4.dim))
    assert np.allclose(dilate_rows(FREE_2_4, 2.0, dilate_rows(FREE_2_4, 3.0, rows)), dilate_rows(FREE_2_4, 6.0, rows))


def test_exp_log_coordinates():
    assert np.allclose(log_of(exp_of(H1, [0.5, -1.0, 2.0])), [0.5, -1.0, 2.0])


def test_exp_of_wrong_dimension():
    with pytest.raises(InputError, match="dimension 3"):
        exp_of(H1, [1.0, 2.0])


def test_left_translate_rows(p):
    rows = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    assert np.allclose(left_translate(p, rows), [p.coords, [2.0, 2.0, 2.0]])
