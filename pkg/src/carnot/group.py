"""
Group arithmetic in exponential coordinates of the first kind. The
Baker-Campbell-Hausdorff series is finite on a nilpotent group, so the
product below is exact up to depth 5.
"""
from dataclasses import dataclass
from typing import Any

import numpy as np
import repackage

repackage.up(2)
from src.carnot.core_algebra import MAX_DEPTH, CarnotAlgebra, same_algebra
from src.carnot.exception import InputError
from src.utilities.validators import ArrayValidator, NumericValidator


def _rows(x: Any) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(1, -1) if x.ndim == 1 else x


def bracket_rows(alg: CarnotAlgebra, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise brackets of two (n, dim) arrays."""
    return np.einsum("ni,nj,ijk->nk", x, y, alg.tensor)


def bch(alg: CarnotAlgebra, x: Any, y: Any) -> np.ndarray:
    """
    Row-wise group product log(exp(x) exp(y)). Either argument may be a
    single vector, which is broadcast against the rows of the other.

    Args:
        alg (CarnotAlgebra): Algebra of both arguments.
        x (Any): (n, dim) or (dim,) coordinates.
        y (Any): (n, dim) or (dim,) coordinates.

    Raises:
        InputError: If the algebra is deeper than the hardcoded series.

    Returns:
        np.ndarray: (n, dim) coordinates of the products.
    """
    if alg.depth > MAX_DEPTH:
        raise InputError(f"Group law is implemented up to depth {MAX_DEPTH}")
    x, y = np.broadcast_arrays(_rows(x), _rows(y))
    depth = alg.depth
    z = x + y
    if depth < 2:
        return z

    def br(a, b):
        return bracket_rows(alg, a, b)

    xy = br(x, y)
    z = z + xy / 2
    if depth < 3:
        return z
    x_xy = br(x, xy)
    y_xy = br(y, xy)
    z = z + x_xy / 12 - y_xy / 12
    if depth < 4:
        return z
    y_x_xy = br(y, x_xy)
    z = z - y_x_xy / 24
    if depth < 5:
        return z
    yx = -xy
    y_y_yx = br(y, br(y, yx))
    y_y_y_yx = br(y, y_y_yx)
    x_x_x_xy = br(x, br(x, x_xy))
    x_y_y_yx = br(x, y_y_yx)
    y_x_x_xy = br(y, br(x, x_xy))
    y_x_y_xy = br(y, br(x, y_xy))
    x_y_x_yx = br(x, br(y, br(x, yx)))
    z = (
        z
        - (y_y_y_yx + x_x_x_xy) / 720
        + (x_y_y_yx + y_x_x_xy) / 360
        + (y_x_y_xy + x_y_x_yx) / 120
    )
    return z


def dilate_rows(alg: CarnotAlgebra, t: float, x: Any) -> np.ndarray:
    """Multiplies layer-i coordinates by t**i."""
    return _rows(x) * np.power(float(t), alg.grading.layer_index)


def ad_matrices(alg: CarnotAlgebra, x: Any) -> np.ndarray:
    """(n, dim, dim) matrices of ad_x, so that ad[n] @ w = [x_n, w]."""
    return np.einsum("ni,ijk->nkj", _rows(x), alg.tensor)


def left_invariant_frame(alg: CarnotAlgebra, x: Any) -> np.ndarray:
    """
    Left-invariant vector fields at points given in exponential
    coordinates. Column j of frame[n] is the field generated by basis
    vector e_j at x_n, that is d/dt log(exp(x_n) exp(t e_j)) at t = 0,
    which equals ad/(1 - exp(-ad)) applied to e_j.

    Returns:
        np.ndarray: (n, dim, dim) frames.
    """
    ad = ad_matrices(alg, x)
    identity = np.broadcast_to(np.eye(alg.dim), ad.shape)
    ad2 = ad @ ad
    frame = identity + ad / 2 + ad2 / 12
    if alg.depth >= 5:
        frame = frame - (ad2 @ ad2) / 720
    return frame


@dataclass(frozen=True, eq=False)
class GroupPoint:
    """Group element exp(sum coords_j e_j)."""

    coords: np.ndarray
    algebra: CarnotAlgebra

    def __post_init__(self):
        coords = ArrayValidator.validate_vector(self.coords, self.algebra.dim, "coords").copy()
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def identity(cls, alg: CarnotAlgebra) -> "GroupPoint":
        return cls(np.zeros(alg.dim), alg)

    def __mul__(self, other: "GroupPoint") -> "GroupPoint":
        return multiply(self, other)

    def inverse(self) -> "GroupPoint":
        return inverse(self)

    def allclose(self, other: "GroupPoint", atol: float = 1e-12) -> bool:
        return same_algebra(self.algebra, other.algebra) and bool(
            np.allclose(self.coords, other.coords, rtol=0.0, atol=atol)
        )

    def __repr__(self):
        coords = ", ".join(f"{c:.6g}" for c in self.coords)
        return f"GroupPoint(({coords}), {self.algebra.name})"


def check_same_algebra(p: GroupPoint, q: GroupPoint) -> None:
    if not same_algebra(p.algebra, q.algebra):
        raise InputError(
            f"Points live in different groups: {p.algebra.name} and {q.algebra.name}"
        )


def multiply(p: GroupPoint, q: GroupPoint) -> GroupPoint:
    check_same_algebra(p, q)
    return GroupPoint(bch(p.algebra, p.coords, q.coords)[0], p.algebra)


def inverse(p: GroupPoint) -> GroupPoint:
    return GroupPoint(-p.coords, p.algebra)


def dilate(t: float, p: GroupPoint) -> GroupPoint:
    """
    Homothety h_t.

    Raises:
        InputError: If t is not a positive real number.
    """
    t = NumericValidator.validate_positive(t, "t")
    return GroupPoint(dilate_rows(p.algebra, t, p.coords)[0], p.algebra)


def dilate_about(base: GroupPoint, t: float, p: GroupPoint) -> GroupPoint:
    """base . h_t(base^-1 . p)"""
    return multiply(base, dilate(t, multiply(inverse(base), p)))


def exp_of(alg: CarnotAlgebra, v: Any) -> GroupPoint:
    return GroupPoint(ArrayValidator.validate_vector(v, alg.dim, "v"), alg)


def log_of(p: GroupPoint) -> np.ndarray:
    return np.array(p.coords)


def left_translate(g: GroupPoint, points: Any) -> np.ndarray:
    """g . p for every row p."""
    rows = ArrayValidator.validate_rows(points, g.algebra.dim)
    return bch(g.algebra, g.coords, rows)


def conjugate(g: GroupPoint, p: GroupPoint) -> GroupPoint:
    """g . p . g^-1"""
    return multiply(multiply(g, p), inverse(g))


def relative_rows(alg: CarnotAlgebra, x: Any, points: Any) -> np.ndarray:
    """x^-1 . p for every row p."""
    return bch(alg, -np.asarray(x, dtype=float), points)
