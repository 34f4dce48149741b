"""Weighted point samples of subsets of a group and membership sets."""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable

import numpy as np
import repackage
from scipy.spatial import cKDTree

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra, homogeneous_dimension
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint, bch, dilate_rows, relative_rows
from src.metrics.gauges import box_gauge_rows
from src.utilities.validators import ArrayValidator, NumericValidator


@dataclass(frozen=True, eq=False)
class SetSample:
    """
    Points (one row per point, exponential coordinates) with positive
    weights. Samplers calibrate the weights so their sum approximates the
    measure of the sampled set; `meta["measure_dimension"]` records which
    measure that is.
    """

    algebra: CarnotAlgebra
    points: np.ndarray
    weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        points = ArrayValidator.validate_rows(self.points, self.algebra.dim).copy()
        if points.shape[0] == 0:
            raise InputError("A set sample needs at least one point")
        if self.weights is None:
            weights = np.ones(points.shape[0])
        else:
            weights = np.asarray(self.weights, dtype=float).reshape(-1).copy()
        if weights.shape[0] != points.shape[0]:
            raise InputError("One weight per sample point is required")
        if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
            raise InputError("Sample weights should be positive")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @property
    def measure_dimension(self) -> float:
        return float(self.meta.get("measure_dimension", homogeneous_dimension(self.algebra)))

    def point(self, index: int) -> GroupPoint:
        return GroupPoint(self.points[index], self.algebra)

    @cached_property
    def horizontal_tree(self) -> cKDTree:
        """k-d tree on the horizontal coordinates, used to prune ball queries."""
        return cKDTree(self.points[:, : self.algebra.horizontal_dim])

    def subset(self, mask: np.ndarray) -> "SetSample":
        return SetSample(self.algebra, self.points[mask], self.weights[mask], self.meta)

    def translated(self, g: GroupPoint) -> "SetSample":
        """Left translate g . E; Haar weights are unchanged."""
        meta = {**self.meta, "translated_by": [float(c) for c in g.coords]}
        return SetSample(self.algebra, bch(self.algebra, g.coords, self.points), self.weights, meta)

    def dilated(self, t: float) -> "SetSample":
        """h_t(E); weights scale by t to the measure dimension."""
        t = NumericValidator.validate_positive(t, "t")
        weights = self.weights * t**self.measure_dimension
        meta = {**self.meta, "dilated_by": t}
        return SetSample(self.algebra, dilate_rows(self.algebra, t, self.points), weights, meta)


@dataclass(frozen=True, eq=False)
class MembershipSet:
    """
    A set given by a pure row-wise predicate and a bounding box
    Box(center, radius) in the box gauge.
    """

    algebra: CarnotAlgebra
    predicate: Callable[[np.ndarray], np.ndarray]
    center: np.ndarray
    radius: float
    sampler_seed: Any = 0
    name: str = "set"

    def __post_init__(self):
        center = ArrayValidator.validate_vector(self.center, self.algebra.dim, "center")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", NumericValidator.validate_positive(self.radius, "radius"))

    def contains(self, rows: np.ndarray) -> np.ndarray:
        rows = ArrayValidator.validate_rows(rows, self.algebra.dim)
        in_box = box_gauge_rows(self.algebra, relative_rows(self.algebra, self.center, rows)) < self.radius
        result = np.zeros(rows.shape[0], dtype=bool)
        if np.any(in_box):
            result[in_box] = np.asarray(self.predicate(rows[in_box]), dtype=bool)
        return result

    def translated(self, g: GroupPoint) -> "MembershipSet":
        predicate = self.predicate
        alg = self.algebra

        def moved(rows):
            return predicate(bch(alg, -g.coords, rows))

        return MembershipSet(
            alg,
            moved,
            bch(alg, g.coords, self.center)[0],
            self.radius,
            self.sampler_seed,
            f"{self.name}@translated",
        )


def box_membership(alg: CarnotAlgebra, center: Any = None, radius: float = 1.0) -> MembershipSet:
    """Membership set of Box(center, radius)."""
    center = np.zeros(alg.dim) if center is None else np.asarray(center, dtype=float)

    def inside(rows):
        return box_gauge_rows(alg, relative_rows(alg, center, rows)) < radius

    return MembershipSet(alg, inside, center, radius, name="box")
