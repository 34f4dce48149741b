"""
Real functions on a Carnot group used as level-set data. Every field works
on rows of exponential coordinates and may carry its horizontal gradient
in closed form.
"""
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
import repackage

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint, bch, dilate_rows, left_invariant_frame
from src.metrics.gauges import qnorm_rows
from src.utilities.validators import ArrayValidator, NumericValidator

RowField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    `values` maps (n, dim) rows to (n,) reals; `hgrad`, when known, maps
    rows to the (n, d1) components X_i f in the basis frame.
    """

    name: str
    algebra: CarnotAlgebra
    values: RowField
    hgrad: RowField | None = None

    def rows(self, rows: Any) -> np.ndarray:
        rows = ArrayValidator.validate_rows(rows, self.algebra.dim)
        return np.asarray(self.values(rows), dtype=float).reshape(rows.shape[0])

    def __call__(self, x: Any) -> float:
        if isinstance(x, GroupPoint):
            x = x.coords
        return float(self.rows(x)[0])

    @property
    def analytic(self) -> bool:
        return self.hgrad is not None

    def dilated(self, t: float) -> "ScalarField":
        """f o h_t, with X_i(f o h_t)(x) = t (X_i f)(h_t x)."""
        t = NumericValidator.validate_positive(t, "t")
        alg, values, hgrad = self.algebra, self.values, self.hgrad
        grad = None
        if hgrad is not None:

            def grad(rows):
                return t * hgrad(dilate_rows(alg, t, rows))

        return ScalarField(f"{self.name}@dilated({t:g})", alg, lambda rows: values(dilate_rows(alg, t, rows)), grad)

    def translated(self, g: Any) -> "ScalarField":
        """f o L_g; left translations commute with the horizontal frame."""
        alg, values, hgrad = self.algebra, self.values, self.hgrad
        g = ArrayValidator.validate_vector(g.coords if isinstance(g, GroupPoint) else g, alg.dim, "g")
        grad = None
        if hgrad is not None:

            def grad(rows):
                return hgrad(bch(alg, g, rows))

        return ScalarField(f"{self.name}@translated", alg, lambda rows: values(bch(alg, g, rows)), grad)


def coordinate_field(alg: CarnotAlgebra, j: int) -> ScalarField:
    """The exponential coordinate x_j (0-based index)."""
    if not 0 <= j < alg.dim:
        raise InputError(f"Coordinate index should be in [0, {alg.dim}), got {j}")
    d1 = alg.horizontal_dim

    def grad(rows):
        return left_invariant_frame(alg, rows)[:, j, :d1]

    return ScalarField(f"coordinate:{alg.labels[j]}", alg, lambda rows: rows[:, j], grad)


def _require_heisenberg1(alg: CarnotAlgebra, name: str) -> None:
    if alg.grading.layer_dims != (2, 1):
        raise InputError(f"Field `{name}` is defined on heisenberg1 only")


def quasi_sphere(alg: CarnotAlgebra, kappa: float = 1.0) -> ScalarField:
    """
    ((a^2 + b^2)^2 + kappa c^2)^(1/4) on the first Heisenberg group. With
    g the quartic inside, Xg = 4 a r^2 - kappa b c and Yg = 4 b r^2 + kappa a c
    where r^2 = a^2 + b^2; the gradient is taken to be 0 at the identity.
    """
    name = "quasi_sphere" if kappa == 1.0 else f"quasi_sphere({kappa:g})"
    _require_heisenberg1(alg, name)
    kappa = NumericValidator.validate_positive(kappa, "kappa")

    def quartic(rows):
        a, b, c = rows[:, 0], rows[:, 1], rows[:, 2]
        return (a**2 + b**2) ** 2 + kappa * c**2

    def values(rows):
        return quartic(rows) ** 0.25

    def grad(rows):
        a, b, c = rows[:, 0], rows[:, 1], rows[:, 2]
        r2 = a**2 + b**2
        g = quartic(rows)
        scale = np.zeros_like(g)
        positive = g > 0
        scale[positive] = 0.25 * g[positive] ** -0.75
        return np.column_stack([(4 * a * r2 - kappa * b * c) * scale, (4 * b * r2 + kappa * a * c) * scale])

    return ScalarField(name, alg, values, grad)


def quasi_sphere_scaled(alg: CarnotAlgebra) -> ScalarField:
    """
    ((a^2 + b^2)^2 + 4 c^2)^(1/4). Its horizontal kernel at (a, b, c) has
    slope (c b - a^3 - a b^2) / (c a + a^2 b + b^3).
    """
    field = quasi_sphere(alg, 4.0)
    return ScalarField("quasi_sphere_scaled", alg, field.values, field.hgrad)


def qnorm_field(alg: CarnotAlgebra) -> ScalarField:
    """The quasi-norm; no closed-form gradient, so derivatives are numerical."""
    return ScalarField("qnorm", alg, lambda rows: qnorm_rows(alg, rows))


def resolve_field(spec: str, alg: CarnotAlgebra) -> ScalarField:
    """
    Catalog lookup: `coordinate:<j>` (1-based), `quasi_sphere`,
    `quasi_sphere_scaled`, `qnorm`. A suffix `@dilated:<t>` or
    `@translated:<c1,c2,...>` composes with a dilation or translation.

    Raises:
        InputError: On unknown names or bad parameters.
    """
    base, _, modifier = spec.partition("@")
    name, _, params = base.partition(":")
    if name == "coordinate":
        try:
            j = int(params or "1") - 1
        except ValueError:
            raise InputError(f"Bad coordinate index `{params}`")
        field = coordinate_field(alg, j)
    elif name == "quasi_sphere":
        field = quasi_sphere(alg)
    elif name == "quasi_sphere_scaled":
        field = quasi_sphere_scaled(alg)
    elif name == "qnorm":
        field = qnorm_field(alg)
    else:
        raise InputError(f"Unknown field `{name}`, expected one of {', '.join(FIELD_NAMES)}")
    if not modifier:
        return field
    kind, _, values = modifier.partition(":")
    try:
        numbers = [float(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"Bad field modifier `{modifier}`")
    if kind == "dilated" and len(numbers) == 1:
        return field.dilated(numbers[0])
    if kind == "translated":
        return field.translated(numbers)
    raise InputError(f"Unknown field modifier `{modifier}`")


FIELD_NAMES = ("coordinate", "quasi_sphere", "quasi_sphere_scaled", "qnorm")
