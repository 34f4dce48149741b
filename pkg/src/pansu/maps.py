"""
Built-in maps between Carnot groups. A map works on rows of exponential
coordinates; `inverse` and `preimages` are optional exact oracles used by
the area formula check.
"""
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
import repackage

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra, builtin, same_algebra
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint, bch, dilate_rows
from src.metrics.gauges import qnorm_rows
from src.pansu.graded_hom import GradedHom
from src.utilities.validators import ArrayValidator, NumericValidator

RowMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class CarnotMap:
    name: str
    source: CarnotAlgebra
    target: CarnotAlgebra
    function: RowMap
    lipschitz_hint: float | None = None
    inverse: RowMap | None = None
    preimages: Callable[[np.ndarray], np.ndarray] | None = None

    def rows(self, rows: Any) -> np.ndarray:
        rows = ArrayValidator.validate_rows(rows, self.source.dim)
        return np.asarray(self.function(rows), dtype=float).reshape(rows.shape[0], self.target.dim)

    def __call__(self, p: GroupPoint) -> GroupPoint:
        if not same_algebra(p.algebra, self.source):
            raise InputError(f"Map `{self.name}` is defined on {self.source.name}, got a point of {p.algebra.name}")
        return GroupPoint(self.rows(p.coords)[0], self.target)

    def preimages_of(self, m: np.ndarray) -> np.ndarray | None:
        """All preimages of m as rows, or None when no oracle is known."""
        if self.preimages is not None:
            return np.asarray(self.preimages(m), dtype=float).reshape(-1, self.source.dim)
        if self.inverse is not None:
            return self.inverse(np.asarray(m, dtype=float).reshape(1, -1))
        return None

    def compose(self, other: "CarnotMap") -> "CarnotMap":
        """self after other"""
        if not same_algebra(other.target, self.source):
            raise InputError(f"Cannot compose `{self.name}` after `{other.name}`: groups differ")
        first, second = other, self
        inverse = None
        if first.inverse is not None and second.inverse is not None:

            def inverse(rows):
                return first.inverse(second.inverse(rows))

        lipschitz = None
        if first.lipschitz_hint is not None and second.lipschitz_hint is not None:
            lipschitz = first.lipschitz_hint * second.lipschitz_hint
        return CarnotMap(
            f"{second.name}*{first.name}",
            first.source,
            second.target,
            lambda rows: second.rows(first.rows(rows)),
            lipschitz,
            inverse,
        )


def identity_map(alg: CarnotAlgebra) -> CarnotMap:
    return CarnotMap("identity", alg, alg, lambda rows: rows, 1.0, lambda rows: rows)


def dilation_map(alg: CarnotAlgebra, t: float) -> CarnotMap:
    t = NumericValidator.validate_positive(t, "t")
    return CarnotMap(
        f"dilation({t:g})",
        alg,
        alg,
        lambda rows: dilate_rows(alg, t, rows),
        t,
        lambda rows: dilate_rows(alg, 1.0 / t, rows),
    )


def translation_map(g: GroupPoint) -> CarnotMap:
    alg = g.algebra
    return CarnotMap(
        "translation",
        alg,
        alg,
        lambda rows: bch(alg, g.coords, rows),
        1.0,
        lambda rows: bch(alg, -g.coords, rows),
    )


def conjugation_map(g: GroupPoint) -> CarnotMap:
    """p -> g p g^-1, an automorphism."""
    alg = g.algebra
    return CarnotMap(
        "conjugation",
        alg,
        alg,
        lambda rows: bch(alg, bch(alg, g.coords, rows), -g.coords),
        None,
        lambda rows: bch(alg, bch(alg, -g.coords, rows), g.coords),
    )


def homomorphism_map(hom: GradedHom, name: str = "automorphism") -> CarnotMap:
    """A graded homomorphism as a map; invertible ones get an inverse oracle."""
    inverse = None
    if hom.determinant() > 0:
        inv = np.linalg.inv(hom.matrix)

        def inverse(rows):
            return rows @ inv.T

    lipschitz = float(np.abs(hom.block(1)).sum(axis=0).max()) if hom.source.horizontal_dim else None
    return CarnotMap(name, hom.source, hom.target, hom.apply, lipschitz, inverse)


def automorphism_map(alg: CarnotAlgebra, horizontal: Any, tol: float = 1e-9) -> CarnotMap:
    """
    Graded automorphism induced by a horizontal block.

    Raises:
        InputError: If the induced map is not a homomorphism or is singular.
    """
    horizontal = np.asarray(horizontal, dtype=float)
    if horizontal.ndim == 1:
        horizontal = np.diag(horizontal)
    hom = GradedHom.from_horizontal(alg, alg, horizontal)
    if hom.residual > tol:
        raise InputError(f"Horizontal block does not extend to an automorphism (residual {hom.residual:.3g})")
    if hom.determinant() == 0.0:
        raise InputError("Automorphism must be invertible")
    return homomorphism_map(hom)


def projection_map(alg: CarnotAlgebra) -> CarnotMap:
    """Horizontal projection onto the abelian group of the first layer."""
    target = builtin("abelian", alg.horizontal_dim)
    d1 = alg.horizontal_dim
    stretch = 1.0 / np.sqrt(np.linalg.eigvalsh(alg.h_inner).min())
    return CarnotMap("projection", alg, target, lambda rows: rows[:, :d1], stretch)


def constant_map(alg: CarnotAlgebra, value: Any = None, target: CarnotAlgebra | None = None) -> CarnotMap:
    target = target or alg
    value = np.zeros(target.dim) if value is None else ArrayValidator.validate_vector(value, target.dim, "value")
    return CarnotMap("constant", alg, target, lambda rows: np.tile(value, (rows.shape[0], 1)), 0.0)


def fold_map() -> CarnotMap:
    """x -> |x| on the real line, two-to-one away from 0."""
    line = builtin("abelian", 1)

    def preimages(m):
        m = float(np.asarray(m).reshape(-1)[0])
        if m < 0:
            return np.zeros((0, 1))
        if m == 0:
            return np.zeros((1, 1))
        return np.array([[-m], [m]])

    return CarnotMap("fold", line, line, np.abs, 1.0, None, preimages)


def contact_shear_map(alg: CarnotAlgebra) -> CarnotMap:
    """
    (a, b, c) -> (a, b + a^2, c + a^3 / 6) on the first Heisenberg group,
    a smooth contact diffeomorphism that is not a homomorphism.
    """
    if alg.grading.layer_dims != (2, 1):
        raise InputError("The contact shear is defined on heisenberg1 only")

    def forward(rows):
        a = rows[:, 0]
        return np.column_stack([a, rows[:, 1] + a**2, rows[:, 2] + a**3 / 6])

    def backward(rows):
        a = rows[:, 0]
        return np.column_stack([a, rows[:, 1] - a**2, rows[:, 2] - a**3 / 6])

    return CarnotMap("contact_shear", alg, alg, forward, None, backward)


def scalar_map(alg: CarnotAlgebra, values: Callable[[np.ndarray], np.ndarray], name: str) -> CarnotMap:
    """A real function on the group as a map into abelian(1)."""
    line = builtin("abelian", 1)
    return CarnotMap(name, alg, line, lambda rows: np.asarray(values(rows), dtype=float).reshape(-1, 1))


def qnorm_map(alg: CarnotAlgebra) -> CarnotMap:
    """The quasi-norm as a real function, with a corner at the identity."""
    return scalar_map(alg, lambda rows: qnorm_rows(alg, rows), "qnorm")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"Cannot parse map parameters `{text}`")


def resolve_map(spec: str, alg: CarnotAlgebra) -> CarnotMap:
    """
    Catalog lookup for `name[:params]`, e.g. `dilation:2`,
    `translation:0.5,0.2,0.1`, `automorphism:2,3`.

    Raises:
        InputError: On unknown names or bad parameters.
    """
    name, _, params = spec.partition(":")
    values = _floats(params) if params else []
    if name == "identity":
        return identity_map(alg)
    if name == "dilation":
        return dilation_map(alg, values[0] if values else 2.0)
    if name in ("translation", "conjugation"):
        coords = values or [1.0] + [0.5] * (alg.dim - 1)
        g = GroupPoint(ArrayValidator.validate_vector(coords, alg.dim, "g"), alg)
        return translation_map(g) if name == "translation" else conjugation_map(g)
    if name == "automorphism":
        diagonal = values or [2.0 + i for i in range(alg.horizontal_dim)]
        return automorphism_map(alg, ArrayValidator.validate_vector(diagonal, alg.horizontal_dim, "diagonal"))
    if name == "projection":
        return projection_map(alg)
    if name == "constant":
        return constant_map(alg, values or None)
    if name == "fold":
        return fold_map()
    if name == "contact_shear":
        return contact_shear_map(alg)
    if name == "qnorm":
        return qnorm_map(alg)
    raise InputError(f"Unknown map `{name}`")


MAP_NAMES = (
    "identity",
    "dilation",
    "translation",
    "conjugation",
    "automorphism",
    "projection",
    "constant",
    "fold",
    "contact_shear",
    "qnorm",
)
