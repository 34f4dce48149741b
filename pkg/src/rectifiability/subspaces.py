"""
Linear subspaces of a Carnot algebra, exponential-coordinate projections
about a base point and subgroup classification.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np
import repackage
from scipy import linalg

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra, builtin
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint, bch
from src.utilities.validators import ArrayValidator

RANK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SubspaceSpec:
    """
    V spanned by the rows of `basis`, with the base point used by every
    projection. Orthogonality is taken in the graded Riemannian completion
    of the horizontal inner product.
    """

    algebra: CarnotAlgebra
    basis: np.ndarray
    base_point: np.ndarray
    layer_bases: tuple
    induced_grading: tuple
    is_subalgebra: bool
    is_graded_subgroup: bool

    @classmethod
    def from_basis(cls, alg: CarnotAlgebra, basis: Any, base_point: Any = None) -> "SubspaceSpec":
        """
        Raises:
            InputError: If the basis rows are not linearly independent.
        """
        basis = np.asarray(basis, dtype=float)
        if basis.size == 0:
            basis = np.zeros((0, alg.dim))
        else:
            basis = ArrayValidator.validate_rows(basis, alg.dim, "basis")
        if basis.shape[0] and np.linalg.matrix_rank(basis, tol=RANK_TOL) < basis.shape[0]:
            raise InputError("Subspace basis rows should be linearly independent")
        if base_point is None:
            base = np.zeros(alg.dim)
        elif isinstance(base_point, GroupPoint):
            base = np.array(base_point.coords)
        else:
            base = ArrayValidator.validate_vector(base_point, alg.dim, "base_point")

        layer_bases = []
        for i in range(1, alg.depth + 1):
            outside = alg.grading.layer_index != i
            if basis.shape[0] == 0:
                layer_bases.append(np.zeros((alg.grading.layer_dims[i - 1], 0)))
                continue
            # coefficient vectors whose combination vanishes off layer i
            if np.any(outside):
                kernel = linalg.null_space(basis.T[outside], rcond=RANK_TOL)
            else:
                kernel = np.eye(basis.shape[0])
            vectors = (basis.T @ kernel)[alg.grading.layer_slice(i)]
            layer_bases.append(linalg.orth(vectors, rcond=RANK_TOL) if vectors.size else vectors)
        grading = tuple(int(b.shape[1]) for b in layer_bases)

        spec = cls(alg, basis, base, tuple(layer_bases), grading, False, False)
        closed = spec.bracket_defect() <= RANK_TOL
        object.__setattr__(spec, "is_subalgebra", closed)
        object.__setattr__(spec, "is_graded_subgroup", closed and sum(grading) == basis.shape[0])
        return spec

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def homogeneous_dimension(self) -> int:
        return int(sum(i * m for i, m in enumerate(self.induced_grading, start=1)))

    @property
    def depth(self) -> int:
        layers = [i for i, m in enumerate(self.induced_grading, start=1) if m > 0]
        return max(layers, default=0)

    @cached_property
    def projector(self) -> np.ndarray:
        """G-orthogonal projector onto V acting on column vectors."""
        if self.dim == 0:
            return np.zeros((self.algebra.dim, self.algebra.dim))
        metric = self.algebra.riemannian_metric
        columns = self.basis.T
        gram = columns.T @ metric @ columns
        return columns @ np.linalg.solve(gram, columns.T @ metric)

    def bracket_defect(self) -> float:
        """Largest component of [b_i, b_j] outside V."""
        if self.dim < 2:
            return 0.0
        brackets = np.einsum("ai,bj,ijk->abk", self.basis, self.basis, self.algebra.tensor).reshape(-1, self.algebra.dim)
        return float(np.abs(brackets - brackets @ self.projector.T).max())

    def with_base(self, base_point: Any) -> "SubspaceSpec":
        return SubspaceSpec.from_basis(self.algebra, self.basis, base_point)

    def translated(self, g: GroupPoint) -> "SubspaceSpec":
        return self.with_base(bch(self.algebra, g.coords, self.base_point)[0])

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.tolist(),
            "base_point": self.base_point.tolist(),
            "induced_grading": list(self.induced_grading),
            "is_subalgebra": self.is_subalgebra,
            "is_graded_subgroup": self.is_graded_subgroup,
        }


def _project_rows(spec: SubspaceSpec, rows: np.ndarray, operator: np.ndarray) -> np.ndarray:
    alg = spec.algebra
    rows = ArrayValidator.validate_rows(rows, alg.dim)
    local = bch(alg, -spec.base_point, rows)
    return bch(alg, spec.base_point, local @ operator.T)


def project_V_rows(spec: SubspaceSpec, rows: Any) -> np.ndarray:
    return _project_rows(spec, rows, spec.projector)


def project_Vperp_rows(spec: SubspaceSpec, rows: Any) -> np.ndarray:
    return _project_rows(spec, rows, np.eye(spec.algebra.dim) - spec.projector)


def project_V(x: GroupPoint, spec: SubspaceSpec) -> GroupPoint:
    """base . exp(pr_V log(base^-1 x))"""
    return GroupPoint(project_V_rows(spec, x.coords)[0], spec.algebra)


def project_Vperp(x: GroupPoint, spec: SubspaceSpec) -> GroupPoint:
    """base . exp(pr_{V-perp} log(base^-1 x)), the projection along V"""
    return GroupPoint(project_Vperp_rows(spec, x.coords)[0], spec.algebra)


def orthogonal_complement(spec: SubspaceSpec) -> SubspaceSpec:
    """V-perp in the graded Riemannian inner product, same base point."""
    alg = spec.algebra
    if spec.dim == 0:
        return SubspaceSpec.from_basis(alg, np.eye(alg.dim), spec.base_point)
    complement = linalg.null_space(spec.basis @ alg.riemannian_metric, rcond=RANK_TOL)
    return SubspaceSpec.from_basis(alg, complement.T, spec.base_point)


def subspace_angle(spec_a: SubspaceSpec, spec_b: SubspaceSpec) -> float:
    """Largest principal angle between V_a and V_b in the graded inner product."""
    if spec_a.dim == 0 or spec_b.dim == 0:
        raise InputError("Principal angles need non-trivial subspaces")
    factor = linalg.cholesky(spec_a.algebra.riemannian_metric, lower=True)
    angles = linalg.subspace_angles(factor.T @ spec_a.basis.T, factor.T @ spec_b.basis.T)
    return float(np.max(angles))


def _lie_signature(alg: CarnotAlgebra, layer_bases: tuple) -> tuple:
    """
    Graded bracket data of a graded subalgebra in an adapted basis: for every
    pair of layers the rank of the bracket map into the whole algebra.
    """
    signature = []
    full_bases = []
    for i, block in enumerate(layer_bases, start=1):
        full = np.zeros((alg.dim, block.shape[1]))
        full[alg.grading.layer_slice(i)] = block
        full_bases.append(full)
    for i, a in enumerate(full_bases):
        for b in full_bases[i:]:
            if a.shape[1] == 0 or b.shape[1] == 0:
                signature.append(0)
                continue
            products = np.einsum("ia,jb,ijk->abk", a, b, alg.tensor).reshape(-1, alg.dim)
            signature.append(int(np.linalg.matrix_rank(products, tol=RANK_TOL)) if products.size else 0)
    return tuple(signature)


def _candidate_builtins(dim: int) -> list[CarnotAlgebra]:
    candidates = []
    for n in range(1, 4):
        if 2 * n + 1 == dim:
            candidates.append(builtin("heisenberg", n))
    if dim == 4:
        candidates.append(builtin("engel"))
    if dim == 5:
        candidates.append(builtin("free_nilpotent", 2, 3))
    if dim == 6:
        candidates.append(builtin("free_nilpotent", 3, 2))
    return candidates


def subgroup_classify(spec: SubspaceSpec) -> dict:
    """
    Bracket closure, induced grading and, for graded subalgebras, a built-in
    group with the same induced grading and bracket ranks. Subalgebras with
    vanishing brackets are reported as abelian whatever their grading.
    """
    result = {
        "is_subalgebra": spec.is_subalgebra,
        "is_graded_subgroup": spec.is_graded_subgroup,
        "induced_grading": list(spec.induced_grading),
        "isomorphic_to": None,
    }
    if not spec.is_subalgebra:
        return result
    alg = spec.algebra
    brackets = np.einsum("ai,bj,ijk->abk", spec.basis, spec.basis, alg.tensor)
    if np.abs(brackets).max(initial=0.0) <= RANK_TOL:
        result["isomorphic_to"] = f"abelian{spec.dim}"
        return result
    if not spec.is_graded_subgroup:
        return result
    grading = tuple(spec.induced_grading)
    while grading and grading[-1] == 0:
        grading = grading[:-1]
    signature = _lie_signature(alg, spec.layer_bases[: len(grading)])
    for candidate in _candidate_builtins(spec.dim):
        if candidate.grading.layer_dims != grading:
            continue
        eye = np.eye(candidate.dim)
        candidate_bases = tuple(
            eye[candidate.grading.layer_slice(i), candidate.grading.layer_slice(i)]
            for i in range(1, candidate.depth + 1)
        )
        if _lie_signature(candidate, candidate_bases) == signature:
            result["isomorphic_to"] = candidate.name
            break
    return result

