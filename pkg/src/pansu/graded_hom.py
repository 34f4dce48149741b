"""Graded homomorphisms between Carnot algebras, the form of Pansu differentials."""
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import repackage

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint, dilate_rows
from src.utilities.validators import ArrayValidator

BLOCK_TOL = 1e-9


def block_mask(source: CarnotAlgebra, target: CarnotAlgebra) -> np.ndarray:
    """True where target coordinate and source coordinate share a layer."""
    return target.grading.layer_index[:, None] == source.grading.layer_index[None, :]


@dataclass(frozen=True, eq=False)
class GradedHom:
    """
    Linear map on exponential coordinates, block diagonal across layers.
    `matrix` has shape (target.dim, source.dim); source layers missing in
    the target map to zero.
    """

    source: CarnotAlgebra
    target: CarnotAlgebra
    matrix: np.ndarray
    residual: float = 0.0
    differentiable: bool = True
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.shape != (self.target.dim, self.source.dim):
            raise InputError(
                f"Homomorphism matrix should have shape {(self.target.dim, self.source.dim)}, got {matrix.shape}"
            )
        mask = block_mask(self.source, self.target)
        off_block = np.abs(matrix[~mask]).max(initial=0.0)
        if off_block > BLOCK_TOL * max(1.0, np.abs(matrix).max()):
            raise InputError(f"Matrix mixes layers (largest off-block entry {off_block:.3g})")
        matrix[~mask] = 0.0
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    def apply(self, rows: Any) -> np.ndarray:
        rows = ArrayValidator.validate_rows(rows, self.source.dim)
        return rows @ self.matrix.T

    def __call__(self, p: GroupPoint) -> GroupPoint:
        return GroupPoint(self.apply(p.coords)[0], self.target)

    def block(self, i: int) -> np.ndarray:
        """Layer-i block, 1-based."""
        if i > self.target.depth:
            return np.zeros((0, self.source.grading.layer_dims[i - 1]))
        return self.matrix[self.target.grading.layer_slice(i), self.source.grading.layer_slice(i)]

    def bracket_residual(self) -> float:
        """max over basis pairs of |L[e_i, e_j] - [L e_i, L e_j]|"""
        image_of_bracket = np.einsum("ijk,mk->ijm", self.source.tensor, self.matrix)
        bracket_of_images = np.einsum("ai,bj,abm->ijm", self.matrix, self.matrix, self.target.tensor)
        return float(np.abs(image_of_bracket - bracket_of_images).max(initial=0.0))

    def intertwines(self, t: float, atol: float = 1e-12) -> bool:
        """L h_t = h_t L on the basis."""
        eye = np.eye(self.source.dim)
        left = self.apply(dilate_rows(self.source, t, eye))
        right = dilate_rows(self.target, t, self.apply(eye))
        return bool(np.allclose(left, right, rtol=1e-12, atol=atol))

    def determinant(self) -> float:
        """|det L|, the Jacobian of L when source and target coincide; 0 otherwise."""
        if self.source.dim != self.target.dim or self.source.grading.layer_dims != self.target.grading.layer_dims:
            return 0.0
        return float(abs(np.linalg.det(self.matrix)))

    def compose(self, other: "GradedHom") -> "GradedHom":
        """self after other"""
        return GradedHom(other.source, self.target, self.matrix @ other.matrix, self.residual + other.residual)

    def to_dict(self) -> dict:
        return {
            "source": self.source.name,
            "target": self.target.name,
            "matrix": self.matrix.tolist(),
            "blocks": [self.block(i).tolist() for i in range(1, self.source.depth + 1)],
            "residual": self.residual,
            "differentiable": self.differentiable,
            "determinant": self.determinant(),
            **self.details,
        }

    @classmethod
    def from_horizontal(
        cls, source: CarnotAlgebra, target: CarnotAlgebra, horizontal: Any, **kwargs
    ) -> "GradedHom":
        """
        Extends a horizontal block to all layers through brackets: layer j
        of the source is spanned by [e_a, w] with e_a horizontal and w in
        layer j - 1, and L[e_a, w] has to be [L e_a, L w]. The least-squares
        block L_j S = T is used; the misfit shows up in bracket_residual.
        """
        horizontal = np.asarray(horizontal, dtype=float)
        d1_s, d1_t = source.horizontal_dim, target.horizontal_dim
        if horizontal.shape != (d1_t, d1_s):
            raise InputError(f"Horizontal block should have shape {(d1_t, d1_s)}, got {horizontal.shape}")
        matrix = np.zeros((target.dim, source.dim))
        matrix[:d1_t, :d1_s] = horizontal
        src_h = source.grading.layer_slice(1)
        for j in range(2, source.depth + 1):
            if j > target.depth:
                break
            src_prev = source.grading.layer_slice(j - 1)
            src_j = source.grading.layer_slice(j)
            tgt_j = target.grading.layer_slice(j)
            # columns: brackets of horizontal basis vectors with layer j-1 basis vectors
            pairs = source.tensor[src_h, src_prev, :].reshape(-1, source.dim)
            images = np.einsum(
                "ma,nb,abk->mnk", matrix[:, src_h].T, matrix[:, src_prev].T, target.tensor
            ).reshape(-1, target.dim)
            spanning = pairs[:, src_j].T
            values = images[:, tgt_j].T
            matrix[tgt_j, src_j] = values @ np.linalg.pinv(spanning)
        hom = cls(source, target, matrix, **kwargs)
        if "residual" not in kwargs:
            object.__setattr__(hom, "residual", hom.bracket_residual())
        return hom
