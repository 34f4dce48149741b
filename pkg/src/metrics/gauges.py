"""Homogeneous gauges evaluated row-wise on exponential coordinates."""
import numpy as np
import repackage

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra


def horizontal_norm_rows(alg: CarnotAlgebra, v: np.ndarray) -> np.ndarray:
    """h_inner norm of (n, d1) horizontal vectors."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(np.maximum(np.einsum("ni,ij,nj->n", v, alg.h_inner, v), 0.0))


def layer_norms(alg: CarnotAlgebra, coords: np.ndarray) -> list[np.ndarray]:
    """Per-layer norms; layer 1 uses h_inner, higher layers are Euclidean."""
    coords = np.asarray(coords, dtype=float)
    coords = coords.reshape(1, -1) if coords.ndim == 1 else coords
    norms = [horizontal_norm_rows(alg, coords[:, alg.grading.layer_slice(1)])]
    for i in range(2, alg.depth + 1):
        norms.append(np.linalg.norm(coords[:, alg.grading.layer_slice(i)], axis=1))
    return norms


def qnorm_rows(alg: CarnotAlgebra, coords: np.ndarray) -> np.ndarray:
    """(sum_i |v_i|^(2/i))^(1/2) for every row."""
    total = 0.0
    for i, norm in enumerate(layer_norms(alg, coords), start=1):
        total = total + norm ** (2.0 / i)
    return np.sqrt(total)


def box_gauge_rows(alg: CarnotAlgebra, coords: np.ndarray) -> np.ndarray:
    """max_j |coord_j|^(1/layer(j)) for every row."""
    coords = np.asarray(coords, dtype=float)
    coords = coords.reshape(1, -1) if coords.ndim == 1 else coords
    return np.max(np.abs(coords) ** (1.0 / alg.grading.layer_index), axis=1)


def box_volume(alg: CarnotAlgebra, radius: float) -> float:
    """Lebesgue (Haar) volume of Box(0, radius) in exponential coordinates."""
    return float(np.prod(2.0 * radius ** alg.grading.layer_index.astype(float)))
