"""
Samplers producing SetSample objects whose weights approximate Haar
measure (or Lebesgue measure on a subgroup) of the sampled region.
"""
from pathlib import Path
from typing import Any

import numpy as np
import repackage
from scipy.stats import qmc

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra, homogeneous_dimension
from src.carnot.exception import InputError
from src.carnot.group import bch, dilate_rows
from src.measure.sets import MembershipSet, SetSample
from src.metrics.gauges import box_gauge_rows, box_volume, qnorm_rows
from src.utilities.utils import CustomLogger, as_generator, derive_seeds
from src.utilities.validators import LadderValidator, NumericValidator

logger = CustomLogger(Path(__file__).name)

MAX_REJECTION_ROUNDS = 1000


def unit_box_points(dim: int, n: int, rng: np.random.Generator, method: str = "random") -> np.ndarray:
    """n points of [-1, 1]^dim, i.i.d. or from a scrambled Sobol sequence."""
    if method == "random":
        return rng.uniform(-1.0, 1.0, size=(n, dim))
    if method == "sobol":
        sampler = qmc.Sobol(d=dim, scramble=True, seed=rng)
        return 2.0 * sampler.random(n) - 1.0
    raise InputError(f"Unknown sampling method `{method}`, expected random or sobol")


def box_sample(
    alg: CarnotAlgebra,
    n: int,
    seed: Any = 0,
    center: Any = None,
    radius: float = 1.0,
    method: str = "random",
) -> SetSample:
    """
    Haar-uniform sample of Box(center, radius). In exponential coordinates
    Haar measure is Lebesgue measure, and left translation preserves it.
    """
    n = NumericValidator.validate_positive_int(n, "n")
    radius = NumericValidator.validate_positive(radius, "radius")
    rng = as_generator(seed)
    local = dilate_rows(alg, radius, unit_box_points(alg.dim, n, rng, method))
    points = local if center is None else bch(alg, np.asarray(center, dtype=float), local)
    volume = box_volume(alg, radius)
    meta = {
        "generator": f"box_sample(radius={radius}, method={method})",
        "seed": repr(seed) if not isinstance(seed, int) else seed,
        "measure_dimension": homogeneous_dimension(alg),
    }
    return SetSample(alg, points, np.full(n, volume / n), meta)


def subspace_sample(
    alg: CarnotAlgebra,
    basis: Any,
    n: int,
    seed: Any = 0,
    base_point: Any = None,
    radius: float = 1.0,
    method: str = "random",
) -> SetSample:
    """
    Sample of base . exp(V) for V spanned by the rows of `basis`. The
    coefficient of a basis vector whose top layer is i ranges over
    [-radius^i, radius^i], so the region is a box of the induced grading.
    Weights approximate Lebesgue measure in the basis coefficients.
    """
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    if basis.shape[1] != alg.dim:
        raise InputError(f"Basis rows should have {alg.dim} entries")
    n = NumericValidator.validate_positive_int(n, "n")
    rng = as_generator(seed)
    layers = np.array(
        [alg.grading.layer_index[np.flatnonzero(np.abs(b) > 1e-12)].max() for b in basis]
    )
    coefficients = unit_box_points(basis.shape[0], n, rng, method) * radius**layers
    local = coefficients @ basis
    points = local if base_point is None else bch(alg, np.asarray(base_point, dtype=float), local)
    volume = float(np.prod(2.0 * radius**layers.astype(float)))
    gram = np.sqrt(abs(np.linalg.det(basis @ basis.T)))
    meta = {
        "generator": f"subspace_sample(radius={radius}, method={method})",
        "seed": seed if isinstance(seed, int) else repr(seed),
        "measure_dimension": int(layers.sum()),
    }
    return SetSample(alg, points, np.full(n, gram * volume / n), meta)


def membership_sample(mset: MembershipSet, n: int, seed: Any = None, batch: int | None = None) -> SetSample:
    """
    Rejection sample of a membership set from its bounding box; weights
    are the box volume times the acceptance rate, split evenly.

    Raises:
        InputError: If the predicate accepts nothing after many rounds.
    """
    n = NumericValidator.validate_positive_int(n, "n")
    alg = mset.algebra
    rng = as_generator(mset.sampler_seed if seed is None else seed)
    batch = batch or max(4 * n, 1000)
    accepted = []
    count = 0
    drawn = 0
    for _ in range(MAX_REJECTION_ROUNDS):
        local = dilate_rows(alg, mset.radius, unit_box_points(alg.dim, batch, rng))
        rows = bch(alg, mset.center, local)
        keep = mset.contains(rows)
        need = n - count
        hits = np.flatnonzero(keep)
        if hits.size >= need:
            # count draws only up to the n-th acceptance
            drawn += int(hits[need - 1]) + 1
            accepted.append(rows[hits[:need]])
            count = n
            break
        drawn += batch
        accepted.append(rows[hits])
        count += hits.size
    if count < n:
        raise InputError(f"Membership set `{mset.name}` accepted only {count} of {n} points")
    volume = box_volume(alg, mset.radius) * n / drawn
    meta = {
        "generator": f"membership_sample({mset.name})",
        "measure_dimension": homogeneous_dimension(alg),
    }
    return SetSample(alg, np.vstack(accepted), np.full(n, volume / n), meta)


def multiscale_sample(
    alg: CarnotAlgebra,
    center: Any,
    radii: Any,
    n_per_shell: int,
    seed: Any = 0,
) -> SetSample:
    """
    Haar sample of Box(center, radii[0]) refined near the center: shell i
    is Box(radii[i]) minus Box(radii[i+1]), the last one a full box, each
    with `n_per_shell` points and its own unbiased weights. Keeps every
    rung of a shrinking ladder populated.
    """
    radii = LadderValidator.validate_ladder(radii, "radii")
    center = np.zeros(alg.dim) if center is None else np.asarray(center, dtype=float)
    chunks = []
    weights = []
    for i, child in enumerate(derive_seeds(seed, radii.size)):
        rng = as_generator(child)
        outer = radii[i]
        inner = radii[i + 1] if i + 1 < radii.size else 0.0
        kept = []
        count = 0
        drawn = 0
        while count < n_per_shell:
            local = dilate_rows(alg, outer, rng.uniform(-1.0, 1.0, size=(2 * n_per_shell, alg.dim)))
            mask = box_gauge_rows(alg, local) >= inner
            hits = np.flatnonzero(mask)
            need = n_per_shell - count
            if hits.size >= need:
                drawn += int(hits[need - 1]) + 1
                kept.append(local[hits[:need]])
                count = n_per_shell
            else:
                drawn += local.shape[0]
                kept.append(local[hits])
                count += hits.size
        shell = np.vstack(kept)
        chunks.append(bch(alg, center, shell))
        weights.append(np.full(n_per_shell, box_volume(alg, outer) / drawn))
    meta = {
        "generator": f"multiscale_sample(radii={[float(r) for r in radii]})",
        "measure_dimension": homogeneous_dimension(alg),
    }
    return SetSample(alg, np.vstack(chunks), np.concatenate(weights), meta)


def ball_points(alg: CarnotAlgebra, center: Any, r: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Haar-uniform points of the d_qn ball B(center, r), by rejection from
    its bounding box: layer i coordinates are bounded by r^i, horizontal
    ones by r over the square root of the smallest eigenvalue of h_inner.
    """
    stretch = 1.0 / np.sqrt(np.linalg.eigvalsh(alg.h_inner).min())
    bounds = np.power(float(r), alg.grading.layer_index.astype(float))
    bounds[: alg.horizontal_dim] *= stretch
    chunks = []
    count = 0
    while count < n:
        local = rng.uniform(-1.0, 1.0, size=(2 * n, alg.dim)) * bounds
        local = local[qnorm_rows(alg, local) <= r]
        chunks.append(local)
        count += local.shape[0]
    return bch(alg, np.asarray(center, dtype=float), np.vstack(chunks)[:n])
