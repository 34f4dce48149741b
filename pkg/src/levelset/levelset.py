"""
Level sets of smooth real functions on Carnot groups: horizontal
gradients, characteristic points, surface measure, coarea, kernel
subgroups and the local approximation checks built on them.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
import repackage
from scipy import linalg, stats
from scipy.optimize import least_squares

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra, homogeneous_dimension
from src.carnot.exception import CharacteristicPointError, EmptySlabError, InputError
from src.carnot.group import GroupPoint, bch, dilate_rows, left_invariant_frame
from src.config.config import load_config
from src.levelset.fields import ScalarField
from src.measure.measure import MIN_BALL_POINTS, ball_indices, ball_measure
from src.measure.sets import SetSample
from src.metrics.gauges import box_gauge_rows, box_volume
from src.pansu.maps import scalar_map
from src.pansu.pansu import pansu_diff
from src.rectifiability.cones_rect import (
    approximability_test,
    aptan_test,
    subgroup_probes,
    tube_dist_rows,
)
from src.rectifiability.subspaces import SubspaceSpec
from src.utilities.utils import CustomLogger, as_generator, derive_seeds, parallel_map, timer
from src.utilities.validators import ArrayValidator, LadderValidator, NumericValidator

config = load_config()
logger = CustomLogger(Path(__file__).name)

LEVEL = config["levelset"]
PILOT_POINTS = 1024


def _coords(alg: CarnotAlgebra, x: Any, name: str = "x") -> np.ndarray:
    if isinstance(x, GroupPoint):
        x = x.coords
    return ArrayValidator.validate_vector(x, alg.dim, name)


def _stretch(alg: CarnotAlgebra) -> float:
    return max(1.0, 1.0 / float(np.sqrt(np.linalg.eigvalsh(alg.h_inner).min())))


def _fd_hgrad_rows(f: ScalarField, rows: np.ndarray, h: float) -> np.ndarray:
    """Central differences along t -> x exp(t e_i) for every horizontal e_i."""
    alg = f.algebra
    out = np.empty((rows.shape[0], alg.horizontal_dim))
    for i in range(alg.horizontal_dim):
        step = np.zeros(alg.dim)
        step[i] = h
        out[:, i] = (f.rows(bch(alg, rows, step)) - f.rows(bch(alg, rows, -step))) / (2 * h)
    return out


def hgrad_rows(f: ScalarField, rows: Any, method: str = "auto") -> np.ndarray:
    """
    (n, d1) components X_i f. `auto` uses the closed form when the field has
    one, `fd` forces central differences.
    """
    rows = ArrayValidator.validate_rows(rows, f.algebra.dim)
    if method == "auto" and f.analytic:
        return np.asarray(f.hgrad(rows), dtype=float).reshape(rows.shape[0], f.algebra.horizontal_dim)
    if method not in ("auto", "fd"):
        raise InputError(f"Unknown gradient method `{method}`, expected auto or fd")
    return _fd_hgrad_rows(f, rows, LEVEL["fd_step"])


def hnorm_rows(alg: CarnotAlgebra, components: np.ndarray) -> np.ndarray:
    """Length of sum_i g_i X_i given the components X_i f, in the h_inner metric."""
    inverse = np.linalg.inv(alg.h_inner)
    return np.sqrt(np.maximum(np.einsum("ni,ij,nj->n", components, inverse, components), 0.0))


def horizontal_gradient(f: ScalarField, x: Any, method: str = "auto") -> np.ndarray:
    """
    Components (X_1 f, ..., X_d1 f) at x.

    Args:
        f (ScalarField): Field.
        x (Any): Point (GroupPoint or coordinates).
        method (str, optional): `auto` or `fd`. Defaults to "auto".

    Returns:
        np.ndarray: Horizontal gradient components.
    """
    return hgrad_rows(f, _coords(f.algebra, x), method)[0]


def horizontal_gradient_norm(f: ScalarField, x: Any) -> float:
    return float(hnorm_rows(f.algebra, horizontal_gradient(f, x)[None, :])[0])


def _coordinate_gradient_rows(f: ScalarField, rows: np.ndarray) -> np.ndarray:
    h = LEVEL["fd_step"]
    out = np.empty_like(rows)
    for j in range(rows.shape[1]):
        step = np.zeros(rows.shape[1])
        step[j] = h
        out[:, j] = (f.rows(rows + step) - f.rows(rows - step)) / (2 * h)
    return out


def riemannian_gradient_rows(f: ScalarField, rows: Any) -> np.ndarray:
    """
    (n, dim) components X_j f in the left-invariant frame of every basis
    vector, computed from coordinate differences; the horizontal ones are
    replaced by the closed form when the field has one.
    """
    rows = ArrayValidator.validate_rows(rows, f.algebra.dim)
    frame = left_invariant_frame(f.algebra, rows)
    grad = np.einsum("nkj,nk->nj", frame, _coordinate_gradient_rows(f, rows))
    if f.analytic:
        grad[:, : f.algebra.horizontal_dim] = hgrad_rows(f, rows)
    return grad


def riemannian_gradient(f: ScalarField, x: Any) -> np.ndarray:
    return riemannian_gradient_rows(f, _coords(f.algebra, x))[0]


def _riemannian_norm_rows(alg: CarnotAlgebra, components: np.ndarray) -> np.ndarray:
    inverse = np.linalg.inv(alg.riemannian_metric)
    return np.sqrt(np.maximum(np.einsum("ni,ij,nj->n", components, inverse, components), 0.0))


def surface_density(f: ScalarField, x: Any) -> float:
    """
    |grad_0 f| / |grad f| at x, the factor turning Riemannian area on the
    level set into its (k-1)-dimensional homogeneous measure. NaN, with an
    INFO log, where the full gradient vanishes.
    """
    alg = f.algebra
    grad = riemannian_gradient(f, x)[None, :]
    full = float(_riemannian_norm_rows(alg, grad)[0])
    if full == 0.0:
        logger.info(f"Gradient of `{f.name}` vanishes, surface density is singular")
        return float("nan")
    horizontal = float(hnorm_rows(alg, grad[:, : alg.horizontal_dim])[0])
    return min(1.0, horizontal / full)


def _local_scale(f: ScalarField, x: np.ndarray) -> float:
    """Local Lipschitz scale of f, at least 1."""
    grad = riemannian_gradient_rows(f, x)
    return max(1.0, float(_riemannian_norm_rows(f.algebra, grad)[0]))


def _characteristic_tol(f: ScalarField, x: np.ndarray, tol: float | None) -> float:
    if tol is not None:
        return NumericValidator.validate_positive(tol, "tol")
    return LEVEL["characteristic_tol"] * _local_scale(f, x)


def _require_level(f: ScalarField, t: float, x: np.ndarray, tol: float) -> None:
    level_tol = LEVEL["level_tol_factor"] * max(tol, LEVEL["newton_tol"])
    residual = abs(f(x) - t)
    if residual >= level_tol:
        raise InputError(f"Point is off the level set {f.name} = {t:g} (residual {residual:.3g})")


def characteristic_test(f: ScalarField, t: float, x: Any, tol: float | None = None) -> bool:
    """
    True iff |grad_0 f(x)| < tol for x on f = t.

    Raises:
        InputError: If x is off the level set.
    """
    x = _coords(f.algebra, x)
    tol = _characteristic_tol(f, x, tol)
    _require_level(f, t, x, tol)
    return horizontal_gradient_norm(f, x) < tol


def generic_test(f: ScalarField, x: Any, tol: float | None = None) -> bool:
    """True iff every component X_i f(x) is nonzero beyond tol."""
    x = _coords(f.algebra, x)
    tol = _characteristic_tol(f, x, tol)
    return bool(np.all(np.abs(horizontal_gradient(f, x)) > tol))


def _dedupe(points: list[np.ndarray]) -> np.ndarray:
    kept: list[np.ndarray] = []
    for p in points:
        if all(np.linalg.norm(p - q) > LEVEL["dedupe_tol"] * (1.0 + np.linalg.norm(q)) for q in kept):
            kept.append(p)
    return np.array(kept)


def characteristic_points(
    f: ScalarField,
    t: float,
    center: Any = None,
    radius: float = 1.5,
    n_starts: int | None = None,
    seed: Any = 0,
) -> np.ndarray:
    """
    Solves f = t and grad_0 f = 0 by least squares from random starts in
    Box(center, radius). Converged solutions are deduplicated.

    Returns:
        np.ndarray: (m, dim) characteristic points, possibly empty.
    """
    alg = f.algebra
    radius = NumericValidator.validate_positive(radius, "radius")
    center = np.zeros(alg.dim) if center is None else _coords(alg, center, "center")
    n_starts = NumericValidator.validate_positive_int(n_starts or LEVEL["characteristic_starts"], "n_starts")
    rng = as_generator(seed)
    starts = bch(alg, center, dilate_rows(alg, radius, rng.uniform(-1.0, 1.0, size=(n_starts, alg.dim))))

    def residual(z):
        row = z[None, :]
        return np.concatenate([f.rows(row) - t, hgrad_rows(f, row)[0]])

    found = []
    for start in starts:
        solution = least_squares(residual, start, jac="3-point", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        z = solution.x
        tol = _characteristic_tol(f, z, None)
        if abs(f(z) - t) < LEVEL["newton_tol"] and horizontal_gradient_norm(f, z) < tol:
            found.append(z)
    points = _dedupe(found)
    logger.info(f"Found {len(points)} characteristic point(s) of {f.name} = {t:g}")
    return points.reshape(-1, alg.dim)


@dataclass(frozen=True, eq=False)
class LevelSetSample:
    field: ScalarField
    level: float
    sample: SetSample
    residuals: np.ndarray

    def __len__(self) -> int:
        return len(self.sample)

    def to_dict(self) -> dict:
        return {
            "field": self.field.name,
            "level": self.level,
            "n": len(self.sample),
            "max_residual": float(self.residuals.max()),
            "total_weight": self.sample.total_weight,
        }


def _slab_halfwidth(f: ScalarField, center: np.ndarray, radius: float, rng: np.random.Generator) -> float:
    alg = f.algebra
    pilot = bch(alg, center, dilate_rows(alg, radius, rng.uniform(-1.0, 1.0, size=(PILOT_POINTS, alg.dim))))
    values = f.rows(pilot)
    spread = float(np.ptp(values))
    if spread == 0.0:
        raise EmptySlabError(f"Field `{f.name}` is constant on the sampled region")
    return LEVEL["slab_fraction"] * spread


def _slab_draw(
    f: ScalarField,
    t: float,
    center: np.ndarray,
    outer: float,
    inner: float,
    h: float,
    n: int,
    rng: np.random.Generator,
    exclude: tuple | None,
) -> tuple[np.ndarray, int]:
    """
    Rejection draws of Box(center, outer) minus Box(center, inner) inside
    the slab |f - t| < h. Draws are counted up to the n-th acceptance.
    """
    alg = f.algebra
    batch = max(4 * n, 4096)
    accepted = []
    count = 0
    drawn = 0
    for _ in range(LEVEL["max_draw_batches"]):
        local = dilate_rows(alg, outer, rng.uniform(-1.0, 1.0, size=(batch, alg.dim)))
        rows = bch(alg, center, local)
        keep = np.abs(f.rows(rows) - t) < h
        if inner > 0:
            keep &= box_gauge_rows(alg, local) >= inner
        if exclude is not None:
            ex_center, ex_radius = exclude
            keep &= box_gauge_rows(alg, bch(alg, -np.asarray(ex_center, dtype=float), rows)) >= ex_radius
        hits = np.flatnonzero(keep)
        need = n - count
        if hits.size >= need:
            drawn += int(hits[need - 1]) + 1
            accepted.append(rows[hits[:need]])
            count = n
            break
        drawn += batch
        accepted.append(rows[hits])
        count += hits.size
    if count < n:
        logger.warning(f"Slab of {f.name} = {t:g} gave {count} of {n} points after {LEVEL['max_draw_batches']} batches")
    return np.vstack(accepted), drawn


def newton_project(f: ScalarField, t: float, rows: Any) -> tuple[np.ndarray, np.ndarray]:
    """
    Moves every row onto f = t by Newton steps x -> x exp(s v) along the
    Riemannian gradient v.

    Returns:
        tuple[np.ndarray, np.ndarray]: Projected rows and |f - t| residuals.
    """
    alg = f.algebra
    rows = ArrayValidator.validate_rows(rows, alg.dim).copy()
    inverse = np.linalg.inv(alg.riemannian_metric)
    residuals = f.rows(rows) - t
    for _ in range(LEVEL["newton_max_iter"]):
        active = np.isfinite(residuals) & (np.abs(residuals) >= LEVEL["newton_tol"])
        if not np.any(active):
            break
        grad = riemannian_gradient_rows(f, rows[active])
        direction = grad @ inverse
        slope = np.einsum("nj,nj->n", grad, direction)
        movable = slope > 0
        steps = np.zeros(slope.shape)
        steps[movable] = -residuals[active][movable] / slope[movable]
        rows[active] = bch(alg, rows[active], steps[:, None] * direction)
        moved = active & np.all(np.isfinite(rows), axis=1)
        residuals[active & ~moved] = np.inf
        residuals[moved] = f.rows(rows[moved]) - t
    return rows, np.abs(residuals)


def _project_and_weigh(
    f: ScalarField, t: float, rows: np.ndarray, volume: float, drawn: int, h: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Newton projection and coarea weights volume |grad_0 f| / (drawn 2h).
    The gradient is evaluated at the drawn point, before projection.
    Rows that miss the tolerance or were drawn on the characteristic set
    are dropped.
    """
    weights = volume * hnorm_rows(f.algebra, hgrad_rows(f, rows)) / (drawn * 2.0 * h)
    rows, residuals = newton_project(f, t, rows)
    keep = (residuals < LEVEL["newton_tol"]) & (weights > 0)
    if not np.all(keep):
        logger.warning(f"Dropped {int((~keep).sum())} level point(s) of {f.name} = {t:g} after projection")
    return rows[keep], residuals[keep], weights[keep]


def _level_meta(f: ScalarField, t: float, generator: str, seed: Any) -> dict:
    return {
        "generator": generator,
        "field": f.name,
        "level": float(t),
        "seed": seed if isinstance(seed, int) else repr(seed),
        "measure_dimension": homogeneous_dimension(f.algebra) - 1,
    }


@timer
def level_sample(
    f: ScalarField,
    t: float,
    center: Any = None,
    radius: float = 1.0,
    n: int | None = None,
    seed: Any = 0,
    exclude: tuple | None = None,
) -> LevelSetSample:
    """
    Sample of f = t inside Box(center, radius): rejection sampling of the
    slab |f - t| < h, with h a fixed fraction of the range of f over the
    box, then Newton projection. Weights estimate the (k-1)-dimensional
    measure through the coarea formula.

    Args:
        f (ScalarField): Field.
        t (float): Level.
        center (Any, optional): Box center. Defaults to the identity.
        radius (float, optional): Box radius. Defaults to 1.0.
        n (int, optional): Requested points. Defaults to config.
        seed (Any, optional): Seed. Defaults to 0.
        exclude (tuple, optional): (center, radius) box left out.

    Raises:
        EmptySlabError: If no draw hits the slab.

    Returns:
        LevelSetSample: Points on the level with residuals below tolerance.
    """
    alg = f.algebra
    radius = NumericValidator.validate_positive(radius, "radius")
    n = NumericValidator.validate_positive_int(n or LEVEL["level_samples"], "n")
    center = np.zeros(alg.dim) if center is None else _coords(alg, center, "center")
    rng = as_generator(seed)
    h = _slab_halfwidth(f, center, radius, rng)
    rows, drawn = _slab_draw(f, t, center, radius, 0.0, h, n, rng, exclude)
    if rows.shape[0] == 0:
        raise EmptySlabError(f"No points of the slab around {f.name} = {t:g}")
    rows, residuals, weights = _project_and_weigh(f, t, rows, box_volume(alg, radius), drawn, h)
    if rows.shape[0] == 0:
        raise EmptySlabError(f"No projected points on {f.name} = {t:g}")
    meta = _level_meta(f, t, f"level_sample(radius={radius})", seed)
    return LevelSetSample(f, float(t), SetSample(alg, rows, weights, meta), residuals)


@timer
def level_sample_multiscale(
    f: ScalarField,
    t: float,
    x: Any,
    radii: Any,
    n_per_shell: int | None = None,
    seed: Any = 0,
) -> LevelSetSample:
    """
    Level sample refined towards x: shell i is Box(x, radii[i]) minus
    Box(x, radii[i+1]) with its own slab width and weights, so small balls
    around x keep enough points.

    Raises:
        EmptySlabError: If every shell misses the slab.
    """
    alg = f.algebra
    radii = LadderValidator.validate_ladder(radii, "radii")
    n = NumericValidator.validate_positive_int(n_per_shell or LEVEL["shell_samples"], "n_per_shell")
    x = _coords(alg, x)
    chunks, residual_chunks, weight_chunks = [], [], []
    for i, child in enumerate(derive_seeds(seed, radii.size)):
        rng = as_generator(child)
        outer = float(radii[i])
        inner = float(radii[i + 1]) if i + 1 < radii.size else 0.0
        try:
            h = _slab_halfwidth(f, x, outer, rng)
        except EmptySlabError:
            continue
        rows, drawn = _slab_draw(f, t, x, outer, inner, h, n, rng, None)
        if rows.shape[0] == 0:
            logger.warning(f"Shell {i} around the base point missed the slab of {f.name} = {t:g}")
            continue
        rows, residuals, weights = _project_and_weigh(f, t, rows, box_volume(alg, outer), drawn, h)
        chunks.append(rows)
        residual_chunks.append(residuals)
        weight_chunks.append(weights)
    if not chunks or sum(c.shape[0] for c in chunks) == 0:
        raise EmptySlabError(f"No shell around the base point meets {f.name} = {t:g}")
    meta = _level_meta(f, t, f"level_sample_multiscale(radii={[float(r) for r in radii]})", seed)
    sample = SetSample(alg, np.vstack(chunks), np.concatenate(weight_chunks), meta)
    return LevelSetSample(f, float(t), sample, np.concatenate(residual_chunks))


def characteristic_locus_sample(
    f: ScalarField,
    t: float,
    center: Any = None,
    radius: float = 1.5,
    n: int | None = None,
    seed: Any = 0,
) -> SetSample | None:
    """
    Points of f = t where grad_0 f almost vanishes: level sample points
    below locus_tol together with the solved characteristic points.
    None when nothing is found.
    """
    alg = f.algebra
    level_seed, solve_seed = derive_seeds(seed, 2)
    level = level_sample(f, t, center, radius, n, level_seed)
    points = level.sample.points
    near = hnorm_rows(alg, hgrad_rows(f, points)) < LEVEL["locus_tol"]
    solved = characteristic_points(f, t, center, radius, seed=solve_seed)
    rows = np.vstack([solved, points[near]]) if near.any() else solved
    if rows.shape[0] == 0:
        logger.info(f"No characteristic points of {f.name} = {t:g} in the region")
        return None
    meta = {"generator": "characteristic_locus", "field": f.name, "level": float(t), "measure_dimension": 0}
    return SetSample(alg, rows, None, meta)


def coarea_check(
    f: ScalarField,
    u: Callable[[np.ndarray], np.ndarray],
    center: Any = None,
    radius: float = 1.0,
    n_samples: int | None = None,
    levels: int | None = None,
    n_level: int | None = None,
    seed: Any = 0,
    threads: int | None = None,
) -> dict:
    """
    Both sides of the coarea formula over Box(center, radius): the left as a
    Monte Carlo mean of u |grad_0 f|, the right as a midpoint rule over
    levels of the level-sample integral of u. Seeds do not depend on u, so
    runs with different weights share their random numbers.

    A weight that is discontinuous across levels (an annulus of f, say)
    makes the level integral jump; the two strata around every jump larger
    than `coarea_jump` times the largest integral are split into
    `coarea_refine` sub-levels each.
    """
    alg = f.algebra
    radius = NumericValidator.validate_positive(radius, "radius")
    n_samples = NumericValidator.validate_positive_int(n_samples or LEVEL["coarea_samples"], "n_samples")
    levels = NumericValidator.validate_positive_int(levels or LEVEL["coarea_levels"], "levels")
    n_level = n_level or LEVEL["coarea_level_samples"]
    center = np.zeros(alg.dim) if center is None else _coords(alg, center, "center")
    seeds = derive_seeds(seed, levels + 1)

    rng = as_generator(seeds[0])
    rows = bch(alg, center, dilate_rows(alg, radius, rng.uniform(-1.0, 1.0, size=(n_samples, alg.dim))))
    weights = np.asarray(u(rows), dtype=float).reshape(-1)
    if np.any(weights < 0):
        raise InputError("Coarea weight u should be nonnegative")
    lhs = box_volume(alg, radius) * float(np.mean(weights * hnorm_rows(alg, hgrad_rows(f, rows))))

    values = f.rows(rows)
    low, high = float(values.min()), float(values.max())
    width = (high - low) / levels
    grid = low + width * (np.arange(levels) + 0.5)

    def level_integral(item):
        t, child = item
        try:
            level = level_sample(f, t, center, radius, n_level, child)
        except EmptySlabError:
            return 0.0
        return float(np.sum(level.sample.weights * np.asarray(u(level.sample.points), dtype=float).reshape(-1)))

    integrals = np.array(parallel_map(level_integral, zip(grid, seeds[1:]), threads))
    refined = np.zeros(levels, dtype=bool)
    scale = float(np.abs(integrals).max())
    if scale > 0 and levels > 1:
        jumps = np.abs(np.diff(integrals)) > LEVEL["coarea_jump"] * scale
        refined[:-1] |= jumps
        refined[1:] |= jumps
    parts = LEVEL["coarea_refine"]
    items = [
        (grid[i] - width / 2 + (width / parts) * (j + 0.5), child)
        for i in np.flatnonzero(refined)
        for j, child in enumerate(derive_seeds(seeds[i + 1], parts))
    ]
    if items:
        logger.info(f"Coarea levels of {f.name}: splitting {int(refined.sum())} stratum(s) around jumps")
        sub = np.array(parallel_map(level_integral, items, threads)).reshape(-1, parts)
        integrals[refined] = sub.mean(axis=1)
    rhs = width * float(np.sum(integrals))
    ratio = lhs / rhs if rhs > 0 else None
    return {
        "lhs": lhs,
        "rhs": rhs,
        "ratio": ratio,
        "levels": [
            {"t": float(t), "integral": float(v), "refined": bool(r)} for t, v, r in zip(grid, integrals, refined)
        ],
    }


def kernel_subgroup(f: ScalarField, x: Any, scale_ladder: Any = None) -> SubspaceSpec:
    """
    x . ker(df_x), from the Pansu differential of f seen as a map into the
    real line: per layer, the null space of the differential's block. Every
    layer above the first is annihilated, so the kernel holds all of them.

    Raises:
        CharacteristicPointError: If grad_0 f(x) vanishes.
    """
    alg = f.algebra
    x = _coords(alg, x)
    if horizontal_gradient_norm(f, x) < _characteristic_tol(f, x, None):
        raise CharacteristicPointError("The kernel subgroup is the whole group at a characteristic point")
    hom = pansu_diff(scalar_map(alg, f.values, f.name), x, scale_ladder)
    rows = []
    for i in range(1, alg.depth + 1):
        block = hom.matrix[:, alg.grading.layer_slice(i)]
        null = linalg.null_space(block) if np.any(block) else np.eye(alg.grading.layer_dims[i - 1])
        for vector in null.T:
            row = np.zeros(alg.dim)
            row[alg.grading.layer_slice(i)] = vector
            rows.append(row)
    spec = SubspaceSpec.from_basis(alg, np.array(rows), x)
    if not spec.is_subalgebra:
        logger.warning(f"Kernel of d{f.name} at {x.tolist()} is not bracket closed")
    return spec


def kernel_slope(f: ScalarField, x: Any) -> float:
    """b / a along the horizontal kernel direction aX + bY of a two-generator group."""
    if f.algebra.horizontal_dim != 2:
        raise InputError("Kernel slope needs a group with two horizontal generators")
    direction = kernel_subgroup(f, x).layer_bases[0][:, 0]
    if direction[0] == 0.0:
        return float("inf")
    return float(direction[1] / direction[0])


def _decays(ratios: list[float]) -> bool:
    if max(ratios) <= LEVEL["zero_ratio"]:
        return True
    return ratios[-1] < LEVEL["decay_factor"] * ratios[0]


def _require_noncharacteristic(f: ScalarField, t: float, x: np.ndarray) -> None:
    if characteristic_test(f, t, x):
        raise CharacteristicPointError(f"Point is characteristic on {f.name} = {t:g}")


def _local_level(
    f: ScalarField, t: float, x: np.ndarray, outer: float, s_ladder: np.ndarray, n_per_shell: int | None, seed: Any
) -> LevelSetSample:
    radii = np.concatenate([[outer], s_ladder * _stretch(f.algebra)])
    radii = np.unique(radii)[::-1]
    return level_sample_multiscale(f, t, x, radii, n_per_shell, seed)


def cond1_check(
    f: ScalarField,
    t: float,
    x: Any,
    s_ladder: Any = None,
    n_per_shell: int | None = None,
    seed: Any = 0,
    level: LevelSetSample | None = None,
) -> dict:
    """
    Per rung s, the largest tube distance from level points in B(x, s) to
    T_x, over s. Passes when the last ratio is below decay_factor times
    the first, or all ratios vanish.

    Raises:
        CharacteristicPointError: If x is characteristic.
    """
    alg = f.algebra
    s_ladder = LadderValidator.validate_ladder(LEVEL["s_ladder"] if s_ladder is None else s_ladder, "s_ladder", 2)
    x = _coords(alg, x)
    _require_noncharacteristic(f, t, x)
    spec = kernel_subgroup(f, x)
    level = level or _local_level(f, t, x, float(s_ladder[0]) * _stretch(alg), s_ladder, n_per_shell, seed)
    rungs = []
    for s in s_ladder:
        inside = ball_indices(level.sample, x, float(s))
        if inside.size == 0:
            logger.warning(f"No level points within {s:g} of the base point")
            break
        inside = inside[: LEVEL["cond_points"]]
        distances = tube_dist_rows(spec, level.sample.points[inside])
        rungs.append({"s": float(s), "ratio": float(distances.max()) / float(s), "points": int(inside.size)})
    if len(rungs) < 2:
        raise InputError("Too few resolved rungs for the tube decay check")
    ratios = [rung["ratio"] for rung in rungs]
    return {"passed": _decays(ratios), "rungs": rungs, "kernel": spec.to_dict()}


def cond2_check(
    f: ScalarField,
    t: float,
    x: Any,
    alpha: float | None = None,
    s_ladder: Any = None,
    n_probes: int | None = None,
    n_per_shell: int | None = None,
    seed: Any = 0,
    level: LevelSetSample | None = None,
) -> dict:
    """
    Per rung s, theta_s = min over probes x' of T_x within s of x of the
    level-set measure of B(x', alpha s), over s^(k-1). Passes when theta
    stays positive and above theta_floor times its largest value.

    Raises:
        CharacteristicPointError: If x is characteristic.
    """
    alg = f.algebra
    alpha = NumericValidator.validate_positive(LEVEL["alpha"] if alpha is None else alpha, "alpha")
    s_ladder = LadderValidator.validate_ladder(LEVEL["s_ladder"] if s_ladder is None else s_ladder, "s_ladder", 2)
    n_probes = NumericValidator.validate_positive_int(n_probes or LEVEL["cond_probes"], "n_probes")
    x = _coords(alg, x)
    _require_noncharacteristic(f, t, x)
    spec = kernel_subgroup(f, x)
    k = homogeneous_dimension(alg)
    outer = (1.0 + alpha) * float(s_ladder[0]) * _stretch(alg)
    level = level or _local_level(f, t, x, outer, s_ladder, n_per_shell, seed)
    rungs = []
    for i, (s, child) in enumerate(zip(s_ladder, derive_seeds(seed, s_ladder.size))):
        s = float(s)
        if i > 0 and ball_indices(level.sample, x, alpha * s).size < MIN_BALL_POINTS:
            logger.warning(f"Ladder truncated at sampling resolution after {len(rungs)} rung(s)")
            break
        probes = subgroup_probes(spec, s, n_probes, as_generator(child))
        theta = min(ball_measure(level.sample, b, alpha * s) for b in probes) / s ** (k - 1)
        rungs.append({"s": s, "theta": theta})
    thetas = np.array([rung["theta"] for rung in rungs])
    passed = bool(thetas.min() > 0 and thetas.min() >= LEVEL["theta_floor"] * thetas.max())
    return {"passed": passed, "alpha": alpha, "theta": float(thetas.min()), "rungs": rungs}


def ahlfors_check(
    level: LevelSetSample,
    x: Any,
    r: float,
    s_ladder: Any,
    panel: int | None = None,
    seed: Any = 0,
) -> dict:
    """
    Pooled log-log fit of level-set ball measure against s for a panel of
    level points y within r of x (x first), and the two-sided constant A
    with A^-1 s^(k-1) <= mass <= A s^(k-1). Balls with fewer than
    MIN_BALL_POINTS points are skipped.

    Raises:
        InputError: If fewer than three rungs are resolved.
    """
    sample = level.sample
    alg = sample.algebra
    x = _coords(alg, x)
    r = NumericValidator.validate_positive(r, "r")
    s_ladder = LadderValidator.validate_ladder(s_ladder, "s_ladder", 3)
    panel = NumericValidator.validate_positive_int(panel or LEVEL["ahlfors_panel"], "panel")
    near = ball_indices(sample, x, r)
    rng = as_generator(seed)
    chosen = rng.choice(near, size=min(panel - 1, near.size), replace=False) if near.size else near
    centers = np.vstack([x[None, :], sample.points[np.sort(chosen)]])
    dimension = homogeneous_dimension(alg) - 1
    scales, masses = [], []
    skipped = 0
    for y in centers:
        for s in s_ladder:
            inside = ball_indices(sample, y, float(s))
            if inside.size < MIN_BALL_POINTS:
                skipped += 1
                continue
            scales.append(float(s))
            masses.append(float(sample.weights[inside].sum()))
    if len(set(scales)) < 3:
        raise InputError("Too few resolved rungs for the Ahlfors regularity fit")
    if skipped:
        logger.warning(f"Skipped {skipped} ball(s) below sampling resolution")
    scales, masses = np.array(scales), np.array(masses)
    fit = stats.linregress(np.log(scales), np.log(masses))
    ratios = masses / scales**dimension
    return {
        "exponent": float(fit.slope),
        "r2": float(fit.rvalue**2),
        "expected": dimension,
        "A": float(max(ratios.max(), 1.0 / ratios.min())),
        "pairs": int(scales.size),
        "panel": int(centers.shape[0]),
        "skipped": skipped,
    }


@timer
def tangent_approx_report(
    f: ScalarField,
    t: float,
    x: Any,
    alpha: float | None = None,
    s_ladder: Any = None,
    slopes: Any = None,
    n_per_shell: int | None = None,
    seed: Any = 0,
) -> dict:
    """
    Kernel subgroup T_x, both local conditions and the approximability and
    approximate tangent cone testers on a level sample around x, with T_x
    as the subgroup. `not_applicable` at characteristic points.
    """
    alg = f.algebra
    x = _coords(alg, x)
    alpha = LEVEL["alpha"] if alpha is None else alpha
    s_ladder = LadderValidator.validate_ladder(LEVEL["s_ladder"] if s_ladder is None else s_ladder, "s_ladder", 2)
    slopes = LEVEL["slopes"] if slopes is None else slopes
    if characteristic_test(f, t, x):
        logger.info(f"Characteristic point of {f.name} = {t:g}, tangent report not applicable")
        return {"verdict": "not_applicable", "passed": False, "generic": False}
    spec = kernel_subgroup(f, x)
    outer = (1.0 + alpha) * float(s_ladder[0]) * _stretch(alg)
    level = _local_level(f, t, x, outer, s_ladder, n_per_shell, seed)
    cond1 = cond1_check(f, t, x, s_ladder, seed=seed, level=level)
    cond2 = cond2_check(f, t, x, alpha, s_ladder, seed=seed, level=level)
    approx = approximability_test(level.sample, x, spec, alpha, s_ladder, seed=seed)
    aptan = aptan_test(level.sample, x, spec, slopes, s_ladder)
    passed = cond1["passed"] and cond2["passed"] and approx["passed"] and aptan["passed"]
    return {
        "verdict": "pass" if passed else "fail",
        "passed": passed,
        "generic": generic_test(f, x),
        "kernel": spec.to_dict(),
        "cond1": cond1,
        "cond2": cond2,
        "approximability": approx,
        "aptan": aptan,
    }
