"""
Quasi-norm and box gauges, Ball-Box comparisons and numerical
Carnot-Caratheodory distance bounds.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any

import numpy as np
import repackage

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra, homogeneous_dimension
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint, bch, check_same_algebra, dilate_rows, relative_rows
from src.config.config import load_config
from src.metrics.cc_solver import CCDistanceEstimate, SolverOptions, solve_cc
from src.metrics.gauges import box_gauge_rows, qnorm_rows
from src.utilities.const import METRICS
from src.utilities.utils import CustomLogger, as_generator, derive_seeds, timer
from src.utilities.validators import LadderValidator, NumericValidator

config = load_config()
logger = CustomLogger(Path(__file__).name)


def qnorm(p: GroupPoint) -> float:
    return float(qnorm_rows(p.algebra, p.coords)[0])


def d_qn(p: GroupPoint, q: GroupPoint) -> float:
    """|p^-1 q|_qn"""
    check_same_algebra(p, q)
    return float(qnorm_rows(p.algebra, relative_rows(p.algebra, p.coords, q.coords))[0])


def box_gauge(p: GroupPoint, center: GroupPoint | None = None) -> float:
    if center is None:
        return float(box_gauge_rows(p.algebra, p.coords)[0])
    check_same_algebra(center, p)
    return float(box_gauge_rows(p.algebra, relative_rows(p.algebra, center.coords, p.coords))[0])


def box_contains(center: GroupPoint, r: float, p: GroupPoint) -> bool:
    """p in Box(center, r)"""
    r = NumericValidator.validate_positive(r, "r")
    return box_gauge(p, center) < r


def box_contains_rows(alg: CarnotAlgebra, center: np.ndarray, r: float, rows: np.ndarray) -> np.ndarray:
    return box_gauge_rows(alg, relative_rows(alg, center, rows)) < r


def validate_metric(metric: str) -> str:
    if metric not in METRICS:
        raise InputError(f"`metric` param should be one of {', '.join(METRICS)}")
    return metric


def distance_rows(
    alg: CarnotAlgebra,
    x: np.ndarray,
    points: np.ndarray,
    metric: str = "qn",
    cc_opts: dict | None = None,
) -> np.ndarray:
    """
    Distances from x to every row of `points` in the chosen metric. The
    `cc` metric solves one path problem per row and returns upper bounds.
    """
    validate_metric(metric)
    rel = relative_rows(alg, x, points)
    if metric == "qn":
        return qnorm_rows(alg, rel)
    if metric == "box":
        return box_gauge_rows(alg, rel)
    return np.array([solve_cc(alg, row, cc_opts).upper for row in rel])


def cc_upper(p: GroupPoint, q: GroupPoint, opts: dict | None = None) -> CCDistanceEstimate:
    """
    Numerical CC distance between p and q: upper bound from the best
    horizontal path found, lower bound from the horizontal displacement.

    Args:
        p (GroupPoint): Start.
        q (GroupPoint): End.
        opts (dict | None, optional): Solver options (segments, restarts,
        max_iter, endpoint_tol, seed, ...). Defaults to config values.

    Raises:
        InputError: On algebra mismatch.
        SolverError: If no path met the endpoint tolerance.

    Returns:
        CCDistanceEstimate: Bounds, controls and convergence data.
    """
    check_same_algebra(p, q)
    displacement = relative_rows(p.algebra, p.coords, q.coords)[0]
    return solve_cc(p.algebra, displacement, opts)


def unit_sphere_sample(alg: CarnotAlgebra, n: int, rng: np.random.Generator) -> np.ndarray:
    raw = rng.normal(size=(n, alg.dim))
    scale = qnorm_rows(alg, raw)
    return dilate_rows_each(alg, 1.0 / scale, raw)


def dilate_rows_each(alg: CarnotAlgebra, t: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Dilates row n by t[n]."""
    return rows * np.power(np.asarray(t, dtype=float)[:, None], alg.grading.layer_index[None, :])


@timer
def calibrate_equivalence(
    alg: CarnotAlgebra, n_samples: int | None = None, seed: Any = 0, opts: dict | None = None
) -> float:
    """
    Empirical biLipschitz constant between d_cc and d_qn: the largest
    max/min ratio of cc_upper and qnorm over unit-qnorm points. By
    homogeneity this calibrates the comparison on the whole group.
    """
    n_samples = n_samples or config["metrics"]["calibration_samples"]
    rng = as_generator(derive_seeds(seed, 2)[0])
    points = unit_sphere_sample(alg, n_samples, rng)
    solver_seeds = derive_seeds(seed, n_samples + 2)[2:]
    base = SolverOptions.from_dict(opts)
    worst = 1.0
    for row, solver_seed in zip(points, solver_seeds):
        base.seed = solver_seed
        upper = solve_cc(alg, row, base).upper
        ratio = max(upper, 1.0) / min(upper, 1.0)
        worst = max(worst, ratio)
    logger.debug(f"Calibrated equivalence constant {worst} on {alg.name}")
    return float(worst)


@dataclass(frozen=True)
class BallBoxReport:
    constant: float
    rungs: list[dict] = field(default_factory=list)
    violations_at_half: int = 0
    n_samples: int = 0
    metric: str = "qn"

    @property
    def scale_ratio(self) -> float:
        """C at the largest rung over C at the smallest rung."""
        return self.rungs[0]["constant"] / self.rungs[-1]["constant"]

    def to_dict(self) -> dict:
        return {
            "constant": self.constant,
            "rungs": self.rungs,
            "violations_at_half": self.violations_at_half,
            "n_samples": self.n_samples,
            "metric": self.metric,
            "scale_ratio": self.scale_ratio,
        }


def _comparison_sample(alg: CarnotAlgebra, r: float, n: int, rng: np.random.Generator) -> np.ndarray:
    half = n // 2
    in_box = rng.uniform(-1.0, 1.0, size=(half, alg.dim))
    in_box = dilate_rows(alg, r, in_box)
    radii = r * rng.uniform(size=n - half) ** (1.0 / homogeneous_dimension(alg))
    on_spheres = dilate_rows_each(alg, radii, unit_sphere_sample(alg, n - half, rng))
    return np.vstack([in_box, on_spheres])


def _gauge_ratios(
    alg: CarnotAlgebra, r: float, n: int, rng: np.random.Generator, metric: str, cc_opts: dict | None
) -> tuple[np.ndarray, np.ndarray]:
    """gauge(p) / d(p) and d(p) / gauge(p) over a comparison sample at scale r."""
    points = _comparison_sample(alg, r, n, rng)
    gauge = box_gauge_rows(alg, points)
    distance = distance_rows(alg, np.zeros(alg.dim), points, metric, cc_opts)
    keep = (gauge > 0) & (distance > 0)
    return gauge[keep] / distance[keep], distance[keep] / gauge[keep]


def ball_box_check(
    alg: CarnotAlgebra,
    r_ladder: Any,
    n_samples: int | None = None,
    seed: Any = 0,
    metric: str = "qn",
    cc_opts: dict | None = None,
) -> BallBoxReport:
    """
    Smallest empirical C with Box(r/C) in B(r) in Box(Cr) on every rung.
    Per sample p both directions reduce to the ratios gauge(p)/d(p) and
    d(p)/gauge(p); C is their supremum. Violations at C/2 are counted on
    a second, independent sample per rung to show the constant is not
    loose.
    """
    ladder = LadderValidator.validate_ladder(r_ladder, "r_ladder")
    validate_metric(metric)
    n_samples = n_samples or config["metrics"]["ball_box_samples"]
    fit_seeds, check_seeds = (derive_seeds(child, ladder.size) for child in derive_seeds(seed, 2))
    rungs = []
    for r, child in zip(ladder, fit_seeds):
        outward, inward = _gauge_ratios(alg, float(r), n_samples, as_generator(child), metric, cc_opts)
        outer, inner = float(outward.max()), float(inward.max())
        rungs.append({"r": float(r), "outer": outer, "inner": inner, "constant": max(outer, inner)})
    constant = max(rung["constant"] for rung in rungs)
    violations = 0
    for r, child in zip(ladder, check_seeds):
        outward, inward = _gauge_ratios(alg, float(r), n_samples, as_generator(child), metric, cc_opts)
        violations += int(np.count_nonzero(np.maximum(outward, inward) > constant / 2))
    return BallBoxReport(constant, rungs, violations, n_samples, metric)


def quasi_triangle_constant(alg: CarnotAlgebra, n_samples: int | None = None, seed: Any = 0) -> float:
    """
    Empirical K in d(p, r) <= K (d(p, q) + d(q, r)). Two thirds of the
    triples are uniform; in the rest q lies on the one-parameter path
    p exp(s log(p^-1 r)), starting with q = p, where the bound is tight.
    """
    n_samples = n_samples or config["metrics"]["quasi_triangle_samples"]
    rng = as_generator(seed)
    p, q, r = (rng.uniform(-1.0, 1.0, size=(n_samples, alg.dim)) for _ in range(3))
    on_path = max(1, n_samples // 3)
    steps = rng.uniform(size=(on_path, 1))
    steps[0] = 0.0
    q[:on_path] = bch(alg, p[:on_path], steps * relative_rows(alg, p[:on_path], r[:on_path]))
    d_pr = qnorm_rows(alg, relative_rows(alg, p, r))
    d_pq = qnorm_rows(alg, relative_rows(alg, p, q))
    d_qr = qnorm_rows(alg, relative_rows(alg, q, r))
    return float(np.max(d_pr / (d_pq + d_qr)))


@lru_cache(maxsize=32)
def _unit_ball_volume(definition_hash: str, alg: CarnotAlgebra, n_samples: int, seed: int) -> float:
    rng = as_generator(seed)
    d1 = alg.horizontal_dim
    stretch = 1.0 / np.sqrt(np.linalg.eigvalsh(alg.h_inner).min())
    points = rng.uniform(-1.0, 1.0, size=(n_samples, alg.dim))
    points[:, :d1] *= stretch
    inside = qnorm_rows(alg, points) < 1.0
    return float(2.0**alg.dim * stretch**d1 * inside.mean())


def unit_ball_volume(alg: CarnotAlgebra, n_samples: int | None = None, seed: int = 0) -> float:
    """
    Monte Carlo Haar volume of the unit d_qn ball. Every coordinate above
    the horizontal layer is bounded by 1 on the ball, horizontal ones by
    the inverse square root of the smallest eigenvalue of h_inner.
    """
    n_samples = n_samples or config["metrics"]["unit_ball_samples"]
    return _unit_ball_volume(alg.definition_hash, alg, n_samples, seed)
