"""
Spherical Hausdorff measure, Hausdorff dimension and density estimators
on sampled sets. Covers come from one farthest-point traversal: the cover
at scale delta is the prefix of the traversal whose insertion radius
exceeds delta / 2, and balls of radius delta / 2 around it cover every
sample point.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import repackage
from scipy import stats

repackage.up(2)
from src.carnot.core_algebra import homogeneous_dimension
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint
from src.config.config import load_config
from src.measure.sets import SetSample
from src.metrics.metrics import distance_rows, unit_ball_volume, validate_metric
from src.utilities.utils import CustomLogger, timer
from src.utilities.validators import ArrayValidator, LadderValidator, NumericValidator

config = load_config()
logger = CustomLogger(Path(__file__).name)

MIN_BALL_POINTS = config["measure"]["min_ball_points"]
MIN_COVER_POINTS = config["measure"]["min_cover_points"]


def _coords(sample: SetSample, x: Any) -> np.ndarray:
    if isinstance(x, GroupPoint):
        x = x.coords
    return ArrayValidator.validate_vector(x, sample.algebra.dim, "x")


def ball_indices(sample: SetSample, x: Any, r: float, metric: str = "qn", cc_opts: dict | None = None) -> np.ndarray:
    """
    Indices of sample points p with d(x, p) <= r. Candidates are pruned
    on the horizontal layer: every gauge here dominates the norm of the
    horizontal part of x^-1 p, which is p_1 - x_1.
    """
    alg = sample.algebra
    x = _coords(sample, x)
    d1 = alg.horizontal_dim
    if metric == "box":
        candidates = sample.horizontal_tree.query_ball_point(x[:d1], r, p=np.inf)
    else:
        stretch = 1.0 / np.sqrt(np.linalg.eigvalsh(alg.h_inner).min())
        candidates = sample.horizontal_tree.query_ball_point(x[:d1], r * stretch)
    candidates = np.asarray(sorted(candidates), dtype=int)
    if candidates.size == 0:
        return candidates
    distances = distance_rows(alg, x, sample.points[candidates], metric, cc_opts)
    return candidates[distances <= r]


def ball_measure(sample: SetSample, x: Any, r: float, metric: str = "qn", cc_opts: dict | None = None) -> float:
    """Total weight of the sample points within distance r of x."""
    r = NumericValidator.validate_positive(r, "r")
    validate_metric(metric)
    indices = ball_indices(sample, x, r, metric, cc_opts)
    return float(sample.weights[indices].sum())


@timer
def farthest_point_order(
    sample: SetSample,
    metric: str = "qn",
    stop_radius: float = 0.0,
    max_centers: int | None = None,
    cc_opts: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Greedy farthest-point traversal started at the first sample point.

    Returns:
        tuple[np.ndarray, np.ndarray]: Visiting order and insertion radii;
        radius i is the distance of center i to the earlier centers, so
        the radii are non-increasing and radii[0] is inf.
    """
    validate_metric(metric)
    if metric == "cc":
        logger.warning("Farthest-point traversal with the cc metric solves one path per pair")
    alg = sample.algebra
    n = len(sample)
    max_centers = n if max_centers is None else min(n, max_centers)
    order = [0]
    radii = [np.inf]
    min_dist = distance_rows(alg, sample.points[0], sample.points, metric, cc_opts)
    while len(order) < max_centers:
        index = int(np.argmax(min_dist))
        radius = float(min_dist[index])
        if radius <= stop_radius:
            break
        order.append(index)
        radii.append(radius)
        min_dist = np.minimum(min_dist, distance_rows(alg, sample.points[index], sample.points, metric, cc_opts))
    return np.asarray(order, dtype=int), np.asarray(radii)


def _cover_counts(radii: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    return np.array([1 + int(np.count_nonzero(radii[1:] > delta / 2)) for delta in deltas])


def cover_greedy(sample: SetSample, delta: float, metric: str = "qn") -> list[tuple[GroupPoint, float]]:
    """
    Closed balls of radius delta / 2 around farthest-point centers; every
    sample point lies in one of them.
    """
    delta = NumericValidator.validate_positive(delta, "delta")
    order, _ = farthest_point_order(sample, metric, stop_radius=delta / 2)
    return [(sample.point(i), delta / 2) for i in order]


def _guard_cover_ladder(n: int, deltas: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Keeps the rungs whose covers still hold MIN_COVER_POINTS points per ball on average."""
    keep = n / counts >= MIN_COVER_POINTS
    if not np.all(keep):
        logger.warning(
            f"Cover ladder truncated at sampling resolution: {int(np.count_nonzero(~keep))} rung(s) dropped"
        )
    return keep


def hausdorff_estimate(sample: SetSample, s: float, delta_ladder: Any, metric: str = "qn") -> list[tuple[float, float]]:
    """
    Greedy-cover upper estimates of H^s_delta: N(delta) * delta^s per rung.
    Monotonicity in delta is not guaranteed since the greedy cover is not
    the infimum.
    """
    s = NumericValidator.validate_positive(s, "s")
    deltas = LadderValidator.validate_ladder(delta_ladder, "delta_ladder")
    _, radii = farthest_point_order(sample, metric, stop_radius=deltas[-1] / 2)
    counts = _cover_counts(radii, deltas)
    return [(float(d), float(c * d**s)) for d, c in zip(deltas, counts)]


def default_delta_ladder(radii: np.ndarray, n: int, rungs: int | None = None) -> np.ndarray:
    """
    Ladder between the scale where the cover has n / coarse_cover_divisor
    centers and the scale where balls still hold MIN_COVER_POINTS points.
    Derived from the traversal, so it dilates with the sample.
    """
    rungs = rungs or config["measure"]["ladder_rungs"]
    hi = min(len(radii) - 1, n // MIN_COVER_POINTS)
    lo = min(max(16, n // config["measure"]["coarse_cover_divisor"]), hi - 1)
    if lo < 1 or hi <= lo:
        raise InputError(f"Sample of {n} points is too small for a default cover ladder")
    return np.geomspace(2 * radii[lo], 2 * radii[hi], rungs)


@dataclass(frozen=True)
class DimensionEstimate:
    dimension: float
    r2: float
    degenerate: bool
    deltas: list[float] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    volume_counts: list[float] = field(default_factory=list)
    interior_centers: int = 0
    full_dimension: float = float("nan")
    used_interior: bool = False

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "r2": self.r2,
            "degenerate": self.degenerate,
            "deltas": self.deltas,
            "counts": self.counts,
            "volume_counts": self.volume_counts,
            "interior_centers": self.interior_centers,
            "full_dimension": self.full_dimension,
            "used_interior": self.used_interior,
        }


def _slope(deltas: np.ndarray, counts: np.ndarray) -> tuple[float, float, bool]:
    if np.ptp(counts) == 0:
        return 0.0, 0.0, True
    fit = stats.linregress(np.log(1.0 / deltas), np.log(counts))
    return float(fit.slope), float(fit.rvalue**2), False


def _interior_volume_counts(sample: SetSample, deltas: np.ndarray, metric: str) -> tuple[np.ndarray | None, int]:
    """
    Cover counts implied by ball mass, total weight over the mean weight of
    a delta / 2 ball, averaged over centers lying at least deltas[0] / 2
    inside the sampled set.

    Even-indexed points pick the interior centers (ball mass at the
    coarsest radius near the bulk value) and odd-indexed points are
    weighed, so the selection does not bias the masses it selects on.
    """
    if len(sample) < 2 * config["measure"]["min_interior_centers"]:
        return None, 0
    parity = np.arange(len(sample)) % 2 == 0
    chooser, weighed = sample.subset(parity), sample.subset(~parity)
    step = max(1, len(chooser) // config["measure"]["interior_centers"])
    centers = chooser.points[::step]
    coarse = np.array([ball_measure(chooser, c, deltas[0] / 2, metric) for c in centers])
    bulk = np.quantile(coarse, config["measure"]["interior_quantile"])
    centers = centers[coarse >= config["measure"]["interior_fraction"] * bulk]
    if centers.shape[0] < config["measure"]["min_interior_centers"]:
        return None, int(centers.shape[0])
    masses = np.array([[ball_measure(weighed, c, d / 2, metric) for d in deltas] for c in centers]).mean(axis=0)
    if np.any(masses <= 0):
        return None, int(centers.shape[0])
    return weighed.total_weight / masses, int(centers.shape[0])


@timer
def dim_estimate(
    sample: SetSample,
    delta_ladder: Any = None,
    metric: str = "qn",
    interior: bool = True,
) -> DimensionEstimate:
    """
    Least-squares slope of log N(delta) against log(1/delta).

    Cover centers near the edge of the sampled set inflate the greedy
    N(delta) at coarse scales, and the greedy packing constant drifts at
    fine ones. By default the fit uses the interior cover count implied by
    ball mass instead, which scales exactly as delta^-k on a set of
    homogeneous dimension k; the greedy counts and their slope are
    reported alongside.

    Args:
        sample (SetSample): Set sample.
        delta_ladder (Any, optional): At least 4 decreasing scales. Derived
        from the sample when None.
        metric (str, optional): qn, box or cc. Defaults to "qn".
        interior (bool, optional): Fit the interior volume counts.

    Raises:
        InputError: If fewer than 4 rungs are usable.

    Returns:
        DimensionEstimate: Slope, r2, counts and a degenerate-fit flag.
    """
    n = len(sample)
    if delta_ladder is None:
        _, coarse = farthest_point_order(sample, metric, max_centers=n // MIN_COVER_POINTS + 1)
        deltas = default_delta_ladder(coarse, n)
    else:
        deltas = LadderValidator.validate_ladder(delta_ladder, "delta_ladder", min_rungs=4)
    _, radii = farthest_point_order(sample, metric, stop_radius=deltas[-1] / 2)
    counts = _cover_counts(radii, deltas)
    keep = _guard_cover_ladder(n, deltas, counts)
    deltas, counts = deltas[keep], counts[keep]
    if deltas.size < 4:
        raise InputError("Fewer than 4 ladder rungs above the sampling resolution")

    full_dimension = _slope(deltas, counts)[0]
    fitted = counts.astype(float)
    volume_counts, interior_centers = None, 0
    if interior:
        volume_counts, interior_centers = _interior_volume_counts(sample, deltas, metric)
        if volume_counts is None:
            logger.warning(f"Too few interior centers ({interior_centers}), fitting the greedy cover counts")
        else:
            fitted = volume_counts
    dimension, r2, degenerate = _slope(deltas, fitted)
    if degenerate:
        logger.info("Degenerate dimension fit: all cover counts are equal")
    return DimensionEstimate(
        dimension=dimension,
        r2=r2,
        degenerate=degenerate,
        deltas=[float(d) for d in deltas],
        counts=[int(c) for c in counts],
        volume_counts=[] if volume_counts is None else [float(c) for c in volume_counts],
        interior_centers=interior_centers,
        full_dimension=full_dimension,
        used_interior=volume_counts is not None,
    )


@dataclass(frozen=True)
class DensityEstimate:
    upper: float
    lower: float
    radii: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "upper": self.upper,
            "lower": self.lower,
            "radii": self.radii,
            "ratios": self.ratios,
            "truncated": self.truncated,
        }


def _guarded_masses(sample: SetSample, x: np.ndarray, radii: np.ndarray, metric: str) -> tuple[list, list, bool]:
    """
    Ball masses along a decreasing ladder, stopping at the first rung after
    the first whose ball holds fewer than MIN_BALL_POINTS points.
    """
    used, masses = [], []
    truncated = False
    for i, r in enumerate(radii):
        indices = ball_indices(sample, x, float(r), metric)
        if i > 0 and indices.size < MIN_BALL_POINTS:
            truncated = True
            break
        used.append(float(r))
        masses.append(float(sample.weights[indices].sum()))
    if truncated:
        logger.warning(f"Radius ladder truncated at sampling resolution after {len(used)} rung(s)")
    return used, masses, truncated


def density(sample: SetSample, x: Any, s: float, r_ladder: Any, metric: str = "qn") -> DensityEstimate:
    """
    Upper and lower s-densities at x: max and min of mass(B(x, r)) / r^s
    over the ladder. Weights calibrated to H^s make this the usual density
    up to the unnormalised measure constant.
    """
    s = NumericValidator.validate_positive(s, "s")
    radii = LadderValidator.validate_ladder(r_ladder, "r_ladder")
    validate_metric(metric)
    x = _coords(sample, x)
    used, masses, truncated = _guarded_masses(sample, x, radii, metric)
    ratios = [m / r**s for m, r in zip(masses, used)]
    return DensityEstimate(max(ratios), min(ratios), used, ratios, truncated)


def ball_fraction(sample: SetSample, x: Any, r_ladder: Any, metric: str = "qn") -> list[float]:
    """
    Sample mass in B(x, r) relative to the Haar volume of the full ball,
    per rung. Tends to 1 at Lebesgue density points of a Haar-weighted set.
    """
    radii = LadderValidator.validate_ladder(r_ladder, "r_ladder")
    x = _coords(sample, x)
    alg = sample.algebra
    unit = unit_ball_volume(alg)
    k = homogeneous_dimension(alg)
    used, masses, _ = _guarded_masses(sample, x, radii, metric)
    return [m / (unit * r**k) for m, r in zip(masses, used)]
