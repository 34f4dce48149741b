"""
Numerical Pansu differential, metric differential, Jacobian, multiplicity
and area formula checks for maps between Carnot groups.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import repackage
from scipy import stats
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra, homogeneous_dimension, same_algebra
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint, bch, dilate_rows, relative_rows
from src.config.config import load_config
from src.measure.measure import hausdorff_estimate
from src.measure.samplers import ball_points
from src.measure.sets import MembershipSet, SetSample
from src.metrics.gauges import box_gauge_rows, box_volume, qnorm_rows
from src.metrics.metrics import unit_ball_volume, unit_sphere_sample
from src.pansu.graded_hom import GradedHom
from src.pansu.maps import CarnotMap
from src.utilities.utils import CustomLogger, as_generator, derive_seeds, parallel_map, timer
from src.utilities.validators import ArrayValidator, LadderValidator, NumericValidator

config = load_config()
logger = CustomLogger(Path(__file__).name)

PANSU = config["pansu"]


def richardson(values: Any, scales: Any, levels: int = 2) -> list[np.ndarray]:
    """
    Neville tables extrapolating values(s) to s = 0, assuming an error
    expansion in integer powers of s. Table l has len(scales) - l rows.
    """
    values = np.asarray(values, dtype=float)
    scales = np.asarray(scales, dtype=float)
    shape = (-1,) + (1,) * (values.ndim - 1)
    tables = [values]
    for level in range(1, levels + 1):
        prev = tables[-1]
        if prev.shape[0] < 2:
            break
        big = scales[:-level].reshape(shape)
        small = scales[level:].reshape(shape)
        tables.append((big * prev[1:] - small * prev[:-1]) / (big - small))
    return tables


def diverged(tables: list[np.ndarray]) -> bool:
    """
    True when the last gap between first-level extrapolants is more than
    divergence_factor times the previous gap and above the noise floor.
    """
    sequence = tables[1] if len(tables) > 1 else tables[0]
    if sequence.shape[0] < 3:
        return False
    flat = sequence.reshape(sequence.shape[0], -1)
    gaps = np.linalg.norm(np.diff(flat, axis=0), axis=1)
    floor = PANSU["noise_floor"] * (1.0 + np.abs(flat).max())
    return bool(gaps[-1] > max(PANSU["divergence_factor"] * gaps[-2], floor))


def _point(alg: CarnotAlgebra, x: Any, name: str = "x") -> np.ndarray:
    if isinstance(x, GroupPoint):
        if not same_algebra(x.algebra, alg):
            raise InputError(f"`{name}` lives in {x.algebra.name}, expected {alg.name}")
        return np.array(x.coords)
    return ArrayValidator.validate_vector(x, alg.dim, name)


def _quotients(f: CarnotMap, x: np.ndarray, fx: np.ndarray, directions: np.ndarray, layer: int, scales: np.ndarray):
    """
    h_{1/sigma}(f(x)^-1 f(x exp(s v))) with sigma = s^(1/layer), for every
    scale s and direction v. Shape (len(scales), len(directions), target.dim).
    """
    out = np.empty((scales.size, directions.shape[0], f.target.dim))
    for i, s in enumerate(scales):
        images = f.rows(bch(f.source, x, s * directions))
        sigma = s ** (1.0 / layer)
        out[i] = dilate_rows(f.target, 1.0 / sigma, relative_rows(f.target, fx, images))
    return out


@timer
def pansu_diff(f: CarnotMap, x: Any, scale_ladder: Any = None) -> GradedHom:
    """
    Pansu differential of f at x.

    Horizontal columns come from two-level Richardson extrapolation of the
    difference quotients along +e and -e; higher layers are induced by
    brackets. The residual collects the bracket misfit and the gap to
    directly estimated higher-layer quotients; vertical parts of the
    horizontal quotients are reported as `vertical_defect`.

    Args:
        f (CarnotMap): Map.
        x (Any): Base point (GroupPoint or coordinates).
        scale_ladder (Any, optional): Decreasing scales. Defaults to config.

    Returns:
        GradedHom: Differential with `residual`, `differentiable` and
        `details` (odd_defect, diverged).
    """
    scales = LadderValidator.validate_ladder(
        PANSU["scale_ladder"] if scale_ladder is None else scale_ladder, "scale_ladder", min_rungs=2
    )
    src, tgt = f.source, f.target
    x = _point(src, x)
    fx = f.rows(x)[0]
    d1 = src.horizontal_dim
    basis = np.eye(src.dim)

    plus = richardson(_quotients(f, x, fx, basis[:d1], 1, scales), scales)
    minus = richardson(_quotients(f, x, fx, -basis[:d1], 1, scales), scales)
    est_plus, est_minus = plus[-1][-1], minus[-1][-1]
    columns = (est_plus - est_minus) / 2
    odd_defect = float(np.abs(est_plus + est_minus).max())
    any_diverged = diverged(plus) or diverged(minus)

    d1_t = tgt.horizontal_dim
    hom = GradedHom.from_horizontal(src, tgt, columns[:, :d1_t].T)
    residual = hom.residual
    vertical_defect = float(np.abs(columns[:, d1_t:]).max(initial=0.0))

    for j in range(2, src.depth + 1):
        layer = src.grading.layer_slice(j)
        sigmas = scales ** (1.0 / j)
        direct = richardson(_quotients(f, x, fx, basis[layer], j, scales), sigmas)
        any_diverged = any_diverged or diverged(direct)
        gap = np.abs(direct[-1][-1] - hom.matrix[:, layer].T).max(initial=0.0)
        residual = max(residual, float(gap))

    scale = 1.0 + float(np.abs(columns).max(initial=0.0))
    differentiable = not any_diverged and odd_defect <= PANSU["odd_defect_tol"] * scale
    if not differentiable:
        logger.info(f"Map `{f.name}` flagged non-differentiable (odd defect {odd_defect:.3g}, diverged {any_diverged})")
    return GradedHom(
        src,
        tgt,
        hom.matrix,
        residual=residual,
        differentiable=differentiable,
        details={
            "odd_defect": odd_defect,
            "vertical_defect": vertical_defect,
            "diverged": any_diverged,
            "scales": [float(s) for s in scales],
            "valid": residual < PANSU["residual_tol"],
        },
    )


@dataclass(frozen=True)
class ApproxResidual:
    value: float
    scales: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    decays: bool = True

    @property
    def flagged(self) -> bool:
        return not self.decays

    def to_dict(self) -> dict:
        return {"value": self.value, "scales": self.scales, "ratios": self.ratios, "decays": self.decays}


def approx_residual(
    f: CarnotMap, x: Any, df: GradedHom, v_samples: Any = None, s_ladder: Any = None, seed: Any = 0
) -> ApproxResidual:
    """
    max over v of d(f(x exp(v_s)), f(x) df(exp(v_s))) / d(e, v_s) with
    v_s = h_s v, per scale. A differential makes the ratios tend to 0;
    `decays` asks for a halving from the first to the last rung.
    """
    scales = LadderValidator.validate_ladder(
        PANSU["approx_ladder"] if s_ladder is None else s_ladder, "s_ladder", min_rungs=2
    )
    src, tgt = f.source, f.target
    x = _point(src, x)
    if v_samples is None or isinstance(v_samples, int):
        n = v_samples or PANSU["approx_samples"]
        directions = unit_sphere_sample(src, n, as_generator(seed))
    else:
        directions = ArrayValidator.validate_rows(v_samples, src.dim, "v_samples")
    norms = qnorm_rows(src, directions)
    keep = norms > 0
    directions, norms = directions[keep], norms[keep]
    fx = f.rows(x)[0]
    ratios = []
    for s in scales:
        v_s = dilate_rows(src, s, directions)
        actual = f.rows(bch(src, x, v_s))
        predicted = bch(tgt, fx, df.apply(v_s))
        gap = qnorm_rows(tgt, bch(tgt, -predicted, actual))
        ratios.append(float(np.max(gap / (s * norms))))
    floor = PANSU["noise_floor"]
    decays = ratios[-1] <= 0.5 * ratios[0] or max(ratios) <= floor
    return ApproxResidual(ratios[-1], [float(s) for s in scales], ratios, bool(decays))


@dataclass(frozen=True)
class MetricDifferential:
    value: float
    scales: list[float] = field(default_factory=list)
    estimates: list[float] = field(default_factory=list)
    diverged: bool = False

    def to_dict(self) -> dict:
        return {"value": self.value, "scales": self.scales, "estimates": self.estimates, "diverged": self.diverged}


def metric_diff(f: CarnotMap, x: Any, y1: Any, y2: Any, scale_ladder: Any = None) -> MetricDifferential:
    """
    lim_t d(f(x h_t y1), f(x h_t y2)) / t with the base point kept at x.
    """
    scales = LadderValidator.validate_ladder(
        PANSU["scale_ladder"] if scale_ladder is None else scale_ladder, "scale_ladder", min_rungs=2
    )
    src, tgt = f.source, f.target
    x = _point(src, x)
    y1 = _point(src, y1, "y1")
    y2 = _point(src, y2, "y2")
    if np.array_equal(y1, y2):
        return MetricDifferential(0.0, [float(s) for s in scales], [0.0] * scales.size)
    estimates = []
    for t in scales:
        p1 = f.rows(bch(src, x, dilate_rows(src, t, y1)))
        p2 = f.rows(bch(src, x, dilate_rows(src, t, y2)))
        estimates.append(float(qnorm_rows(tgt, bch(tgt, -p1, p2))[0]) / t)
    tables = richardson(estimates, scales)
    return MetricDifferential(
        float(tables[-1][-1]), [float(s) for s in scales], estimates, diverged(tables)
    )


def _check_dimensions(f: CarnotMap) -> int:
    k_source, k_target = homogeneous_dimension(f.source), homogeneous_dimension(f.target)
    if k_source != k_target:
        raise InputError(
            f"Source and target homogeneous dimensions differ ({k_source} and {k_target})"
        )
    return k_source


@dataclass(frozen=True)
class JacobianEstimate:
    value: float
    radii: list[float] = field(default_factory=list)
    estimates: list[float] = field(default_factory=list)
    extrapolated: bool = False

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "radii": self.radii,
            "estimates": self.estimates,
            "extrapolated": self.extrapolated,
        }


def _jacobian_at_radius(f: CarnotMap, x: np.ndarray, fx: np.ndarray, t: float, k: int, n: int, seed) -> float:
    """
    Reciprocal density of the push-forward of Haar measure on B(x, t)
    inside the ball B(f(x), rho), rho a fraction of the distance from
    f(x) to the image of the sphere of radius t.
    """
    src, tgt = f.source, f.target
    rng = as_generator(seed)
    interior = f.rows(ball_points(src, x, t, n, rng))
    sphere = dilate_rows(src, t, unit_sphere_sample(src, PANSU["jacobian_boundary_samples"], rng))
    boundary = f.rows(bch(src, x, sphere))
    r_image = float(qnorm_rows(tgt, relative_rows(tgt, fx, boundary)).min())
    if r_image <= 0.0:
        return 0.0
    rho = PANSU["jacobian_radius_fraction"] * r_image
    count = int(np.count_nonzero(qnorm_rows(tgt, relative_rows(tgt, fx, interior)) <= rho))
    if count == 0:
        logger.warning(f"No image points near f(x) at radius {t}")
        return float("nan")
    return (rho / t) ** k * n / count * unit_ball_volume(tgt) / unit_ball_volume(src)


def jacobian(f: CarnotMap, x: Any, t_ladder: Any = None, mc_samples: int | None = None, seed: Any = 0) -> JacobianEstimate:
    """
    Jacobian of f at x, the limit of H^k(f(B(x, t))) / H^k(B(x, t)).

    Raises:
        InputError: If source and target homogeneous dimensions differ.
    """
    k = _check_dimensions(f)
    radii = LadderValidator.validate_ladder(
        PANSU["jacobian_ladder"] if t_ladder is None else t_ladder, "t_ladder"
    )
    n = NumericValidator.validate_positive_int(mc_samples or PANSU["jacobian_samples"], "mc_samples")
    x = _point(f.source, x)
    fx = f.rows(x)[0]
    estimates = np.array(
        [_jacobian_at_radius(f, x, fx, float(t), k, n, child) for t, child in zip(radii, derive_seeds(seed, radii.size))]
    )
    finite = np.isfinite(estimates)
    extrapolated = False
    if not np.any(finite):
        value = float("nan")
    elif np.count_nonzero(finite) >= 3 and np.ptp(estimates[finite]) > 0:
        fit = stats.linregress(radii[finite], estimates[finite])
        if fit.pvalue < 0.05:
            value, extrapolated = float(fit.intercept), True
        else:
            value = float(estimates[finite].mean())
    else:
        value = float(estimates[finite].mean())
    return JacobianEstimate(value, [float(r) for r in radii], [float(e) for e in estimates], extrapolated)


def multiplicity(f: CarnotMap, E: SetSample, m: Any, tol: float) -> int:
    """
    Number of clusters among the sample points of E mapped within tol of m.
    Points closer than multiplicity_link * tol (source d_qn) share a cluster.
    """
    tol = NumericValidator.validate_positive(tol, "tol")
    if not same_algebra(E.algebra, f.source):
        raise InputError("Set sample and map source live in different groups")
    m = _point(f.target, m, "m")
    images = f.rows(E.points)
    distance = qnorm_rows(f.target, relative_rows(f.target, m, images))
    close = np.flatnonzero(distance <= tol)
    if close.size == 0:
        return 0
    cap = PANSU["multiplicity_max_points"]
    if close.size > cap:
        close = close[np.argsort(distance[close])[:cap]]
    points = E.points[close]
    link = PANSU["multiplicity_link"] * tol
    adjacency = np.vstack([qnorm_rows(f.source, relative_rows(f.source, p, points)) <= link for p in points])
    n_components, _ = connected_components(csr_matrix(adjacency), directed=False)
    return int(n_components)


@dataclass(frozen=True)
class AreaReport:
    lhs: float
    rhs: float
    ratio: float
    method: str
    panel_jacobians: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "method": self.method,
            "panel_jacobians": self.panel_jacobians,
        }


def _oracle_count(f: CarnotMap, membership: MembershipSet, m: np.ndarray) -> int:
    preimages = f.preimages_of(m)
    if preimages.size == 0:
        return 0
    return int(np.count_nonzero(membership.contains(preimages)))


def _image_box(alg: CarnotAlgebra, images: np.ndarray) -> tuple[np.ndarray, float]:
    center = (images.min(axis=0) + images.max(axis=0)) / 2
    radius = float(box_gauge_rows(alg, relative_rows(alg, center, images)).max())
    return center, 1.05 * radius + 1e-9


@timer
def area_check(
    f: CarnotMap,
    E: SetSample,
    membership: MembershipSet | None = None,
    n_samples: int | None = None,
    panel: int | None = None,
    seed: Any = 0,
    threads: int | None = None,
) -> AreaReport:
    """
    Both sides of the area formula: the integral of the Jacobian over E
    (sample weights times the panel mean Jacobian) and the integral of the
    multiplicity over the target (Monte Carlo over a box around f(E)).

    With a membership set for E and a preimage oracle on f the multiplicity
    is exact; otherwise it is the cluster count among sample points.

    Raises:
        InputError: If source and target homogeneous dimensions differ.
    """
    k = _check_dimensions(f)
    if not same_algebra(E.algebra, f.source):
        raise InputError("Set sample and map source live in different groups")
    n_samples = n_samples or PANSU["area_samples"]
    panel = min(panel or PANSU["area_panel"], len(E))
    seeds = derive_seeds(seed, panel + 2)
    rng = as_generator(seeds[0])
    picks = rng.choice(len(E), size=panel, replace=False)
    jacobians = parallel_map(
        lambda item: jacobian(f, E.points[item[0]], seed=item[1]).value, zip(picks, seeds[2:]), threads
    )
    lhs = E.total_weight * float(np.mean(jacobians))

    tgt = f.target
    images = f.rows(E.points)
    center, radius = _image_box(tgt, images)
    box_rng = as_generator(seeds[1])
    oracle = membership is not None and (f.inverse is not None or f.preimages is not None)
    if not oracle:
        n_samples = min(n_samples, PANSU["multiplicity_max_points"])
    targets = bch(tgt, center, dilate_rows(tgt, radius, box_rng.uniform(-1.0, 1.0, size=(n_samples, tgt.dim))))
    if oracle and f.inverse is not None:
        counts = membership.contains(f.inverse(targets)).astype(float)
        method = "inverse_oracle"
    elif oracle:
        counts = np.array([_oracle_count(f, membership, m) for m in targets], dtype=float)
        method = "preimage_oracle"
    else:
        # radius holding a few image points when the image is spread evenly
        tol = (3.0 * max(lhs, 1e-300) / (len(E) * unit_ball_volume(tgt))) ** (1.0 / k)
        counts = np.array([multiplicity(f, E, m, tol) for m in targets], dtype=float)
        method = "sample_clusters"
    rhs = box_volume(tgt, radius) * float(counts.mean())
    ratio = lhs / rhs if rhs > 0 else float("nan")
    return AreaReport(lhs, rhs, ratio, method, [float(j) for j in jacobians])


@dataclass(frozen=True)
class ZeroJacobianReport:
    dimension_mismatch: bool
    degenerate_fraction: float
    threshold_fractions: list[dict] = field(default_factory=list)
    image_measure: list[dict] = field(default_factory=list)
    decays: bool = True

    def to_dict(self) -> dict:
        return {
            "dimension_mismatch": self.dimension_mismatch,
            "degenerate_fraction": self.degenerate_fraction,
            "threshold_fractions": self.threshold_fractions,
            "image_measure": self.image_measure,
            "decays": self.decays,
        }


def zero_jacobian_image_check(
    f: CarnotMap,
    E: SetSample,
    threshold: float = 1e-3,
    delta_ladder: Any = None,
    panel: int | None = None,
    seed: Any = 0,
    threads: int | None = None,
) -> ZeroJacobianReport:
    """
    Estimates H^k(f(Z)) for Z = {J < threshold}, k the source homogeneous
    dimension. J is evaluated on a panel of E and extended to E by nearest
    panel point. Unequal homogeneous dimensions make every point degenerate.
    The image measure is a cover estimate along delta_ladder; `decays`
    means it at least halves from the first to the last rung.
    """
    threshold = NumericValidator.validate_positive(threshold, "threshold")
    deltas = LadderValidator.validate_ladder(
        PANSU["zero_delta_ladder"] if delta_ladder is None else delta_ladder, "delta_ladder", min_rungs=2
    )
    k_source = homogeneous_dimension(f.source)
    mismatch = k_source != homogeneous_dimension(f.target)
    thresholds = threshold / np.array([1.0, 10.0, 100.0])
    if mismatch:
        logger.info(f"Map `{f.name}` changes homogeneous dimension, its Jacobian vanishes identically")
        point_jacobians = np.zeros(len(E))
    else:
        panel = min(panel or PANSU["zero_panel"], len(E))
        seeds = derive_seeds(seed, panel + 1)
        picks = as_generator(seeds[0]).choice(len(E), size=panel, replace=False)
        values = parallel_map(
            lambda item: jacobian(f, E.points[item[0]], mc_samples=PANSU["zero_jacobian_samples"], seed=item[1]).value,
            zip(picks, seeds[1:]),
            threads,
        )
        _, nearest = cKDTree(E.points[picks]).query(E.points)
        point_jacobians = np.asarray(values)[nearest]
    fractions = [
        {"threshold": float(t), "degenerate_fraction": float(np.mean(point_jacobians < t))} for t in thresholds
    ]
    degenerate = point_jacobians < threshold
    if not np.any(degenerate):
        measure = [{"delta": float(d), "estimate": 0.0} for d in deltas]
        return ZeroJacobianReport(mismatch, 0.0, fractions, measure, True)
    image = SetSample(f.target, f.rows(E.points[degenerate]))
    estimates = hausdorff_estimate(image, k_source, deltas)
    measure = [{"delta": d, "estimate": v} for d, v in estimates]
    decays = estimates[-1][1] <= 0.5 * estimates[0][1]
    return ZeroJacobianReport(mismatch, float(np.mean(degenerate)), fractions, measure, bool(decays))
