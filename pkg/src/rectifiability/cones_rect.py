"""
Cones, tubes around subgroups, and the testers for subgroup
approximability, approximate tangent cones and strong approximate tangent
cones of sampled sets.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
import repackage
from scipy import stats

repackage.up(2)
from src.carnot.exception import InputError
from src.carnot.group import GroupPoint, bch, dilate_rows, relative_rows
from src.config.config import load_config
from src.measure.measure import MIN_BALL_POINTS, ball_indices, ball_measure, density
from src.measure.samplers import ball_points
from src.measure.sets import SetSample
from src.metrics.gauges import qnorm_rows
from src.metrics.metrics import distance_rows, unit_sphere_sample, validate_metric
from src.rectifiability.subspaces import (
    SubspaceSpec,
    orthogonal_complement,
    project_V_rows,
    project_Vperp_rows,
)
from src.utilities.const import EXPONENT_MODES
from src.utilities.utils import CustomLogger, as_generator, derive_seeds, parallel_map, timer
from src.utilities.validators import ArrayValidator, LadderValidator, NumericValidator

config = load_config()
logger = CustomLogger(Path(__file__).name)

CONES = config["cones"]


def _coords(spec: SubspaceSpec, x: Any, name: str = "x") -> np.ndarray:
    if isinstance(x, GroupPoint):
        x = x.coords
    return ArrayValidator.validate_vector(x, spec.algebra.dim, name)


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """X(apex, V, s), cut to B(apex, radius) when a radius is given."""

    apex: np.ndarray
    V: SubspaceSpec
    slope: float
    radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "apex", _coords(self.V, self.apex, "apex"))
        object.__setattr__(self, "slope", NumericValidator.validate_open_unit(self.slope, "slope"))
        if self.radius is not None:
            object.__setattr__(self, "radius", NumericValidator.validate_positive(self.radius, "radius"))


def cone_mask(cone: ConeSpec, rows: Any, metric: str = "qn") -> np.ndarray:
    """Row-wise d(Q(m1), Q(apex)) < s d(m1, apex), Q the projection along V."""
    spec = cone.V
    alg = spec.algebra
    rows = ArrayValidator.validate_rows(rows, alg.dim)
    apex_projection = project_Vperp_rows(spec, cone.apex)[0]
    projected = distance_rows(alg, apex_projection, project_Vperp_rows(spec, rows), metric)
    distance = distance_rows(alg, cone.apex, rows, metric)
    inside = projected < cone.slope * distance
    if cone.radius is not None:
        inside &= distance < cone.radius
    return inside


def cone_contains(cone: ConeSpec, m1: Any, metric: str = "qn") -> bool:
    return bool(cone_mask(cone, _coords(cone.V, m1, "m1"), metric)[0])


def _fill_higher_layers(spec: SubspaceSpec, W: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    For fixed horizontal parts, picks the layer >= 2 parts of W in V so
    that each layer of W^-1 y has no component along V, lowest layer first.
    """
    alg = spec.algebra
    for j in range(2, alg.depth + 1):
        basis = spec.layer_bases[j - 1]
        if basis.shape[1] == 0:
            continue
        layer = alg.grading.layer_slice(j)
        Z = bch(alg, -W, y)
        W[:, layer] += Z[:, layer] @ basis @ basis.T
    return W


def _tube_candidates(spec: SubspaceSpec, y: np.ndarray, coefficients: np.ndarray) -> np.ndarray:
    alg = spec.algebra
    W = np.zeros((coefficients.shape[0], alg.dim))
    W[:, : alg.horizontal_dim] = coefficients @ spec.layer_bases[0].T
    W = _fill_higher_layers(spec, W, y)
    return qnorm_rows(alg, bch(alg, -W, y))


def _tube_local(spec: SubspaceSpec, y: np.ndarray) -> float:
    """min over n in exp(V) of |n^-1 y|_qn, y given relative to the base point."""
    basis = spec.layer_bases[0]
    m1 = basis.shape[1]
    if m1 == 0:
        return float(_tube_candidates(spec, y, np.zeros((1, 0)))[0])
    alg = spec.algebra
    center = y[: alg.horizontal_dim] @ basis
    stretch = 1.0 / np.sqrt(np.linalg.eigvalsh(alg.h_inner).min())
    half_width = 2.0 * np.linalg.norm(y[: alg.horizontal_dim]) + stretch * float(qnorm_rows(alg, y)[0]) + 1e-12
    per_axis = max(3, int(CONES["grid_budget"] ** (1.0 / m1)) | 1)
    best = float(_tube_candidates(spec, y, center[None, :])[0])
    for _ in range(CONES["zoom_rounds"]):
        axis = np.linspace(-half_width, half_width, per_axis)
        grid = np.stack(np.meshgrid(*([axis] * m1), indexing="ij"), axis=-1).reshape(-1, m1) + center
        values = _tube_candidates(spec, y, grid)
        index = int(np.argmin(values))
        if values[index] <= best:
            best = float(values[index])
            center = grid[index]
        half_width = 2.0 * (2.0 * half_width / (per_axis - 1))
    return best


def _require_subgroup(spec: SubspaceSpec) -> None:
    if not spec.is_graded_subgroup:
        raise InputError("Tube distance needs a graded subgroup")


def tube_dist(x: Any, spec: SubspaceSpec) -> float:
    """
    d_qn(x, base . exp(V)) over a dilation-graded grid of the horizontal
    part of V with zoom refinement; higher layers are solved exactly layer
    by layer for every grid point.

    Raises:
        InputError: If V is not a graded subgroup.
    """
    _require_subgroup(spec)
    alg = spec.algebra
    y = relative_rows(alg, spec.base_point, _coords(spec, x))[0]
    return _tube_local(spec, y)


def tube_dist_rows(spec: SubspaceSpec, rows: Any, threshold: float | None = None) -> np.ndarray:
    """
    tube_dist for every row. With a threshold, rows decided by the cheap
    bounds (projected candidate above, horizontal distance below) skip the
    grid search, so results are exact only on the side of the threshold.
    """
    _require_subgroup(spec)
    alg = spec.algebra
    rows = ArrayValidator.validate_rows(rows, alg.dim)
    local = relative_rows(alg, spec.base_point, rows)
    d1 = alg.horizontal_dim
    basis = spec.layer_bases[0]
    upper = _tube_candidates(spec, local, local[:, :d1] @ basis) if basis.shape[1] else None
    result = np.empty(rows.shape[0])
    for i, y in enumerate(local):
        if threshold is not None and upper is not None:
            if upper[i] <= threshold:
                result[i] = upper[i]
                continue
            if _horizontal_gap(spec, y) > threshold:
                result[i] = upper[i]
                continue
        result[i] = _tube_local(spec, y)
    return result


def _horizontal_gap(spec: SubspaceSpec, y: np.ndarray) -> float:
    """h_inner distance of the horizontal part of y to V, a lower bound of the tube distance."""
    alg = spec.algebra
    basis = spec.layer_bases[0]
    h = alg.h_inner
    y1 = y[: alg.horizontal_dim]
    coefficients = np.linalg.solve(basis.T @ h @ basis, basis.T @ h @ y1)
    gap = y1 - basis @ coefficients
    return float(np.sqrt(gap @ h @ gap))


def holder_exponent(
    spec: SubspaceSpec,
    pair_generator: str = "horizontal",
    n_pairs: int | None = None,
    seed: Any = 0,
    radius: float = 1.0,
) -> dict:
    """
    Slope of log d(P_V x, P_V y) against log d(x, y) over pairs with
    y = x . h_eps(u) inside Box(base, radius); eps is log-uniform and u is a
    unit horizontal vector (`horizontal`) or a unit quasi-norm vector
    (`sphere`). Pairs with coinciding projections are skipped.
    """
    if pair_generator not in ("horizontal", "sphere"):
        raise InputError(f"Unknown pair generator `{pair_generator}`, expected horizontal or sphere")
    alg = spec.algebra
    n_pairs = n_pairs or CONES["holder_pairs"]
    rng = as_generator(seed)
    x = bch(alg, spec.base_point, dilate_rows(alg, radius, rng.uniform(-1.0, 1.0, size=(n_pairs, alg.dim))))
    if pair_generator == "horizontal":
        u = np.zeros((n_pairs, alg.dim))
        u[:, : alg.horizontal_dim] = rng.normal(size=(n_pairs, alg.horizontal_dim))
        u /= qnorm_rows(alg, u)[:, None]
    else:
        u = unit_sphere_sample(alg, n_pairs, rng)
    low, high = np.log10(CONES["holder_eps_range"])
    eps = 10.0 ** rng.uniform(low, high, size=n_pairs)
    y = bch(alg, x, u * np.power(eps[:, None], alg.grading.layer_index[None, :]))
    d_xy = qnorm_rows(alg, bch(alg, -x, y))
    px, py = project_V_rows(spec, x), project_V_rows(spec, y)
    d_p = qnorm_rows(alg, bch(alg, -px, py))
    keep = (d_p > 1e-12) & (d_xy > 0)
    if np.count_nonzero(keep) < 3:
        return {"exponent": float("nan"), "r2": 0.0, "n_pairs": int(np.count_nonzero(keep))}
    fit = stats.linregress(np.log(d_xy[keep]), np.log(d_p[keep]))
    return {"exponent": float(fit.slope), "r2": float(fit.rvalue**2), "n_pairs": int(np.count_nonzero(keep))}


def _guarded_ladder(E: SetSample, m: np.ndarray, radii: np.ndarray, metric: str) -> tuple[list, list]:
    """Rungs and ball indices, stopping at the first later rung below MIN_BALL_POINTS points."""
    used, indices = [], []
    for i, r in enumerate(radii):
        inside = ball_indices(E, m, float(r), metric)
        if i > 0 and inside.size < MIN_BALL_POINTS:
            logger.warning(f"Radius ladder truncated at sampling resolution after {len(used)} rung(s)")
            break
        used.append(float(r))
        indices.append(inside)
    return used, indices


def subgroup_probes(spec: SubspaceSpec, r: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Points of base . exp(V) within d_qn distance r of the base point."""
    alg = spec.algebra
    probes = []
    count = 0
    while count < n:
        local = np.zeros((2 * n, alg.dim))
        for j, basis in enumerate(spec.layer_bases, start=1):
            if basis.shape[1]:
                coefficients = rng.uniform(-1.0, 1.0, size=(2 * n, basis.shape[1])) * r**j
                local[:, alg.grading.layer_slice(j)] = coefficients @ basis.T
        local = local[qnorm_rows(alg, local) < r]
        probes.append(local)
        count += local.shape[0]
    return bch(alg, spec.base_point, np.vstack(probes)[:n])


@timer
def approximability_test(
    E: SetSample,
    a: Any,
    spec: SubspaceSpec,
    alpha: float,
    r_ladder: Any,
    metric: str = "qn",
    n_probes: int | None = None,
    seed: Any = 0,
) -> dict:
    """
    Approximability of E at a by the subgroup V moved to a. Per rung r:
    theta is the smallest ball_measure(E, b, alpha r) / r^k over probes b
    on a . exp(V) within r of a, and `outside` is the mass of E in B(a, r)
    farther than alpha r from a . exp(V), over r^k; k is the homogeneous
    dimension of V. Passes when theta stays above theta_floor times its
    largest value and `outside` stays below alpha on every rung.
    """
    alpha = NumericValidator.validate_positive(alpha, "alpha")
    radii = LadderValidator.validate_ladder(r_ladder, "r_ladder")
    validate_metric(metric)
    a = _coords(spec, a, "a")
    local_spec = spec.with_base(a)
    _require_subgroup(local_spec)
    k = local_spec.homogeneous_dimension
    n_probes = n_probes or CONES["subgroup_samples"]
    used, indices = _guarded_ladder(E, a, radii, metric)
    rungs = []
    for r, inside, child in zip(used, indices, derive_seeds(seed, len(used))):
        probes = subgroup_probes(local_spec, r, n_probes, as_generator(child))
        theta = min(ball_measure(E, b, alpha * r, metric) for b in probes) / r**k
        distances = tube_dist_rows(local_spec, E.points[inside], threshold=alpha * r)
        outside = float(E.weights[inside][distances > alpha * r].sum()) / r**k
        rungs.append({"r": r, "theta": theta, "outside": outside})
    thetas = np.array([rung["theta"] for rung in rungs])
    theta_ok = bool(thetas.min() > 0 and thetas.min() >= CONES["theta_floor"] * thetas.max())
    outside_ok = all(rung["outside"] < alpha for rung in rungs)
    return {
        "passed": theta_ok and outside_ok,
        "theta": float(thetas.min()),
        "theta_bounded": theta_ok,
        "outside_below_alpha": outside_ok,
        "alpha": alpha,
        "k": k,
        "rungs": rungs,
        "truncated": len(used) < radii.size,
    }


def _decays(ratios: list[float]) -> bool:
    if max(ratios) <= CONES["zero_ratio"]:
        return True
    return ratios[-1] < CONES["decay_factor"] * ratios[0]


def _outside_cone_masses(E: SetSample, m: np.ndarray, spec: SubspaceSpec, s: float, indices: list, metric: str) -> list:
    cone = ConeSpec(m, spec, s)
    masses = []
    for inside in indices:
        if inside.size == 0:
            masses.append(0.0)
            continue
        outside = ~cone_mask(cone, E.points[inside], metric)
        masses.append(float(E.weights[inside][outside].sum()))
    return masses


def _density_precondition(E: SetSample, m: np.ndarray, k: int, radii: np.ndarray, metric: str) -> float:
    estimate = density(E, m, k, radii, metric)
    return estimate.upper


@timer
def aptan_test(
    E: SetSample,
    m: Any,
    spec: SubspaceSpec,
    s_list: Any,
    r_ladder: Any,
    metric: str = "qn",
) -> dict:
    """
    Approximate tangent cone test: for every slope s the mass of E in
    B(m, r) outside X(m, V, s), over r^k, along the ladder. A slope passes
    when the last ratio is below decay_factor times the first, or all
    ratios vanish. Skipped with `not_applicable` unless the upper
    k-density of E at m is positive.
    """
    radii = LadderValidator.validate_ladder(r_ladder, "r_ladder")
    validate_metric(metric)
    slopes = [NumericValidator.validate_open_unit(s, "s") for s in np.atleast_1d(s_list)]
    m = _coords(spec, m, "m")
    k = spec.homogeneous_dimension
    upper = _density_precondition(E, m, k, radii, metric)
    if upper <= 0:
        logger.info("Upper density vanishes, tangent cone test not applicable")
        return {"verdict": "not_applicable", "passed": False, "density_upper": upper, "slopes": []}
    used, indices = _guarded_ladder(E, m, radii, metric)
    table = []
    for s in slopes:
        masses = _outside_cone_masses(E, m, spec, s, indices, metric)
        ratios = [mass / r**k for mass, r in zip(masses, used)]
        table.append({"s": s, "radii": used, "ratios": ratios, "passed": _decays(ratios)})
    passed = all(row["passed"] for row in table)
    return {
        "verdict": "pass" if passed else "fail",
        "passed": passed,
        "density_upper": upper,
        "k": k,
        "slopes": table,
    }


def _exponents(spec: SubspaceSpec) -> dict:
    k = spec.homogeneous_dimension
    return {
        "k": k,
        "k_depth_subgroup": k * spec.depth,
        "k_depth_group": k * spec.algebra.depth,
    }


def double_cone_empty(
    m: Any,
    spec: SubspaceSpec,
    s: float,
    epsilon: float,
    n: int | None = None,
    seed: Any = 0,
    metric: str = "qn",
) -> dict:
    """
    Dense-sampling check that X(m, V, s), X(m, V-perp, s) and B(m, epsilon)
    have no common point.
    """
    s = NumericValidator.validate_open_unit(s, "s")
    epsilon = NumericValidator.validate_positive(epsilon, "epsilon")
    n = n or CONES["emptiness_samples"]
    m = _coords(spec, m, "m")
    points = ball_points(spec.algebra, m, epsilon, n, as_generator(seed))
    in_both = cone_mask(ConeSpec(m, spec, s), points, metric) & cone_mask(
        ConeSpec(m, orthogonal_complement(spec), s), points, metric
    )
    hits = int(np.count_nonzero(in_both))
    return {"empty": hits == 0, "hits": hits, "n_samples": n}


@timer
def saptan_test(
    E: SetSample,
    m: Any,
    spec: SubspaceSpec,
    s: float,
    epsilon: float,
    r_ladder: Any,
    exponent_mode: str = "k",
    metric: str = "qn",
    seed: Any = 0,
) -> dict:
    """
    Strong approximate tangent cone test: outside-cone mass ratios with
    denominator r^e for every exponent mode (e = k, k times the depth of V,
    k times the depth of the group), the verdict taken for
    `exponent_mode`, plus the double-cone emptiness check in B(m, epsilon).
    """
    if exponent_mode not in EXPONENT_MODES:
        raise InputError(f"`exponent_mode` should be one of {', '.join(EXPONENT_MODES)}")
    radii = LadderValidator.validate_ladder(r_ladder, "r_ladder")
    s = NumericValidator.validate_open_unit(s, "s")
    validate_metric(metric)
    m = _coords(spec, m, "m")
    exponents = _exponents(spec)
    upper = _density_precondition(E, m, exponents["k"], radii, metric)
    emptiness = double_cone_empty(m, spec, s, epsilon, seed=seed, metric=metric)
    if upper <= 0:
        return {
            "verdict": "not_applicable",
            "passed": False,
            "density_upper": upper,
            "double_cone": emptiness,
        }
    used, indices = _guarded_ladder(E, m, radii, metric)
    masses = _outside_cone_masses(E, m, spec, s, indices, metric)
    by_mode = {
        mode: [mass / r**e for mass, r in zip(masses, used)] for mode, e in exponents.items()
    }
    passed = _decays(by_mode[exponent_mode]) and emptiness["empty"]
    return {
        "verdict": "pass" if passed else "fail",
        "passed": passed,
        "density_upper": upper,
        "exponent_mode": exponent_mode,
        "exponents": exponents,
        "radii": used,
        "ratios": by_mode,
        "double_cone": emptiness,
    }


def cone_mass_bound_check(
    E: SetSample,
    spec: SubspaceSpec,
    s: float,
    lam: float | None,
    delta: float,
    panel: int | None = None,
    seed: Any = 0,
    exponent_mode: str = "k_depth_subgroup",
    metric: str = "qn",
) -> dict:
    """
    Diagnostic for the cone mass bound: over panel points y of E,
    lambda_emp = max mass(E in X(y, delta/6, V, s)) / (delta s / 6)^e and
    C = max mass(E in B(y, delta/6)) / (lambda delta^k). `saturated` means
    the cones keep a fixed share of the ball mass.
    """
    s = NumericValidator.validate_open_unit(s, "s")
    delta = NumericValidator.validate_positive(delta, "delta")
    if exponent_mode not in EXPONENT_MODES:
        raise InputError(f"`exponent_mode` should be one of {', '.join(EXPONENT_MODES)}")
    exponents = _exponents(spec)
    k, e = exponents["k"], exponents[exponent_mode]
    panel = min(panel or CONES["panel_size"], len(E))
    picks = as_generator(seed).choice(len(E), size=panel, replace=False)
    r = delta / 6
    cone_masses, ball_masses = [], []
    for index in picks:
        y = E.points[index]
        inside = ball_indices(E, y, r, metric)
        ball_masses.append(float(E.weights[inside].sum()))
        in_cone = cone_mask(ConeSpec(y, spec, s, r), E.points[inside], metric)
        cone_masses.append(float(E.weights[inside][in_cone].sum()))
    cone_masses, ball_masses = np.array(cone_masses), np.array(ball_masses)
    lambda_emp = float(cone_masses.max() / (r * s) ** e)
    lam_used = lam if lam is not None else lambda_emp
    fractions = cone_masses / ball_masses
    constant = float(ball_masses.max() / (lam_used * delta**k)) if lam_used > 0 else float("inf")
    return {
        "delta": delta,
        "lambda_emp": lambda_emp,
        "lambda": lam_used,
        "hypothesis_holds": None if lam is None else bool(lambda_emp <= lam),
        "C": constant,
        "cone_fraction": float(fractions.mean()),
        "saturated": bool(fractions.min() >= CONES["saturation_fraction"]),
        "exponent_mode": exponent_mode,
    }


def rectifiable_panel_check(
    E: SetSample,
    spec_fn: Callable[[np.ndarray], SubspaceSpec],
    s_list: Any,
    r_ladder: Any,
    points: Any = None,
    panel: int | None = None,
    seed: Any = 0,
    metric: str = "qn",
    threads: int | None = None,
) -> dict:
    """
    Tangent cone test at a panel of points of E with the subgroup returned
    by spec_fn(x). Passes when at least pass_fraction of the applicable
    points pass and the upper densities spread by less than density_spread
    of their mean.
    """
    radii = LadderValidator.validate_ladder(r_ladder, "r_ladder")
    if points is None:
        panel = min(panel or CONES["panel_size"], len(E))
        picks = as_generator(derive_seeds(seed, 1)[0]).choice(len(E), size=panel, replace=False)
        points = E.points[picks]
    else:
        points = ArrayValidator.validate_rows(points, E.algebra.dim)

    def run(x):
        return aptan_test(E, x, spec_fn(x), s_list, radii, metric)

    reports = parallel_map(run, list(points), threads)
    applicable = [rep for rep in reports if rep["verdict"] != "not_applicable"]
    if not applicable:
        return {"passed": False, "pass_fraction": 0.0, "density_spread": float("nan"), "n_points": len(reports)}
    fraction = sum(rep["passed"] for rep in applicable) / len(applicable)
    densities = np.array([rep["density_upper"] for rep in applicable])
    spread = float((densities.max() - densities.min()) / densities.mean())
    return {
        "passed": fraction >= CONES["pass_fraction"] and spread < CONES["density_spread"],
        "pass_fraction": float(fraction),
        "density_spread": spread,
        "densities": densities.tolist(),
        "n_points": len(reports),
        "n_applicable": len(applicable),
    }
