"""
Acceptance battery. Each item returns a dict with a `passed` flag and the
numbers it was decided on; failures inside an item become error entries
and the battery moves on.
"""
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Callable

import numpy as np
import repackage
from tqdm.auto import tqdm

repackage.up(2)
from src.carnot.core_algebra import builtin
from src.carnot.exception import CarnotException
from src.carnot.group import GroupPoint, bch, dilate_rows, relative_rows
from src.cli.reports import dumps
from src.config.config import load_config
from src.levelset import levelset as ls
from src.levelset.fields import coordinate_field, qnorm_field, quasi_sphere, quasi_sphere_scaled
from src.measure.measure import dim_estimate
from src.measure.samplers import box_sample, subspace_sample
from src.measure.sets import box_membership
from src.metrics.gauges import qnorm_rows
from src.metrics.metrics import ball_box_check, cc_upper
from src.pansu.maps import automorphism_map, contact_shear_map, dilation_map, identity_map
from src.pansu.pansu import approx_residual, area_check, jacobian, pansu_diff
from src.rectifiability.cones_rect import (
    approximability_test,
    aptan_test,
    double_cone_empty,
    holder_exponent,
    saptan_test,
)
from src.rectifiability.subspaces import SubspaceSpec, subspace_angle
from src.utilities.utils import CustomLogger, as_generator, derive_seeds

config = load_config()
logger = CustomLogger(Path(__file__).name)
NOISE_FLOOR = config["pansu"]["noise_floor"]


@dataclass(frozen=True)
class SuiteContext:
    seed: int
    quick: bool
    threads: int | None

    def size(self, full: int, quick: int) -> int:
        return quick if self.quick else full

    def rng(self, tag: int) -> np.random.Generator:
        return as_generator(derive_seeds(self.seed, tag + 1)[tag])


def _heisenberg() -> tuple:
    h = builtin("heisenberg", 1)
    return h, np.eye(3)


def unipotent(rows: np.ndarray) -> np.ndarray:
    """3x3 upper unitriangular matrices of heisenberg1 points."""
    a, b, c = rows[:, 0], rows[:, 1], rows[:, 2]
    out = np.tile(np.eye(3), (rows.shape[0], 1, 1))
    out[:, 0, 1] = a
    out[:, 1, 2] = b
    out[:, 0, 2] = c + a * b / 2
    return out


def ac01_group_arithmetic(ctx: SuiteContext) -> dict:
    h, _ = _heisenberg()
    rng = ctx.rng(1)
    n = ctx.size(10000, 1000)
    p, q = rng.uniform(-2, 2, size=(n, 3)), rng.uniform(-2, 2, size=(n, 3))
    product = unipotent(p) @ unipotent(q)
    expected = np.column_stack([product[:, 0, 1], product[:, 1, 2], product[:, 0, 2] - product[:, 0, 1] * product[:, 1, 2] / 2])
    bch_error = float(np.abs(bch(h, p, q) - expected).max())
    a, b, c = p.T
    alpha, beta, gamma = q.T
    formula = np.column_stack([alpha - a, beta - b, gamma - c + 0.5 * (alpha * b - a * beta)])
    relative_error = float(np.abs(relative_rows(h, p, q) - formula).max())
    return {
        "passed": bch_error < 1e-12 and relative_error < 1e-12,
        "bch_error": bch_error,
        "relative_error": relative_error,
    }


def ac02_homogeneity(ctx: SuiteContext) -> dict:
    groups = [("heisenberg", 1), ("heisenberg", 2), ("engel",), ("abelian", 3), ("free_nilpotent", 2, 3)]
    rng = ctx.rng(2)
    worst = 0.0
    for name, *params in groups:
        alg = builtin(name, *params)
        points = rng.normal(size=(200, alg.dim))
        base = qnorm_rows(alg, points)
        for t in (0.1, 0.5, 1.0, 2.0, 10.0):
            scaled = qnorm_rows(alg, dilate_rows(alg, t, points))
            worst = max(worst, float(np.max(np.abs(scaled - t * base) / (t * base))))
    return {"passed": worst < 1e-12, "max_relative_error": worst}


def ac03_ball_box(ctx: SuiteContext) -> dict:
    h, _ = _heisenberg()
    n = ctx.size(4000, 1000)
    large = ball_box_check(h, [1.0], n, ctx.seed)
    small = ball_box_check(h, [0.01], n, ctx.seed)
    ratio = large.constant / small.constant
    return {"passed": 0.8 <= ratio <= 1.25, "constant_r1": large.constant, "constant_r001": small.constant, "ratio": ratio}


def ac04_cc_solver(ctx: SuiteContext) -> dict:
    h, _ = _heisenberg()
    opts = {"seed": ctx.seed, "restarts": ctx.size(8, 4), "threads": ctx.threads}
    origin = GroupPoint.identity(h)
    unit = cc_upper(origin, GroupPoint(np.array([1.0, 0.0, 0.0]), h), opts)
    p = GroupPoint(np.array([0.3, 0.2, 0.4]), h)
    base = cc_upper(origin, p, opts)
    dilated = cc_upper(origin, GroupPoint(dilate_rows(h, 2.0, p.coords)[0], h), opts)
    covariance = dilated.upper / (2.0 * base.upper)
    return {
        "passed": abs(unit.upper - 1.0) <= 1e-3 and base.lower <= base.upper and abs(covariance - 1.0) <= 0.02,
        "unit": unit.upper,
        "lower": base.lower,
        "upper": base.upper,
        "dilation_ratio": covariance,
    }


def ac05_holder(ctx: SuiteContext) -> dict:
    h, eye = _heisenberg()
    n = ctx.size(8000, 4000)
    vertical = holder_exponent(SubspaceSpec.from_basis(h, eye[[2]]), n_pairs=n, seed=ctx.seed)
    plane = builtin("abelian", 2)
    control = holder_exponent(SubspaceSpec.from_basis(plane, np.eye(2)[[0]]), n_pairs=n, seed=ctx.seed)
    return {
        "passed": abs(vertical["exponent"] - 0.5) <= 0.1 and abs(control["exponent"] - 1.0) <= 0.05,
        "vertical": vertical,
        "abelian": control,
    }


def ac06_dimension(ctx: SuiteContext) -> dict:
    h, eye = _heisenberg()
    n = ctx.size(4000, 2000)
    box = dim_estimate(box_sample(h, ctx.size(16000, 8000), ctx.seed)).dimension
    plane = dim_estimate(subspace_sample(h, eye[1:], n, ctx.seed)).dimension
    flat = dim_estimate(box_sample(builtin("abelian", 2), n, ctx.seed)).dimension
    return {
        "passed": abs(box - 4.0) <= 0.3 and abs(plane - 3.0) <= 0.3 and abs(flat - 2.0) <= 0.2,
        "heisenberg_box": box,
        "vertical_plane": plane,
        "abelian2_box": flat,
    }


def ac07_pansu(ctx: SuiteContext) -> dict:
    h, _ = _heisenberg()
    rng = ctx.rng(7)
    automorphism = automorphism_map(h, [2.0, 3.0])
    x = rng.uniform(-1, 1, size=3)
    df = pansu_diff(automorphism, x)
    matrix_error = float(np.abs(df.matrix - np.diag([2.0, 3.0, 6.0])).max())
    shear = contact_shear_map(h)
    decaying = []
    for point, child in zip(rng.uniform(-1, 1, size=(ctx.size(20, 5), 3)), derive_seeds(ctx.seed, ctx.size(20, 5))):
        ratios = approx_residual(shear, point, pansu_diff(shear, point), seed=child).ratios
        # each decade halves the residual unless it already sits at the noise floor
        decaying.append(all(late <= max(early / 2, NOISE_FLOOR) for early, late in zip(ratios, ratios[1:])))
    return {
        "passed": matrix_error < 1e-6 and df.residual < 1e-8 and all(decaying),
        "matrix_error": matrix_error,
        "residual": df.residual,
        "decaying_points": int(sum(decaying)),
        "points": len(decaying),
    }


def ac08_jacobian_area(ctx: SuiteContext) -> dict:
    h, _ = _heisenberg()
    samples = ctx.size(20000, 8000)
    x = np.array([0.2, -0.1, 0.3])
    dilation_j = jacobian(dilation_map(h, 2.0), x, mc_samples=samples, seed=ctx.seed).value
    automorphism = automorphism_map(h, [2.0, 3.0])
    automorphism_j = jacobian(automorphism, x, mc_samples=samples, seed=ctx.seed).value
    sample = box_sample(h, ctx.size(4000, 1000), ctx.seed)
    membership = box_membership(h)
    ratios = {}
    for f in (identity_map(h), dilation_map(h, 2.0), automorphism):
        report = area_check(f, sample, membership, n_samples=samples, seed=ctx.seed, threads=ctx.threads)
        ratios[f.name] = report.ratio
    return {
        "passed": abs(dilation_j / 16 - 1) <= 0.1
        and abs(automorphism_j / 36 - 1) <= 0.1
        and all(abs(r - 1) <= 0.15 for r in ratios.values()),
        "jacobian_dilation": dilation_j,
        "jacobian_automorphism": automorphism_j,
        "area_ratios": ratios,
    }


def generic_level_points(f, n: int, rng: np.random.Generator, margin: float = 0.1) -> np.ndarray:
    """Random points moved onto f = 1 by dilation, away from the pole and from the a, b axes."""
    alg = f.algebra
    points = []
    while len(points) < n:
        p = rng.uniform(-1, 1, size=alg.dim)
        if min(abs(p[0]), abs(p[1])) < margin:
            continue
        points.append(dilate_rows(alg, 1.0 / f(p), p)[0])
    return np.array(points)


def ac09_kernel(ctx: SuiteContext) -> dict:
    h, eye = _heisenberg()
    kernel = ls.kernel_subgroup(quasi_sphere(h), [1.0, 0.0, 0.0])
    angle = subspace_angle(kernel, SubspaceSpec.from_basis(h, eye[1:]))
    f = quasi_sphere_scaled(h)
    worst = 0.0
    for alpha, beta, gamma in generic_level_points(f, ctx.size(20, 5), ctx.rng(9)):
        denominator = gamma * alpha + alpha**2 * beta + beta**3
        if abs(denominator) < 1e-2:
            continue
        expected = (gamma * beta - alpha**3 - alpha * beta**2) / denominator
        worst = max(worst, abs(ls.kernel_slope(f, [alpha, beta, gamma]) - expected))
    return {"passed": angle < 1e-3 and worst < 1e-6, "angle": angle, "max_slope_error": worst}


def ac10_characteristic(ctx: SuiteContext) -> dict:
    h, _ = _heisenberg()
    sphere = quasi_sphere(h)
    points = ls.characteristic_points(sphere, 1.0, seed=ctx.seed)
    poles = [np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0])]
    found = all(any(np.allclose(p, pole, atol=1e-6) for p in points) for pole in poles)
    norms = [ls.horizontal_gradient_norm(sphere, p) for p in points]
    flat = ls.characteristic_points(coordinate_field(h, 0), 0.0, seed=ctx.seed)
    return {
        "passed": found and len(points) == 2 and max(norms, default=1.0) < 1e-8 and len(flat) == 0,
        "points": points,
        "gradient_norms": norms,
        "flat_points": len(flat),
    }


def _qnorm_annulus(alg, rows: np.ndarray) -> np.ndarray:
    norms = qnorm_rows(alg, rows)
    return ((norms > 0.3) & (norms < 0.8)).astype(float)


def ac11_coarea(ctx: SuiteContext) -> dict:
    h, _ = _heisenberg()
    options = {
        "n_samples": ctx.size(20000, 12000),
        "n_level": ctx.size(400, 150),
        "seed": ctx.seed,
        "threads": ctx.threads,
    }
    weights: dict[str, Callable] = {
        "box": lambda rows: np.ones(rows.shape[0]),
        "half_box": lambda rows: (np.abs(rows).max(axis=1) < 0.5).astype(float),
        "gaussian": lambda rows: np.exp(-qnorm_rows(h, rows) ** 2),
    }
    flat = coordinate_field(h, 0)
    ratios = {name: ls.coarea_check(flat, u, **options)["ratio"] for name, u in weights.items()}
    annulus = ls.coarea_check(qnorm_field(h), partial(_qnorm_annulus, h), **options)["ratio"]
    values = np.array(list(ratios.values()))
    spread = float(values.max() / values.min() - 1)
    return {
        "passed": spread <= 0.05 and abs(annulus / values.mean() - 1) <= 0.1,
        "ratios": ratios,
        "qnorm_annulus": annulus,
        "spread": spread,
    }


def ac12_ahlfors(ctx: SuiteContext) -> dict:
    h, _ = _heisenberg()
    f = quasi_sphere(h)
    x = generic_level_points(f, 1, ctx.rng(12))[0]
    s_ladder = np.array([0.2, 0.1, 0.05, 0.025])
    radii = [0.4, 0.2, 0.1, 0.05, 0.025, 0.0125]
    level = ls.level_sample_multiscale(f, 1.0, x, radii, ctx.size(1500, 600), ctx.seed)
    near = ls.ahlfors_check(level, x, 0.0125, s_ladder, seed=ctx.seed)
    wider = ls.ahlfors_check(level, x, 0.025, s_ladder, seed=ctx.seed)
    stable = max(near["A"], wider["A"]) / min(near["A"], wider["A"]) <= 2.0
    return {
        "passed": abs(near["exponent"] - 3.0) <= 0.3 and np.isfinite(near["A"]) and stable,
        "near": near,
        "wider": wider,
    }


def ac13_testers(ctx: SuiteContext) -> dict:
    h, eye = _heisenberg()
    plane = SubspaceSpec.from_basis(h, eye[1:])
    transverse = SubspaceSpec.from_basis(h, eye[[0, 2]])
    sample = subspace_sample(h, eye[1:], ctx.size(40000, 20000), ctx.seed)
    radii = [0.5, 0.35, 0.25]
    origin = np.zeros(3)
    approx = approximability_test(sample, origin, plane, 0.5, radii, seed=ctx.seed)
    own = aptan_test(sample, origin, plane, [0.5], radii)
    other = aptan_test(sample, origin, transverse, [0.5], radii)
    f = quasi_sphere(h)
    panel = generic_level_points(f, ctx.size(20, 3), ctx.rng(13), margin=0.2)
    verdicts = [
        ls.tangent_approx_report(f, 1.0, x, n_per_shell=ctx.size(800, 400), seed=child)["passed"]
        for x, child in zip(panel, derive_seeds(ctx.seed, len(panel)))
    ]
    fraction = float(np.mean(verdicts))
    return {
        "passed": approx["passed"] and own["passed"] and not other["passed"] and fraction >= 0.9,
        "subgroup_approximability": approx["passed"],
        "outside_mass": max(rung["outside"] for rung in approx["rungs"]),
        "subgroup_aptan": own["verdict"],
        "transverse_aptan": other["verdict"],
        "quasi_sphere_pass_fraction": fraction,
    }


def ac14_saptan(ctx: SuiteContext) -> dict:
    h, eye = _heisenberg()
    line = SubspaceSpec.from_basis(h, eye[[0]])
    empty = double_cone_empty(np.zeros(3), line, 0.2, 0.1, ctx.size(20000, 5000), ctx.seed)
    sample = subspace_sample(h, eye[[0]], ctx.size(4000, 1000), ctx.seed)
    report = saptan_test(sample, np.zeros(3), line, 0.2, 0.1, [0.5, 0.35, 0.25], seed=ctx.seed)
    exponents = report.get("exponents")
    ordered = exponents is not None and exponents["k"] <= exponents["k_depth_subgroup"] <= exponents["k_depth_group"]
    return {"passed": empty["empty"] and ordered, "double_cone": empty, "exponents": exponents, "verdict": report["verdict"]}


ITEMS: dict[str, Callable[[SuiteContext], dict]] = {
    "AC-01": ac01_group_arithmetic,
    "AC-02": ac02_homogeneity,
    "AC-03": ac03_ball_box,
    "AC-04": ac04_cc_solver,
    "AC-05": ac05_holder,
    "AC-06": ac06_dimension,
    "AC-07": ac07_pansu,
    "AC-08": ac08_jacobian_area,
    "AC-09": ac09_kernel,
    "AC-10": ac10_characteristic,
    "AC-11": ac11_coarea,
    "AC-12": ac12_ahlfors,
    "AC-13": ac13_testers,
    "AC-14": ac14_saptan,
}
REPEATED = ("AC-01", "AC-04", "AC-08", "AC-11")


def run_item(key: str, ctx: SuiteContext) -> dict:
    try:
        result = ITEMS[key](ctx)
        return {"status": "ok", **result}
    except (CarnotException, ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
        logger.error(f"Suite item {key} failed: {e}")
        details = e.get_exception() if isinstance(e, CarnotException) else {"message": str(e)}
        return {"passed": False, **details, "status": "error"}


def ac15_determinism(ctx: SuiteContext) -> dict:
    """
    Reruns the seeded, threaded items at quick sizes, once inline and once
    on several workers; the two reports should be byte-identical.
    """
    threads = max(2, ctx.threads or 2)
    inline = SuiteContext(ctx.seed, True, 1)
    threaded = SuiteContext(ctx.seed, True, threads)
    first = dumps({key: run_item(key, inline) for key in REPEATED})
    second = dumps({key: run_item(key, threaded) for key in REPEATED})
    return {"passed": first == second, "items": list(REPEATED), "threads": threads, "bytes": len(first)}


ITEMS["AC-15"] = ac15_determinism


def run_suite(seed: int, quick: bool = False, only: list[str] | None = None, threads: int | None = None) -> dict:
    """
    Runs the selected items (all by default) and summarises them. Unknown
    ids and estimator errors become error entries.
    """
    ctx = SuiteContext(seed, quick, threads)
    keys = only or list(ITEMS)
    items = {}
    for key in tqdm(keys, desc="suite", disable=None):
        if key not in ITEMS:
            items[key] = {"status": "error", "passed": False, "message": f"Unknown suite item `{key}`"}
            continue
        items[key] = run_item(key, ctx)
    passed = sorted(key for key, item in items.items() if item.get("passed"))
    errors = sorted(key for key, item in items.items() if item.get("status") == "error")
    failed = sorted(key for key in items if key not in passed and key not in errors)
    return {
        "quick": quick,
        "items": items,
        "summary": {"passed": passed, "failed": failed, "errors": errors, "all_passed": len(passed) == len(items)},
    }
