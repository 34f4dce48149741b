"""
Command line tool. Every subcommand prints a JSON report on stdout (or
writes it to --out, with CSV tables next to it); estimator errors become
JSON error entries and a non-zero exit code.
"""
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import click
import numpy as np
import repackage

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra, algebra_to_dict, homogeneous_dimension, resolve_group, validate
from src.carnot.exception import CarnotException, InputError
from src.carnot.group import GroupPoint
from src.cli.reports import build_meta, dumps, table_path, write_report, write_table
from src.config.config import load_config
from src.levelset import levelset as ls
from src.levelset.fields import resolve_field
from src.measure import measure
from src.measure.samplers import box_sample, subspace_sample
from src.measure.set_io import read_set_csv
from src.measure.sets import SetSample, box_membership
from src.metrics.metrics import box_gauge, cc_upper, d_qn
from src.pansu import pansu
from src.pansu.maps import resolve_map
from src.rectifiability import cones_rect
from src.rectifiability.subspaces import SubspaceSpec, project_V, project_Vperp, subgroup_classify
from src.utilities.const import DEFAULT_METRIC, EXPONENT_MODES, METRICS, TOOL_NAME
from src.utilities.utils import CustomLogger

config = load_config()
logger = CustomLogger(Path(__file__).name)


@dataclass
class RunConfig:
    group_source: str
    seed: int
    metric: str
    out: str | None
    threads: int | None
    timing: bool
    started: float = field(default_factory=time.perf_counter)

    @cached_property
    def algebra(self) -> CarnotAlgebra:
        return resolve_group(self.group_source)

    def meta(self, alg: CarnotAlgebra | None = None) -> dict:
        wall_time = time.perf_counter() - self.started if self.timing else None
        return build_meta(alg or self.algebra, self.seed, self.metric, wall_time)


def emit(run: RunConfig, command: str, result: dict, tables: dict | None = None) -> dict:
    """Wraps the result with meta data, prints or writes it, and writes tables beside --out."""
    report = {"command": command, "meta": run.meta(), "result": result}
    text = write_report(report, run.out)
    if run.out is None:
        click.echo(text)
    else:
        for name, rows in (tables or {}).items():
            if rows:
                write_table(rows, table_path(run.out, name))
    return report


def parse_floats(text: str, name: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"`{name}` should be a comma separated list of numbers, got `{text}`")


def parse_point(text: str, alg: CarnotAlgebra, name: str = "point") -> np.ndarray:
    values = parse_floats(text, name)
    if len(values) != alg.dim:
        raise InputError(f"`{name}` should have {alg.dim} coordinates, got {len(values)}")
    return np.array(values)


def parse_basis(text: str, alg: CarnotAlgebra) -> np.ndarray:
    """Basis rows as `0,1,0;0,0,1` or as basis labels such as `Y,Z`."""
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    if ";" not in text and tokens and all(t in alg.labels for t in tokens):
        return np.eye(alg.dim)[[alg.labels.index(t) for t in tokens]]
    return np.array([parse_point(row, alg, "basis") for row in text.split(";") if row.strip()])


def load_sample(run: RunConfig, set_path: str | None, n: int, radius: float, basis: np.ndarray | None = None) -> SetSample:
    """The --set file, else a sample of the subgroup `basis`, else a box sample."""
    alg = run.algebra
    if set_path:
        return read_set_csv(set_path, alg)
    if basis is not None:
        return subspace_sample(alg, basis, n, run.seed, radius=radius)
    return box_sample(alg, n, run.seed, radius=radius)


set_option = click.option("--set", "set_path", type=click.Path(exists=True, dir_okay=False), default=None, help="CSV point set.")
n_option = click.option("--n", type=int, default=4000, show_default=True, help="Generated sample size.")
radius_option = click.option("--radius", type=float, default=1.0, show_default=True, help="Generated sample radius.")


@click.group(name=TOOL_NAME)
@click.option("--group", "group_source", default="heisenberg1", show_default=True, help="Built-in name or JSON file.")
@click.option("--seed", type=int, default=config["runtime"]["seed"], show_default=True)
@click.option("--metric", type=click.Choice(METRICS), default=DEFAULT_METRIC, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Report file; tables go beside it.")
@click.option("--threads", type=int, default=None, help="Worker threads (or CARNOT_THREADS).")
@click.option("--timing", is_flag=True, help="Record wall time in the report.")
@click.pass_context
def cli(ctx, group_source, seed, metric, out, threads, timing):
    """Numerical geometry of Carnot groups."""
    ctx.obj = RunConfig(group_source, seed, metric, out, threads, timing)


@cli.command("group-check")
@click.pass_obj
def group_check(run: RunConfig):
    """Validate the group definition."""
    alg = run.algebra
    report = validate(alg)
    emit(
        run,
        "group-check",
        {
            "definition": algebra_to_dict(alg),
            "labels": list(alg.labels),
            "homogeneous_dimension": homogeneous_dimension(alg),
            "validation": report.to_dict(),
        },
    )
    if not report.passed:
        raise click.exceptions.Exit(1)


@cli.command("dist")
@click.option("--p", "p_text", required=True, help="Comma separated coordinates.")
@click.option("--q", "q_text", required=True, help="Comma separated coordinates.")
@click.pass_obj
def dist(run: RunConfig, p_text, q_text):
    """Distances between two points."""
    alg = run.algebra
    p = GroupPoint(parse_point(p_text, alg, "p"), alg)
    q = GroupPoint(parse_point(q_text, alg, "q"), alg)
    result = {"qn": d_qn(p, q), "box": box_gauge(q, p)}
    if run.metric == "cc":
        result["cc"] = cc_upper(p, q, {"seed": run.seed}).to_dict()
    emit(run, "dist", result)


@cli.command("hausdorff")
@set_option
@n_option
@radius_option
@click.option("--s", type=float, required=True, help="Exponent.")
@click.option("--deltas", default="0.4,0.2,0.1,0.05", show_default=True)
@click.pass_obj
def hausdorff(run: RunConfig, set_path, n, radius, s, deltas):
    """Covering estimates of H^s along a ladder."""
    sample = load_sample(run, set_path, n, radius)
    estimates = measure.hausdorff_estimate(sample, s, parse_floats(deltas, "deltas"), run.metric)
    rows = [{"delta": d, "estimate": v} for d, v in estimates]
    emit(run, "hausdorff", {"s": s, "n": len(sample), "ladder": rows}, {"ladder": rows})


@cli.command("dim")
@set_option
@n_option
@radius_option
@click.option("--deltas", default=None, help="Covering ladder; derived from the sample when omitted.")
@click.pass_obj
def dim(run: RunConfig, set_path, n, radius, deltas):
    """Box-counting dimension of a point set."""
    sample = load_sample(run, set_path, n, radius)
    ladder = parse_floats(deltas, "deltas") if deltas else None
    estimate = measure.dim_estimate(sample, ladder, run.metric)
    volume_counts = estimate.volume_counts or [None] * len(estimate.deltas)
    rows = [
        {"delta": d, "count": c, "volume_count": v}
        for d, c, v in zip(estimate.deltas, estimate.counts, volume_counts)
    ]
    emit(run, "dim", estimate.to_dict(), {"counts": rows})


@cli.command("density")
@set_option
@n_option
@radius_option
@click.option("--point", required=True)
@click.option("--s", type=float, required=True)
@click.option("--radii", default="0.5,0.25,0.125", show_default=True)
@click.pass_obj
def density(run: RunConfig, set_path, n, radius, point, s, radii):
    """Upper and lower s-densities at a point."""
    sample = load_sample(run, set_path, n, radius)
    estimate = measure.density(sample, parse_point(point, run.algebra), s, parse_floats(radii, "radii"), run.metric)
    rows = [{"r": r, "ratio": v} for r, v in zip(estimate.radii, estimate.ratios)]
    emit(run, "density", estimate.to_dict(), {"ratios": rows})


@cli.command("pansu")
@click.option("--map", "map_name", required=True, help="Catalog map, e.g. dilation:2 or automorphism:2,3.")
@click.option("--point", required=True)
@click.pass_obj
def pansu_command(run: RunConfig, map_name, point):
    """Pansu differential of a catalog map."""
    f = resolve_map(map_name, run.algebra)
    x = parse_point(point, f.source)
    df = pansu.pansu_diff(f, x)
    residual = pansu.approx_residual(f, x, df, seed=run.seed)
    rows = [{"s": s, "ratio": r} for s, r in zip(residual.scales, residual.ratios)]
    emit(run, "pansu", {"map": f.name, "differential": df.to_dict(), "approx_residual": residual.to_dict()}, {"residual": rows})


@cli.command("jacobian")
@click.option("--map", "map_name", required=True)
@click.option("--point", required=True)
@click.option("--samples", type=int, default=None)
@click.pass_obj
def jacobian_command(run: RunConfig, map_name, point, samples):
    """Jacobian of a catalog map at a point."""
    f = resolve_map(map_name, run.algebra)
    estimate = pansu.jacobian(f, parse_point(point, f.source), mc_samples=samples, seed=run.seed)
    rows = [{"t": t, "estimate": e} for t, e in zip(estimate.radii, estimate.estimates)]
    emit(run, "jacobian", {"map": f.name, **estimate.to_dict()}, {"radii": rows})


@cli.command("area-check")
@click.option("--map", "map_name", required=True)
@n_option
@radius_option
@click.pass_obj
def area_check_command(run: RunConfig, map_name, n, radius):
    """Both sides of the area formula on a box."""
    f = resolve_map(map_name, run.algebra)
    alg = f.source
    sample = box_sample(alg, n, run.seed, radius=radius)
    report = pansu.area_check(f, sample, box_membership(alg, None, radius), seed=run.seed, threads=run.threads)
    emit(run, "area-check", {"map": f.name, **report.to_dict()})


def _subgroup(run: RunConfig, basis: str, base: str | None) -> SubspaceSpec:
    alg = run.algebra
    base_point = parse_point(base, alg, "base") if base else None
    return SubspaceSpec.from_basis(alg, parse_basis(basis, alg), base_point)


@cli.command("cone-test")
@click.option("--basis", required=True, help="Subgroup basis, e.g. Y,Z.")
@click.option("--apex", default=None)
@click.option("--point", required=True)
@click.option("--slope", type=float, default=0.5, show_default=True)
@click.option("--holder/--no-holder", default=False, help="Also fit the Holder exponent of the projection.")
@click.pass_obj
def cone_test(run: RunConfig, basis, apex, point, slope, holder):
    """Cone membership, projections and tube distance of a point."""
    alg = run.algebra
    spec = _subgroup(run, basis, apex)
    p = parse_point(point, alg)
    cone = cones_rect.ConeSpec(spec.base_point, spec, slope)
    result = {
        "subgroup": spec.to_dict(),
        "classification": subgroup_classify(spec),
        "inside": cones_rect.cone_contains(cone, p, run.metric),
        "projection_V": project_V(GroupPoint(p, alg), spec).coords,
        "projection_Vperp": project_Vperp(GroupPoint(p, alg), spec).coords,
    }
    if spec.is_graded_subgroup:
        result["tube_dist"] = cones_rect.tube_dist(p, spec)
    if holder:
        result["holder"] = cones_rect.holder_exponent(spec, seed=run.seed)
    emit(run, "cone-test", result)


@cli.command("approx-test")
@click.option("--basis", required=True)
@click.option("--point", required=True)
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--radii", default="0.5,0.35,0.25", show_default=True)
@set_option
@click.option("--n", type=int, default=40000, show_default=True)
@radius_option
@click.pass_obj
def approx_test(run: RunConfig, basis, point, alpha, radii, set_path, n, radius):
    """Approximability of a set by a subgroup at a point."""
    spec = _subgroup(run, basis, None)
    sample = load_sample(run, set_path, n, radius, spec.basis)
    result = cones_rect.approximability_test(
        sample, parse_point(point, run.algebra), spec, alpha, parse_floats(radii, "radii"), run.metric, seed=run.seed
    )
    emit(run, "approx-test", result, {"rungs": result["rungs"]})


@cli.command("aptan")
@click.option("--basis", required=True)
@click.option("--point", required=True)
@click.option("--slopes", default="0.5", show_default=True)
@click.option("--radii", default="0.5,0.35,0.25", show_default=True)
@set_option
@click.option("--n", type=int, default=40000, show_default=True)
@radius_option
@click.pass_obj
def aptan(run: RunConfig, basis, point, slopes, radii, set_path, n, radius):
    """Approximate tangent cone test."""
    spec = _subgroup(run, basis, None)
    sample = load_sample(run, set_path, n, radius, spec.basis)
    result = cones_rect.aptan_test(
        sample, parse_point(point, run.algebra), spec, parse_floats(slopes, "slopes"), parse_floats(radii, "radii"), run.metric
    )
    rows = [
        {"s": row["s"], "r": r, "ratio": v} for row in result["slopes"] for r, v in zip(row["radii"], row["ratios"])
    ]
    emit(run, "aptan", result, {"ratios": rows})


@cli.command("saptan")
@click.option("--basis", required=True)
@click.option("--point", required=True)
@click.option("--slope", type=float, default=0.2, show_default=True)
@click.option("--epsilon", type=float, default=0.1, show_default=True)
@click.option("--radii", default="0.5,0.35,0.25", show_default=True)
@click.option("--exponent-mode", type=click.Choice(EXPONENT_MODES), default="k", show_default=True)
@set_option
@click.option("--n", type=int, default=40000, show_default=True)
@radius_option
@click.pass_obj
def saptan(run: RunConfig, basis, point, slope, epsilon, radii, exponent_mode, set_path, n, radius):
    """Strong approximate tangent cone test."""
    spec = _subgroup(run, basis, None)
    sample = load_sample(run, set_path, n, radius, spec.basis)
    result = cones_rect.saptan_test(
        sample,
        parse_point(point, run.algebra),
        spec,
        slope,
        epsilon,
        parse_floats(radii, "radii"),
        exponent_mode,
        run.metric,
        run.seed,
    )
    emit(run, "saptan", result)


def _levelset_result(run: RunConfig, f, t: float, x: np.ndarray, report: str) -> tuple[dict, dict]:
    if report == "gradient":
        result = {
            "value": f(x),
            "horizontal_gradient": ls.horizontal_gradient(f, x),
            "riemannian_gradient": ls.riemannian_gradient(f, x),
            "surface_density": ls.surface_density(f, x),
            "generic": ls.generic_test(f, x),
        }
        return result, {}
    if report == "characteristic":
        points = ls.characteristic_points(f, t, seed=run.seed)
        result = {"points": points, "at_point": ls.characteristic_test(f, t, x)}
        return result, {"points": [dict(zip(run.algebra.labels, p)) for p in points]}
    if report == "ahlfors":
        s_ladder = np.array(config["levelset"]["s_ladder"])
        radii = np.concatenate([[2 * s_ladder[0]], s_ladder, [s_ladder[-1] / 2]])
        level = ls.level_sample_multiscale(f, t, x, radii, seed=run.seed)
        result = ls.ahlfors_check(level, x, float(s_ladder[-1]), s_ladder, seed=run.seed)
        return result, {}
    if report == "tangent":
        return ls.tangent_approx_report(f, t, x, seed=run.seed), {}
    result = ls.coarea_check(f, lambda rows: np.ones(rows.shape[0]), seed=run.seed, threads=run.threads)
    return result, {"levels": result["levels"]}


@cli.command("levelset")
@click.option("--field", "field_name", required=True, help="Catalog field, e.g. quasi_sphere or coordinate:1.")
@click.option("--level", "t", type=float, default=1.0, show_default=True)
@click.option("--point", required=True)
@click.option(
    "--report",
    type=click.Choice(("gradient", "characteristic", "ahlfors", "tangent", "coarea")),
    default="gradient",
    show_default=True,
)
@click.pass_obj
def levelset(run: RunConfig, field_name, t, point, report):
    """Level-set analysis of a catalog field."""
    f = resolve_field(field_name, run.algebra)
    x = parse_point(point, run.algebra)
    result, tables = _levelset_result(run, f, t, x, report)
    emit(run, "levelset", {"field": f.name, "level": t, "report": report, **result}, tables)


@cli.command("suite")
@click.option("--quick", is_flag=True, help="Smaller samples.")
@click.option("--only", default=None, help="Comma separated item ids, e.g. AC-01,AC-06.")
@click.pass_obj
def suite(run: RunConfig, quick, only):
    """Run the acceptance battery."""
    from src.cli.suite import run_suite

    selected = [item.strip() for item in only.split(",")] if only else None
    result = run_suite(run.seed, quick=quick, only=selected, threads=run.threads)
    rows = [{"id": key, "status": item.get("status"), "passed": item.get("passed")} for key, item in result["items"].items()]
    emit(run, "suite", result, {"summary": rows})
    if not result["summary"]["all_passed"]:
        raise click.exceptions.Exit(1)


def run(argv: list[str] | None = None) -> int:
    """
    Entry point returning an exit code. Estimator and input errors are
    reported as JSON on stdout with exit code 1; usage errors exit with 2.
    """
    try:
        result = cli.main(args=argv, prog_name=TOOL_NAME, standalone_mode=False)
    except CarnotException as e:
        logger.error(e.get_message())
        click.echo(dumps({"error": e.get_exception()}))
        return 1
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        return 1
    return result if isinstance(result, int) else 0


def main() -> None:
    raise SystemExit(run())
