"""
Direct-shooting solver for horizontal paths. A path is a piecewise
constant control u: [0, 1] -> V1 in the left-invariant frame; a constant
control over one segment advances the state by right multiplication with
exp(dt * u), which is exact in exponential coordinates.
"""
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import repackage
from scipy import optimize

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra
from src.carnot.exception import SolverError
from src.carnot.group import bch, dilate_rows
from src.config.config import load_config
from src.metrics.gauges import horizontal_norm_rows, qnorm_rows
from src.utilities.utils import CustomLogger, as_generator, derive_seeds, parallel_map, timer

config = load_config()
logger = CustomLogger(Path(__file__).name)


@dataclass
class SolverOptions:
    segments: int = config["cc_solver"]["segments"]
    restarts: int = config["cc_solver"]["restarts"]
    rounds: int = config["cc_solver"]["rounds"]
    max_iter: int = config["cc_solver"]["max_iter"]
    endpoint_tol: float = config["cc_solver"]["endpoint_tol"]
    initial_penalty: float = config["cc_solver"]["initial_penalty"]
    penalty_growth: float = config["cc_solver"]["penalty_growth"]
    fd_step: float = config["cc_solver"]["fd_step"]
    newton_iter: int = config["cc_solver"]["newton_iter"]
    seed: Any = 0
    threads: int | None = None

    @classmethod
    def from_dict(cls, opts: dict | None) -> "SolverOptions":
        if opts is None:
            return cls()
        if isinstance(opts, cls):
            return opts
        known = {f.name for f in fields(cls)}
        unknown = set(opts) - known
        if unknown:
            logger.warning(f"Ignoring unknown solver options: {sorted(unknown)}")
        return cls(**{k: v for k, v in opts.items() if k in known})


@dataclass(frozen=True)
class CCDistanceEstimate:
    upper: float
    lower: float
    path: np.ndarray = field(repr=False)
    iterations: int
    converged: bool
    endpoint_error: float

    def to_dict(self) -> dict:
        return {
            "upper": self.upper,
            "lower": self.lower,
            "iterations": self.iterations,
            "converged": self.converged,
            "endpoint_error": self.endpoint_error,
        }


@dataclass
class _RestartResult:
    controls: np.ndarray
    length: float
    iterations: int
    converged: bool
    endpoint_error: float


class HorizontalPathSolver:
    """
    Minimises energy plus a growing endpoint penalty with L-BFGS-B, then
    projects onto the exact endpoint with minimum-norm Newton steps.
    """

    def __init__(self, alg: CarnotAlgebra, options: SolverOptions):
        self.alg = alg
        self.options = options
        self.m = options.segments
        self.d1 = alg.horizontal_dim
        self.dt = 1.0 / self.m

    def endpoints(self, controls: np.ndarray) -> np.ndarray:
        """Endpoints of a batch of (P, m, d1) controls started at the identity."""
        batch = controls.shape[0]
        state = np.zeros((batch, self.alg.dim))
        step = np.zeros((batch, self.alg.dim))
        for k in range(self.m):
            step[:, : self.d1] = self.dt * controls[:, k, :]
            state = bch(self.alg, state, step)
        return state

    def residual_and_jacobian(self, flat: np.ndarray, target: np.ndarray):
        """Coordinates of target^-1 . endpoint and their forward-difference Jacobian."""
        h = self.options.fd_step
        size = flat.size
        batch = np.repeat(flat[None, :], size + 1, axis=0)
        batch[1:] += h * np.eye(size)
        ends = self.endpoints(batch.reshape(size + 1, self.m, self.d1))
        residuals = bch(self.alg, -target, ends)
        jacobian = ((residuals[1:] - residuals[0]) / h).T
        return residuals[0], jacobian

    def _objective(self, flat, target, penalty):
        controls = flat.reshape(self.m, self.d1)
        energy = self.dt * float(np.einsum("ki,ij,kj->", controls, self.alg.h_inner, controls))
        grad_energy = 2.0 * self.dt * (controls @ self.alg.h_inner)
        residual, jacobian = self.residual_and_jacobian(flat, target)
        value = energy + penalty * float(residual @ residual)
        grad = grad_energy.reshape(-1) + 2.0 * penalty * (jacobian.T @ residual)
        return value, grad

    def _project(self, flat, target):
        for _ in range(self.options.newton_iter):
            residual, jacobian = self.residual_and_jacobian(flat, target)
            if float(qnorm_rows(self.alg, residual)[0]) < 1e-3 * self.options.endpoint_tol:
                break
            step, *_ = np.linalg.lstsq(jacobian, residual, rcond=None)
            flat = flat - step
        residual, _ = self.residual_and_jacobian(flat, target)
        return flat, float(qnorm_rows(self.alg, residual)[0])

    def length(self, controls: np.ndarray) -> float:
        return float(self.dt * horizontal_norm_rows(self.alg, controls).sum())

    def solve_unit(self, target: np.ndarray, seed) -> _RestartResult:
        """One restart for a target of unit quasi-norm."""
        rng = as_generator(seed)
        opts = self.options
        drift = np.broadcast_to(target[: self.d1], (self.m, self.d1))
        flat = (drift + rng.normal(scale=1.0, size=(self.m, self.d1))).reshape(-1)
        penalty = opts.initial_penalty
        iterations = 0
        converged = True
        for _ in range(opts.rounds):
            result = optimize.minimize(
                self._objective,
                flat,
                args=(target, penalty),
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": opts.max_iter, "gtol": 1e-10},
            )
            flat = result.x
            iterations += int(result.nit)
            # status 1 means the iteration budget ran out
            converged = int(result.status) != 1
            penalty *= opts.penalty_growth
        flat, error = self._project(flat, target)
        controls = flat.reshape(self.m, self.d1)
        return _RestartResult(controls, self.length(controls), iterations, converged, error)


def _straight(alg: CarnotAlgebra, displacement: np.ndarray, segments: int) -> CCDistanceEstimate | None:
    """A purely horizontal displacement is reached by a straight segment of certified length."""
    if np.any(np.abs(displacement[alg.horizontal_dim :]) > 1e-15):
        return None
    d1 = alg.horizontal_dim
    length = float(horizontal_norm_rows(alg, displacement[None, :d1])[0])
    path = np.repeat(displacement[None, :d1], segments, axis=0)
    return CCDistanceEstimate(length, length, path, 0, True, 0.0)


@timer
def solve_cc(alg: CarnotAlgebra, displacement: np.ndarray, opts: dict | SolverOptions | None = None) -> CCDistanceEstimate:
    """
    Upper and lower bounds for the CC length of exp(displacement).

    The target is dilated to unit quasi-norm, solved there, and the path
    scaled back, which makes the estimate exactly dilation covariant.

    Raises:
        SolverError: If no restart met the endpoint tolerance.
    """
    options = SolverOptions.from_dict(opts)
    displacement = np.asarray(displacement, dtype=float)
    d1 = alg.horizontal_dim
    scale = float(qnorm_rows(alg, displacement)[0])
    if scale == 0.0:
        return CCDistanceEstimate(0.0, 0.0, np.zeros((options.segments, d1)), 0, True, 0.0)
    straight = _straight(alg, displacement, options.segments)
    if straight is not None:
        return straight

    lower = float(horizontal_norm_rows(alg, displacement[None, :d1])[0])
    unit_target = dilate_rows(alg, 1.0 / scale, displacement)[0]
    solver = HorizontalPathSolver(alg, options)
    seeds = derive_seeds(options.seed, options.restarts)
    results = parallel_map(lambda s: solver.solve_unit(unit_target, s), seeds, options.threads)

    admissible = [r for r in results if scale * r.endpoint_error < options.endpoint_tol]
    if not admissible:
        best_error = min(scale * r.endpoint_error for r in results)
        raise SolverError(
            "Horizontal path solver missed the endpoint tolerance on every restart",
            endpoint_error=best_error,
            endpoint_tol=options.endpoint_tol,
        )
    best = min(admissible, key=lambda r: r.length)
    if not best.converged:
        logger.warning(
            f"L-BFGS-B did not converge within {options.max_iter} iterations; "
            "the estimate is still an upper bound"
        )
    return CCDistanceEstimate(
        upper=scale * best.length,
        lower=lower,
        path=scale * best.controls,
        iterations=best.iterations,
        converged=best.converged,
        endpoint_error=scale * best.endpoint_error,
    )
