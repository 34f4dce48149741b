"""
Graded nilpotent Lie algebras given by structure constants, their
validation, the JSON group-definition format and the built-in examples.
"""
import hashlib
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import repackage

repackage.up(2)
from src.carnot.exception import InputError
from src.config.config import load_config
from src.utilities.const import (
    ABELIAN_RE,
    BUILTIN_FAMILIES,
    ENGEL_NAME,
    FREE_NILPOTENT_RE,
    HEISENBERG_RE,
)
from src.utilities.utils import CustomLogger
from src.utilities.validators import ArrayValidator, GroupFileValidator, NumericValidator

config = load_config()
logger = CustomLogger(Path(__file__).name)

TOL = config["algebra"]["tolerance"]
MAX_DEPTH = config["algebra"]["max_depth"]


@dataclass(frozen=True)
class Grading:
    """Layer dimensions [d1, ..., dl] of a stratified algebra."""

    layer_dims: tuple[int, ...]

    def __post_init__(self):
        if not self.layer_dims or any(d < 1 for d in self.layer_dims):
            raise InputError("Every layer dimension should be a positive int")

    @property
    def depth(self) -> int:
        return len(self.layer_dims)

    @property
    def total_dim(self) -> int:
        return int(sum(self.layer_dims))

    @cached_property
    def layer_index(self) -> np.ndarray:
        """1-based layer of every coordinate."""
        return np.repeat(np.arange(1, self.depth + 1), self.layer_dims)

    def layer_of(self, j: int) -> int:
        """Layer of the 0-based coordinate `j`."""
        if not 0 <= j < self.total_dim:
            raise InputError(f"Coordinate index {j} out of range 0..{self.total_dim - 1}")
        return int(self.layer_index[j])

    def layer_slice(self, i: int) -> slice:
        """Coordinates of the 1-based layer `i`."""
        start = int(sum(self.layer_dims[: i - 1]))
        return slice(start, start + self.layer_dims[i - 1])


@dataclass(frozen=True)
class StructureConstants:
    """
    Sparse structure constants, 0-based: entries[(i, j)] lists the pairs
    (k, c) with [e_i, e_j] = sum c e_k. A pair (i, j) stored without its
    mirror (j, i) gets the mirror by antisymmetry; a stored mirror is kept
    as given so that inconsistent input stays visible to `validate`.
    """

    entries: Mapping[tuple[int, int], tuple[tuple[int, float], ...]]

    def dense(self, dim: int) -> np.ndarray:
        tensor = np.zeros((dim, dim, dim))
        for (i, j), terms in self.entries.items():
            for k, c in terms:
                tensor[i, j, k] += c
                if (j, i) not in self.entries and i != j:
                    tensor[j, i, k] -= c
        return tensor

    def as_list(self) -> list[dict]:
        """Entries in the 1-based JSON layout, sorted."""
        rows = []
        for (i, j), terms in sorted(self.entries.items()):
            for k, c in sorted(terms):
                rows.append({"i": i + 1, "j": j + 1, "k": k + 1, "c": float(c)})
        return rows


@dataclass(frozen=True, eq=False)
class CarnotAlgebra:
    """
    A graded nilpotent Lie algebra n = V1 + ... + Vl with an inner product
    on the horizontal layer V1.
    """

    name: str
    grading: Grading
    constants: StructureConstants
    h_inner: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        d1 = self.grading.layer_dims[0]
        h_inner = np.array(self.h_inner, dtype=float)
        if h_inner.shape != (d1, d1):
            raise InputError(f"h_inner should be a {d1}x{d1} matrix, got {h_inner.shape}")
        h_inner.setflags(write=False)
        object.__setattr__(self, "h_inner", h_inner)
        dim = self.grading.total_dim
        for (i, j), terms in self.constants.entries.items():
            for k, _ in terms:
                if not (0 <= i < dim and 0 <= j < dim and 0 <= k < dim):
                    raise InputError(f"Bracket index ({i}, {j}, {k}) out of range")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"e{j + 1}" for j in range(dim)))
        elif len(self.labels) != dim:
            raise InputError("One label per basis vector is required")

    @property
    def dim(self) -> int:
        return self.grading.total_dim

    @property
    def depth(self) -> int:
        return self.grading.depth

    @property
    def horizontal_dim(self) -> int:
        return self.grading.layer_dims[0]

    @cached_property
    def tensor(self) -> np.ndarray:
        """Dense structure constants C[i, j, k]."""
        tensor = self.constants.dense(self.dim)
        tensor.setflags(write=False)
        return tensor

    @cached_property
    def riemannian_metric(self) -> np.ndarray:
        """Graded-orthogonal completion: h_inner on V1, identity above."""
        metric = np.eye(self.dim)
        d1 = self.horizontal_dim
        metric[:d1, :d1] = self.h_inner
        return metric

    @cached_property
    def definition_hash(self) -> str:
        return definition_hash(self)

    def __repr__(self):
        return f"CarnotAlgebra({self.name!r}, layers={list(self.grading.layer_dims)})"


@dataclass(frozen=True)
class ValidationReport:
    checks: dict[str, bool]
    details: dict[str, float]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": dict(self.checks), "details": dict(self.details)}


def bracket(alg: CarnotAlgebra, v: Any, w: Any) -> np.ndarray:
    """
    Lie bracket of two algebra vectors through the structure constants.

    Args:
        alg (CarnotAlgebra): Algebra.
        v (Any): Vector of length `alg.dim`.
        w (Any): Vector of length `alg.dim`.

    Raises:
        InputError: On dimension mismatch.

    Returns:
        np.ndarray: [v, w].
    """
    v = ArrayValidator.validate_vector(v, alg.dim, "v")
    w = ArrayValidator.validate_vector(w, alg.dim, "w")
    return np.einsum("i,j,ijk->k", v, w, alg.tensor)


def _jacobi_defect(tensor: np.ndarray) -> float:
    # [[e_i, e_j], e_l] + [[e_j, e_l], e_i] + [[e_l, e_i], e_j]
    first = np.einsum("ijk,klm->ijlm", tensor, tensor)
    second = np.einsum("jlk,kim->ijlm", tensor, tensor)
    third = np.einsum("lik,kjm->ijlm", tensor, tensor)
    total = first + second + third
    return float(np.max(np.abs(total))) if total.size else 0.0


def validate(alg: CarnotAlgebra, tol: float = TOL) -> ValidationReport:
    """
    Checks the Carnot algebra axioms on the basis: antisymmetry, Jacobi
    identity, grading compatibility, nilpotency, bracket generation and
    positive-definiteness of h_inner. Failures are report entries.
    """
    tensor = alg.tensor
    layer = alg.grading.layer_index
    depth = alg.depth
    checks = {}
    details = {}

    antisym = np.abs(tensor + tensor.transpose(1, 0, 2))
    details["antisymmetry_defect"] = float(antisym.max()) if antisym.size else 0.0
    checks["antisymmetry"] = details["antisymmetry_defect"] <= tol

    details["jacobi_defect"] = _jacobi_defect(tensor)
    checks["jacobi"] = details["jacobi_defect"] <= tol

    layer_sum = layer[:, None, None] + layer[None, :, None]
    mismatched = np.abs(tensor) * (layer_sum != layer[None, None, :])
    details["grading_defect"] = float(mismatched.max()) if mismatched.size else 0.0
    checks["grading"] = details["grading_defect"] <= tol

    too_deep = np.abs(tensor) * (layer_sum > depth)
    details["nilpotency_defect"] = float(too_deep.max()) if too_deep.size else 0.0
    checks["nilpotency"] = details["nilpotency_defect"] <= tol

    generation_ok = True
    first = alg.grading.layer_slice(1)
    for j in range(1, depth):
        source = alg.grading.layer_slice(j)
        target = alg.grading.layer_slice(j + 1)
        images = tensor[first, source, target].reshape(-1, alg.grading.layer_dims[j])
        rank = np.linalg.matrix_rank(images, tol=config["algebra"]["rank_tolerance"]) if images.size else 0
        details[f"generation_rank_{j + 1}"] = float(rank)
        if rank != alg.grading.layer_dims[j]:
            generation_ok = False
    checks["bracket_generation"] = generation_ok

    h_inner = alg.h_inner
    symmetric = np.max(np.abs(h_inner - h_inner.T)) <= tol
    eigenvalues = np.linalg.eigvalsh((h_inner + h_inner.T) / 2)
    details["h_inner_min_eigenvalue"] = float(eigenvalues.min())
    checks["h_inner_positive_definite"] = bool(symmetric and eigenvalues.min() > tol)

    return ValidationReport(checks=checks, details=details)


def homogeneous_dimension(alg: CarnotAlgebra) -> int:
    """
    k = sum of i * dim(V_i). This is also the Hausdorff dimension of the
    group, taken with the usual convention inf{s : H^s = 0}.
    """
    return int(sum(i * d for i, d in enumerate(alg.grading.layer_dims, start=1)))


def make_algebra(
    name: str,
    layers: list[int],
    brackets: list[tuple[int, int, int, float]],
    h_inner: Any = None,
    labels: tuple[str, ...] = (),
) -> CarnotAlgebra:
    """Builds an algebra from 0-based bracket triples (i, j, k, c)."""
    entries: dict[tuple[int, int], list[tuple[int, float]]] = {}
    for i, j, k, c in brackets:
        entries.setdefault((int(i), int(j)), []).append((int(k), float(c)))
    frozen = {key: tuple(terms) for key, terms in entries.items()}
    grading = Grading(tuple(int(d) for d in layers))
    if h_inner is None:
        h_inner = np.eye(grading.layer_dims[0])
    return CarnotAlgebra(
        name=name,
        grading=grading,
        constants=StructureConstants(frozen),
        h_inner=np.asarray(h_inner, dtype=float).reshape(grading.layer_dims[0], -1),
        labels=labels,
    )


def _heisenberg(n: int) -> CarnotAlgebra:
    n = NumericValidator.validate_positive_int(n, "n")
    brackets = [(i, n + i, 2 * n, 1.0) for i in range(n)]
    if n == 1:
        labels = ("X", "Y", "Z")
    else:
        labels = tuple(
            [f"X{i + 1}" for i in range(n)] + [f"Y{i + 1}" for i in range(n)] + ["Z"]
        )
    return make_algebra(f"heisenberg{n}", [2 * n, 1], brackets, labels=labels)


def _engel() -> CarnotAlgebra:
    brackets = [(0, 1, 2, 1.0), (0, 2, 3, 1.0)]
    return make_algebra(ENGEL_NAME, [2, 1, 1], brackets, labels=("X1", "X2", "X3", "X4"))


def _abelian(n: int) -> CarnotAlgebra:
    n = NumericValidator.validate_positive_int(n, "n")
    return make_algebra(f"abelian{n}", [n], [])


def _lyndon_words(rank: int, step: int) -> list[tuple[int, ...]]:
    words = []
    for length in range(1, step + 1):
        for word in itertools.product(range(rank), repeat=length):
            if all(word < word[i:] for i in range(1, length)):
                words.append(word)
    return words


def _lie_product(p: dict, q: dict, step: int) -> dict:
    """[p, q] = pq - qp in the free associative algebra truncated at `step`."""
    result: dict[tuple[int, ...], float] = {}
    for a, ca in p.items():
        for b, cb in q.items():
            if len(a) + len(b) > step:
                continue
            result[a + b] = result.get(a + b, 0.0) + ca * cb
            result[b + a] = result.get(b + a, 0.0) - ca * cb
    return {w: c for w, c in result.items() if c != 0.0}


def _standard_bracketing(word: tuple[int, ...], step: int, cache: dict) -> dict:
    if word in cache:
        return cache[word]
    if len(word) == 1:
        poly = {word: 1.0}
    else:
        # split off the longest proper suffix that is itself a Lyndon word
        for split in range(1, len(word)):
            suffix = word[split:]
            if all(suffix < suffix[i:] for i in range(1, len(suffix))):
                break
        poly = _lie_product(
            _standard_bracketing(word[:split], step, cache),
            _standard_bracketing(word[split:], step, cache),
            step,
        )
    cache[word] = poly
    return poly


def _free_nilpotent(rank: int, step: int) -> CarnotAlgebra:
    rank = NumericValidator.validate_positive_int(rank, "rank", minimum=2)
    step = NumericValidator.validate_positive_int(step, "step")
    if step > MAX_DEPTH:
        raise InputError(f"free_nilpotent step should not exceed {MAX_DEPTH}")
    words = _lyndon_words(rank, step)
    cache: dict = {}
    polys = [_standard_bracketing(w, step, cache) for w in words]
    layers = [sum(1 for w in words if len(w) == length) for length in range(1, step + 1)]
    by_length: dict[int, list[int]] = {}
    for index, word in enumerate(words):
        by_length.setdefault(len(word), []).append(index)

    brackets = []
    for i, j in itertools.combinations(range(len(words)), 2):
        length = len(words[i]) + len(words[j])
        if length > step:
            continue
        product = _lie_product(polys[i], polys[j], step)
        if not product:
            continue
        targets = by_length[length]
        monomials = sorted(set(product).union(*(polys[t].keys() for t in targets)))
        basis = np.array([[polys[t].get(m, 0.0) for t in targets] for m in monomials])
        rhs = np.array([product.get(m, 0.0) for m in monomials])
        coeffs, *_ = np.linalg.lstsq(basis, rhs, rcond=None)
        for t, c in zip(targets, np.round(coeffs, 12)):
            if abs(c) > TOL:
                brackets.append((i, j, t, float(c)))
    labels = tuple("".join("XYZUVW"[letter] if rank <= 6 else str(letter) for letter in w) for w in words)
    return make_algebra(f"free_nilpotent_{rank}_{step}", layers, brackets, labels=labels)


BUILTINS = {
    "heisenberg": _heisenberg,
    "engel": _engel,
    "abelian": _abelian,
    "free_nilpotent": _free_nilpotent,
}


def builtin(name: str, *params: int) -> CarnotAlgebra:
    """
    Built-in validated algebras: heisenberg(n), engel, abelian(n) and
    free_nilpotent(rank, step).

    Args:
        name (str): Family name.
        *params (int): Family parameters.

    Raises:
        InputError: Unknown name or wrong parameter count.

    Returns:
        CarnotAlgebra: Validated algebra.
    """
    if name not in BUILTINS:
        raise InputError(
            f"Unknown built-in group `{name}`, expected one of {', '.join(BUILTIN_FAMILIES)}"
        )
    try:
        alg = BUILTINS[name](*params)
    except TypeError:
        raise InputError(f"Wrong parameters {params!r} for built-in group `{name}`")
    report = validate(alg)
    if not report.passed:
        raise InputError(f"Built-in `{name}` failed validation: {report.checks}")
    return alg


def algebra_from_dict(definition: dict) -> CarnotAlgebra:
    """Builds an algebra from the 1-based JSON group-definition layout."""
    GroupFileValidator.validate_group_dict(definition)
    brackets = [
        (entry["i"] - 1, entry["j"] - 1, entry["k"] - 1, entry["c"])
        for entry in definition["brackets"]
    ]
    return make_algebra(
        definition["name"],
        definition["layers"],
        brackets,
        h_inner=definition.get("h_inner"),
        labels=tuple(definition.get("labels", ())),
    )


def algebra_to_dict(alg: CarnotAlgebra) -> dict:
    return {
        "name": alg.name,
        "layers": list(alg.grading.layer_dims),
        "brackets": alg.constants.as_list(),
        "h_inner": [float(x) for x in alg.h_inner.reshape(-1)],
    }


def definition_hash(alg: CarnotAlgebra) -> str:
    """
    sha256 of the canonical JSON structure (layers, brackets, h_inner). The
    name is a label only, so a renamed copy of a group hashes the same.
    """
    structure = {key: value for key, value in algebra_to_dict(alg).items() if key != "name"}
    canonical = json.dumps(structure, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_algebra(path: str | Path) -> CarnotAlgebra:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            definition = json.load(f)
    except json.JSONDecodeError as e:
        raise InputError(f"Group file {path} is not valid JSON: {e}")
    alg = algebra_from_dict(definition)
    logger.debug(f"Loaded group `{alg.name}` from {path}")
    return alg


def resolve_group(source: str) -> CarnotAlgebra:
    """
    Resolves a group source: `heisenberg<n>`, `engel`, `abelian<n>`,
    `free_nilpotent_<rank>_<step>` or a path to a JSON definition.
    """
    if match := HEISENBERG_RE.fullmatch(source):
        return builtin("heisenberg", int(match.group(1)))
    if match := ABELIAN_RE.fullmatch(source):
        return builtin("abelian", int(match.group(1)))
    if match := FREE_NILPOTENT_RE.fullmatch(source):
        return builtin("free_nilpotent", int(match.group(1)), int(match.group(2)))
    if source == ENGEL_NAME:
        return builtin("engel")
    if Path(source).is_file():
        return load_algebra(source)
    raise InputError(f"`{source}` is neither a built-in group nor a group file")


def same_algebra(a: CarnotAlgebra, b: CarnotAlgebra) -> bool:
    return a is b or a.definition_hash == b.definition_hash
