"""SetSample CSV files: one point per row, layer-ordered, optional trailing weight."""
from pathlib import Path

import numpy as np
import pandas as pd
import repackage

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra
from src.carnot.exception import InputError
from src.measure.sets import SetSample
from src.utilities.const import CSV_FLOAT_FMT


def read_set_csv(path: str | Path, alg: CarnotAlgebra) -> SetSample:
    """
    Reads a headerless CSV of coordinates. A column count of dim + 1 means
    the last column holds weights.

    Raises:
        InputError: If the file cannot be parsed, holds a non-numeric or
        empty cell, or has the wrong width.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, header=None, comment="#")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputError(f"Cannot read set file {path}: {e}")
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    missing = numeric.isna().any(axis=1).to_numpy()
    if missing.any():
        rows = ", ".join(str(i + 1) for i in np.flatnonzero(missing)[:5])
        raise InputError(f"Set file {path} has missing or non-numeric values in data row(s) {rows}")
    values = numeric.to_numpy(dtype=float)
    if values.shape[1] == alg.dim:
        points, weights = values, None
    elif values.shape[1] == alg.dim + 1:
        points, weights = values[:, :-1], values[:, -1]
    else:
        raise InputError(
            f"Set file {path} has {values.shape[1]} columns, expected {alg.dim} or {alg.dim + 1}"
        )
    return SetSample(alg, points, weights, {"generator": f"csv:{path.name}"})


def write_set_csv(sample: SetSample, path: str | Path, with_weights: bool = True) -> Path:
    path = Path(path)
    frame = pd.DataFrame(sample.points)
    if with_weights:
        frame[sample.algebra.dim] = sample.weights
    frame.to_csv(path, header=False, index=False, float_format=CSV_FLOAT_FMT)
    return path
