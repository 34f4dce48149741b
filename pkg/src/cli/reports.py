"""JSON reports and CSV tables written by the command line tool."""
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import repackage

repackage.up(2)
from src.carnot.core_algebra import CarnotAlgebra
from src.utilities.const import CSV_FLOAT_FMT, JSON_INDENT, TOOL_NAME, VERSION
from src.utilities.utils import CustomLogger

logger = CustomLogger(Path(__file__).name)


def to_jsonable(value: Any) -> Any:
    """
    Plain JSON types for reports: numpy values become Python ones, objects
    with `to_dict` are expanded and non-finite floats become null.
    """
    if callable(getattr(value, "to_dict", None)):
        return to_jsonable(value.to_dict())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def build_meta(alg: CarnotAlgebra | None, seed: int, metric: str, wall_time: float | None = None) -> dict:
    return {
        "tool": TOOL_NAME,
        "version": VERSION,
        "group": alg.name if alg is not None else None,
        "group_hash": alg.definition_hash if alg is not None else None,
        "seed": seed,
        "metric": metric,
        "wall_time": wall_time,
    }


def dumps(report: dict) -> str:
    return json.dumps(to_jsonable(report), sort_keys=True, indent=JSON_INDENT, allow_nan=False)


def write_report(report: dict, out: str | Path | None) -> str:
    """Serializes the report; writes it to `out` when given. Returns the text."""
    text = dumps(report)
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n", encoding="utf-8")
        logger.info(f"Report written to {path}")
    return text


def table_path(out: str | Path, name: str) -> Path:
    out = Path(out)
    return out.with_name(f"{out.stem}_{name}.csv")


def write_table(rows: list[dict], path: str | Path) -> Path:
    """One CSV row per dict, columns in first-seen order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([to_jsonable(row) for row in rows])
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FMT)
    return path
