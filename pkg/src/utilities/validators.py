"""Validators for the arguments of the estimators."""
import numbers
from typing import Any

import numpy as np
import repackage

repackage.up(2)
from src.carnot.exception import InputError
from src.utilities.const import ABELIAN_RE, ENGEL_NAME, FREE_NILPOTENT_RE, HEISENBERG_RE


class NumericValidator:
    @staticmethod
    def is_valid_num(var: Any) -> bool:
        """
        Validates if input is a finite real number. Booleans are rejected
        even though they subclass int.

        Args:
            var (Any): Input variable.

        Returns:
            bool: True if input is a finite real number, False otherwise.
        """
        if isinstance(var, bool) or isinstance(var, np.bool_):
            return False
        if not isinstance(var, numbers.Real):
            return False
        return bool(np.isfinite(var))

    @staticmethod
    def validate_positive(value: Any, name: str) -> float:
        """
        Checks that `value` is a real number greater than 0.

        Args:
            value (Any): Value to validate.
            name (str): Parameter name used in the message.

        Raises:
            InputError: If value is not a positive real number.

        Returns:
            float: The value as float.
        """
        if not NumericValidator.is_valid_num(value) or value <= 0:
            raise InputError(f"`{name}` param should be a real number greater than 0")
        return float(value)

    @staticmethod
    def validate_positive_int(value: Any, name: str, minimum: int = 1) -> int:
        if (
            isinstance(value, bool)
            or not isinstance(value, numbers.Integral)
            or value < minimum
        ):
            raise InputError(f"`{name}` param should be an int not less than {minimum}")
        return int(value)

    @staticmethod
    def validate_open_unit(value: Any, name: str) -> float:
        """Checks 0 < value < 1."""
        if not NumericValidator.is_valid_num(value) or not 0 < value < 1:
            raise InputError(f"`{name}` param should be a real number in (0, 1)")
        return float(value)


class LadderValidator:
    @staticmethod
    def validate_ladder(ladder: Any, name: str, min_rungs: int = 1) -> np.ndarray:
        """
        Checks that a scale ladder is a strictly decreasing sequence of
        positive reals with at least `min_rungs` entries.

        Args:
            ladder (Any): Sequence of scales.
            name (str): Parameter name used in the message.
            min_rungs (int, optional): Required length. Defaults to 1.

        Raises:
            InputError: If the ladder is too short, not positive or not
            strictly decreasing.

        Returns:
            np.ndarray: Ladder as float array.
        """
        try:
            values = np.asarray(ladder, dtype=float).reshape(-1)
        except (TypeError, ValueError):
            raise InputError(f"`{name}` param should be a sequence of real numbers")
        if values.size < min_rungs:
            raise InputError(f"`{name}` param should have at least {min_rungs} rungs")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise InputError(f"`{name}` param should contain positive real numbers only")
        if np.any(np.diff(values) >= 0):
            raise InputError(f"`{name}` param should be strictly decreasing")
        return values


class ArrayValidator:
    @staticmethod
    def validate_vector(vector: Any, dim: int, name: str = "vector") -> np.ndarray:
        try:
            values = np.asarray(vector, dtype=float)
        except (TypeError, ValueError):
            raise InputError(f"`{name}` should be a real vector of length {dim}")
        if values.shape != (dim,):
            raise InputError(
                f"`{name}` should have dimension {dim}, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InputError(f"`{name}` should have finite coordinates")
        return values

    @staticmethod
    def validate_rows(rows: Any, dim: int, name: str = "points") -> np.ndarray:
        try:
            values = np.asarray(rows, dtype=float)
        except (TypeError, ValueError):
            raise InputError(f"`{name}` should be an array of real coordinates")
        if values.ndim == 1:
            values = values.reshape(1, -1)
        if values.ndim != 2 or values.shape[1] != dim:
            raise InputError(
                f"`{name}` should have {dim} columns, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InputError(f"`{name}` should have finite coordinates")
        return values


class GroupFileValidator:
    @staticmethod
    def is_builtin_name(name: str) -> bool:
        return bool(
            name == ENGEL_NAME
            or HEISENBERG_RE.fullmatch(name)
            or ABELIAN_RE.fullmatch(name)
            or FREE_NILPOTENT_RE.fullmatch(name)
        )

    @staticmethod
    def validate_group_dict(definition: Any) -> None:
        """
        Checks the shape of a group-definition mapping: a name, positive
        layer dimensions, 1-based bracket entries and an optional
        horizontal inner product.

        Args:
            definition (Any): Parsed JSON content.

        Raises:
            InputError: On the first structural problem found.
        """
        if not isinstance(definition, dict):
            raise InputError("Group definition should be a JSON object")
        for key in ("name", "layers", "brackets"):
            if key not in definition:
                raise InputError(f"Group definition is missing `{key}`")
        if not isinstance(definition["name"], str):
            raise InputError("Group definition `name` should be a string")
        layers = definition["layers"]
        if (
            not isinstance(layers, list)
            or not layers
            or any(isinstance(d, bool) or not isinstance(d, int) or d < 1 for d in layers)
        ):
            raise InputError("Group definition `layers` should be a list of positive ints")
        total = sum(layers)
        if not isinstance(definition["brackets"], list):
            raise InputError("Group definition `brackets` should be a list")
        for entry in definition["brackets"]:
            if not isinstance(entry, dict) or set(entry) != {"i", "j", "k", "c"}:
                raise InputError(f"Bracket entry {entry!r} should have keys i, j, k, c")
            for key in ("i", "j", "k"):
                index = entry[key]
                if isinstance(index, bool) or not isinstance(index, int):
                    raise InputError(f"Bracket index `{key}` should be an int")
                if not 1 <= index <= total:
                    raise InputError(
                        f"Bracket index `{key}`={index} should be in 1..{total}"
                    )
            if not NumericValidator.is_valid_num(entry["c"]):
                raise InputError("Bracket coefficient `c` should be a real number")
        h_inner = definition.get("h_inner")
        if h_inner is not None:
            size = layers[0]
            matrix = np.asarray(h_inner, dtype=float)
            if matrix.size != size * size:
                raise InputError(
                    f"Group definition `h_inner` should hold {size}x{size} entries"
                )
