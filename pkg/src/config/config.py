import json
import os
from pathlib import Path

CONFIG_ENV = "CARNOT_CONFIG"


def load_config(file_name="config.json", section: str | None = None) -> dict:
    """
    Loads the JSON file holding the numerical defaults of the estimators
    (tolerances, ladders, sample sizes, solver settings). The file is looked
    up next to config.py unless `CARNOT_CONFIG` points at another file.

    Args:
        file_name (str, optional): Config file name.
        Defaults to "config.json".
        section (str | None, optional): Top-level key to return instead
        of the whole mapping. Defaults to None.

    Raises:
        KeyError: If `section` is not present in the file.

    Returns:
        dict: Dictionary with configuration.
    """
    override = os.environ.get(CONFIG_ENV)
    if override:
        file_path = Path(override)
    else:
        file_path = Path(__file__).parent.joinpath(file_name)
    with open(file_path, "r", encoding="utf-8") as f:
        config = json.load(f)
    if section is None:
        return config
    if section not in config:
        raise KeyError(f"Config section `{section}` not found in {file_path}")
    return config[section]
