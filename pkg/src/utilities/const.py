import re

TOOL_NAME = "carnotlab"
VERSION = "0.1.0"

# Built-in group names as accepted by `--group`
HEISENBERG_RE = re.compile(r"^heisenberg(\d+)$")
ABELIAN_RE = re.compile(r"^abelian(\d+)$")
FREE_NILPOTENT_RE = re.compile(r"^free_nilpotent_(\d+)_(\d+)$")
ENGEL_NAME = "engel"
BUILTIN_FAMILIES = ("heisenberg", "engel", "abelian", "free_nilpotent")

# Metric choices
METRICS = ("qn", "box", "cc")
DEFAULT_METRIC = "qn"

# Exponent modes of the strong tangent cone tester
EXPONENT_MODES = ("k", "k_depth_subgroup", "k_depth_group")

# Report emission
CSV_FLOAT_FMT = "%.12g"
JSON_INDENT = 2
