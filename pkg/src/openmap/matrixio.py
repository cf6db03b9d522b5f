"""Dense-matrix JSON interchange.

Every matrix crossing a process boundary uses the same payload::

    {"rows": m, "cols": n, "data": [row-major reals]}

``json`` emits shortest-representation decimals, so IEEE-754 doubles
round-trip bit-exactly.  NaN/Inf are rejected on both directions.
"""

import json

import numpy as np

from .errors import InputError


def as_matrix(obj, name="matrix"):
    """Coerce to a finite 2-D float array, copying only when needed."""
    arr = np.asarray(obj, dtype=float)
    if arr.ndim != 2:
        raise InputError(f"{name}: expected a 2-D matrix, got ndim={arr.ndim}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise InputError(f"{name}: non-finite entries are not admitted")
    return arr


def matrix_to_payload(arr):
    arr = as_matrix(arr)
    m, n = arr.shape
    return {"rows": int(m), "cols": int(n), "data": [float(x) for x in arr.ravel()]}


def matrix_from_payload(obj, name="matrix"):
    if not isinstance(obj, dict):
        raise InputError(f"{name}: expected an object with rows/cols/data")
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{name}: malformed matrix payload: {exc}") from exc
    if rows <= 0 or cols <= 0:
        raise InputError(f"{name}: rows and cols must be positive")
    if len(data) != rows * cols:
        raise InputError(
            f"{name}: data length {len(data)} != rows*cols = {rows * cols}"
        )
    arr = np.array(data, dtype=float).reshape(rows, cols)
    return as_matrix(arr, name=name)


def matrices_to_payload(mats):
    return [matrix_to_payload(m) for m in mats]


def matrices_from_payload(obj, name="matrices"):
    if not isinstance(obj, list):
        raise InputError(f"{name}: expected a JSON array of matrix objects")
    return [matrix_from_payload(o, name=f"{name}[{i}]") for i, o in enumerate(obj)]


def load_matrix(path):
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from exc
    return matrix_from_payload(obj, name=str(path))


def load_matrices(path):
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from exc
    return matrices_from_payload(obj, name=str(path))


def save_matrix(path, arr):
    with open(path, "w") as fh:
        json.dump(matrix_to_payload(arr), fh)
        fh.write("\n")


def dump_json(obj, indent=2):
    """Serialize a report object; refuses NaN/Inf rather than emitting
    non-standard JSON."""
    return json.dumps(obj, indent=indent, allow_nan=False)


def to_jsonable(value):
    """Recursively convert numpy scalars/arrays and dataclass-ish values
    into plain JSON types (arrays become matrix payloads)."""
    if isinstance(value, np.ndarray):
        return matrix_to_payload(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value
