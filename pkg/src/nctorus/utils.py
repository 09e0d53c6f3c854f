"""Utility functions for the nctorus laboratory."""
import hashlib
import json
from typing import Any, Dict, Optional

import numpy as np

from .exceptions import ValidationError

FLOAT_DIGITS = 17


def filter_none_values(variables: Dict[str, Any]) -> Dict[str, Any]:
    """Remove None values from a dictionary.

    Used when serializing optional manifest sections so absent parameters do
    not show up as ``null`` entries.

    Example:
        >>> filter_none_values({"a": 1, "b": None, "c": "test"})
        {"a": 1, "c": "test"}
    """
    return {k: v for k, v in variables.items() if v is not None}


def generate_cache_key(kind: str, params: Optional[Dict[str, Any]] = None) -> str:
    """Generate a cache key from an operation name and its parameters.

    Uses JSON serialization with sorted keys so that equal parameter sets map
    to equal keys regardless of insertion order.

    Example:
        >>> generate_cache_key("spectrum", {"N": 8})
        'spectrum:{"N":8}'
    """
    if not params:
        return kind
    params_str = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return f"{kind}:{params_str}"


def config_hash(payload: Dict[str, Any], length: int = 12) -> str:
    """Short, stable SHA-256 digest of a JSON-serializable payload."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:length]


def format_float(value: Any) -> str:
    """Render a real number with 17 significant digits (round-trip exact)."""
    return f"{float(value):.{FLOAT_DIGITS}g}"


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and complex numbers to JSON-friendly values.

    Floats are passed through ``format_float`` and re-parsed so the manifest
    carries exactly the digits the CSV files carry.
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": to_jsonable(value.real), "im": to_jsonable(value.imag)}
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if not np.isfinite(number):
            return str(number)
        return float(format_float(number))
    return value


def validate_required_int(
    value: Any,
    field_name: str,
    *,
    minimum: int = 1,
) -> int:
    """Validate that value is an int and greater than or equal to minimum."""
    if value is None:
        raise ValidationError(f"{field_name} is required and cannot be None.")
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ValidationError(f"{field_name} must be an integer >= {minimum}.")
    return int(value)


def validate_positive_float(value: Any, field_name: str, *, allow_zero: bool = False) -> float:
    """Validate that value is a finite real number > 0 (or >= 0)."""
    if value is None:
        raise ValidationError(f"{field_name} is required and cannot be None.")
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise ValidationError(f"{field_name} must be a real number.")
    number = float(value)
    if not np.isfinite(number):
        raise ValidationError(f"{field_name} must be finite.")
    if number < 0 or (number == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValidationError(f"{field_name} must be {bound}.")
    return number


def validate_direction(j: Any) -> int:
    """Validate a torus direction index (1 or 2)."""
    if isinstance(j, bool) or j not in (1, 2):
        raise ValidationError(f"direction must be 1 or 2, got {j!r}.")
    return int(j)
