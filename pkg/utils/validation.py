"""
Field validation for trajectory records
"""

import math
from typing import Any, Optional, Tuple

from config import get_event_types, get_lab_flags
from ehr.codes import EventType

ALLOWED_EVENT_TYPES = [et["code"] for et in get_event_types()]
ALLOWED_FLAGS = [f["code"] for f in get_lab_flags()]

MAX_CODE_LENGTH = 128


def validate_identifier(value: Any, field: str) -> Tuple[bool, Optional[str]]:
    """
    Validate a patient/visit identifier.

    Args:
        value: Raw JSON value
        field: Field name for the error message

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not isinstance(value, str) or not value.strip():
        return False, f"{field} must be a non-empty string"
    return True, None


def validate_code(code: Any) -> Tuple[bool, Optional[str]]:
    """Medical codes are non-empty strings without tabs or newlines"""
    if not isinstance(code, str) or not code:
        return False, "code must be a non-empty string"
    if len(code) > MAX_CODE_LENGTH:
        return False, f"code longer than {MAX_CODE_LENGTH} characters"
    if any(ch in code for ch in "\t\n\r"):
        return False, "code must not contain tab or newline"
    return True, None


def validate_event_type(event_type: Any) -> Tuple[bool, Optional[str]]:
    if event_type not in ALLOWED_EVENT_TYPES:
        return False, f"Invalid event type {event_type!r}. Allowed: {', '.join(ALLOWED_EVENT_TYPES)}"
    return True, None


def validate_flag(flag: Any, event_type: str) -> Tuple[bool, Optional[str]]:
    """
    A flag is required on lab events and forbidden on every other type.

    Returns:
        Tuple of (is_valid, error_message)
    """
    is_lab = event_type == EventType.LAB.value
    if flag is None:
        if is_lab:
            return False, "lab event requires a flag"
        return True, None
    if not is_lab:
        return False, f"flag {flag!r} not allowed on {event_type} event"
    if flag not in ALLOWED_FLAGS:
        return False, f"Invalid flag {flag!r}. Allowed: {', '.join(ALLOWED_FLAGS)}"
    return True, None


def validate_timestamp(t: Any) -> Tuple[bool, Optional[str]]:
    """Hours since visit start: finite, non-negative number"""
    if isinstance(t, bool) or not isinstance(t, (int, float)):
        return False, "t must be a number"
    if not math.isfinite(t) or t < 0:
        return False, f"t must be finite and non-negative, got {t}"
    return True, None
