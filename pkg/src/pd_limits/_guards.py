"""Cost guards with an expert-only environment override."""

import os

ENV_OVERRIDE = "PD_LIMITS_GUARD_OVERRIDE"


def guard_limit(default):
    """Return ``default`` scaled by the override factor, if one is set.

    ``PD_LIMITS_GUARD_OVERRIDE`` holds a positive multiplier, e.g. ``4`` to
    allow four times the default enumeration or table size.
    """
    raw = os.environ.get(ENV_OVERRIDE)
    if not raw:
        return default
    factor = float(raw)
    if factor <= 0:
        raise ValueError(f"{ENV_OVERRIDE} must be positive, got {raw!r}")
    return type(default)(default * factor)
