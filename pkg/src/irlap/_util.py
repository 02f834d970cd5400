"""Shared plumbing: feasibility refusals, deterministic parallel map,
JSON encoding of exact values."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction


class FeasibilityError(RuntimeError):
    """Raised instead of attempting work past a documented size budget."""

    def __init__(self, message: str, estimate: str | None = None):
        super().__init__(message)
        self.estimate = estimate


def blocked_pmap(fn, items, threads: int = 1) -> list:
    """Map preserving input order; results are independent of the pool
    size because reduction happens in list order after the gather."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def jsonable(value):
    """Recursively convert report values to JSON-encodable types.
    Fractions become exact "p/q" strings."""
    import numpy as np

    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def parse_fraction(text) -> Fraction:
    if isinstance(text, str) and "/" in text:
        num, den = text.split("/")
        return Fraction(int(num), int(den))
    return Fraction(text)
