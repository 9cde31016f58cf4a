"""Exact integer resource quantities.

CPU is held in millicores and memory in bytes, so limit comparisons never
touch floating point.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .errors import QuantityError


class ResourceKind(str, Enum):
    CPU = "cpu"
    MEMORY = "memory"


CPU_SUFFIXES = {"": 1000, "m": 1}
MEMORY_SUFFIXES = {
    "": 1,
    "K": 1000,
    "M": 1000**2,
    "G": 1000**3,
    "Ki": 1024,
    "Mi": 1024**2,
    "Gi": 1024**3,
}

_QUANTITY_RE = re.compile(r"^([+-]?)(\d+)([A-Za-z]*)$")


@dataclass(frozen=True, order=True)
class Quantity:
    kind: ResourceKind
    value: int

    def __post_init__(self) -> None:
        if self.value < 0:
            raise QuantityError(f"quantity must be non-negative, got {self.value}")

    def __str__(self) -> str:
        return format_quantity(self)


def parse_quantity(text: str | int, kind: ResourceKind | str) -> Quantity:
    """Parse ``text`` into base units for ``kind``.

    >>> parse_quantity("500m", "cpu").value
    500
    >>> parse_quantity("2Mi", "memory").value
    2097152
    """
    kind = ResourceKind(kind)
    if isinstance(text, bool) or not isinstance(text, (str, int)):
        raise QuantityError(f"quantity must be a string or integer, got {text!r}")
    raw = str(text).strip()
    m = _QUANTITY_RE.match(raw)
    if m is None:
        raise QuantityError(f"malformed {kind.value} quantity {raw!r}")
    sign, digits, suffix = m.groups()
    if sign == "-":
        raise QuantityError(f"negative {kind.value} quantity {raw!r}")
    table = CPU_SUFFIXES if kind is ResourceKind.CPU else MEMORY_SUFFIXES
    if suffix not in table:
        raise QuantityError(f"unknown {kind.value} suffix {suffix!r} in {raw!r}")
    return Quantity(kind, int(digits) * table[suffix])


def format_quantity(q: Quantity) -> str:
    if q.kind is ResourceKind.CPU:
        if q.value % 1000 == 0:
            return str(q.value // 1000)
        return f"{q.value}m"
    if q.value == 0:
        return "0"
    for suffix in ("Gi", "Mi", "Ki", "G", "M", "K"):
        factor = MEMORY_SUFFIXES[suffix]
        if q.value % factor == 0:
            return f"{q.value // factor}{suffix}"
    return str(q.value)
