"""Byte quantity parsing. All suffixes are powers of 1024."""

from __future__ import annotations

import re

KB = 1024
MB = 1024**2
GB = 1024**3
TB = 1024**4

_SUFFIXES = {"": 1, "B": 1, "KB": KB, "MB": MB, "GB": GB, "TB": TB,
             "KIB": KB, "MIB": MB, "GIB": GB, "TIB": TB}
_PATTERN = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([A-Za-z]*)\s*$")


def parse_bytes(value: int | float | str) -> int:
    """Normalize ``value`` to integer bytes.

    Numbers are taken as bytes already; strings may carry a KB/MB/GB/TB suffix.

    >>> parse_bytes("1.5 KB")
    1536
    """
    if isinstance(value, bool):
        raise ValueError(f"not a byte quantity: {value!r}")
    if isinstance(value, (int, float)):
        if value < 0:
            raise ValueError(f"negative byte quantity: {value!r}")
        return int(round(value))
    m = _PATTERN.match(value)
    if not m:
        raise ValueError(f"not a byte quantity: {value!r}")
    number, suffix = m.groups()
    try:
        scale = _SUFFIXES[suffix.upper()]
    except KeyError:
        raise ValueError(f"unknown byte suffix {suffix!r} in {value!r}") from None
    return int(round(float(number) * scale))


def parse_rate(value: int | float | str) -> float:
    """Bytes/second; accepts e.g. ``"12.5 GB/s"``."""
    if isinstance(value, str):
        value = value.strip()
        if value.endswith("/s"):
            value = value[:-2]
        return float(parse_bytes(value))
    return float(value)


def fmt_bytes(n: float) -> str:
    for name, scale in (("TB", TB), ("GB", GB), ("MB", MB), ("KB", KB)):
        if abs(n) >= scale:
            return f"{n / scale:.4g} {name}"
    return f"{n:.0f} B"
