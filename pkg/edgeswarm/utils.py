"""
File: edgeswarm/utils.py
Utility functions shared across the simulator
"""

import math
import re
from typing import Dict, List, Sequence, Tuple

US_PER_SECOND = 1_000_000


def to_us(seconds: float) -> int:
    """
    Convert virtual seconds to integer microseconds

    Args:
        seconds: Time in seconds

    Returns:
        Time in whole microseconds (round half to even)

    Example:
        >>> to_us(1.5)
        1500000
        >>> to_us(0.0000004)
        0
    """
    return int(round(seconds * US_PER_SECOND))


def to_seconds(us: int) -> float:
    """
    Convert integer microseconds back to seconds

    Example:
        >>> to_seconds(2500000)
        2.5
    """
    return us / US_PER_SECOND


def distance(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    """
    Planar euclidean distance in meters

    Example:
        >>> distance((0.0, 0.0), (3.0, 4.0))
        5.0
    """
    return math.hypot(a[0] - b[0], a[1] - b[1])


def deep_merge(base: Dict, override: Dict) -> Dict:
    """
    Recursively merge two dicts without mutating either

    Nested dicts are merged key by key; any other value in
    ``override`` replaces the one in ``base``.

    Args:
        base: Lower-priority mapping
        override: Higher-priority mapping

    Returns:
        New merged dict

    Example:
        >>> deep_merge({"a": {"x": 1, "y": 2}}, {"a": {"y": 3}})
        {'a': {'x': 1, 'y': 3}}
    """
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_seed_range(text: str) -> List[int]:
    """
    Parse a seed or an inclusive seed range

    Args:
        text: ``"42"`` or ``"1..20"``

    Returns:
        List of seeds in ascending order

    Raises:
        ValueError: If the text is not a seed or a range

    Example:
        >>> parse_seed_range("3..5")
        [3, 4, 5]
        >>> parse_seed_range("42")
        [42]
    """
    match = re.fullmatch(r"\s*(\d+)\s*(?:\.\.\s*(\d+)\s*)?", text)
    if not match:
        raise ValueError(f"invalid seed range: {text!r}")

    start = int(match.group(1))
    end = int(match.group(2)) if match.group(2) is not None else start
    if end < start:
        raise ValueError(f"empty seed range: {text!r}")

    return list(range(start, end + 1))


def format_table(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    """
    Render rows as aligned text columns

    Floats are shown with 4 decimals, None as ``-``.

    Example:
        >>> print(format_table(["k", "v"], [["a", 1.0]]))
        k  v
        -  ------
        a  1.0000
    """
    def cell(value: object) -> str:
        if value is None:
            return "-"
        if isinstance(value, float):
            return f"{value:.4f}"
        return str(value)

    text_rows = [[cell(v) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in text_rows:
        for i, value in enumerate(row):
            widths[i] = max(widths[i], len(value))

    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(headers))).rstrip(),
    ]
    for row in text_rows:
        lines.append("  ".join(v.ljust(widths[i]) for i, v in enumerate(row)).rstrip())

    return "\n".join(lines)
