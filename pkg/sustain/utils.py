"""Small helpers shared by several modules.

Something belongs here only if at least two modules need it. Helpers used in
one place live next to their only caller.
"""
from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

log = logging.getLogger(__name__)


class AnalysisError(Exception):
    """Base class for errors caused by the data being analysed.

    Every module defines its own subclasses and sets *stage* to a short name
    of the pipeline stage. The command line interface prints
    ``sustain: <stage>: <message>`` and exits with status 1 when it catches
    one of these. Bugs and bad configuration raise other exceptions.
    """

    stage = "analysis"


# Sometimes dynamic typing is awesome
def merge_settings(default: object, user: object) -> Any:
    """Merge nested dicts so that values in *user* win.

    >>> merge_settings({"a": 1, "b": {"c": 2, "d": 3}}, {"b": {"d": 4}})
    {'a': 1, 'b': {'c': 2, 'd': 4}}
    """
    if isinstance(default, dict) and isinstance(user, dict):
        # If a key is in only one of the dicts, include as is.
        # Recurse for keys in both dicts.
        result = {**default, **user}
        for common_key in default.keys() & user.keys():
            result[common_key] = merge_settings(default[common_key], user[common_key])
        return result
    return user


def format_number(value: float | None) -> str:
    """Format a float with 12 significant digits, which survives a round trip through CSV.

    ``None`` and NaN become an empty string.

    >>> format_number(1 / 3)
    '0.333333333333'
    >>> format_number(None)
    ''
    """
    if value is None or math.isnan(value):
        return ""
    return f"{value:.12g}"


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    """Write a CSV file with Unix line endings, floats formatted with :func:`format_number`."""
    with path.open("w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow(
                [format_number(item) if isinstance(item, float) else item for item in row]
            )
            count += 1
    log.debug(f"wrote {count} rows to {path}")


def format_mean_sd(mean: float | None, sd: float | None) -> str:
    """Format a percentage in the ``mean±SD`` style of result tables.

    >>> format_mean_sd(90.74, 1.7)
    '90.7±1.7'
    >>> format_mean_sd(None, None)
    'undefined'
    """
    if mean is None:
        return "undefined"
    if sd is None:
        return f"{mean:.1f}"
    return f"{mean:.1f}±{sd:.1f}"
