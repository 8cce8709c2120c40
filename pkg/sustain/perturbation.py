"""Jitter and shimmer.

All measures are percentages of the mean period (or amplitude), so the unit of
the input doesn't matter: periods can be in samples or in seconds.
"""
from __future__ import annotations

import dataclasses
import logging
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from sustain.utils import AnalysisError

log = logging.getLogger(__name__)

APQ_WIDTHS = (3, 5, 11)

_Values = Union[Sequence[float], np.ndarray]


class PerturbationError(AnalysisError):
    stage = "perturbation"


@dataclasses.dataclass(frozen=True)
class PerturbationConfig:
    # Relative average perturbation is normalized by 1/(N-1) over N-3 terms by default.
    # The classical definition uses 1/(N-2) over N-2 terms.
    classical_rap: bool = False


@dataclasses.dataclass(frozen=True)
class PerturbationReport:
    j_loc: float
    j_rap: float
    j_ppq5: float
    s_loc: float
    s_apq3: float
    s_apq5: float
    s_apq11: float

    def as_list(self) -> list[float]:
        """The values in feature vector order: J1, J3, J5, S1, S3, S5, S11."""
        return [getattr(self, field.name) for field in dataclasses.fields(self)]


def _check(values: _Values, minimum: int, what: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 1:
        raise PerturbationError(f"{what} must be a 1-D sequence")
    if len(array) < minimum:
        raise PerturbationError(f"need at least {minimum} {what}, got {len(array)}")
    if np.any(array <= 0) or not np.all(np.isfinite(array)):
        raise PerturbationError(f"all {what} must be positive and finite")
    return array


def _local(values: np.ndarray) -> float:
    return float(np.abs(np.diff(values)).mean() / values.mean() * 100)


def _centered_deviations(values: np.ndarray, width: int) -> np.ndarray:
    # |x(i) - mean of the width values centered at i|, for every i with a full window
    means = sliding_window_view(values, width).mean(axis=1)
    half = width // 2
    return np.abs(values[half : len(values) - half] - means)


def jitter_local(periods: _Values) -> float:
    """Mean absolute difference of consecutive periods over the mean period, in percent.

    >>> round(jitter_local([100, 102, 100, 102]), 4)
    1.9802
    """
    t = _check(periods, 2, "periods")
    return _local(t)


def jitter_rap(periods: _Values, *, classical: bool = False) -> float:
    """Relative average perturbation: deviation from the three-period running mean."""
    t = _check(periods, 4 if not classical else 3, "periods")
    deviations = _centered_deviations(t, 3)
    n = len(t)
    if classical:
        return float(deviations.sum() / (n - 2) / t.mean() * 100)
    # the last centered deviation is left out of the sum
    return float(deviations[:-1].sum() / (n - 1) / t.mean() * 100)


def jitter_ppq5(periods: _Values) -> float:
    """Five-point period perturbation quotient."""
    t = _check(periods, 5, "periods")
    return float(_centered_deviations(t, 5).mean() / t.mean() * 100)


def shimmer_local(amplitudes: _Values) -> float:
    """Mean absolute difference of consecutive amplitudes over the mean amplitude, in percent.

    >>> round(shimmer_local([1.0, 1.1]), 4)
    9.5238
    """
    a = _check(amplitudes, 2, "amplitudes")
    return _local(a)


def shimmer_apq(amplitudes: _Values, width: int) -> float:
    """Amplitude perturbation quotient over *width* consecutive cycles.

    >>> round(shimmer_apq([1, 1.2, 1], 3), 6)
    12.5
    """
    if width < 1 or width % 2 == 0:
        raise PerturbationError(f"APQ window must be a positive odd number, not {width}")
    a = _check(amplitudes, width, "amplitudes")
    return float(_centered_deviations(a, width).mean() / a.mean() * 100)


def perturbation_report(
    periods: _Values, amplitudes: _Values, cfg: PerturbationConfig = PerturbationConfig()
) -> PerturbationReport:
    """Compute all seven jitter and shimmer measures at once."""
    report = PerturbationReport(
        j_loc=jitter_local(periods),
        j_rap=jitter_rap(periods, classical=cfg.classical_rap),
        j_ppq5=jitter_ppq5(periods),
        s_loc=shimmer_local(amplitudes),
        s_apq3=shimmer_apq(amplitudes, 3),
        s_apq5=shimmer_apq(amplitudes, 5),
        s_apq11=shimmer_apq(amplitudes, 11),
    )
    log.debug(f"perturbation: {report}")
    return report
