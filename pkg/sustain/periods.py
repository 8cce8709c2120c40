"""Splitting a sustained vowel into fundamental periods.

Two segmenters live here. :func:`segment_wm_pc` predicts every boundary from
the cumulative phase of the f0 contour and only refines it by waveform
matching, so boundary errors can't pile up. :func:`segment_wm` is the
classic chained waveform matching, where each boundary is found relative to
the previous one. It drifts on noisy input and is kept as a baseline.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from sustain.pitch import F0Config, F0Contour, expand_to_radians
from sustain.signal_io import Waveform
from sustain.utils import AnalysisError

log = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
_PHASE_SLACK = 1e-9  # radians, absorbs rounding in the running sum


class SegmentationError(AnalysisError):
    stage = "periods"


@dataclasses.dataclass(frozen=True)
class SegmentationConfig:
    refine_window_frac: float = 0.15
    min_cycles: int = 30
    tie_tolerance: float = 0.01
    # length of the compared waveform around each boundary, as a fraction of the period
    match_window_frac: float = 0.2

    def __post_init__(self) -> None:
        if not 0 < self.refine_window_frac <= 0.3:
            raise ValueError(
                f"refine_window_frac must be in (0, 0.3], not {self.refine_window_frac}"
            )
        if self.min_cycles < 1:
            raise ValueError("min_cycles must be at least 1")
        if not 0 <= self.tie_tolerance < 1:
            raise ValueError("tie_tolerance must be in [0, 1)")
        if not 0 < self.match_window_frac <= 1:
            raise ValueError(
                f"match_window_frac must be in (0, 1], not {self.match_window_frac}"
            )


@dataclasses.dataclass(frozen=True, eq=False)
class CycleSegmentation:
    """Cycles found by a segmenter.

    The phase constrained segmenter locates boundaries with sub-sample
    precision. Its ``periods`` are differences of those unrounded positions,
    so they can differ from ``np.diff(boundaries)`` by up to one sample, and
    the ``period_samples`` column of ``sustain segment`` output is usually
    not a whole number.
    """

    boundaries: np.ndarray  # sample indices, strictly increasing
    periods: np.ndarray  # samples, not necessarily whole
    amplitudes: np.ndarray  # peak to peak

    def __len__(self) -> int:
        return len(self.periods)


def phase_function(omega: np.ndarray) -> np.ndarray:
    """Running sum of the radian frequency: element ``n`` is ``omega[0] + ... + omega[n]``.

    >>> phase_function(np.array([np.pi]))
    array([3.14159265])
    """
    omega = np.asarray(omega, dtype=np.float64)
    if len(omega) == 0:
        raise SegmentationError("empty frequency sequence")
    if np.any(omega <= 0):
        raise SegmentationError("radian frequency must be positive everywhere")
    return np.cumsum(omega)


def _phase_at(phi: np.ndarray, boundary: int) -> float:
    # phase accumulated over samples 0 ... boundary-1
    return 0.0 if boundary == 0 else float(phi[boundary - 1])


def first_period(phi: np.ndarray) -> int:
    """Length of the first period: the first index where the phase goes past a full turn.

    >>> omega = np.full(1000, 2 * np.pi * 200 / 8000)
    >>> first_period(phase_function(omega))
    40
    """
    past = np.flatnonzero(phi > TWO_PI + _PHASE_SLACK)
    if len(past) == 0:
        raise SegmentationError("signal too short, it doesn't contain a full period")
    return int(past[0])


def predicted_boundaries(phi: np.ndarray) -> np.ndarray:
    """Boundary ``k`` is where the phase first exceeds ``2*pi*k``, with boundary 0 at sample 0."""
    turns = int((phi[-1] - _PHASE_SLACK) // TWO_PI)
    targets = TWO_PI * np.arange(1, turns + 1) + _PHASE_SLACK
    return np.concatenate([[0], np.searchsorted(phi, targets, side="right")]).astype(np.int64)


def cycle_amplitudes(w: Waveform, boundaries: np.ndarray) -> np.ndarray:
    """Peak-to-peak amplitude of the samples between consecutive boundaries."""
    boundaries = np.asarray(boundaries, dtype=np.int64)
    if len(boundaries) < 2:
        raise SegmentationError("need at least two boundaries")
    if np.any(np.diff(boundaries) <= 0):
        raise SegmentationError("empty cycle, boundaries must be strictly increasing")
    if boundaries[0] < 0 or boundaries[-1] > len(w):
        raise SegmentationError("boundaries outside the signal")

    x = w.samples[: boundaries[-1]]
    starts = boundaries[:-1]
    return np.maximum.reduceat(x, starts) - np.minimum.reduceat(x, starts)


def _nominal_period(omega: np.ndarray, index: int) -> float:
    return TWO_PI / omega[min(index, len(omega) - 1)]


def _finish(
    w: Waveform,
    boundaries: list[int],
    cfg: SegmentationConfig,
    f0_cfg: F0Config,
    method: str,
    positions: Optional[list[float]] = None,
) -> CycleSegmentation:
    if len(boundaries) - 1 < cfg.min_cycles:
        raise SegmentationError(
            f"too few cycles: found {len(boundaries) - 1}, need at least {cfg.min_cycles}"
        )

    array = np.asarray(boundaries, dtype=np.int64)
    periods = np.diff(array if positions is None else np.asarray(positions))
    shortest = w.sample_rate / f0_cfg.f_max * 0.7
    longest = w.sample_rate / f0_cfg.f_min * 1.3
    bad = np.flatnonzero((periods < shortest) | (periods > longest))
    if len(bad):
        raise SegmentationError(
            f"period {bad[0] + 1} is {periods[bad[0]]:g} samples,"
            f" outside [{shortest:.1f}, {longest:.1f}]"
        )

    log.debug(f"{method}: {len(periods)} cycles, mean period {periods.mean():.2f} samples")
    return CycleSegmentation(array, periods, cycle_amplitudes(w, array))


def _subsample_shift(reference: np.ndarray, candidate: np.ndarray) -> float:
    """How far *candidate* is ahead of *reference*, in samples, assuming less than one.

    One Gauss-Newton step on the squared difference, linearized with the mean
    of the two gradients. The error is third order in the shift, so it has no
    systematic sign that could add up along a chain of boundaries.

    >>> ramp = 3 * np.arange(8.0)
    >>> _subsample_shift(ramp, ramp + 0.75)
    0.25
    """
    gradient = (np.gradient(reference) + np.gradient(candidate)) / 2
    energy = float(gradient @ gradient)
    if energy == 0:
        return 0.0
    return float(np.clip((candidate - reference) @ gradient / energy, -1, 1))


def segment_wm_pc(
    w: Waveform,
    c: F0Contour,
    cfg: SegmentationConfig = SegmentationConfig(),
    f0_cfg: F0Config = F0Config(),
) -> CycleSegmentation:
    """Waveform matching with phase constraint.

    Boundary ``k`` is first placed where the cumulative phase of the contour
    crosses ``2*pi*k``. The refined boundary is the candidate near that
    prediction where the waveform best matches (mean absolute error) the
    waveform at the previous refined boundary. The refined boundaries never
    feed back into the phase, so their distance from the prediction stays
    within the search window. Among candidates that match about equally
    well, the one nearest to the prediction wins.

    Only ``match_window_frac`` of a period around the two boundaries is
    compared, so a cycle that is longer or shorter than the previous one
    doesn't pull its boundary away from where it starts.

    Boundaries are tracked with sub-sample precision and rounded for output.
    The periods are differences of the unrounded positions.
    """
    x = w.samples
    omega = expand_to_radians(c, w.sample_rate, len(w))
    phi = phase_function(omega)
    first_period(phi)  # raises if there is not a single full cycle
    predicted = predicted_boundaries(phi)

    boundaries = [0]
    positions = [0.0]
    dropped_tail = False
    for k in range(1, len(predicted)):
        guess = int(predicted[k])
        previous = boundaries[-1]
        nominal = _nominal_period(omega, guess)
        half_width = max(1, round(cfg.refine_window_frac * nominal))
        low = max(guess - half_width, previous + 1)
        high = guess + half_width
        if low > high:
            dropped_tail = True
            break

        # compared samples: before and after each boundary, none before sample 0
        after = max(2, round(cfg.match_window_frac * nominal / 2))
        before = min(after, previous)
        if high + after > len(x):
            dropped_tail = True
            break

        reference = x[previous - before : previous + after]
        candidates = sliding_window_view(x[low - before : high + after], before + after)
        scores = np.abs(candidates - reference).mean(axis=1)

        best, worst = scores.min(), scores.max()
        tied = np.flatnonzero(scores <= best + cfg.tie_tolerance * (worst - best))
        winner = int(tied[np.argmin(np.abs(low + tied - guess))])
        shift = _subsample_shift(reference, candidates[winner])

        # the reference started this far from where the previous cycle really starts
        carried = positions[-1] - previous
        position = float(np.clip(low + winner - shift + carried, low, high))
        positions.append(position)
        boundaries.append(max(previous + 1, round(position)))

    if dropped_tail:
        log.debug(f"dropped the partial cycle after sample {boundaries[-1]}")
    return _finish(w, boundaries, cfg, f0_cfg, "wm-pc", positions)


def segment_wm(
    w: Waveform,
    c: F0Contour,
    cfg: SegmentationConfig = SegmentationConfig(),
    f0_cfg: F0Config = F0Config(),
) -> CycleSegmentation:
    """Chained waveform matching without any phase anchor.

    Each boundary is searched one nominal period after the previous boundary,
    minimizing the mean squared difference between the two cycles.
    """
    x = w.samples
    omega = expand_to_radians(c, w.sample_rate, len(w))
    phi = phase_function(omega)
    first_period(phi)

    boundaries = [0]
    while True:
        previous = boundaries[-1]
        period = _nominal_period(omega, previous)
        half_width = max(1, round(cfg.refine_window_frac * period))
        center = previous + round(period)
        low = max(center - half_width, previous + 1)
        high = center + half_width
        length = low - previous
        if high + length > len(x):
            break

        reference = x[previous : previous + length]
        candidates = sliding_window_view(x[low : high + length], length)
        scores = ((candidates - reference) ** 2).mean(axis=1)
        boundaries.append(low + int(np.argmin(scores)))

    return _finish(w, boundaries, cfg, f0_cfg, "wm")


def phase_drift(phi: np.ndarray, boundaries: np.ndarray) -> np.ndarray:
    """How far each boundary is from a whole number of turns: ``|phase(b_k) - 2*pi*k|``."""
    boundaries = np.asarray(boundaries, dtype=np.int64)
    if len(boundaries) and boundaries[-1] > len(phi):
        raise SegmentationError("boundaries go past the end of the phase function")
    phases = np.array([_phase_at(phi, int(b)) for b in boundaries])
    return np.abs(phases - TWO_PI * np.arange(len(boundaries)))


def drift_slope(drift: np.ndarray) -> float:
    """Least-squares slope of the drift against the cycle index, in radians per cycle."""
    if len(drift) < 2:
        raise SegmentationError("need at least two drift values for a slope")
    return float(stats.linregress(np.arange(len(drift)), drift).slope)


def segment(
    w: Waveform,
    c: F0Contour,
    method: str = "wm-pc",
    cfg: SegmentationConfig = SegmentationConfig(),
    f0_cfg: F0Config = F0Config(),
) -> CycleSegmentation:
    """Run the segmenter named by *method*, ``"wm-pc"`` or ``"wm"``."""
    if method == "wm-pc":
        return segment_wm_pc(w, c, cfg, f0_cfg)
    if method == "wm":
        return segment_wm(w, c, cfg, f0_cfg)
    raise ValueError(f"unknown segmentation method: {method!r}")
