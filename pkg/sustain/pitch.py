"""Fundamental frequency contour of a sustained vowel.

The estimator is a plain normalized autocorrelation peak picker. Sustained
vowels are nearly stationary, so a median filter and a band limit are enough
to keep it from jumping octaves.
"""
from __future__ import annotations

import dataclasses
import logging
from typing import Optional

import numpy as np
from scipy import fft, signal

from sustain.signal_io import Waveform
from sustain.utils import AnalysisError

log = logging.getLogger(__name__)

_MEDIAN_KERNEL = 5


class PitchError(AnalysisError):
    stage = "pitch"


@dataclasses.dataclass(frozen=True)
class F0Config:
    f_min: float = 50.0
    f_max: float = 400.0
    hop_s: float = 0.005
    frame_s: float = 0.040
    voicing_threshold: float = 0.5
    octave_tolerance: float = 0.9

    def __post_init__(self) -> None:
        if not 0 < self.f_min < self.f_max:
            raise ValueError(f"need 0 < f_min < f_max, got {self.f_min} and {self.f_max}")
        if self.hop_s <= 0:
            raise ValueError("hop_s must be positive")
        if self.frame_s < 2 / self.f_max:
            raise ValueError(f"frame_s must be at least 2/f_max = {2 / self.f_max:g} seconds")
        if not 0 < self.voicing_threshold < 1:
            raise ValueError("voicing_threshold must be between 0 and 1")
        if not 0 < self.octave_tolerance <= 1:
            raise ValueError("octave_tolerance must be in (0, 1]")


@dataclasses.dataclass(frozen=True, eq=False)
class F0Contour:
    values: np.ndarray  # Hz, 0 means unvoiced
    hop_s: float
    start_s: float = 0.0

    def __post_init__(self) -> None:
        if self.hop_s <= 0:
            raise ValueError("hop_s must be positive")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.start_s + self.hop_s * np.arange(len(self.values))

    @property
    def rate(self) -> float:
        return 1 / self.hop_s

    @property
    def voiced(self) -> np.ndarray:
        return self.values > 0


def _frame_matrix(samples: np.ndarray, frame_len: int, starts: np.ndarray) -> np.ndarray:
    return samples[starts[:, None] + np.arange(frame_len)[None, :]]


def _normalized_autocorrelation(frames: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelation of each row divided by the geometric mean of the overlapping energies.

    The result is 1 at lag 0 and does not depend on the scale of the frame.
    """
    n = frames.shape[1]
    size = fft.next_fast_len(2 * n)
    spectrum = fft.rfft(frames, size, axis=1)
    acf = fft.irfft(spectrum * np.conj(spectrum), size, axis=1)[:, : max_lag + 1]

    cumulative = np.concatenate(
        [np.zeros((frames.shape[0], 1)), np.cumsum(frames**2, axis=1)], axis=1
    )
    lags = np.arange(max_lag + 1)
    head_energy = cumulative[:, n - lags]  # x[0 : n-lag]
    tail_energy = cumulative[:, [n]] - cumulative[:, lags]  # x[lag : n]
    denominator = np.sqrt(head_energy * tail_energy)
    with np.errstate(divide="ignore", invalid="ignore"):
        result = np.where(denominator > 0, acf / denominator, 0.0)
    return result


def _pick_lag(row: np.ndarray, min_lag: int, cfg: F0Config) -> Optional[float]:
    candidates = np.arange(max(min_lag, 1), len(row) - 1)
    is_peak = (row[candidates] > row[candidates - 1]) & (row[candidates] >= row[candidates + 1])
    peaks = candidates[is_peak]
    if len(peaks) == 0:
        return None
    best = row[peaks].max()
    if best < cfg.voicing_threshold:
        return None

    # octave guard: a strong peak at a shorter lag beats a slightly stronger one at a multiple
    lag = int(peaks[row[peaks] >= cfg.octave_tolerance * best][0])

    left, middle, right = row[lag - 1], row[lag], row[lag + 1]
    curvature = left - 2 * middle + right
    if curvature >= 0:
        return float(lag)
    offset = 0.5 * (left - right) / curvature
    return lag + float(np.clip(offset, -0.5, 0.5))


def estimate_f0(w: Waveform, cfg: F0Config = F0Config()) -> F0Contour:
    """Estimate one f0 value every ``cfg.hop_s`` seconds.

    Frame ``m`` starts at sample ``round(m * hop_s * fs)``, and its time is
    the frame center. Unvoiced frames get 0.
    """
    fs = w.sample_rate
    frame_len = round(cfg.frame_s * fs)
    if len(w) < frame_len:
        raise PitchError(
            f"recording is {w.duration:.3f} s long, shorter than one {cfg.frame_s:g} s frame"
        )

    n_frames = int((len(w) - frame_len) // (cfg.hop_s * fs)) + 1
    starts = np.round(np.arange(n_frames) * cfg.hop_s * fs).astype(np.int64)
    starts = starts[starts + frame_len <= len(w)]

    min_lag = int(np.floor(fs / cfg.f_max))
    max_lag = min(int(np.ceil(fs / cfg.f_min)), frame_len // 2)
    frames = _frame_matrix(w.samples, frame_len, starts)
    frames = frames - frames.mean(axis=1, keepdims=True)
    acf = _normalized_autocorrelation(frames, max_lag + 1)

    values = np.zeros(len(starts))
    for m, row in enumerate(acf):
        lag = _pick_lag(row, min_lag, cfg)
        if lag is not None:
            f0 = fs / lag
            if cfg.f_min <= f0 <= cfg.f_max:
                values[m] = f0

    voiced = values > 0
    if not voiced.any():
        raise PitchError("all frames are unvoiced")
    if voiced.sum() >= _MEDIAN_KERNEL:
        values[voiced] = signal.medfilt(values[voiced], _MEDIAN_KERNEL)
    log.debug(
        f"{voiced.sum()} of {len(values)} frames voiced,"
        f" median f0 {np.median(values[voiced]):.2f} Hz"
    )

    return F0Contour(values, cfg.hop_s, start_s=cfg.frame_s / 2)


def fill_unvoiced(c: F0Contour, max_gap: int = 2) -> F0Contour:
    """Replace unvoiced frames so that every value is a usable frequency.

    Leading and trailing unvoiced frames take the nearest voiced value.
    Unvoiced runs inside the contour are bridged linearly if they are at most
    *max_gap* frames long.

    >>> fill_unvoiced(F0Contour(np.array([0, 100.0, 0, 104.0, 0]), 0.005)).values
    array([100., 100., 102., 104., 104.])
    """
    voiced = c.voiced
    if not voiced.any():
        raise PitchError("contour has no voiced frames")
    if voiced.all():
        return c

    indices = np.flatnonzero(voiced)
    first, last = indices[0], indices[-1]
    gaps = np.diff(indices) - 1
    if gaps.max(initial=0) > max_gap:
        where = indices[np.argmax(gaps)] + 1
        raise PitchError(
            f"unvoiced gap of {gaps.max()} frames at {c.start_s + where * c.hop_s:.3f} s,"
            f" at most {max_gap} can be bridged"
        )

    bridged = int((~voiced[first:last]).sum())
    if bridged:
        log.info(f"bridging {bridged} unvoiced frames inside the contour")
    positions = np.arange(len(c.values))
    values = np.interp(positions, indices, c.values[indices])  # constant beyond the ends
    return F0Contour(values, c.hop_s, c.start_s)


def expand_to_radians(
    c: F0Contour, sample_rate: int, n_samples: Optional[int] = None
) -> np.ndarray:
    """Per-sample radian frequency ``2*pi*f0/sample_rate``.

    The contour is linearly interpolated from frame times to sample times and
    held constant beyond its first and last frame. By default the result
    covers the samples up to the last frame time.

    >>> contour = F0Contour(np.array([100.0, 102.0]), 0.005, start_s=0.0)
    >>> omega = expand_to_radians(contour, 8000)
    >>> round(float(omega[20] * 8000 / (2 * np.pi)), 6)
    101.0
    """
    filled = fill_unvoiced(c)
    if n_samples is None:
        n_samples = int(round(filled.times[-1] * sample_rate)) + 1
    sample_times = np.arange(n_samples) / sample_rate
    f0 = np.interp(sample_times, filled.times, filled.values)
    return 2 * np.pi * f0 / sample_rate
