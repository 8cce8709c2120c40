"""Pathological vibrato index.

Healthy vibrato sits around 5-8 Hz. The index measures how much the f0
contour moves at 9-14 Hz instead: the contour is normalized by its mean,
bandpass filtered, and the Welch amplitude spectrum is summed over the band.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from typing import Sequence, Union

import numpy as np
from scipy import fft, signal

from sustain.pitch import F0Contour, fill_unvoiced
from sustain.utils import AnalysisError

log = logging.getLogger(__name__)


class VibratoError(AnalysisError):
    stage = "vibrato"


@dataclasses.dataclass(frozen=True)
class VibratoConfig:
    band_lo: float = 9.0
    band_hi: float = 14.0
    order: int = 3
    welch_window_s: float = 1.0
    welch_overlap: float = 0.95

    def __post_init__(self) -> None:
        if not 0 < self.band_lo < self.band_hi:
            raise ValueError(f"bad band: [{self.band_lo}, {self.band_hi}] Hz")
        if self.order < 1:
            raise ValueError("filter order must be at least 1")
        if self.welch_window_s <= 0:
            raise ValueError("welch_window_s must be positive")
        if not 0 <= self.welch_overlap < 1:
            raise ValueError("welch_overlap must be in [0, 1)")


@dataclasses.dataclass(frozen=True, eq=False)
class BandpassFilter:
    sos: np.ndarray  # shape (n_sections, 6), as scipy.signal wants it
    order: int
    band: tuple[float, float]
    sample_rate: float

    def poles(self) -> np.ndarray:
        return signal.sos2zpk(self.sos)[1]

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1))


@dataclasses.dataclass(frozen=True, eq=False)
class AmplitudeSpectrum:
    frequencies: np.ndarray
    amplitudes: np.ndarray
    n_segments: int


@dataclasses.dataclass(frozen=True, eq=False)
class PviResult:
    pvi: float
    spectrum: AmplitudeSpectrum
    normalized: np.ndarray
    filtered: np.ndarray
    band: tuple[float, float]

    @property
    def n_segments(self) -> int:
        return self.spectrum.n_segments


def normalize_contour(c: F0Contour) -> np.ndarray:
    """Divide the contour by the mean of its voiced values. Unvoiced frames stay 0.

    >>> normalize_contour(F0Contour(np.array([100.0, 102.0]), 0.005)).round(6)
    array([0.990099, 1.009901])
    """
    voiced = c.voiced
    if len(c) == 0 or not voiced.any():
        raise VibratoError("contour is empty or completely unvoiced")
    return np.where(voiced, c.values / c.values[voiced].mean(), 0.0)


def _prewarp(frequency: float, sample_rate: float) -> float:
    # analog frequency (rad/s) that the bilinear transform maps onto *frequency*
    return 2 * sample_rate * math.tan(math.pi * frequency / sample_rate)


def design_bandpass(f_lo: float, f_hi: float, fs: float, order: int = 3) -> BandpassFilter:
    """Butterworth bandpass: lowpass prototype, band transform, bilinear transform.

    The band edges are prewarped, so the response is exactly -3 dB at *f_lo*
    and *f_hi*. The digital filter has order ``2*order``, as ``order``
    second-order sections.
    """
    if not 0 < f_lo < f_hi < fs / 2:
        raise VibratoError(
            f"band [{f_lo:g}, {f_hi:g}] Hz doesn't fit between 0 and {fs / 2:g} Hz"
        )
    if order < 1:
        raise VibratoError("filter order must be at least 1")

    low, high = _prewarp(f_lo, fs), _prewarp(f_hi, fs)
    zeros, poles, gain = signal.buttap(order)
    zeros, poles, gain = signal.lp2bp_zpk(
        zeros, poles, gain, wo=math.sqrt(low * high), bw=high - low
    )
    zeros, poles, gain = signal.bilinear_zpk(zeros, poles, gain, fs)
    sos = signal.zpk2sos(zeros, poles, gain)
    log.debug(f"designed order {order} bandpass [{f_lo:g}, {f_hi:g}] Hz at {fs:g} Hz")
    return BandpassFilter(sos, order, (f_lo, f_hi), fs)


def magnitude_response(
    f: BandpassFilter, freqs: Union[Sequence[float], np.ndarray]
) -> np.ndarray:
    """Gain of the filter in dB at *freqs* (Hz). Exact zeros show up as -300 dB."""
    _, response = signal.sosfreqz(f.sos, worN=np.asarray(freqs, dtype=np.float64), fs=f.sample_rate)
    return 20 * np.log10(np.maximum(np.abs(response), 1e-15))


def filter_contour(x: np.ndarray, f: BandpassFilter) -> np.ndarray:
    """Run the filter forward once, starting from rest."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 3 * f.order:
        raise VibratoError(f"contour has {len(x)} frames, need at least {3 * f.order}")
    return signal.sosfilt(f.sos, x)


def welch_amplitude_spectrum(
    x: np.ndarray, fs: float, win_s: float = 1.0, overlap: float = 0.95
) -> AmplitudeSpectrum:
    """Welch's method, scaled so that a sinusoid shows up with its own amplitude.

    Segments are ``round(win_s * fs)`` samples long and Hann windowed. The
    hop is ``round(segment_length * (1 - overlap))`` samples. Segment
    amplitude spectra (not power spectra) are averaged.
    """
    x = np.asarray(x, dtype=np.float64)
    length = round(win_s * fs)
    if length < 2:
        raise VibratoError(f"Welch window of {win_s:g} s is too short at {fs:g} Hz")
    if len(x) < length:
        raise VibratoError(
            f"signal has {len(x)} samples, shorter than one {length}-sample Welch window"
        )
    hop = max(1, round(length * (1 - overlap)))

    window = signal.get_window("hann", length)
    n_segments = 1 + (len(x) - length) // hop
    starts = hop * np.arange(n_segments)
    segments = x[starts[:, None] + np.arange(length)[None, :]]
    amplitudes = np.abs(fft.rfft(segments * window, axis=1)) * 2 / window.sum()

    return AmplitudeSpectrum(
        frequencies=fft.rfftfreq(length, 1 / fs),
        amplitudes=amplitudes.mean(axis=0),
        n_segments=n_segments,
    )


def compute_pvi(c: F0Contour, cfg: VibratoConfig = VibratoConfig()) -> PviResult:
    """Sum of the amplitude spectrum of the normalized, filtered contour over the band."""
    filled = fill_unvoiced(c)
    if len(filled) * filled.hop_s < cfg.welch_window_s:
        raise VibratoError(
            f"contour is {len(filled) * filled.hop_s:.3f} s long,"
            f" need at least {cfg.welch_window_s:g} s"
        )

    fs = filled.rate
    normalized = normalize_contour(filled)
    bandpass = design_bandpass(cfg.band_lo, cfg.band_hi, fs, cfg.order)
    # subtract the mean so that the filter doesn't ring on the step from rest to 1
    filtered = filter_contour(normalized - 1, bandpass)
    spectrum = welch_amplitude_spectrum(filtered, fs, cfg.welch_window_s, cfg.welch_overlap)

    in_band = (spectrum.frequencies >= cfg.band_lo) & (spectrum.frequencies <= cfg.band_hi)
    pvi = float(spectrum.amplitudes[in_band].sum())
    log.debug(f"PVI {pvi:.6g} from {spectrum.n_segments} Welch segments")
    return PviResult(pvi, spectrum, normalized, filtered, (cfg.band_lo, cfg.band_hi))
