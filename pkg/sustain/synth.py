"""Synthetic sustained vowels with known cycle boundaries.

The signal is built cycle by cycle, so the exact period and amplitude of every
cycle is known. Tests compare what the analysis finds against that ground truth.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from typing import Optional, Sequence

import numpy as np

from sustain.signal_io import MIN_SAMPLE_RATE, Waveform
from sustain.utils import AnalysisError

log = logging.getLogger(__name__)

# E|X - Y| = 2*sigma/sqrt(pi) for independent X, Y ~ N(0, sigma^2)
_LOCAL_MEASURE_TO_SIGMA = math.sqrt(math.pi) / 2
_PEAK_LEVEL = 0.5


class SynthSpecError(AnalysisError):
    stage = "synth"


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    f0: float = 130.0
    duration: float = 3.0
    sample_rate: int = 44100
    jitter_pct: float = 0.0
    shimmer_pct: float = 0.0
    vibrato_rate: float = 0.0
    vibrato_depth: float = 0.0
    noise_snr_db: Optional[float] = None  # None means no noise
    harmonics: int = 10
    seed: int = 0

    def check(self) -> None:
        if not self.f0 > 0:
            raise SynthSpecError(f"f0 must be positive, not {self.f0}")
        if not self.duration > 0:
            raise SynthSpecError(f"duration must be positive, not {self.duration}")
        if self.sample_rate < MIN_SAMPLE_RATE:
            raise SynthSpecError(f"sample rate must be at least {MIN_SAMPLE_RATE} Hz")
        if not 0 <= self.vibrato_depth < 0.5:
            raise SynthSpecError(f"vibrato depth must be in [0, 0.5), not {self.vibrato_depth}")
        if self.harmonics < 1:
            raise SynthSpecError("need at least one harmonic")
        if self.jitter_pct < 0 or self.shimmer_pct < 0 or self.vibrato_rate < 0:
            raise SynthSpecError("jitter, shimmer and vibrato rate can't be negative")
        if self.f0 * self.harmonics >= self.sample_rate / 2:
            raise SynthSpecError(
                f"{self.harmonics} harmonics of {self.f0} Hz don't fit below the Nyquist frequency"
            )


@dataclasses.dataclass(frozen=True, eq=False)
class GroundTruth:
    boundaries: np.ndarray  # first sample of each cycle, plus the end of the last cycle
    periods: np.ndarray  # exact cycle lengths in samples, not rounded
    amplitudes: np.ndarray  # peak-to-peak amplitude of each cycle


def _cycle_shape(phase: np.ndarray, harmonics: int) -> np.ndarray:
    k = np.arange(1, harmonics + 1)
    return (np.sin(np.multiply.outer(phase, k)) / k).sum(axis=-1)


def _shape_peak(harmonics: int) -> float:
    grid = np.linspace(0, 2 * np.pi, 8192, endpoint=False)
    return float(np.abs(_cycle_shape(grid, harmonics)).max())


def render_cycles(
    periods: Sequence[float],
    amplitudes: Sequence[float],
    sample_rate: int,
    duration_samples: Optional[int] = None,
    harmonics: int = 10,
) -> tuple[Waveform, GroundTruth]:
    """Render consecutive cycles of given lengths (in samples) and relative amplitudes.

    Every cycle starts at a zero crossing: the partials are sines with 1/k
    amplitudes, normalized so that a cycle with amplitude 1 peaks at 0.5.
    By default the signal ends where the last cycle ends. With
    *duration_samples*, it is padded with silence or cut to that length.
    """
    periods = np.asarray(periods, dtype=np.float64)
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    if len(periods) != len(amplitudes) or len(periods) == 0:
        raise SynthSpecError("need the same nonzero number of periods and amplitudes")
    if np.any(periods <= 1):
        raise SynthSpecError("every period must be longer than one sample")

    starts = np.concatenate([[0.0], np.cumsum(periods)])
    n_samples = math.ceil(starts[-1])
    n = np.arange(n_samples, dtype=np.float64)
    cycle = np.searchsorted(starts, n, side="right") - 1
    phase = 2 * np.pi * (n - starts[cycle]) / periods[cycle]

    gain = _PEAK_LEVEL / _shape_peak(harmonics)
    samples = gain * amplitudes[cycle] * _cycle_shape(phase, harmonics)
    if duration_samples is not None:
        samples = np.resize(samples, duration_samples)
        samples[n_samples:] = 0

    grid = np.linspace(0, 2 * np.pi, 8192, endpoint=False)
    shape_ptp = float(np.ptp(_cycle_shape(grid, harmonics)))
    truth = GroundTruth(
        boundaries=np.ceil(starts).astype(np.int64),
        periods=periods,
        amplitudes=gain * shape_ptp * amplitudes,
    )
    return Waveform(samples, sample_rate), truth


def synth_voice(spec: SynthSpec) -> tuple[Waveform, GroundTruth]:
    """Generate a sustained vowel following *spec*, and its ground truth.

    The vibrato modulates the instantaneous frequency before it is turned into
    cycle lengths. Jitter and shimmer are Gaussian multiplicative noise whose
    standard deviation is chosen so that the expected local jitter (shimmer)
    equals ``jitter_pct`` (``shimmer_pct``). Only cycles that fit completely
    into ``duration`` are generated.
    """
    spec.check()
    rng = np.random.default_rng(spec.seed)
    jitter_sigma = spec.jitter_pct / 100 * _LOCAL_MEASURE_TO_SIGMA
    shimmer_sigma = spec.shimmer_pct / 100 * _LOCAL_MEASURE_TO_SIGMA
    total = spec.duration * spec.sample_rate

    periods: list[float] = []
    amplitudes: list[float] = []
    t = 0.0  # in samples
    while True:
        seconds = t / spec.sample_rate
        f0 = spec.f0 * (
            1 + spec.vibrato_depth * math.sin(2 * math.pi * spec.vibrato_rate * seconds)
        )
        jitter, shimmer = rng.standard_normal(2)
        period = spec.sample_rate / f0 * (1 + jitter_sigma * jitter)
        if t + period > total:
            break
        periods.append(period)
        amplitudes.append(1 + shimmer_sigma * shimmer)
        t += period

    if not periods:
        raise SynthSpecError(f"{spec.duration} s is shorter than one cycle of {spec.f0} Hz")
    if min(amplitudes) <= 0:
        raise SynthSpecError("shimmer is so large that some cycle amplitudes are not positive")

    voiced_samples = math.ceil(t)
    w, truth = render_cycles(
        periods, amplitudes, spec.sample_rate, round(total), harmonics=spec.harmonics
    )
    samples = w.samples

    if spec.noise_snr_db is not None:
        rms = math.sqrt(float(np.mean(samples[:voiced_samples] ** 2)))
        noise_sd = rms * 10 ** (-spec.noise_snr_db / 20)
        samples = samples + noise_sd * rng.standard_normal(len(samples))

    log.debug(f"synthesized {len(periods)} cycles, {len(samples)} samples")
    return Waveform(samples, spec.sample_rate), truth


def instantaneous_f0(spec: SynthSpec, times: np.ndarray) -> np.ndarray:
    """The vibrato-modulated frequency of *spec* at *times* (seconds), without jitter."""
    return spec.f0 * (1 + spec.vibrato_depth * np.sin(2 * np.pi * spec.vibrato_rate * times))
