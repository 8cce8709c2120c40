"""Loading, saving and trimming of voice recordings.

Everything downstream works with :class:`Waveform`, a float signal in the
range [-1, 1) at the recording's own sample rate. Nothing is ever resampled.
"""
from __future__ import annotations

import dataclasses
import logging
import struct
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from sustain.utils import AnalysisError

log = logging.getLogger(__name__)

MIN_SAMPLE_RATE = 8000
_INT16_SCALE = 32768


class WavError(AnalysisError):
    stage = "signal_io"


class MissingFileError(WavError):
    pass


class UnsupportedEncodingError(WavError):
    pass


class CorruptWavError(WavError):
    pass


class TrimError(AnalysisError):
    stage = "signal_io"


@dataclasses.dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray  # float64, 1-D
    sample_rate: int

    def __post_init__(self) -> None:
        if self.sample_rate < MIN_SAMPLE_RATE:
            raise ValueError(
                f"sample rate must be at least {MIN_SAMPLE_RATE} Hz, not {self.sample_rate}"
            )
        if self.samples.ndim != 1:
            raise ValueError("samples must be a 1-D array")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclasses.dataclass(frozen=True)
class TrimConfig:
    head_s: float = 0.0
    tail_s: float = 0.0

    def __post_init__(self) -> None:
        if self.head_s < 0 or self.tail_s < 0:
            raise ValueError("trim amounts can't be negative")


def load_wav(path: Path) -> Waveform:
    """Read a 16-bit integer PCM file.

    Stereo files are averaged to mono. The samples are divided by 32768, so
    the result is always in [-1, 1).
    """
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")

    try:
        sample_rate, data = wavfile.read(path)
    except ValueError as e:
        # scipy uses ValueError for everything, the message tells what went wrong
        if "Unknown wave file format" in str(e) or "Unsupported bit depth" in str(e):
            raise UnsupportedEncodingError(f"{path}: {e}") from e
        raise CorruptWavError(f"{path}: {e}") from e
    except (EOFError, struct.error) as e:
        raise CorruptWavError(f"{path}: truncated file ({e})") from e

    if data.dtype != np.int16:
        raise UnsupportedEncodingError(
            f"{path}: expected 16-bit integer PCM, got samples of type {data.dtype}"
        )
    if data.size == 0:
        raise CorruptWavError(f"{path}: file contains no samples")
    if sample_rate < MIN_SAMPLE_RATE:
        raise UnsupportedEncodingError(
            f"{path}: sample rate {sample_rate} Hz is below {MIN_SAMPLE_RATE} Hz"
        )

    samples = data.astype(np.float64) / _INT16_SCALE
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise UnsupportedEncodingError(f"{path}: {samples.shape[1]} channels, expected 1 or 2")
        log.debug(f"{path}: averaging {samples.shape[1]} channels to mono")
        samples = samples.mean(axis=1)

    log.debug(f"loaded {path}: {len(samples)} samples at {sample_rate} Hz")
    return Waveform(samples, int(sample_rate))


def write_wav(path: Path, w: Waveform) -> None:
    """Write a waveform as 16-bit mono PCM, clipping anything outside [-1, 1)."""
    clipped = np.clip(w.samples, -1.0, (_INT16_SCALE - 1) / _INT16_SCALE)
    if np.any(clipped != w.samples):
        log.warning(f"clipping {np.count_nonzero(clipped != w.samples)} samples in {path}")
    ints = np.round(clipped * _INT16_SCALE).astype(np.int16)
    wavfile.write(path, w.sample_rate, ints)


def trim_edges(w: Waveform, head_s: float, tail_s: float) -> Waveform:
    """Cut *head_s* seconds from the start and *tail_s* seconds from the end.

    The number of removed samples is always ``round((head_s + tail_s) * sample_rate)``.
    """
    if head_s < 0 or tail_s < 0:
        raise TrimError("trim amounts can't be negative")
    total = round((head_s + tail_s) * w.sample_rate)
    if total >= len(w):
        raise TrimError(
            f"trimming {head_s:g} s + {tail_s:g} s leaves nothing of a {w.duration:.3f} s recording"
        )
    if total == 0:
        return w

    head = round(head_s * w.sample_rate)
    end = len(w) - (total - head)
    return Waveform(w.samples[head:end], w.sample_rate)
