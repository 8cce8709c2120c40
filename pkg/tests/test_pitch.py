import numpy as np
import pytest

from sustain import pitch, synth
from sustain.pitch import F0Config, F0Contour
from sustain.signal_io import Waveform
from sustain.synth import SynthSpec


@pytest.mark.parametrize("f0, sample_rate", [(200, 8000), (130, 16000), (95, 44100)])
def test_steady_voice(f0, sample_rate):
    w, _ = synth.synth_voice(SynthSpec(f0=f0, duration=1, sample_rate=sample_rate))
    contour = pitch.estimate_f0(w)
    assert contour.voiced.all()
    assert contour.values == pytest.approx(np.full(len(contour), f0), rel=0.005)


def test_pure_sine():
    w, _ = synth.synth_voice(SynthSpec(f0=150, harmonics=1, duration=3, sample_rate=16000))
    contour = pitch.estimate_f0(w)
    assert contour.values == pytest.approx(np.full(len(contour), 150), abs=1)


def test_vibrato_averages_out():
    spec = SynthSpec(f0=130, duration=3, sample_rate=16000, vibrato_rate=6, vibrato_depth=0.02)
    w, _ = synth.synth_voice(spec)
    assert np.mean(pitch.estimate_f0(w).values) == pytest.approx(130, abs=1)


def test_frame_times():
    w, _ = synth.synth_voice(SynthSpec(f0=200, duration=1, sample_rate=8000))
    contour = pitch.estimate_f0(w, F0Config(hop_s=0.01))
    assert contour.start_s == pytest.approx(0.02)
    assert contour.times[:3] == pytest.approx([0.02, 0.03, 0.04])
    assert contour.rate == pytest.approx(100)
    # every frame fits inside the signal
    assert contour.times[-1] + 0.02 <= 1 + 1e-9
    assert len(contour) == 97


def test_follows_vibrato():
    spec = SynthSpec(f0=150, duration=2, sample_rate=16000, vibrato_rate=5, vibrato_depth=0.02)
    w, _ = synth.synth_voice(spec)
    contour = pitch.estimate_f0(w)
    expected = synth.instantaneous_f0(spec, contour.times)
    assert np.abs(contour.values - expected).max() < 1.5


def test_noisy_voice():
    w, _ = synth.synth_voice(
        SynthSpec(f0=140, duration=1, sample_rate=16000, noise_snr_db=20, jitter_pct=0.5)
    )
    contour = pitch.estimate_f0(w)
    assert contour.voiced.all()
    assert np.median(contour.values) == pytest.approx(140, abs=1)


def test_silence_is_unvoiced():
    with pytest.raises(pitch.PitchError, match="all frames are unvoiced"):
        pitch.estimate_f0(Waveform(np.zeros(8000), 8000))


def test_too_short():
    with pytest.raises(pitch.PitchError, match="shorter than one"):
        pitch.estimate_f0(Waveform(np.zeros(100), 8000))


@pytest.mark.parametrize(
    "fields",
    [
        {"f_min": 400, "f_max": 50},
        {"hop_s": 0},
        {"frame_s": 0.001},
        {"voicing_threshold": 1.5},
        {"octave_tolerance": 0},
    ],
)
def test_bad_config(fields):
    with pytest.raises(ValueError):
        F0Config(**fields)


def test_fill_unvoiced():
    contour = F0Contour(np.array([0, 0, 100, 0, 0, 106, 0]), 0.005, start_s=0.02)
    filled = pitch.fill_unvoiced(contour)
    assert filled.values.tolist() == [100, 100, 100, 102, 104, 106, 106]
    assert filled.start_s == 0.02
    assert filled.hop_s == 0.005

    voiced = F0Contour(np.array([100.0, 101.0]), 0.005)
    assert pitch.fill_unvoiced(voiced) is voiced


def test_fill_unvoiced_refuses_long_gaps():
    contour = F0Contour(np.array([100, 0, 0, 0, 100.0]), 0.005)
    with pytest.raises(pitch.PitchError, match="gap of 3 frames"):
        pitch.fill_unvoiced(contour)
    assert pitch.fill_unvoiced(contour, max_gap=3).values.tolist() == [100] * 5

    with pytest.raises(pitch.PitchError, match="no voiced frames"):
        pitch.fill_unvoiced(F0Contour(np.zeros(5), 0.005))


def test_expand_to_radians():
    contour = F0Contour(np.array([100.0, 200.0]), 0.01, start_s=0.01)
    omega = pitch.expand_to_radians(contour, 8000, n_samples=400)
    hz = omega * 8000 / (2 * np.pi)
    assert len(omega) == 400
    assert hz[:81] == pytest.approx(np.full(81, 100))  # held before the first frame
    assert hz[120] == pytest.approx(150)
    assert hz[160:] == pytest.approx(np.full(240, 200))  # held after the last frame
