import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hpcal import dsp
from hpcal.dsp import CalibratedTrack, LevelPair, UnsupportedSampleRateError

from conftest import sine, stereo_sine_track

RATES = (44100, 48000)


def analog_a_db(f):
    """Analog A-curve written out from the standard's closed form."""
    f2 = f * f
    ra = (12194.0**2 * f2 * f2) / (
        (f2 + 20.6**2) * math.sqrt((f2 + 107.7**2) * (f2 + 737.9**2)) * (f2 + 12194.0**2)
    )
    return 20 * math.log10(ra) + 2.0


def test_oracle_reference_values():
    assert analog_a_db(1000.0) == pytest.approx(0.0, abs=1e-3)
    assert analog_a_db(100.0) == pytest.approx(-19.14, abs=0.01)
    assert analog_a_db(10000.0) == pytest.approx(-2.49, abs=0.01)


@pytest.mark.parametrize("rate", RATES)
@pytest.mark.parametrize("freq, tol", [(100.0, 0.3), (1000.0, 0.2), (10000.0, 0.5)])
def test_a_weighting_response_matches_analog(rate, freq, tol):
    assert dsp.a_weighting_response_db(freq, rate) == pytest.approx(analog_a_db(freq), abs=tol)


@pytest.mark.parametrize("rate", RATES)
def test_a_weighting_tracks_analog_curve_across_band(rate):
    freqs = np.geomspace(20, 10000, 200)
    err = dsp.a_weighting_response_db(freqs, rate) - np.array([analog_a_db(f) for f in freqs])
    assert np.max(np.abs(err)) < 0.5


@pytest.mark.parametrize("rate", RATES)
@pytest.mark.parametrize("freq", [100.0, 1000.0, 10000.0])
def test_time_domain_gain_agrees_with_response(rate, freq):
    x = sine(freq, 1.0, rate)
    gain = dsp.mean_square_db(dsp.a_weight(x, rate)) - dsp.mean_square_db(x)
    assert gain == pytest.approx(dsp.a_weighting_response_db(freq, rate), abs=0.01)


@pytest.mark.parametrize("rate", RATES)
def test_filter_is_stable(rate):
    sos = dsp.a_weighting_sos(rate)
    for section in sos:
        poles = np.roots(section[3:])
        assert np.all(np.abs(poles) < 1.0)


@pytest.mark.parametrize("rate", [8000, 22050, 96000, 44100.5])
def test_unsupported_rates_rejected(rate):
    with pytest.raises(UnsupportedSampleRateError):
        dsp.a_weight(np.zeros(10), rate)


def test_laeq_full_scale_sine():
    assert dsp.laeq(sine(1000.0), 48000, 94.0) == pytest.approx(94.0, abs=0.2)


def test_laeq_half_amplitude_sine():
    assert dsp.laeq(sine(1000.0, amplitude=0.5), 48000, 94.0) == pytest.approx(87.98, abs=0.2)


def test_laeq_100hz_sine():
    expected = 94.0 + analog_a_db(100.0)
    assert expected == pytest.approx(74.86, abs=0.01)
    assert dsp.laeq(sine(100.0), 48000, 94.0) == pytest.approx(expected, abs=0.4)


def test_laeq_silent_signal_is_minus_inf():
    level = dsp.laeq(np.zeros(4800), 48000, 94.0)
    assert level == -math.inf
    assert dsp.is_silent(level)


def test_laeq_empty_signal_rejected():
    with pytest.raises(ValueError):
        dsp.laeq(np.zeros(0), 48000, 94.0)


def test_energetic_average_examples():
    assert dsp.energetic_average(LevelPair(60.0, 60.0)) == pytest.approx(60.0, abs=1e-12)
    assert dsp.energetic_average(LevelPair(60.0, 70.0)) == pytest.approx(10 * math.log10(5.5e6), abs=1e-12)
    assert dsp.energetic_average(LevelPair(60.0, 70.0)) == pytest.approx(67.4036, abs=1e-4)


def test_energetic_average_with_silent_channel():
    assert dsp.energetic_average((70.0, -math.inf)) == pytest.approx(70 - 10 * math.log10(2), abs=1e-12)
    assert dsp.energetic_average((-math.inf, -math.inf)) == -math.inf


levels = st.floats(-20, 140)


@given(levels, levels)
def test_energetic_average_properties(a, b):
    avg = dsp.energetic_average((a, b))
    assert avg == dsp.energetic_average((b, a))
    assert min(a, b) - 1e-9 <= avg <= max(a, b) + 1e-9
    assert dsp.energetic_average((a, a)) == pytest.approx(a, abs=1e-9)


@given(levels, levels, st.floats(0.01, 20))
def test_energetic_average_monotone(a, b, step):
    lo, hi = dsp.energetic_average((a, b)), dsp.energetic_average((a + step, b))
    assert hi >= lo
    # a channel far below the other is lost in double precision
    if a + step > b - 60.0:
        assert hi > lo


def test_track_laeq_identical_channels():
    track = stereo_sine_track(1000.0)
    assert dsp.track_laeq(track) == pytest.approx(dsp.laeq(track.left, 48000, 94.0), abs=1e-12)


def test_track_laeq_left_only():
    x = sine(1000.0)
    track = CalibratedTrack("l", np.column_stack([x, np.zeros_like(x)]), 48000, 94.0, 94.0)
    left = dsp.laeq(x, 48000, 94.0)
    assert dsp.track_laeq(track) == pytest.approx(left - 10 * math.log10(2), abs=0.01)


def _noise_track(seed, n=9600):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.5, 0.5, size=(n, 2))
    return CalibratedTrack("n", x, 48000, 100.0, 80.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 1.0))
def test_gain_homogeneity(seed, g):
    track = _noise_track(seed)
    scaled = CalibratedTrack("n", track.samples * g, 48000, 100.0, 80.0)
    assert dsp.track_laeq(scaled) == pytest.approx(dsp.track_laeq(track) + 20 * math.log10(g), abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4799))
def test_polarity_and_circular_shift_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    # periodic: 0.1 s of noise repeated ten times
    period = rng.standard_normal(4800) * 0.1
    x = np.tile(period, 10)
    ref = dsp.laeq(x, 48000, 100.0)
    assert dsp.laeq(-x, 48000, 100.0) == pytest.approx(ref, abs=1e-6)
    assert dsp.laeq(np.roll(x, shift), 48000, 100.0) == pytest.approx(ref, abs=1e-6)


@pytest.mark.parametrize(
    "samples, rate",
    [
        (np.zeros((10, 1)), 48000),
        (np.zeros((10, 3)), 48000),
        (np.zeros((0, 2)), 48000),
        (np.zeros((10, 2)), 32000),
    ],
)
def test_track_invariants(samples, rate):
    with pytest.raises(ValueError):
        CalibratedTrack("bad", samples, rate, 94.0, 60.0)
