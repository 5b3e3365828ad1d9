import numpy as np
import pytest

from mapcfo import CorrelationSequence, NoFrequencyInformation, phase_unwrap

TWO_PI = 2 * np.pi


def wrap(theta):
    """Map angles to (-pi, pi]."""
    out = np.mod(theta + np.pi, TWO_PI) - np.pi
    out[out == -np.pi] = np.pi
    return out


def sequence_for(freq, lags, mags=None):
    lags = np.asarray(lags)
    mags = np.ones(lags.size) if mags is None else np.asarray(mags)
    return CorrelationSequence(lags, mags, wrap(TWO_PI * freq * lags))


def test_zero_phases_stay_zero():
    seq = phase_unwrap(sequence_for(0.0, [1, 2, 3]))
    assert np.array_equal(seq.unwrapped, np.zeros(3))


def test_consecutive_lags_round_trip():
    lags = np.arange(1, 8)
    seq = phase_unwrap(sequence_for(0.2, lags))
    assert np.abs(seq.unwrapped - TWO_PI * 0.2 * lags).max() < 1e-9


def test_negative_slope_round_trip():
    lags = np.arange(1, 8)
    seq = phase_unwrap(sequence_for(-0.31, lags))
    assert np.abs(seq.unwrapped - TWO_PI * -0.31 * lags).max() < 1e-9


def test_periodic_lag_alias_resolved_by_hint():
    # slopes 0.2 and -0.3 wrap identically on lags {2, 4, 6}
    lags = np.array([2, 4, 6])
    base = sequence_for(0.2, lags)
    toward_pos = phase_unwrap(base, hint=0.2)
    toward_neg = phase_unwrap(base, hint=-0.3)
    assert np.abs(toward_pos.unwrapped - TWO_PI * 0.2 * lags).max() < 1e-9
    assert np.abs(toward_neg.unwrapped - TWO_PI * -0.3 * lags).max() < 1e-9


def test_boundary_tie_resolves_upward():
    # prediction center lands exactly pi away from the raw phase
    seq = CorrelationSequence(np.array([1, 2]), np.ones(2), np.array([np.pi / 2, 0.0]))
    out = phase_unwrap(seq)
    assert out.unwrapped[1] == pytest.approx(TWO_PI, abs=1e-12)


def test_hint_precision_anchors_noisy_first_lag():
    # a wild first-lag phase is pulled to the prior branch when the hint
    # carries enough weight
    lags = np.array([2, 4, 6])
    phases = wrap(TWO_PI * 0.2 * lags + np.array([2.5, 0.0, 0.0]))
    seq = CorrelationSequence(lags, np.ones(3), phases)
    anchored = phase_unwrap(seq, hint=0.2, hint_precision=1e6)
    slopes = anchored.unwrapped / (TWO_PI * lags)
    assert np.abs(slopes[1:] - 0.2).max() < 1e-9


def test_magnitude_weights_enter_running_slope():
    # a tiny-magnitude corrupted lag must not steer later predictions
    lags = np.array([1, 2, 3])
    phases = wrap(TWO_PI * 0.24 * lags)
    phases[1] = wrap(np.array([phases[1] + 2.0]))[0]
    seq = CorrelationSequence(lags, np.array([1.0, 1e-9, 1.0]), phases)
    out = phase_unwrap(seq)
    assert abs(out.unwrapped[2] - TWO_PI * 0.24 * 3) < 1e-6


def test_empty_sequence_rejected():
    with pytest.raises(NoFrequencyInformation):
        phase_unwrap(CorrelationSequence.empty())


def test_unwrapped_slopes_consistent_on_clean_data():
    # structural invariant: consecutive normalized slopes agree to well
    # under the aliasing threshold of the largest lag gap
    lags = np.array([2, 4, 6, 8, 10, 12, 14])
    seq = phase_unwrap(sequence_for(0.11, lags), hint=0.11)
    slopes = seq.unwrapped / (TWO_PI * lags)
    assert np.abs(np.diff(slopes)).max() < 1.0 / (2 * 2)
