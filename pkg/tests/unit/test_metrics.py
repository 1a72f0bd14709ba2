"""Unit tests for metrics module."""

import numpy as np
import pytest
from secure_cra_isac.em_core import SelectionMatrix
from secure_cra_isac.errors import ChannelError
from secure_cra_isac.metrics import (
    BeamformerState,
    NoiseModel,
    db_to_linear,
    dbm_to_watts,
    evaluate_state,
    radar_quadratic_forms,
    radar_scnr,
    stream_sinr,
    to_db,
    transmit_power,
)


def _state(channels, dictionary, rng, power=1.0):
    N, P = channels.N, dictionary.P
    F = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    F *= np.sqrt(power) / np.linalg.norm(F)
    w = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    return BeamformerState(
        SelectionMatrix.one_hot(rng.integers(P, size=N), P),
        SelectionMatrix.one_hot(rng.integers(P, size=N), P),
        F,
        w,
    )


class TestConversions:
    """Test unit conversions."""

    def test_dbm_to_watts(self):
        """-80 dBm is 1e-11 W and 30 dBm is 1 W."""
        assert dbm_to_watts(-80.0) == pytest.approx(1e-11)
        assert dbm_to_watts(30.0) == pytest.approx(1.0)

    def test_db_roundtrip(self):
        """to_db inverts db_to_linear; zero maps to -inf."""
        assert to_db(db_to_linear(-20.0)) == pytest.approx(-20.0)
        assert to_db(0.0) == float("-inf")

    def test_noise_must_be_positive(self):
        """Non-positive noise powers raise ChannelError."""
        with pytest.raises(ChannelError):
            NoiseModel(1e-11, 0.0, 1e-11)


class TestStreamSinr:
    """Test the per-stream SINR formula."""

    def test_interference_and_noise(self):
        """SINR is |s_k|² over other streams plus noise."""
        signals = np.array([2.0, 1.0j, 1.0])
        assert stream_sinr(signals, 0, 2.0) == pytest.approx(4.0 / (1.0 + 1.0 + 2.0))

    def test_single_stream(self):
        """With one stream the SINR is SNR."""
        assert stream_sinr(np.array([3.0 + 4.0j]), 0, 5.0) == pytest.approx(5.0)


class TestEvaluateState:
    """Test the full metrics report."""

    def test_report_fields(self, tiny_channels, tiny_dictionary, rng):
        """The report has one SINR and one Eve SINR per Bob and positive SCNR."""
        state = _state(tiny_channels, tiny_dictionary, rng, power=3.0)
        report = evaluate_state(tiny_channels, tiny_dictionary, state)
        assert len(report["sinr"]) == tiny_channels.K
        assert len(report["eve_sinr"]) == tiny_channels.K
        assert report["scnr"] > 0
        assert report["power_w"] == pytest.approx(3.0)

    def test_scnr_invariant_to_combiner_scale(self, tiny_channels, tiny_dictionary, rng):
        """Scaling w_BB leaves the SCNR unchanged."""
        state = _state(tiny_channels, tiny_dictionary, rng)
        scaled = state.replace(digital_combiner=(2.5 - 1.0j) * state.digital_combiner)
        a = evaluate_state(tiny_channels, tiny_dictionary, state)["scnr"]
        b = evaluate_state(tiny_channels, tiny_dictionary, scaled)["scnr"]
        assert b == pytest.approx(a, rel=1e-10)

    def test_radar_scnr_is_ratio_of_forms(self, tiny_channels, tiny_dictionary, rng):
        """radar_scnr is the echo energy over the clutter-plus-noise energy."""
        state = _state(tiny_channels, tiny_dictionary, rng)
        em_tx, em_rx = state.em_beamformers(tiny_dictionary)
        numerator, denominator = radar_quadratic_forms(tiny_channels, em_tx, em_rx, state)
        assert denominator > 0
        assert radar_scnr(tiny_channels, em_tx, em_rx, state) == pytest.approx(numerator / denominator)

    def test_zero_combiner_rejected(self, tiny_channels, tiny_dictionary, rng):
        """An all-zero combiner raises ChannelError."""
        state = _state(tiny_channels, tiny_dictionary, rng)
        with pytest.raises(ChannelError):
            evaluate_state(tiny_channels, tiny_dictionary, state.replace(digital_combiner=np.zeros(tiny_channels.N)))

    def test_transmit_power(self):
        """Power is the squared Frobenius norm of F_BB."""
        sel = SelectionMatrix.one_hot([0, 0], 1)
        state = BeamformerState(sel, sel, np.array([[1.0, 1.0j], [0.0, 2.0]]), np.ones(2))
        assert transmit_power(state) == pytest.approx(6.0)

    def test_combiner_flattened(self):
        """The combiner is stored as a flat complex vector."""
        sel = SelectionMatrix.one_hot([0, 0], 1)
        state = BeamformerState(sel, sel, np.eye(2), np.ones((2, 1)))
        assert state.digital_combiner.shape == (2,)
        assert state.digital_combiner.dtype == complex
