"""Unit tests for the Monte Carlo detector."""

from dataclasses import replace

import numpy as np
import pytest
from secure_cra_isac.channel import ScatteringModel
from secure_cra_isac.detector import (
    ROC_COLUMNS,
    binomial_sigma,
    roc_curve,
    roc_frame,
    roc_from_statistics,
    simulate_statistics,
)
from secure_cra_isac.em_core import SelectionMatrix
from secure_cra_isac.errors import DetectorError
from secure_cra_isac.metrics import BeamformerState, NoiseModel


@pytest.fixture
def radar_channels(tiny_channels):
    """Tiny realization with a quiet radar receiver so echoes dominate the noise."""
    return replace(tiny_channels, noise=NoiseModel.from_dbm(-80.0, -80.0, -140.0))


@pytest.fixture
def detector_state(radar_channels, tiny_dictionary):
    N, P = radar_channels.N, tiny_dictionary.P
    sel = SelectionMatrix.one_hot([0] * N, P)
    return BeamformerState(sel, sel, np.sqrt(30.0) * np.eye(N), np.ones(N) / np.sqrt(N))


class TestRocFromStatistics:
    """Test empirical thresholds and detection rates."""

    def test_perfect_separation(self):
        """H1 statistics far above H0 give pd = 1 at every pfa."""
        h0 = np.linspace(0.0, 1.0, 1001)
        h1 = h0 + 10.0
        points = roc_from_statistics(h0, h1, [0.1, 0.01])
        assert [p["pfa"] for p in points] == [0.01, 0.1]
        assert all(p["pd"] == 1.0 for p in points)

    def test_identical_hypotheses_track_pfa(self, rng):
        """With H1 distributed as H0 the detection rate is close to the false-alarm rate."""
        h0 = rng.exponential(size=100_000)
        h1 = rng.exponential(size=100_000)
        for point in roc_from_statistics(h0, h1, [0.05, 0.2]):
            assert point["pd"] == pytest.approx(point["pfa"], abs=5 * binomial_sigma(point["pfa"], 100_000))

    def test_threshold_is_quantile(self):
        """The threshold is the (1 - pfa) quantile of H0."""
        h0 = np.arange(100.0)
        point = roc_from_statistics(h0, h0, [0.1])[0]
        assert point["threshold"] == pytest.approx(np.quantile(h0, 0.9))

    def test_pfa_range_checked(self):
        """pfa values outside (0, 1) raise DetectorError."""
        with pytest.raises(DetectorError):
            roc_from_statistics(np.ones(10), np.ones(10), [1.0])


class TestSimulation:
    """Test statistic simulation on a tiny realization."""

    def test_shapes_and_positivity(self, detector_state, radar_channels, tiny_dictionary):
        """Statistics are positive and one per trial under each hypothesis."""
        model = ScatteringModel.from_template()
        h0, h1 = simulate_statistics(
            detector_state, radar_channels, tiny_dictionary, model, 500, np.random.default_rng(0), chunk_trials=128
        )
        assert h0.shape == (500,) and h1.shape == (500,)
        assert np.all(h0 > 0) and np.all(h1 > 0)

    def test_target_raises_mean_energy(self, detector_state, radar_channels, tiny_dictionary):
        """The mean statistic is larger with the target present."""
        model = ScatteringModel.from_template()
        rng = np.random.default_rng(1)
        h0, h1 = simulate_statistics(detector_state, radar_channels, tiny_dictionary, model, 4000, rng)
        assert h1.mean() > h0.mean()

    def test_jobs_do_not_change_results(self, detector_state, radar_channels, tiny_dictionary):
        """Chunk seeding makes the statistics independent of the worker count."""
        model = ScatteringModel.from_template()
        serial = simulate_statistics(
            detector_state, radar_channels, tiny_dictionary, model, 1000, np.random.default_rng(4), chunk_trials=256
        )
        threaded = simulate_statistics(
            detector_state,
            radar_channels,
            tiny_dictionary,
            model,
            1000,
            np.random.default_rng(4),
            chunk_trials=256,
            jobs=3,
        )
        np.testing.assert_array_equal(serial[0], threaded[0])
        np.testing.assert_array_equal(serial[1], threaded[1])

    def test_zero_target_scale_gives_chance_detection(self, detector_state, radar_channels, tiny_dictionary):
        """A vanishing target model leaves H1 distributed as H0."""
        model = ScatteringModel.from_template(0.5, 0.0)
        clutter = ScatteringModel.from_template()
        points = roc_curve(
            detector_state,
            radar_channels,
            tiny_dictionary,
            model,
            20_000,
            [0.1],
            np.random.default_rng(2),
            clutter_model=clutter,
        )
        assert points[0]["pd"] == pytest.approx(0.1, abs=5 * binomial_sigma(0.1, 20_000))

    def test_invalid_trial_count(self, detector_state, radar_channels, tiny_dictionary):
        """Zero trials raise DetectorError."""
        with pytest.raises(DetectorError):
            model = ScatteringModel.from_template()
            simulate_statistics(detector_state, radar_channels, tiny_dictionary, model, 0, np.random.default_rng())


class TestRocCurve:
    """Test the ROC entry point."""

    def test_too_few_trials_for_pfa(self, detector_state, radar_channels, tiny_dictionary):
        """pfa = 1e-3 needs at least 10 000 trials."""
        with pytest.raises(DetectorError):
            roc_curve(
                detector_state,
                radar_channels,
                tiny_dictionary,
                ScatteringModel.from_template(),
                5000,
                [1e-3],
                np.random.default_rng(0),
            )

    def test_empty_grid(self, detector_state, radar_channels, tiny_dictionary):
        """An empty pfa grid raises DetectorError."""
        with pytest.raises(DetectorError):
            model = ScatteringModel.from_template()
            roc_curve(detector_state, radar_channels, tiny_dictionary, model, 100, [], np.random.default_rng(0))

    @pytest.mark.parametrize("pfa", [0.0, -0.1, 1.0])
    def test_pfa_outside_unit_interval(self, detector_state, radar_channels, tiny_dictionary, pfa):
        """pfa values outside (0, 1) raise DetectorError before the trial count is checked."""
        with pytest.raises(DetectorError, match="must lie in"):
            model = ScatteringModel.from_template()
            roc_curve(detector_state, radar_channels, tiny_dictionary, model, 100, [0.1, pfa], np.random.default_rng(0))

    def test_pd_nondecreasing_in_pfa(self, detector_state, radar_channels, tiny_dictionary):
        """Detection probability does not fall as the false-alarm rate grows."""
        points = roc_curve(
            detector_state,
            radar_channels,
            tiny_dictionary,
            ScatteringModel.from_template(),
            2000,
            [0.2, 0.01, 0.05],
            np.random.default_rng(3),
        )
        pds = [p["pd"] for p in points]
        assert pds == sorted(pds)
        assert [p["pfa"] for p in points] == [0.01, 0.05, 0.2]

    def test_frame_columns(self):
        """roc_frame lays out one row per (scheme, pfa)."""
        curves = {
            "cra": [{"pfa": 0.01, "pd": 0.9, "threshold": 1.0}],
            "bb_only": [{"pfa": 0.01, "pd": 0.5, "threshold": 2.0}],
        }
        frame = roc_frame(curves, 1000)
        assert list(frame.columns) == list(ROC_COLUMNS)
        assert frame["scheme"].tolist() == ["cra", "bb_only"]
        assert frame["n_trials"].tolist() == [1000, 1000]
