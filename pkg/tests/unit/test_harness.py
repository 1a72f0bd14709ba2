"""Unit tests for the scenario harness and CLI."""

import json
import math
from dataclasses import replace

import numpy as np
import pytest
from secure_cra_isac.errors import ConfigError
from secure_cra_isac.harness import (
    BUILTIN_SCENARIOS,
    ScenarioConfig,
    apply_axis,
    apply_scheme,
    config_hash,
    default_jobs,
    load_builtin,
    load_config,
    main,
    realization_seed,
    run_realization,
    run_sweep,
    save_config,
    sweep_tasks,
    with_resolution,
)
from secure_cra_isac.em_core import build_dictionary, reference_pattern
from secure_cra_isac.results import RESULT_COLUMNS, get_result_tracker


class TestScenarioConfig:
    """Test scenario parsing and validation."""

    @pytest.mark.parametrize("name", BUILTIN_SCENARIOS)
    def test_builtin_scenarios_load(self, name):
        """Every shipped scenario parses and validates."""
        assert isinstance(load_builtin(name), ScenarioConfig)

    def test_default_values(self):
        """The default scenario carries the reference setup."""
        config = load_builtin("default_scenario")
        assert (config.N, config.M, config.K, config.C, config.L) == (8, 180, 2, 2, 5)
        assert config.p_t_watts == 60.0
        assert config.eps_bob_db == (5.0, 5.0)
        assert config.eps_eve_db == (-20.0, -20.0)
        assert config.noise.radar_dbm == -80.0
        assert (config.dictionary.p_pat, config.dictionary.p_pol) == (3, 3)

    def test_unknown_builtin(self):
        """Unknown built-in names raise ConfigError."""
        with pytest.raises(ConfigError):
            load_builtin("huge_scenario")

    def test_unknown_key_reports_path(self):
        """Unknown keys are rejected with their dotted path."""
        with pytest.raises(ConfigError) as excinfo:
            ScenarioConfig.from_document({"noise": {"bob_db": -80}})
        assert excinfo.value.field_path == "noise.bob_db"

    def test_wrong_type_reports_path(self):
        """Values of the wrong type are rejected with their path."""
        with pytest.raises(ConfigError) as excinfo:
            ScenarioConfig.from_document({"N": "eight"})
        assert excinfo.value.field_path == "N"

    def test_single_threshold_broadcast(self):
        """A single threshold applies to every Bob."""
        config = ScenarioConfig.from_document({"K": 3, "eps_bob_db": [3], "eps_eve_db": [-15]})
        assert config.eps_bob_db == (3.0, 3.0, 3.0)
        assert config.eps_eve_db == (-15.0, -15.0, -15.0)

    def test_threshold_count_mismatch(self):
        """Two thresholds for three Bobs is an error."""
        with pytest.raises(ConfigError) as excinfo:
            ScenarioConfig.from_document({"K": 3, "eps_bob_db": [3, 3]})
        assert excinfo.value.field_path == "eps_bob_db"

    def test_needs_a_radar_stream(self):
        """K must stay below N."""
        with pytest.raises(ConfigError) as excinfo:
            ScenarioConfig.from_document({"N": 2, "K": 2})
        assert excinfo.value.field_path == "K"

    def test_algorithm_section_validated(self):
        """Nested algorithm settings are validated with their section path."""
        with pytest.raises(ConfigError) as excinfo:
            ScenarioConfig.from_document({"algorithm": {"max_outer_iters": 0}})
        assert excinfo.value.field_path == "algorithm.max_outer_iters"

    def test_fixed_geometry_counts(self):
        """Fixed geometry needs one position per Bob."""
        with pytest.raises(ConfigError):
            ScenarioConfig.from_document({"geometry": {"mode": "fixed", "bobs_deg_m": [[80, 55]]}})

    def test_parse_error(self, tmp_path):
        """Malformed JSON raises ConfigError."""
        path = tmp_path / "broken.json"
        path.write_text("{ not json")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_save_load_roundtrip_and_hash(self, tmp_path, tiny_config):
        """A saved config loads back equal with the same hash."""
        path = tmp_path / "tiny.json"
        save_config(tiny_config, path)
        loaded = load_config(path)
        assert loaded == tiny_config
        assert config_hash(loaded) == config_hash(tiny_config)
        assert config_hash(replace(tiny_config, seed=8)) != config_hash(tiny_config)

    def test_resolution_presets(self):
        """The high preset selects seven patterns and four polarizations."""
        config = with_resolution(load_builtin("default_scenario"), "high")
        assert (config.dictionary.p_pat, config.dictionary.p_pol) == (7, 4)
        with pytest.raises(ConfigError):
            with_resolution(config, "ultra")


class TestSchemes:
    """Test baseline dictionaries."""

    def test_scheme_mode_counts(self):
        """Each baseline keeps only its reconfigurable dimension."""
        full = build_dictionary(16, 3, 3)
        assert apply_scheme("cra", full).P == 9
        assert apply_scheme("pattern_only", full).P == 3
        assert apply_scheme("polarization_only", full).P == 3
        assert apply_scheme("bb_only", full).P == 1

    def test_unknown_scheme(self):
        """Unknown schemes raise ConfigError."""
        with pytest.raises(ConfigError):
            apply_scheme("hybrid", build_dictionary(16, 3, 3))

    def test_polarization_only_uses_directional_reference(self):
        """polarization_only steers the same directional lobe as the dictionary, not the omni pattern."""
        full = build_dictionary(16, 3, 3)
        restricted = apply_scheme("polarization_only", full)
        lobe = restricted.pattern_dict[:, 0]
        np.testing.assert_allclose(lobe, reference_pattern(16)[:, 0])
        assert lobe.max() > lobe.min()
        np.testing.assert_allclose(restricted.pol_dict, full.pol_dict)
        omni = apply_scheme("bb_only", full).pattern_dict[:, 0]
        assert np.ptp(omni) == pytest.approx(0.0)


class TestSweepPlanning:
    """Test seeds, axes and task ordering."""

    def test_realization_seed(self):
        """Seeds are reproducible and differ across realizations."""
        assert realization_seed(2024, 3) == realization_seed(2024, 3)
        assert realization_seed(2024, 3) != realization_seed(2024, 4)

    def test_apply_axis(self, tiny_config):
        """Axis values land in the matching config field."""
        assert apply_axis(tiny_config, "power", 20).p_t_watts == 20.0
        assert apply_axis(tiny_config, "eps_eve", -30).eps_eve_db == (-30.0,)
        assert apply_axis(tiny_config, "p_pol", 2).dictionary.p_pol == 2
        moved = apply_axis(tiny_config, "target_angle", 70)
        assert moved.geometry.mode == "fixed"
        assert moved.geometry.target_deg_m[0] == 70.0

    def test_integer_axes_reject_fractions(self, tiny_config):
        """Mode-count axes need integer values."""
        with pytest.raises(ConfigError):
            apply_axis(tiny_config, "p_pat", 1.5)

    def test_task_order_and_shared_seeds(self, tiny_config):
        """Tasks run value-major, then realization, then scheme; schemes share seeds."""
        tasks = sweep_tasks(tiny_config, "power", [30.0, 60.0], 2, ["cra", "bb_only"])
        assert len(tasks) == 8
        assert [t.config.scheme for t in tasks[:2]] == ["cra", "bb_only"]
        assert tasks[0].seed == tasks[1].seed == tasks[4].seed
        assert tasks[0].seed != tasks[2].seed
        assert [t.axis_value for t in tasks] == [30.0] * 4 + [60.0] * 4

    def test_unknown_axis(self, tiny_config):
        """Unknown axes raise ConfigError."""
        with pytest.raises(ConfigError):
            sweep_tasks(tiny_config, "bandwidth", [1.0], 1, ["cra"])

    def test_default_jobs(self, monkeypatch):
        """CRA_ISAC_JOBS sets the worker count; invalid values fall back to one."""
        monkeypatch.setenv("CRA_ISAC_JOBS", "3")
        assert default_jobs() == 3
        monkeypatch.setenv("CRA_ISAC_JOBS", "many")
        assert default_jobs() == 1


class TestRealizations:
    """Test single realizations and small sweeps."""

    def test_run_realization(self, tiny_config):
        """A tiny realization optimizes to an ok record."""
        record, trace = run_realization(tiny_config, realization_seed(tiny_config.seed, 0))
        assert record["status"] == "ok"
        assert record["iterations"] == trace.iterations
        assert len(record["sinr_db"]) == tiny_config.K
        assert min(record["sinr_db"]) >= tiny_config.eps_bob_db[0] - 1e-3
        assert max(record["eve_sinr_db"]) <= tiny_config.eps_eve_db[0] + 1e-3

    def test_failure_becomes_record(self, tiny_config):
        """An infeasible realization is recorded with the error class as status."""
        config = replace(tiny_config, eps_bob_db=(200.0,))
        record, trace = run_realization(config, 1)
        assert record["status"] == "SubproblemInfeasibleError"
        assert trace is None
        assert math.isnan(record["scnr_db"])

    def test_sweep_collects_rows_and_traces(self, tiny_config):
        """A no-axis sweep keeps one row and one trace per realization."""
        result = run_sweep(tiny_config, "none", [], 2)
        assert len(result.tracker.get_results()) == 2
        assert len(result.traces) == 2
        frame = result.trace_frame()
        assert set(frame["realization"]) == {0, 1}
        assert list(result.tracker.to_frame().columns) == list(RESULT_COLUMNS)

    def test_sweep_rows_reach_global_tracker(self, tiny_config):
        """Sweep rows also land in the module-level result tracker used for report export."""
        result = run_sweep(tiny_config, "none", [], 2)
        rows = get_result_tracker().get_results()
        assert [(r["realization"], r["seed"]) for r in rows] == [
            (r["realization"], r["seed"]) for r in result.tracker.get_results()
        ]


class TestCli:
    """Test the command-line entry point."""

    def test_run_command_writes_outputs(self, tmp_path, tiny_config):
        """cra-isac run writes results, trace and metadata."""
        config_path = tmp_path / "tiny.json"
        save_config(tiny_config, config_path)
        out = tmp_path / "out"
        assert main(["run", "--config", str(config_path), "--out", str(out), "--seed", "5"]) == 0
        assert (out / "results.csv").exists()
        assert (out / "trace.csv").exists()
        report = json.loads((out / "report.json").read_text())
        assert len(report["records"]) == 1
        assert get_result_tracker().get_results()[0]["seed"] == report["records"][0]["seed"]
        metadata = json.loads((out / "metadata.json").read_text())
        assert metadata["command"] == "run"
        assert metadata["seed"] == 5
        assert metadata["config_hash"] == config_hash(replace(tiny_config, seed=5))

    def test_bad_config_exit_code(self, tmp_path):
        """Configuration errors exit with status 2."""
        config_path = tmp_path / "bad.json"
        config_path.write_text(json.dumps({"N": 0}))
        assert main(["run", "--config", str(config_path), "--out", str(tmp_path / "out")]) == 2

    def test_validate_command(self, tmp_path):
        """cra-isac validate passes the property suite on tiny instances."""
        assert main(["validate", "--instances", "3", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "metadata.json").exists()

    def test_out_dir_from_environment(self, tmp_path, monkeypatch):
        """CRA_ISAC_OUT_DIR is used when --out is not given."""
        monkeypatch.setenv("CRA_ISAC_OUT_DIR", str(tmp_path / "env_out"))
        assert main(["validate", "--instances", "1"]) == 0
        assert (tmp_path / "env_out" / "metadata.json").exists()
