"""Simulation-study harness: configs, replicates, and summaries."""

import json

import numpy as np
import pytest

from effortud.errors import ConfigError
from effortud.experiment import (
    ExperimentConfig,
    config_from_dict,
    config_to_dict,
    read_experiment_config,
    run_experiment,
    run_replicate,
    simulate_replicate,
    summarize,
    summary_table,
    write_metrics_json,
)
from effortud.geometry import StudyRegion


def toy_config(**overrides):
    base = dict(
        label="toy",
        region=StudyRegion(0, 100, 0, 100),
        nx=25,
        ny=25,
        animal_center=(50.0, 50.0),
        animal_potential_variance=200.0,
        animal_bm_variance=2.0,
        n_mobile=1,
        n_static=0,
        observer_bm_variance=2.0,
        observer_center_y=100.0,
        observer_potential_variance=400.0,
        true_range=30.0,
        true_mode="linear-decay",
        n_trips=30,
        max_steps=150,
        assumed_range=30.0,
        detection_modeled=True,
        overlap=False,
        effort_floor=1e-6,
        replicates=2,
        base_seed=47,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfigParsing:
    def test_defaults_from_empty_document(self):
        cfg = config_from_dict({})
        assert cfg.label == "experiment"
        assert cfg.region == StudyRegion(0.0, 100.0, 0.0, 100.0)
        assert (cfg.nx, cfg.ny) == (100, 100)
        assert cfg.animal_center == (50.0, 50.0)
        assert cfg.animal_potential_variance == 200.0
        assert cfg.animal_bm_variance == 2.0
        assert (cfg.n_mobile, cfg.n_static) == (1, 0)
        assert cfg.true_range == 10.0
        assert cfg.true_mode == "linear-decay"
        assert cfg.n_trips == 150
        assert cfg.max_steps == 500
        assert cfg.assumed_range == 10.0
        assert cfg.detection_modeled is True
        assert cfg.overlap is False
        assert cfg.effort_floor == 1e-6
        assert (cfg.replicates, cfg.base_seed, cfg.workers) == (1, 0, None)

    def test_high_bias_preset(self):
        cfg = config_from_dict({"observers": {"bias": "high"}})
        assert cfg.observer_bm_variance == 2.0
        assert cfg.observer_potential_variance == 400.0

    def test_low_bias_preset(self):
        cfg = config_from_dict({"observers": {"bias": "low"}})
        assert cfg.observer_bm_variance == 8.0
        assert cfg.observer_potential_variance == 1600.0

    def test_explicit_values_override_preset(self):
        cfg = config_from_dict(
            {"observers": {"bias": "high", "bm_variance": 5.0, "potential_variance": 900.0}}
        )
        assert cfg.observer_bm_variance == 5.0
        assert cfg.observer_potential_variance == 900.0

    def test_partial_override_keeps_preset_remainder(self):
        cfg = config_from_dict({"observers": {"bias": "low", "bm_variance": 3.0}})
        assert cfg.observer_bm_variance == 3.0
        assert cfg.observer_potential_variance == 1600.0

    def test_unknown_bias_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"observers": {"bias": "medium"}})

    def test_assumed_range_defaults_to_true_range(self):
        cfg = config_from_dict({"detection": {"range": 25.0}})
        assert cfg.assumed_range == 25.0
        cfg = config_from_dict({"detection": {"range": 25.0}, "analyst": {"assumed_range": 2.0}})
        assert cfg.assumed_range == 2.0

    def test_round_trip(self):
        cfg = toy_config(overlap=True, workers=3)
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_file_round_trip(self, tmp_path):
        cfg = toy_config()
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(config_to_dict(cfg)))
        assert read_experiment_config(p) == cfg

    def test_invalid_json_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            read_experiment_config(p)

    def test_non_object_rejected(self, tmp_path):
        p = tmp_path / "list.json"
        p.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            read_experiment_config(p)

    def test_validation(self):
        with pytest.raises(ConfigError):
            toy_config(replicates=0)
        with pytest.raises(ConfigError):
            toy_config(n_mobile=0, n_static=0)
        with pytest.raises(ConfigError):
            toy_config(true_range=0.0)
        with pytest.raises(ConfigError):
            toy_config(assumed_range=-1.0)
        with pytest.raises(ConfigError):
            toy_config(effort_floor=-1e-9)

    def test_bad_types_become_config_errors(self):
        with pytest.raises(ConfigError):
            config_from_dict({"grid": {"nx": "many"}})


class TestSeeds:
    def test_replicate_seed_xor(self):
        cfg = toy_config(base_seed=47)
        for r in (0, 1, 5, 12):
            assert cfg.replicate_seed(r) == 47 ^ r

    def test_simulation_deterministic_per_replicate(self):
        cfg = toy_config()
        a = simulate_replicate(cfg, 0).encounter_points()
        b = simulate_replicate(cfg, 0).encounter_points()
        c = simulate_replicate(cfg, 1).encounter_points()
        assert np.array_equal(a, b)
        assert len(a) != len(c) or not np.array_equal(a, c)


class TestRunReplicate:
    def test_record_contents(self):
        rec = run_replicate(toy_config(), 0)
        assert rec["replicate"] == 0
        assert rec["setting"] == "toy"
        assert rec["seed"] == 47
        assert rec["n_encounters"] > 0
        for tag in ("uncorrected", "corrected"):
            assert rec[f"mspe_{tag}"] >= 0.0
            assert np.isfinite(rec[f"bias_{tag}"])
            assert rec[f"converged_{tag}"]
        assert "mspe_overlap" not in rec

    def test_deterministic(self):
        cfg = toy_config()
        assert run_replicate(cfg, 1) == run_replicate(cfg, 1)

    def test_single_observer_overlap_matches_plain(self):
        rec = run_replicate(toy_config(overlap=True), 0)
        assert rec["mspe_overlap"] == pytest.approx(rec["mspe_corrected"], rel=1e-6)
        assert rec["bias_overlap"] == pytest.approx(rec["bias_corrected"], abs=1e-6)


class TestSummarize:
    def test_skips_sparse_and_missing_metrics(self):
        records = [
            {"mspe_uncorrected": 1.0, "mspe_corrected": 0.5, "bias_uncorrected": 2.0},
            {"mspe_uncorrected": 3.0, "mspe_corrected": None, "bias_uncorrected": 4.0},
            {"mspe_uncorrected": 2.0, "mspe_corrected": np.nan, "bias_uncorrected": 6.0},
        ]
        out = summarize(records, overlap=False)
        assert out["mspe_uncorrected"].median == 2.0
        assert out["bias_uncorrected"].median == 4.0
        # only one finite value survived, too few for an interval
        assert "mspe_corrected" not in out
        assert "bias_corrected" not in out

    def test_overlap_keys_only_when_requested(self):
        records = [
            {"mspe_overlap": 1.0, "bias_overlap": 0.0},
            {"mspe_overlap": 2.0, "bias_overlap": 1.0},
        ]
        assert "mspe_overlap" not in summarize(records, overlap=False)
        assert summarize(records, overlap=True)["mspe_overlap"].median == 1.5


class TestRunExperiment:
    def test_serial_and_parallel_agree(self, tmp_path):
        cfg = toy_config(replicates=2)
        serial = run_experiment(cfg, workers=1)
        pooled = run_experiment(cfg, workers=2)
        assert len(serial.records) == 2
        assert serial.records == pooled.records
        assert set(serial.summaries) >= {"mspe_uncorrected", "mspe_corrected"}

        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        write_metrics_json(serial, p1)
        write_metrics_json(pooled, p2)
        assert p1.read_bytes() == p2.read_bytes()
        doc = json.loads(p1.read_text())
        assert doc["setting"] == "toy"
        assert len(doc["records"]) == 2
        assert "mspe_corrected" in doc["summaries"]

        table = summary_table(serial)
        assert "toy" in table and "mspe_corrected" in table

    def test_metric_values_filters_missing(self):
        cfg = toy_config(replicates=2)
        res = run_experiment(cfg, workers=1)
        res.records[0]["mspe_corrected"] = None
        assert len(res.metric_values("mspe_corrected")) == 1
        assert len(res.metric_values("mspe_uncorrected")) == 2
