import json

import numpy as np
import pytest

from csbmf import synthgen
from csbmf.pipeline import (STAGES, PipelineConfig, PipelineError, load_config, run_pipeline,
                            save_config, sweep_tau)
from csbmf.synthgen import ActivationSchedule, Interval, Scenario, SourceModel

SOURCES = [SourceModel("square", 70.0, 1.0, name="a"), SourceModel("triangle", 50.0, 1.0, name="b")]


def _scenario_config(tmp_path, entries, sigma=0.05, k=None, duration=None):
    sc = Scenario(SOURCES, ActivationSchedule(entries, noise_sigma=sigma), 7000.0, seed=1,
                  duration=duration)
    synthgen.save_scenario(sc, tmp_path / "sc.yaml")
    d = {
        "input": {"scenario": str(tmp_path / "sc.yaml")},
        "stft": {"window_size": 700, "hop": 700, "window_function": "rectangular"},
        "clustering": {"k": k, "k_range": [2, 6]},
        "resync": {"early_exit": True},
        "decomposition": {"tau": 1e3},
    }
    return PipelineConfig.from_dict(d)


@pytest.fixture(scope="module")
def two_sources(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("two")
    entries = [Interval((0,), 0.31, 1.33), Interval((1,), 1.67, 2.71), Interval((0, 1), 3.05, 4.07)]
    cfg = _scenario_config(tmp, entries, k=4, duration=4.4)
    return cfg, run_pipeline(cfg, tmp / "out"), tmp


def test_two_source_recovery(two_sources):
    _, res, _ = two_sources
    assert res.report["decomposition"]["n_sources"] == 2
    assert min(res.report["score"]["balanced_accuracy"]) == 1.0


def test_artifacts_and_report_contents(two_sources):
    cfg, res, tmp = two_sources
    names = {"labels.csv", "residual_matrix.csv", "lambda.csv", "activations.csv", "catalog.csv",
             "report.json"}
    assert names <= set(res.artifacts)
    report = json.loads((tmp / "out" / "report.json").read_text())
    assert report["status"] == "ok"
    # the full configuration is recorded, so the run can be repeated from the report
    assert PipelineConfig.from_dict(report["config"]) == cfg
    assert report["inequalities"]["row_bound"]["passed"] in (True, False)


def test_rerun_is_byte_identical(two_sources, tmp_path):
    cfg, _, tmp = two_sources
    run_pipeline(cfg, tmp_path)
    for name in ("labels.csv", "residual_matrix.csv", "lambda.csv", "activations.csv",
                 "catalog.csv", "report.json"):
        assert (tmp_path / name).read_bytes() == (tmp / "out" / name).read_bytes(), name


def test_single_source(tmp_path):
    cfg = _scenario_config(tmp_path, [Interval((0,), 0.31, 1.33)], k=2, duration=1.7)
    res = run_pipeline(cfg, tmp_path / "out")
    np.testing.assert_array_equal(res.representation.lam, [[1]])
    assert res.report["decomposition"]["n_sources"] == 1
    assert res.report["inequalities"] is None


def test_source_in_two_intervals_is_one_source(tmp_path):
    # a restarts after a gap that is not a whole number of its periods
    entries = [Interval((0,), 0.31, 1.33), Interval((1,), 1.67, 2.71), Interval((0,), 3.0513, 4.07)]
    cfg = _scenario_config(tmp_path, entries, k=3, duration=4.4)
    res = run_pipeline(cfg, tmp_path / "out")
    assert res.report["decomposition"]["n_sources"] == 2
    assert min(res.report["score"]["balanced_accuracy"]) == 1.0


def test_sweep_tau(two_sources, tmp_path):
    cfg, _, _ = two_sources
    rows = sweep_tau(cfg, [1e-3, 1e3, 1e7], tmp_path)
    counts = [S for _, S, _ in rows]
    assert counts == sorted(counts, reverse=True) and counts[1] == 2
    assert (tmp_path / "tau_sweep.csv").read_text().startswith("tau,n_sources,mean_residual")


def test_missing_input_fails_at_ingest(tmp_path):
    cfg = PipelineConfig.from_dict({"input": {"path": str(tmp_path / "none.csv")},
                                    "stft": {"window_size": 64, "hop": 64}})
    with pytest.raises(PipelineError) as err:
        run_pipeline(cfg, tmp_path)
    assert err.value.stage == "ingest" and err.value.exit_code == STAGES["ingest"]
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["status"] == "failed" and report["failed_stage"] == "ingest"


def test_window_size_is_required(two_sources, tmp_path):
    cfg = two_sources[0].updated({"stft.window_size": None})
    with pytest.raises(PipelineError) as err:
        run_pipeline(cfg, tmp_path)
    assert err.value.stage == "stft" and err.value.exit_code == 11


def test_no_input_configured(tmp_path):
    with pytest.raises(PipelineError) as err:
        run_pipeline(PipelineConfig(), tmp_path)
    assert err.value.stage == "ingest"


def test_config_validation_and_overrides(tmp_path):
    with pytest.raises(ValueError, match="unknown keys"):
        PipelineConfig.from_dict({"stft": {"window": 10}})
    with pytest.raises(ValueError, match="unknown setting"):
        PipelineConfig().updated({"stft.nope": 1})
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"stft": {"hop": "many"}})
    cfg = PipelineConfig.from_dict({"decomposition": {"tau": "1.0e4"}, "stft": {"hop": 350}})
    assert cfg.decomposition.tau == 1e4
    # later sources override earlier ones
    assert cfg.updated({"stft.hop": 700}).stft.hop == 700
    save_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg
    save_config(cfg, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == cfg


def test_relative_paths_resolve_against_config(tmp_path):
    synthgen.save_scenario(synthgen.three_source_scenario(interval=0.2, gap=0.1), tmp_path / "s.yaml")
    (tmp_path / "c.yaml").write_text("input:\n  scenario: s.yaml\n")
    assert load_config(tmp_path / "c.yaml").input.scenario == str((tmp_path / "s.yaml").resolve())
    (tmp_path / "bad.yaml").write_text("input:\n  scenario: gone.yaml\n")
    with pytest.raises(ValueError, match="does not exist"):
        load_config(tmp_path / "bad.yaml")
