import json

import numpy as np
import pytest

import dpqca.sweep
from dpqca.config import ScheduleMode
from dpqca.errors import InvalidParameters
from dpqca.superop import ScheduleConfig
from dpqca.sweep import SweepConfig, run_point, sweep, with_output


def test_config_validation():
    with pytest.raises(InvalidParameters):
        SweepConfig(ps=())
    with pytest.raises(InvalidParameters):
        SweepConfig(ps=(0.7, 0.5))
    with pytest.raises(InvalidParameters):
        SweepConfig(ps=(0.5,), max_bond=0)
    with pytest.raises(InvalidParameters):
        SweepConfig(ps=(0.5,), rounds=0)


def test_config_from_mapping_with_overrides():
    values = {"ps": "[0.5, 0.7]", "D": "8", "mode": "discrete", "rounds": "5", "omega": "0.1"}
    config = SweepConfig.from_mapping(values, rounds=3, omega=None)
    assert config.ps == (0.5, 0.7)
    assert config.max_bond == 8
    assert config.rounds == 3
    assert config.omega == 0.1
    assert config.schedule.mode is ScheduleMode.DISCRETE
    assert config.metadata()["schedule"]["mode"] == "discrete"


def test_run_point_records_metadata():
    config = SweepConfig(ps=(0.7,), omega=0.1, max_bond=4, rounds=2)
    series = run_point(config, 0.7)
    assert [r.round for r in series.records] == [0, 1, 2]
    assert series.metadata["p"] == 0.7
    assert series.metadata["mode"] == "continuous"
    assert series.records[1].t == pytest.approx(4 * series.metadata["tau"])


def test_inactive_point_decays_and_writes_outputs(tmp_path):
    config = SweepConfig(ps=(0.0,), max_bond=4, rounds=5, output_dir=tmp_path)
    result = sweep(config)
    assert result.failures == {}
    assert result.series[0].final.n < 0.01
    assert (tmp_path / "trajectory_p0.0000.csv").exists()
    assert (tmp_path / "long.csv").exists()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["p_c"] is None
    assert "p_c_error" in summary


def test_failed_point_does_not_stop_the_sweep():
    result = sweep(SweepConfig(ps=(0.0, 1.0), max_bond=4, rounds=2))
    assert 1.0 in result.failures
    assert "DegenerateP" in result.failures[1.0]
    assert [p for p, _ in result.completed()] == [0.0]


def test_sweep_output_is_deterministic(tmp_path):
    config = SweepConfig(ps=(0.7,), omega=0.1, max_bond=4, rounds=3)
    sweep(with_output(config, tmp_path / "a"))
    sweep(with_output(config, tmp_path / "b"))
    name = "trajectory_p0.7000.csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unexpected_point_error_is_recorded(monkeypatch):
    real_run_point = dpqca.sweep.run_point

    def flaky(config, p):
        if p == 0.5:
            raise np.linalg.LinAlgError("SVD did not converge")
        return real_run_point(config, p)

    monkeypatch.setattr(dpqca.sweep, "run_point", flaky)
    result = sweep(SweepConfig(ps=(0.0, 0.5), max_bond=4, rounds=2))
    assert result.failures == {0.5: "LinAlgError: SVD did not converge"}
    assert [p for p, _ in result.completed()] == [0.0]


def test_final_density_grows_with_p():
    config = SweepConfig(ps=(0.3, 0.6, 0.9), max_bond=16, rounds=3, schedule=ScheduleConfig(mode=ScheduleMode.DISCRETE))
    result = sweep(config)
    finals = [series.final.n for _, series in result.completed()]
    assert len(finals) == 3
    assert finals[0] < finals[1] < finals[2]


@pytest.mark.slow
def test_continuous_transition_smoke_bands(tmp_path):
    config = SweepConfig(ps=(0.6, 0.66, 0.69, 0.72, 0.75, 0.8), omega=0.1, max_bond=64, rounds=400, output_dir=tmp_path)
    result = sweep(config, workers=4)
    assert result.failures == {}
    finals = {p: series.final.n for p, series in result.completed()}
    assert finals[0.6] < 1e-2
    assert finals[0.8] > 0.25
    assert 0.66 <= result.summary()["p_c"] <= 0.73
