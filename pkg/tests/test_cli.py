import importlib.util
import json
from pathlib import Path

import numpy as np
import pytest

from dpqca.dkca import DensityTrace, dk_density_trace
from dpqca.model import dp_bond_rule
from dpqca.observables import TrajectoryRecord, TrajectorySeries

CLI_PATH = Path(__file__).resolve().parent.parent / "tools" / "qca_cli.py"


@pytest.fixture(scope="module")
def cli():
    spec = importlib.util.spec_from_file_location("qca_cli", CLI_PATH)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


@pytest.fixture
def base_args(tmp_path, monkeypatch):
    for key in ("QCA_OUTPUT_DIR", "QCA_THREADS", "QCA_SEED", "QCA_LOG_LEVEL", "QCA_PROGRESS"):
        monkeypatch.delenv(key, raising=False)
    return ["--env-file", str(tmp_path / "missing.env"), "--out", str(tmp_path / "out"), "--log-level", "warning"]


def test_rates_prints_table(cli, base_args, capsys, tmp_path):
    cli.main(base_args + ["rates", "--p", "0.7", "--omega", "0.1", "--save", str(tmp_path / "rates.txt")])
    out = capsys.readouterr().out
    payload = json.loads(out[out.index("{") :])
    assert payload["params"]["gamma_minus.00"] == "1.0"
    assert payload["steady_states"]["11"]["rho11"] == pytest.approx(0.7)
    assert (tmp_path / "rates.txt").exists()


def test_unit_probability_is_reported(cli, base_args):
    with pytest.raises(SystemExit, match="DegenerateP"):
        cli.main(base_args + ["rates", "--p", "1.0"])


def test_rates_needs_p(cli, base_args):
    with pytest.raises(SystemExit):
        cli.main(base_args + ["rates"])


def test_finite_evolution_writes_trajectory(cli, base_args, tmp_path):
    cli.main(
        base_args
        + ["evolve", "--p", "0.7", "--mode", "discrete", "--finite", "2", "--rounds", "2", "-D", "8", "--name", "run"]
    )
    series = TrajectorySeries.from_json(tmp_path / "out" / "run.json")
    assert [r.round for r in series.records] == [0, 1, 2]
    assert series.metadata["mode"] == "discrete"
    assert (tmp_path / "out" / "run.csv").exists()


def test_fit_reads_csv(cli, base_args, capsys, tmp_path):
    records = [
        TrajectoryRecord(round=r, t=float(r), n=float(r) ** -0.16 if r else 1.0, S=0.0, C1=0.0, concurrence=0.0)
        for r in range(300)
    ]
    path = TrajectorySeries(records=records).to_csv(tmp_path / "trace.csv")
    cli.main(base_args + ["fit", "--input", str(path)])
    payload = json.loads(capsys.readouterr().out)
    assert payload["fit"]["delta"] == pytest.approx(0.16, abs=1e-9)
    assert np.isfinite(payload["fit"]["residual"])


def test_fit_rejects_bad_grid_entry(cli, base_args):
    with pytest.raises(SystemExit):
        cli.main(base_args + ["fit", "--grid", "0.7"])


def test_dkca_bond_rule_writes_csv(cli, base_args, tmp_path):
    target = tmp_path / "traces" / "bond.csv"
    argv = ["--seed", "7", "--threads", "1", "dkca", "--rule", "bond", "--q", "0.8", "--length", "64", "--rounds", "20"]
    cli.main(base_args + argv + ["--seeds", "3", "--csv", str(target)])
    written = DensityTrace.from_csv(target)
    expected = dk_density_trace(dp_bond_rule(0.8), 64, 20, 3, seed=7)
    np.testing.assert_array_equal(written.mean_density, expected.mean_density)


def test_dkca_rule_needs_its_probability(cli, base_args):
    with pytest.raises(SystemExit, match="--q"):
        cli.main(base_args + ["dkca", "--rule", "bond", "--length", "8", "--rounds", "2", "--seeds", "1"])
    with pytest.raises(SystemExit, match="--y"):
        cli.main(base_args + ["dkca", "--rule", "raw", "--length", "8", "--rounds", "2", "--seeds", "1"])
