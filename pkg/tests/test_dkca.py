import numpy as np
import pytest

from dpqca.analysis import classical_critical_scan
from dpqca.dkca import DensityTrace, DKCALattice, dk_density_trace, dk_step, dk_step_uniforms, site_rule_sweep
from dpqca.errors import InvalidParameters
from dpqca.model import dp_site_rule


def test_odd_length_is_rejected():
    with pytest.raises(InvalidParameters):
        DKCALattice.new(7)


def test_step_updates_one_sublattice():
    lattice = DKCALattice.new(8)
    lattice.cells[1::2] = 0
    dk_step_uniforms(lattice, dp_site_rule(0.5), np.full(4, 0.99))
    # every even cell sees only empty neighbours
    assert lattice.cells.tolist() == [0] * 8
    assert lattice.parity == 1
    assert lattice.time == 1


def test_step_activates_below_threshold():
    lattice = DKCALattice.new(8)
    dk_step_uniforms(lattice, dp_site_rule(0.5), np.zeros(4))
    assert lattice.cells.tolist() == [1] * 8
    dk_step_uniforms(lattice, dp_site_rule(0.5), np.full(4, 0.7))
    assert lattice.cells.tolist() == [1, 0] * 4


def test_uniform_count_must_match_sublattice():
    lattice = DKCALattice.new(8)
    with pytest.raises(InvalidParameters):
        dk_step_uniforms(lattice, dp_site_rule(0.5), np.zeros(8))


def test_absorbing_state_is_permanent():
    lattice = DKCALattice(cells=np.zeros(16, dtype=np.uint8), rng_seed=3)
    for _ in range(20):
        dk_step(lattice, dp_site_rule(0.9))
    assert lattice.is_absorbed()


def test_certain_activation_keeps_lattice_full():
    lattice = DKCALattice.new(16, seed=1)
    for _ in range(10):
        dk_step(lattice, dp_site_rule(1.0))
    assert lattice.density() == 1.0


def test_monotone_coupling():
    rng = np.random.default_rng(11)
    low, high = DKCALattice.new(64), DKCALattice.new(64)
    for _ in range(100):
        uniforms = rng.random(32)
        dk_step_uniforms(low, dp_site_rule(0.6), uniforms)
        dk_step_uniforms(high, dp_site_rule(0.8), uniforms)
        assert np.all(low.cells <= high.cells)


def test_trace_is_deterministic_under_seed():
    first = dk_density_trace(dp_site_rule(0.7), 64, 30, 4, seed=5)
    second = dk_density_trace(dp_site_rule(0.7), 64, 30, 4, seed=5)
    other = dk_density_trace(dp_site_rule(0.7), 64, 30, 4, seed=6)
    np.testing.assert_array_equal(first.mean_density, second.mean_density)
    assert not np.array_equal(first.mean_density, other.mean_density)
    assert first.mean_density[0] == 1.0
    assert first.rounds.tolist() == list(range(31))


def test_phases_separate():
    dead = dk_density_trace(dp_site_rule(0.3), 256, 200, 4, seed=1)
    alive = dk_density_trace(dp_site_rule(0.9), 256, 200, 4, seed=1)
    assert dead.mean_density[-1] < 0.01
    assert alive.mean_density[-1] > 0.5


def test_sweep_is_sorted():
    traces = site_rule_sweep([0.9, 0.5], 32, 5, 2, seed=2)
    assert [p for p, _ in traces] == [0.5, 0.9]


def test_csv_columns(tmp_path):
    trace = dk_density_trace(dp_site_rule(0.7), 32, 10, 3, seed=2)
    path = trace.to_csv(tmp_path / "trace.csv")
    assert path.read_text().splitlines()[0] == "round,mean_density,stderr"
    loaded = DensityTrace.from_csv(path)
    np.testing.assert_allclose(loaded.mean_density, trace.mean_density)


@pytest.mark.slow
def test_classical_critical_point_and_exponent():
    scan = classical_critical_scan([0.68, 0.695, 0.705, 0.715, 0.73], 4096, 4000, 50, seed=2024, workers=4)
    assert scan.p_c == pytest.approx(0.705, abs=0.01)
    assert scan.fit.delta == pytest.approx(0.16, abs=0.03)
