import math

import numpy as np
import pytest

from dpqca.config import ScheduleMode
from dpqca.errors import DegenerateNullSpace, DimensionOverflow, InvalidParameters
from dpqca.model import ThreeCellParams, closed_form_coherence, dp_quantum_rates, unit_decay_rates
from dpqca.oracle import (
    ACTIVE,
    assemble_chain_liouvillian,
    compare_finite_chain,
    conditional_steady_state,
    dense_product_state,
    integrate,
    occupations_dense,
    oracle_report,
    reduce_dense,
    single_rule_concurrence,
)
from dpqca.superop import ScheduleConfig, vectorize


def test_acceptance_grid_passes():
    report = oracle_report()
    assert report["passed"]
    assert report["max_residual"] < 1e-9
    assert len(report["points"]) == 12
    assert all(point["coherence_formula_gap"] < 1e-12 for point in report["points"] if "skipped" not in point)


def test_unphysical_grid_point_is_skipped():
    report = oracle_report([(0.1, 1.0)])
    assert "skipped" in report["points"][0]
    assert report["passed"]


def test_steady_state_of_half_filling():
    state = conditional_steady_state(dp_quantum_rates(0.5), "01")
    np.testing.assert_allclose(state.matrix(), np.eye(2) / 2, atol=1e-12)


def test_empty_neighbourhood_is_absorbing():
    state = conditional_steady_state(dp_quantum_rates(0.7, 0.1), "00")
    assert state.rho00 == pytest.approx(1.0)
    assert abs(state.rho01) < 1e-12


def test_coherence_at_unit_decay():
    state = conditional_steady_state(unit_decay_rates(0.75, 0.1), "11")
    assert abs(state.rho01) == pytest.approx(0.024875, abs=1e-5)
    assert abs(state.rho01 - closed_form_coherence(0.75, 0.1, 1.0)) < 1e-10


def test_frozen_neighbourhood_is_degenerate():
    params = ThreeCellParams(
        targets=(0.0, 0.5, 0.5, 0.5),
        theta=(0.0, 0.0, 0.0, 0.0),
        gamma_minus=(0.0, 1.0, 1.0, 1.0),
        gamma_plus=(0.0, 1.0, 1.0, 1.0),
    )
    with pytest.raises(DegenerateNullSpace):
        conditional_steady_state(params, "00")


def test_chain_size_limits():
    params = dp_quantum_rates(0.7)
    with pytest.raises(DimensionOverflow):
        assemble_chain_liouvillian(params, 8)
    with pytest.raises(InvalidParameters):
        assemble_chain_liouvillian(params, 2)
    with pytest.raises(InvalidParameters):
        assemble_chain_liouvillian(params, 4, boundary="twisted")


@pytest.mark.parametrize("boundary", ["periodic", "open"])
def test_chain_liouvillian_preserves_trace_and_vacuum(boundary):
    generator = assemble_chain_liouvillian(dp_quantum_rates(0.7, 0.1), 4, boundary)
    assert generator.trace_residual() < 1e-12
    vacuum = dense_product_state(np.diag([1.0, 0.0]), 4)
    assert np.max(np.abs(generator.matrix @ vectorize(vacuum))) < 1e-12


def test_integrate_is_a_semigroup():
    generator = assemble_chain_liouvillian(dp_quantum_rates(0.7, 0.1), 4)
    start = dense_product_state(ACTIVE, 4)
    np.testing.assert_array_equal(integrate(start, generator, 0.0), start)
    once = integrate(start, generator, 1.0)
    twice = integrate(integrate(start, generator, 0.4), generator, 0.6)
    np.testing.assert_allclose(once, twice, atol=1e-10)
    assert abs(np.trace(once) - 1.0) < 1e-12
    with pytest.raises(InvalidParameters):
        integrate(start, generator, -1.0)


def test_reduce_dense_of_product_state():
    rho = np.kron(np.kron(ACTIVE, np.eye(2) / 2), np.diag([1.0, 0.0]))
    np.testing.assert_allclose(reduce_dense(rho, (1,)), np.eye(2) / 2)
    np.testing.assert_allclose(reduce_dense(rho, (0, 2)), np.diag([0.0, 0.0, 1.0, 0.0]))
    np.testing.assert_allclose(occupations_dense(rho), [1.0, 0.5, 0.0])


def test_site_rules_leave_no_concurrence():
    values = single_rule_concurrence()
    assert values["single_rule"] < 1e-6
    assert values["full_round"] < 1e-6


def test_overlapping_coherent_rules_entangle():
    # a pi/4 rotation on one qubit, then a rotation controlled by it on the neighbour
    params = ThreeCellParams(
        targets=(0.0, 0.5, 0.5, 0.5),
        theta=(0.0, 0.0, 0.0, 0.2),
        gamma_minus=(1e-3, 1e-3, 1e-3, 1e-3),
        gamma_plus=(0.0, 0.0, 0.0, 0.0),
    )
    values = single_rule_concurrence(params, tau=math.pi / 0.4)
    assert values["single_rule"] < 1e-6
    assert values["overlapping_rules"] > 0.1


@pytest.mark.parametrize("omega", [0.0, 0.1])
@pytest.mark.parametrize("mode", [ScheduleMode.CONTINUOUS, ScheduleMode.DISCRETE])
def test_finite_chain_agrees_with_dense_schedule(omega, mode):
    result = compare_finite_chain(dp_quantum_rates(0.7, omega), ScheduleConfig(mode=mode), rounds=10)
    assert result["rounds"] == 10
    assert result["max_occupation_deviation"] < 1e-6
    assert result["max_reduced_deviation"] < 1e-6
