import math

import pytest

from dpqca.errors import DegenerateP, InvalidParameters, NegativeDiscriminant
from dpqca.model import (
    LABEL_CODES,
    DKCARule,
    NeighborhoodLabel,
    RateEntry,
    ThreeCellParams,
    closed_form_coherence,
    dp_bond_rule,
    dp_quantum_rates,
    params_digest,
    physical_omega_bound,
    rates_from_rule,
    solve_gamma_plus,
    steady_state_3cell,
    unit_decay_rates,
)


def test_label_order_and_codes():
    assert LABEL_CODES == ("00", "01", "10", "11")
    label = NeighborhoodLabel.from_code("10")
    assert (label.alpha, label.beta) == (1, 0)
    assert label.index == 2


def test_gamma_plus_without_drive():
    assert solve_gamma_plus(0.7, 0.0, 0.3) == pytest.approx(0.7)


def test_gamma_plus_with_drive_matches_reference_value():
    assert solve_gamma_plus(0.75, 0.1, 1.0) == pytest.approx(3.019901, abs=1e-6)


def test_gamma_plus_reproduces_target_occupation():
    gp = solve_gamma_plus(0.75, 0.1, 1.0)
    state = steady_state_3cell(RateEntry(p=0.75, theta=0.2, gamma_minus=1.0, gamma_plus=gp))
    assert state.rho11 == pytest.approx(0.75, abs=1e-9)
    assert state.rho00 + state.rho11 == pytest.approx(1.0)


def test_coherence_closed_form_agrees_with_rate_solution():
    gp = solve_gamma_plus(0.75, 0.1, 1.0)
    state = steady_state_3cell(RateEntry(p=0.75, theta=0.2, gamma_minus=1.0, gamma_plus=gp))
    assert abs(state.rho01 - closed_form_coherence(0.75, 0.1, 1.0)) < 1e-9
    assert abs(state.rho01) == pytest.approx(0.024875, abs=1e-5)
    assert state.rho10 == state.rho01.conjugate()


def test_negative_discriminant_is_rejected():
    with pytest.raises(NegativeDiscriminant):
        solve_gamma_plus(0.1, 1.0, 0.1)


def test_unit_target_is_degenerate():
    with pytest.raises(DegenerateP):
        solve_gamma_plus(1.0, 0.0, 1.0)


def test_drive_above_target_is_rejected():
    with pytest.raises(InvalidParameters):
        solve_gamma_plus(0.0, 0.1, 1.0)


def test_physical_omega_bound():
    assert physical_omega_bound(0.7) == math.inf
    bound = physical_omega_bound(0.1, 0.1)
    assert bound == pytest.approx(0.1 / (4.0 * math.sqrt(0.72)))


def test_dp_quantum_rates_table():
    params = dp_quantum_rates(0.7)
    assert params.targets == (0.0, 0.7, 0.7, 0.7)
    assert params.gamma_minus == pytest.approx((1.0, 0.3, 0.3, 0.3))
    assert params.gamma_plus == pytest.approx((0.0, 0.7, 0.7, 0.7))
    assert params.is_absorbing
    assert params.is_classical


def test_drive_only_on_eleven():
    params = dp_quantum_rates(0.8, 0.1)
    assert params.theta == (0.0, 0.0, 0.0, 0.2)
    assert not params.is_classical
    assert steady_state_3cell(params.entry("11")).rho11 == pytest.approx(0.8, abs=1e-12)


def test_unit_decay_preset():
    params = unit_decay_rates(0.6)
    assert params.gamma_minus == (1.0, 1.0, 1.0, 1.0)
    assert params.gamma_plus[1] == pytest.approx(1.5)


def test_general_rule_targets():
    rule = dp_bond_rule(0.6)
    params = rates_from_rule(rule)
    assert params.targets == pytest.approx((0.0, 0.6, 0.6, 0.84))
    assert params.p is None


def test_validate_rejects_zero_decay():
    params = ThreeCellParams(
        targets=(0.0, 0.5, 0.5, 0.5),
        theta=(0.0, 0.0, 0.0, 0.0),
        gamma_minus=(1.0, 0.0, 1.0, 1.0),
        gamma_plus=(0.0, 1.0, 1.0, 1.0),
    )
    with pytest.raises(InvalidParameters):
        params.validate()


def test_validate_rejects_pumped_absorbing_neighborhood():
    params = ThreeCellParams(
        targets=(0.0, 0.5, 0.5, 0.5),
        theta=(0.0, 0.0, 0.0, 0.0),
        gamma_minus=(1.0, 1.0, 1.0, 1.0),
        gamma_plus=(0.2, 1.0, 1.0, 1.0),
    )
    with pytest.raises(InvalidParameters):
        params.validate()


def test_digest_is_stable_and_sensitive():
    assert params_digest(dp_quantum_rates(0.7)) == dp_quantum_rates(0.7).digest()
    assert dp_quantum_rates(0.7, 0.1).digest() == dp_quantum_rates(0.7, 0.1).digest()
    assert dp_quantum_rates(0.7, 0.1).digest() != dp_quantum_rates(0.7, 0.05).digest()


def test_preset_file_round_trip(tmp_path):
    params = dp_quantum_rates(0.7, 0.1)
    path = params.save(tmp_path / "rates.txt")
    loaded = ThreeCellParams.load(path)
    assert loaded.digest() == params.digest()
    assert loaded.p == 0.7
    assert loaded.preset == "table"


def test_list_form_implies_targets():
    params = ThreeCellParams.from_mapping({"gamma_minus": "[1, 0.3, 0.3, 0.3]", "gamma_plus": "[0, 0.7, 0.7, 0.7]"})
    assert params.targets == pytest.approx((0.0, 0.7, 0.7, 0.7))


def test_missing_rate_key_is_reported():
    with pytest.raises(InvalidParameters):
        ThreeCellParams.from_mapping({"gamma_minus": "[1, 1, 1, 1]", "gamma_plus.00": "0"})


def test_dkca_rule_bounds_and_table():
    rule = DKCARule(0.0, 0.4, 0.9)
    assert rule.table().tolist() == [0.0, 0.4, 0.9]
    assert rule.probability(1, 0) == 0.4
    assert rule.is_directed_percolation
    with pytest.raises(InvalidParameters):
        DKCARule(0.0, 1.2, 0.5)
