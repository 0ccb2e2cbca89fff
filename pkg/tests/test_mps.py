import logging

import numpy as np
import pytest

from dpqca.config import ScheduleMode, TruncationMode
from dpqca.errors import BondOverflow, CheckpointError, InvalidDensityMatrix
from dpqca.evolution import ACTIVE, evolve
from dpqca.model import dp_quantum_rates
from dpqca.mps import (
    FiniteMPS,
    InfiniteMPS,
    apply_gate_pair,
    discarded_weight,
    init_product_state,
    load_checkpoint,
    save_checkpoint,
    truncation_rank,
)
from dpqca.observables import finite_occupations, occupation_density, reduce_density
from dpqca.oracle import apply_partition_schedule, dense_product_state
from dpqca.superop import ScheduleConfig, SuperOperatorGate, build_round_gates

EMPTY = np.array([[1, 0], [0, 0]], dtype=np.complex128)
DISCRETE = ScheduleConfig(mode=ScheduleMode.DISCRETE)


def test_truncation_rank_drops_exact_zeros():
    s = np.array([1.0, 0.5, 0.1, 1e-16])
    assert truncation_rank(s, None) == 3
    assert truncation_rank(s, 2) == 2


def test_truncation_rank_tolerance_mode():
    s = np.array([1.0, 0.1, 0.01])
    assert truncation_rank(s, None, 1e-3, TruncationMode.TOLERANCE) == 2
    assert truncation_rank(s, 1, 1e-3, TruncationMode.TOLERANCE) == 1


def test_truncation_rank_keeps_multiplets_together():
    assert truncation_rank(np.array([1.0, 0.5, 0.5, 0.1]), 2) == 1


def test_discarded_weight():
    assert discarded_weight(np.array([3.0, 4.0]), 1) == pytest.approx(16.0 / 25.0)
    assert discarded_weight(np.zeros(2), 1) == 0.0


def test_product_state_is_canonical():
    state = init_product_state(ACTIVE)
    assert state.bond_dims == (1, 1)
    assert state.canonical_residual() < 1e-12


def test_product_state_rejects_bad_input():
    with pytest.raises(InvalidDensityMatrix):
        init_product_state(np.eye(2))
    with pytest.raises(BondOverflow):
        init_product_state(ACTIVE, max_bond=0)


def test_identity_gates_leave_state_alone():
    state = init_product_state(0.5 * np.eye(2))
    gate = SuperOperatorGate.identity()
    new_state, report = apply_gate_pair(state, gate, gate)
    assert new_state.round == 1
    assert new_state.bond_dims == (1, 1)
    assert report.total_discarded < 1e-14
    assert occupation_density(new_state) == pytest.approx(0.5)


def test_absorbing_state_stays_empty():
    state = init_product_state(EMPTY)
    gates = build_round_gates(dp_quantum_rates(0.8, 0.1), DISCRETE)
    for _ in range(3):
        state, _ = apply_gate_pair(state, *gates)
    assert state.bond_dims == (1, 1)
    assert occupation_density(state) == pytest.approx(0.0, abs=1e-12)


def test_first_round_matches_classical_update():
    # P1, P2, P3 see an active neighbour (0.7); P4 sees two independent 0.7 neighbours (0.91 * 0.7)
    state = init_product_state(ACTIVE, max_bond=64)
    state, report = apply_gate_pair(state, *build_round_gates(dp_quantum_rates(0.7), DISCRETE))
    assert occupation_density(state) == pytest.approx((3 * 0.7 + 0.91 * 0.7) / 4, abs=1e-3)
    assert report.max_trace_drift < 1e-8


def test_decay_without_excitation():
    state = init_product_state(ACTIVE, max_bond=4)
    gates = build_round_gates(dp_quantum_rates(0.0), ScheduleConfig())
    for _ in range(5):
        state, _ = apply_gate_pair(state, *gates)
    # tau is capped at 1, so every qubit decays for unit time per round
    assert occupation_density(state) == pytest.approx(np.exp(-5.0), rel=1e-6)


def test_checkpoint_round_trip(tmp_path):
    state = init_product_state(ACTIVE, max_bond=8)
    state, _ = apply_gate_pair(state, *build_round_gates(dp_quantum_rates(0.7, 0.1)))
    path = save_checkpoint(state, tmp_path / "state.npz", params_digest="abc", schedule={"mode": "continuous"})
    loaded, header = load_checkpoint(path)
    assert header["params_digest"] == "abc"
    assert header["round"] == 1
    assert loaded.max_bond == 8
    np.testing.assert_array_equal(loaded.lambda_ab, state.lambda_ab)
    np.testing.assert_array_equal(loaded.gamma_b, state.gamma_b)


def test_unreadable_checkpoint(tmp_path):
    path = tmp_path / "broken.npz"
    path.write_bytes(b"nope")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_resume_continues_and_checks_digest(tmp_path):
    params = dp_quantum_rates(0.7)
    gates = build_round_gates(params)
    path = tmp_path / "run.npz"
    evolve(init_product_state(ACTIVE, max_bond=8), gates, 2, hooks=[], checkpoint=path, params_digest=params.digest())

    _, series = evolve(
        init_product_state(ACTIVE, max_bond=8), gates, 4, hooks=[], resume=path, params_digest=params.digest()
    )
    assert [r.round for r in series.records] == [3, 4]

    with pytest.raises(CheckpointError):
        evolve(init_product_state(ACTIVE), gates, 4, hooks=[], resume=path, params_digest="other")


def test_finite_chain_matches_dense_density_matrix():
    params = dp_quantum_rates(0.7, 0.1)
    gates = build_round_gates(params, DISCRETE)
    chain = FiniteMPS.from_product(ACTIVE, 3)
    for _ in range(2):
        chain.apply_round(*gates)
    dense, _ = apply_partition_schedule(dense_product_state(ACTIVE, 6), params, DISCRETE, 2)
    np.testing.assert_allclose(chain.to_dense(), dense, atol=1e-8)


def test_finite_chain_gauge_moves_keep_the_state():
    chain = FiniteMPS.from_product(ACTIVE, 3)
    chain.apply_round(*build_round_gates(dp_quantum_rates(0.8, 0.1)))
    before = chain.to_dense()
    chain.schmidt_values(0)
    assert chain.canonical_residual() < 1e-10
    np.testing.assert_allclose(chain.to_dense(), before, atol=1e-10)


def test_infinite_state_copy_is_independent():
    state = init_product_state(ACTIVE)
    clone = state.copy()
    clone.gamma_a[...] = 0
    assert isinstance(clone, InfiniteMPS)
    assert np.any(state.gamma_a != 0)


def test_canonical_form_survives_truncation():
    state = init_product_state(ACTIVE, max_bond=4)
    gates = build_round_gates(dp_quantum_rates(0.7, 0.1), DISCRETE)
    truncated = 0.0
    for _ in range(3):
        state, report = apply_gate_pair(state, *gates)
        truncated += report.total_discarded
        assert max(state.bond_dims) <= 4
        assert state.canonical_residual() < 1e-8
    assert truncated > 0


def test_canonical_form_without_truncation():
    state = init_product_state(ACTIVE, max_bond=256)
    gates = build_round_gates(dp_quantum_rates(0.7, 0.1), DISCRETE)
    for _ in range(2):
        state, _ = apply_gate_pair(state, *gates)
        assert state.canonical_residual() < 1e-8


def test_infinite_chain_matches_finite_bulk():
    # sites 4 and 5 of a 10-site chain lie outside the boundary light cone for 3 rounds
    gates = build_round_gates(dp_quantum_rates(0.7, 0.1), DISCRETE)
    state = init_product_state(ACTIVE, max_bond=256)
    chain = FiniteMPS.from_product(ACTIVE, 10)
    for _ in range(3):
        state, report = apply_gate_pair(state, *gates)
        chain.apply_round(*gates)
    assert report.total_discarded < 1e-12
    bulk = finite_occupations(chain)[8:12]
    infinite = [reduce_density(state, q)[1, 1].real for q in range(4)]
    np.testing.assert_allclose(infinite, bulk, atol=1e-8)


def test_large_canonical_residual_is_logged(caplog, monkeypatch):
    monkeypatch.setattr(logging.getLogger("dpqca"), "propagate", True)
    monkeypatch.setattr(InfiniteMPS, "canonical_residual", lambda self: 1e-3)
    gates = build_round_gates(dp_quantum_rates(0.7), DISCRETE)
    with caplog.at_level(logging.WARNING, logger="dpqca.evolution"):
        evolve(init_product_state(ACTIVE, max_bond=4), gates, 1, hooks=[])
    assert any("canonical residual" in r.getMessage() for r in caplog.records)


@pytest.mark.slow
def test_doubling_bond_dimension_converges():
    gates = build_round_gates(dp_quantum_rates(0.7, 0.1))
    curves = []
    for max_bond in (64, 128):
        _, series = evolve(init_product_state(ACTIVE, max_bond=max_bond), gates, 100, hooks=[])
        curves.append(series.column("n"))
    assert np.max(np.abs(curves[0] - curves[1])) < 1e-3
