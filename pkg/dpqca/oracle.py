"""
Dense reference integrator for small chains and single three-cell windows.

Everything here works on full 2^N x 2^N density matrices (N <= 7) and is used
to check the closed-form rates, the gates and the MPS engine.
"""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import RatePreset, ScheduleMode
from .errors import (
    DegenerateNullSpace,
    DimensionOverflow,
    InvalidDensityMatrix,
    InvalidParameters,
    NegativeDiscriminant,
    NonPhysicalInput,
)
from .model import (
    LABELS,
    NeighborhoodLabel,
    SteadyState3Cell,
    ThreeCellParams,
    closed_form_coherence,
    dp_quantum_rates,
    preset_rates,
    steady_state_3cell,
)
from .mps import FiniteMPS
from .observables import concurrence, finite_occupations, reduce_density
from .superop import (
    ScheduleConfig,
    build_3cell_liouvillian,
    build_round_gates,
    devectorize,
    from_site_major,
    liouvillian_from,
    rule_terms,
    single_partition_gate,
    to_site_major,
    vectorize,
)

logger = logging.getLogger(__name__)

MAX_QUBITS = 7
NULL_TOLERANCE = 1e-10
# residue order of the partitions inside one round
ROUND_RESIDUES = (2, 1, 3, 0)
ACCEPTANCE_GRID = tuple((p, omega) for p in (0.3, 0.5, 0.7, 0.9) for omega in (0.0, 0.05, 0.1))
ACTIVE = np.array([[0, 0], [0, 1]], dtype=np.complex128)


def _check_size(n: int) -> None:
    if n > MAX_QUBITS:
        raise DimensionOverflow(f"Dense oracle holds at most {MAX_QUBITS} qubits, got {n}")
    if n < 1:
        raise InvalidParameters(f"Need at least one qubit, got {n}")


def check_dense_state(rho: np.ndarray, *, tol: float = 1e-10) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidDensityMatrix(f"Density matrix must be square, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise InvalidDensityMatrix("Density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise InvalidDensityMatrix(f"Density matrix trace {np.trace(rho).real:.6g} != 1")
    return rho


def dense_product_state(local_density_matrix: np.ndarray, n: int) -> np.ndarray:
    _check_size(n)
    local = check_dense_state(local_density_matrix)
    out = np.ones((1, 1), dtype=np.complex128)
    for _ in range(n):
        out = np.kron(out, local)
    return out


def reduce_dense(rho: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Partial trace onto `qubits` (kept in ascending order)."""
    rho = np.asarray(rho, dtype=np.complex128)
    n = int(round(np.log2(rho.shape[0])))
    keep = sorted(int(q) for q in qubits)
    if not keep or keep[0] < 0 or keep[-1] >= n:
        raise InvalidParameters(f"Qubits {qubits} outside register of {n}")
    letters = string.ascii_letters
    kets = list(letters[:n])
    bras = [letters[n + q] if q in keep else kets[q] for q in range(n)]
    out = "".join(kets[q] for q in keep) + "".join(bras[q] for q in keep)
    reduced = np.einsum("".join(kets) + "".join(bras) + "->" + out, rho.reshape((2,) * (2 * n)))
    return reduced.reshape(2 ** len(keep), 2 ** len(keep))


def occupations_dense(rho: np.ndarray) -> np.ndarray:
    n = int(round(np.log2(rho.shape[0])))
    return np.array([reduce_dense(rho, (q,))[1, 1].real for q in range(n)])


# ---------------------------------------------------------------------------
# Chain Liouvillian
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DenseLiouvillian:
    matrix: sp.csr_matrix
    n: int
    boundary: str
    params: ThreeCellParams

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def trace_residual(self) -> float:
        ident = vectorize(np.eye(2**self.n))
        return float(np.max(np.abs(self.matrix.T @ ident)))


def assemble_chain_liouvillian(params: ThreeCellParams, n: int, boundary: str = "periodic") -> DenseLiouvillian:
    """Sum of the three-cell rules centred on every qubit (open: on 1..n-2)."""
    if n < 3:
        raise InvalidParameters(f"Chain needs at least 3 qubits, got {n}")
    _check_size(n)
    if boundary == "periodic":
        centres = [((j - 1) % n, j, (j + 1) % n) for j in range(n)]
    elif boundary == "open":
        centres = [(j - 1, j, j + 1) for j in range(1, n - 1)]
    else:
        raise InvalidParameters(f"Unknown boundary '{boundary}'")

    dim = 2**n
    hamiltonian = sp.csr_matrix((dim, dim), dtype=np.complex128)
    jumps: list = []
    for left, centre, right in centres:
        h, js = rule_terms(params, left, centre, right, n, sparse=True)
        hamiltonian = hamiltonian + h
        jumps.extend(js)
    matrix = sp.csr_matrix(liouvillian_from(hamiltonian, jumps, sparse=True))
    return DenseLiouvillian(matrix=matrix, n=n, boundary=boundary, params=params)


def integrate(state: np.ndarray, liouvillian: DenseLiouvillian, t: float) -> np.ndarray:
    """exp(LL t) applied to the vectorized state."""
    if t < 0:
        raise InvalidParameters(f"t must be >= 0, got {t}")
    rho = check_dense_state(state, tol=1e-8)
    if rho.shape[0] != 2**liouvillian.n:
        raise InvalidParameters(f"State of dim {rho.shape[0]} does not fit a {liouvillian.n}-qubit Liouvillian")
    if t == 0:
        return rho.copy()
    vec = spla.expm_multiply(liouvillian.matrix * t, vectorize(rho))
    return devectorize(np.asarray(vec))


def conditional_steady_state(params: ThreeCellParams, neighborhood: NeighborhoodLabel | str) -> SteadyState3Cell:
    """Null vector of the centre-qubit block with the outer qubits frozen."""
    if isinstance(neighborhood, str):
        neighborhood = NeighborhoodLabel.from_code(neighborhood)
    block = build_3cell_liouvillian(params).block(neighborhood.alpha, neighborhood.beta)
    _, s, vh = scipy.linalg.svd(block)
    scale = max(float(s[0]), 1.0)
    null_dim = int(np.count_nonzero(s < NULL_TOLERANCE * scale))
    if null_dim > 1:
        raise DegenerateNullSpace(f"Neighborhood {neighborhood} has a {null_dim}-dimensional stationary space")
    if null_dim == 0:
        logger.warning("Neighborhood %s: smallest singular value %.3g above tolerance", neighborhood, s[-1])
    rho = vh[-1].conj().reshape(2, 2)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    return SteadyState3Cell(rho00=float(rho[0, 0].real), rho11=float(rho[1, 1].real), rho01=complex(rho[0, 1]))


# ---------------------------------------------------------------------------
# Trotter-matched propagation
# ---------------------------------------------------------------------------


def _apply_local(tensor: np.ndarray, propagator: np.ndarray, centre: int) -> np.ndarray:
    axes = [centre - 1, centre, centre + 1]
    out = np.tensordot(propagator, tensor, axes=([3, 4, 5], axes))
    return np.moveaxis(out, [0, 1, 2], axes)


def apply_partition_schedule(
    state: np.ndarray,
    params: ThreeCellParams,
    schedule: ScheduleConfig,
    rounds: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the four-partition round on an open chain; returns (final state, occupations per round).

    Partition k updates the centres c in 1..n-2 with c = 2, 1, 3, 0 (mod 4) in
    that order, the same sequence the MPS gates V and W produce.
    """
    rho = check_dense_state(state, tol=1e-8)
    n = int(round(np.log2(rho.shape[0])))
    _check_size(n)
    if n < 3:
        raise InvalidParameters(f"Chain needs at least 3 qubits, got {n}")
    tau = schedule.tau_for(params.p)
    propagator = single_partition_gate(params, tau, 1, qubits=3).tensor

    tensor = to_site_major(vectorize(rho), n).reshape((4,) * n)
    occupations = np.zeros((rounds + 1, n))
    occupations[0] = occupations_dense(rho)
    for r in range(1, rounds + 1):
        for residue in ROUND_RESIDUES:
            for centre in range(1, n - 1):
                if centre % 4 == residue:
                    tensor = _apply_local(tensor, propagator, centre)
        current = devectorize(from_site_major(tensor.reshape(-1), n))
        occupations[r] = occupations_dense(current / np.trace(current))
    rho = devectorize(from_site_major(tensor.reshape(-1), n))
    return rho / np.trace(rho), occupations


# ---------------------------------------------------------------------------
# Concurrence and steady-state reports
# ---------------------------------------------------------------------------


def _pair_concurrence(rho: np.ndarray, pairs: Iterable[tuple[int, int]]) -> float:
    best = 0.0
    for pair in pairs:
        reduced = reduce_dense(rho, pair)
        reduced = 0.5 * (reduced + reduced.conj().T)
        try:
            best = max(best, concurrence(reduced / np.trace(reduced)))
        except NonPhysicalInput as exc:
            logger.warning("Pair %s skipped: %s", pair, exc)
    return best


def single_rule_concurrence(params: ThreeCellParams | None = None, tau: float = 10.0) -> dict[str, float]:
    """Adjacent-pair concurrence after one rule, two overlapping rules and one full round.

    "single_rule": one rule on |111>; the neighbours only act as diagonal
    controls, so this is a product state.
    "overlapping_rules": the V-window pair (centre q2, then centre q1) on
    |1111>, pair (1, 2).
    "full_round": all four partitions on six qubits, largest adjacent pair.
    """
    params = params or dp_quantum_rates(0.8, 0.1)
    active = ACTIVE

    three = single_partition_gate(params, tau, 1, qubits=3).apply(dense_product_state(active, 3))
    first = single_partition_gate(params, tau, 2)
    second = single_partition_gate(params, tau, 1)
    four = second.apply(first.apply(dense_product_state(active, 4)))
    six, _ = apply_partition_schedule(
        dense_product_state(active, 6), params, ScheduleConfig(mode=ScheduleMode.DISCRETE, tau=tau), 1
    )
    return {
        "single_rule": _pair_concurrence(three, [(0, 1), (1, 2)]),
        "overlapping_rules": _pair_concurrence(four, [(1, 2)]),
        "full_round": _pair_concurrence(six, [(q, q + 1) for q in range(5)]),
    }


def oracle_report(
    grid: Iterable[tuple[float, float]] = ACCEPTANCE_GRID,
    *,
    preset: RatePreset | str = RatePreset.TABLE,
    tolerance: float = 1e-9,
) -> dict[str, Any]:
    """Closed-form versus null-space steady states over a (p, omega) grid."""
    points: list[dict[str, Any]] = []
    worst = 0.0
    for p, omega in grid:
        try:
            params = preset_rates(preset, p, omega)
        except (NegativeDiscriminant, InvalidParameters) as exc:
            points.append({"p": p, "omega": omega, "skipped": str(exc)})
            continue
        residuals: dict[str, float] = {}
        for label in LABELS:
            entry = params.entry(label)
            closed = steady_state_3cell(entry).matrix()
            numeric = conditional_steady_state(params, label).matrix()
            residuals[label.code] = float(np.max(np.abs(closed - numeric)))
        top = params.entry("11")
        coherence_gap = abs(
            closed_form_coherence(top.p, top.omega, top.gamma_minus) - steady_state_3cell(top).rho01
        )
        point_max = max(residuals.values())
        worst = max(worst, point_max)
        points.append(
            {
                "p": p,
                "omega": omega,
                "gamma_plus": list(params.gamma_plus),
                "gamma_minus": list(params.gamma_minus),
                "residuals": residuals,
                "max_residual": point_max,
                "coherence_formula_gap": float(coherence_gap),
            }
        )
    logger.info("Oracle grid: %d points, max residual %.3g", len(points), worst)
    return {
        "preset": RatePreset(preset).value,
        "tolerance": tolerance,
        "max_residual": worst,
        "passed": worst < tolerance,
        "points": points,
    }


def compare_finite_chain(
    params: ThreeCellParams,
    schedule: ScheduleConfig,
    *,
    n_sites: int = 3,
    rounds: int = 10,
    max_bond: int | None = None,
) -> dict[str, Any]:
    """Largest gaps between the open-chain MPS and the dense schedule over `rounds` rounds.

    Occupations are compared per qubit; reduced states over every single qubit
    and every adjacent pair, elementwise.
    """
    V, W = build_round_gates(params, schedule)
    state = FiniteMPS.from_product(ACTIVE, n_sites, max_bond=max_bond)
    dense = dense_product_state(ACTIVE, 2 * n_sites)
    windows = [(q,) for q in range(2 * n_sites)] + [(q, q + 1) for q in range(2 * n_sites - 1)]
    worst_n, worst_reduced = 0.0, 0.0
    for _ in range(rounds):
        state.apply_round(V, W)
        dense, _ = apply_partition_schedule(dense, params, schedule, 1)
        worst_n = max(worst_n, float(np.max(np.abs(finite_occupations(state) - occupations_dense(dense)))))
        for window in windows:
            gap = np.max(np.abs(reduce_density(state, window) - reduce_dense(dense, window)))
            worst_reduced = max(worst_reduced, float(gap))
    return {
        "n_sites": n_sites,
        "rounds": rounds,
        "tau": V.tau,
        "max_occupation_deviation": worst_n,
        "max_reduced_deviation": worst_reduced,
    }
