"""
Observables of operator-space MPS and plain density matrices.

Expectation values are read with the trace functional: every qubit that is
not observed is contracted with <<I| = (1, 0, 0, 1), and the result is divided
by the same contraction with nothing observed. For the infinite state the
environment is the dominant left/right eigenpair of the identity-contracted
unit-cell transfer matrix.

The half-chain entropy is the Shannon entropy (natural log) of the squared,
renormalised Schmidt values of the doubled-space MPS. For mixed states this is
not the von Neumann entropy of a physical half chain.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidDensityMatrix, InvalidParameters, NonPhysicalInput
from .mps import PHYS_DIM, FiniteMPS, InfiniteMPS
from .superop import IDENTITY_COVECTOR, NUMBER_COVECTOR, PAULI_Y

logger = logging.getLogger(__name__)

ENTROPY_LOG_BASE = "natural"
POSITIVITY_WARNING = -1e-6
CONCURRENCE_TOLERANCE = -1e-4
CELL_QUBITS = 4
CELL_PAIRS = ((0, 1), (1, 2), (2, 3))


# ---------------------------------------------------------------------------
# Plain matrices
# ---------------------------------------------------------------------------


def _check_density(rho: np.ndarray, dim: int, *, tol: float = 1e-8) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (dim, dim):
        raise InvalidDensityMatrix(f"Expected a {dim}x{dim} density matrix, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise InvalidDensityMatrix("Density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise InvalidDensityMatrix(f"Density matrix trace {np.trace(rho).real:.6g} != 1")
    return rho


def min_eigenvalue(rho: np.ndarray, *, label: str = "") -> float:
    """Smallest eigenvalue of the Hermitian part; logs a warning below -1e-6."""
    rho = np.asarray(rho, dtype=np.complex128)
    value = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    if value < POSITIVITY_WARNING:
        logger.warning("Reduced density matrix %s has eigenvalue %.3g", label or "", value)
    return value


def l1_coherence(rho: np.ndarray) -> float:
    """Sum of absolute off-diagonal elements."""
    rho = np.asarray(rho)
    return float(np.sum(np.abs(rho)) - np.sum(np.abs(np.diag(rho))))


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence of a two-qubit density matrix."""
    rho = _check_density(rho, 4)
    rho = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(rho)
    if w[0] < CONCURRENCE_TOLERANCE:
        raise NonPhysicalInput(f"Two-qubit state has eigenvalue {w[0]:.3g} below {CONCURRENCE_TOLERANCE:g}")
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    yy = np.kron(PAULI_Y, PAULI_Y)
    flipped = yy @ rho.conj() @ yy
    # sqrt(rho) rho~ sqrt(rho) shares the spectrum of rho rho~ and is Hermitian
    lambdas = np.sqrt(np.clip(np.linalg.eigvalsh(root @ flipped @ root), 0.0, None))[::-1]
    return float(max(0.0, lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]))


def _legs_to_matrix(tensor: np.ndarray, k: int) -> np.ndarray:
    """(4,)*k tensor of per-qubit (i, j) legs -> normalised 2^k x 2^k matrix."""
    t = tensor.reshape((2, 2) * k)
    perm = [2 * q for q in range(k)] + [2 * q + 1 for q in range(k)]
    rho = t.transpose(perm).reshape(2**k, 2**k)
    trace = np.trace(rho)
    if abs(trace) == 0:
        raise InvalidDensityMatrix("Reduced state has zero trace")
    return rho / trace


def _check_window(qubits: Sequence[int], size: int) -> tuple[int, ...]:
    qubits = tuple(int(q) for q in qubits)
    if len(qubits) not in (1, 2):
        raise InvalidParameters(f"Reduced states cover one or two qubits, got {qubits}")
    if len(qubits) == 2 and qubits[1] != qubits[0] + 1:
        raise InvalidParameters(f"Two-qubit reduced states need adjacent qubits, got {qubits}")
    if min(qubits) < 0 or max(qubits) >= size:
        raise InvalidParameters(f"Qubits {qubits} outside 0..{size - 1}")
    return qubits


# ---------------------------------------------------------------------------
# Infinite MPS
# ---------------------------------------------------------------------------


@dataclass
class CellEnvironment:
    """Unit-cell tensor (D, 4, 4, 4, 4, D) plus the identity-transfer fixed points."""

    cell: np.ndarray
    left: np.ndarray
    right: np.ndarray
    eigenvalue: complex

    def contract(self, covectors: Sequence[np.ndarray | None]) -> np.ndarray:
        """Contract each cell qubit with its covector; `None` keeps the leg open."""
        t = self.cell
        axis = 1
        for cov in covectors:
            if cov is None:
                axis += 1
            else:
                t = np.tensordot(t, cov, axes=(axis, 0))
        t = np.tensordot(self.left, t, axes=(0, 0))
        return np.tensordot(t, self.right, axes=(t.ndim - 1, 0))


def cell_environment(state: InfiniteMPS) -> CellEnvironment:
    cell = state.cell_tensor()
    d = cell.shape[0]
    identity_cell = np.tensordot(
        np.tensordot(cell.reshape(d, PHYS_DIM, PHYS_DIM, d), _site_identity(), axes=(1, 0)),
        _site_identity(),
        axes=(1, 0),
    )
    values, left, right = scipy.linalg.eig(identity_cell, left=True, right=True)
    k = int(np.argmax(np.abs(values)))
    l_vec, r_vec = left[:, k].conj(), right[:, k]
    overlap = l_vec @ r_vec
    if abs(overlap) == 0:
        raise InvalidDensityMatrix("Identity transfer matrix has orthogonal fixed points")
    return CellEnvironment(
        cell=cell.reshape((d,) + (4,) * CELL_QUBITS + (d,)),
        left=l_vec,
        right=r_vec / overlap,
        eigenvalue=values[k],
    )


def _site_identity() -> np.ndarray:
    return np.kron(IDENTITY_COVECTOR, IDENTITY_COVECTOR)


def reduced_density_infinite(
    state: InfiniteMPS, qubits: Sequence[int], *, env: CellEnvironment | None = None
) -> np.ndarray:
    """Reduced matrix of one qubit or an adjacent pair inside the four-qubit unit cell."""
    qubits = _check_window(qubits, CELL_QUBITS)
    env = env or cell_environment(state)
    covectors = [None if q in qubits else IDENTITY_COVECTOR for q in range(CELL_QUBITS)]
    return _legs_to_matrix(env.contract(covectors), len(qubits))


# ---------------------------------------------------------------------------
# Finite MPS
# ---------------------------------------------------------------------------


def _finite_contract(state: FiniteMPS, covectors: Sequence[np.ndarray | None]) -> np.ndarray:
    out: np.ndarray | None = None
    for s, tensor in enumerate(state.tensors):
        t = tensor.reshape(tensor.shape[0], 4, 4, tensor.shape[2])
        second = covectors[2 * s + 1]
        first = covectors[2 * s]
        if second is not None:
            t = np.tensordot(t, second, axes=(2, 0))
        if first is not None:
            t = np.tensordot(t, first, axes=(1, 0))
        out = t if out is None else np.tensordot(out, t, axes=(out.ndim - 1, 0))
    assert out is not None
    return out.reshape(out.shape[1:-1])


def reduced_density_finite(state: FiniteMPS, qubits: Sequence[int]) -> np.ndarray:
    qubits = _check_window(qubits, state.n_qubits)
    covectors = [None if q in qubits else IDENTITY_COVECTOR for q in range(state.n_qubits)]
    return _legs_to_matrix(_finite_contract(state, covectors), len(qubits))


def finite_occupations(state: FiniteMPS) -> np.ndarray:
    norm = _finite_contract(state, [IDENTITY_COVECTOR] * state.n_qubits)
    out = np.empty(state.n_qubits)
    for q in range(state.n_qubits):
        covectors = [IDENTITY_COVECTOR] * state.n_qubits
        covectors[q] = NUMBER_COVECTOR
        out[q] = float(np.real(_finite_contract(state, covectors) / norm))
    return out


# ---------------------------------------------------------------------------
# Dispatching observables
# ---------------------------------------------------------------------------


def reduce_density(state: InfiniteMPS | FiniteMPS, sites: Sequence[int] | int) -> np.ndarray:
    """Reduced density matrix of one qubit or two adjacent qubits."""
    if isinstance(sites, int):
        sites = (sites,)
    if isinstance(state, FiniteMPS):
        return reduced_density_finite(state, sites)
    return reduced_density_infinite(state, sites)


def occupation_density(state: InfiniteMPS | FiniteMPS, *, env: CellEnvironment | None = None) -> float:
    """<n> averaged over the unit cell (infinite) or over all qubits (finite)."""
    if isinstance(state, FiniteMPS):
        return float(np.mean(finite_occupations(state)))
    env = env or cell_environment(state)
    norm = env.contract([IDENTITY_COVECTOR] * CELL_QUBITS)
    total = 0.0
    for q in range(CELL_QUBITS):
        covectors: list[np.ndarray | None] = [IDENTITY_COVECTOR] * CELL_QUBITS
        covectors[q] = NUMBER_COVECTOR
        total += float(np.real(env.contract(covectors) / norm))
    return total / CELL_QUBITS


def bond_entropy(schmidt: np.ndarray) -> float:
    s = np.asarray(schmidt, dtype=np.float64)
    s = s[s > 0]
    if s.size == 0:
        return 0.0
    weights = s**2 / np.sum(s**2)
    return float(-np.sum(weights * np.log(weights)))


def half_chain_entropy(state: InfiniteMPS | FiniteMPS) -> float:
    """Mean of the two bond entropies (infinite) or the central-bond entropy (finite)."""
    if isinstance(state, FiniteMPS):
        if state.n_sites < 2:
            return 0.0
        return bond_entropy(state.schmidt_values(state.n_sites // 2 - 1))
    return 0.5 * (bond_entropy(state.lambda_ab) + bond_entropy(state.lambda_ba))


def measure(state: InfiniteMPS | FiniteMPS) -> dict[str, float]:
    """n, S, mean single-qubit C1 and the largest adjacent-pair concurrence."""
    if isinstance(state, FiniteMPS):
        singles = [reduced_density_finite(state, (q,)) for q in range(state.n_qubits)]
        pairs = [reduced_density_finite(state, (q, q + 1)) for q in range(state.n_qubits - 1)]
        n = float(np.mean([s[1, 1].real for s in singles]))
    else:
        env = cell_environment(state)
        singles = [reduced_density_infinite(state, (q,), env=env) for q in range(CELL_QUBITS)]
        pairs = [reduced_density_infinite(state, pair, env=env) for pair in CELL_PAIRS]
        n = float(np.mean([s[1, 1].real for s in singles]))

    conc = 0.0
    for i, pair in enumerate(pairs):
        min_eigenvalue(pair, label=f"pair {i}")
        herm = 0.5 * (pair + pair.conj().T)
        try:
            conc = max(conc, concurrence(herm))
        except NonPhysicalInput as exc:
            logger.warning("Skipping concurrence of pair %d: %s", i, exc)
    return {
        "n": n,
        "S": half_chain_entropy(state),
        "C1": float(np.mean([l1_coherence(s) for s in singles])),
        "concurrence": conc,
    }


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("round", "t", "n", "S", "C1", "concurrence", "trace_drift", "discarded_weight")
LONG_COLUMNS = ("p", "omega", "mode", "round", "t", "observable", "value")
LONG_OBSERVABLES = ("n", "S", "C1", "concurrence")


@dataclass
class TrajectoryRecord:
    round: int
    t: float
    n: float
    S: float
    C1: float
    concurrence: float
    trace_drift: float = 0.0
    discarded_weight: float = 0.0
    max_bond: int = 1


@dataclass
class TrajectorySeries:
    records: list[TrajectoryRecord] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.metadata.setdefault("entropy_log_base", ENTROPY_LOG_BASE)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: TrajectoryRecord) -> None:
        self.records.append(record)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    def curve(self) -> tuple[np.ndarray, np.ndarray]:
        """(t, n) for the critical-point analysis."""
        return self.column("t"), self.column("n")

    @property
    def final(self) -> TrajectoryRecord:
        return self.records[-1]

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_COLUMNS)
            for record in self.records:
                writer.writerow([record.round] + [repr(float(getattr(record, c))) for c in CSV_COLUMNS[1:]])
        return path

    @classmethod
    def from_csv(cls, path: Path | str, *, metadata: Mapping[str, Any] | None = None) -> "TrajectorySeries":
        with Path(path).open(newline="") as handle:
            rows = list(csv.DictReader(handle))
        records = [
            TrajectoryRecord(
                round=int(row["round"]),
                **{c: float(row[c]) for c in CSV_COLUMNS[1:] if c in row and row[c] != ""},
            )
            for row in rows
        ]
        return cls(records=records, metadata=dict(metadata or {}))

    def to_dict(self) -> dict[str, Any]:
        return {"metadata": self.metadata, "records": [asdict(r) for r in self.records]}

    def to_json(self, path: Path | str | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source: Path | str) -> "TrajectorySeries":
        text = source.read_text() if isinstance(source, Path) else str(source)
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text()
        data = json.loads(text)
        return cls(
            records=[TrajectoryRecord(**r) for r in data.get("records", [])],
            metadata=dict(data.get("metadata", {})),
        )

    def long_rows(self) -> Iterable[dict[str, Any]]:
        """Plot-ready rows, one per (record, observable)."""
        p = self.metadata.get("p")
        omega = self.metadata.get("omega")
        mode = self.metadata.get("mode")
        for record in self.records:
            for name in LONG_OBSERVABLES:
                yield {
                    "p": p,
                    "omega": omega,
                    "mode": mode,
                    "round": record.round,
                    "t": record.t,
                    "observable": name,
                    "value": getattr(record, name),
                }


def write_long_csv(series: Iterable[TrajectorySeries], path: Path | str) -> Path:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=LONG_COLUMNS)
        writer.writeheader()
        for item in series:
            for row in item.long_rows():
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return path
