"""
Doubled-space Liouvillians for the three-cell rule and the round gates built from them.

Vectorization is row-major: |i><j| -> |i> (x) |j>, so that

    vec(A rho B) = (A (x) B^T) vec(rho)
    LL = -i (H (x) I - I (x) H^T) + sum_k [L_k (x) L_k* - 1/2 (L_k^dag L_k (x) I + I (x) L_k^T L_k*)]

Matrices built here use that natural "ket block, bra block" ordering. The MPS
engine needs the per-qubit interleaved ordering (i_0 j_0 i_1 j_1 ...), which
`to_site_major` provides; a coarse site of two qubits then carries a physical
index of dimension 16.

Partition layout over global qubits, with coarse sites A = (4k, 4k+1) and
B = (4k+2, 4k+3):

    P1: centres = 2 (mod 4)   V window, local centre q2
    P2: centres = 1 (mod 4)   V window, local centre q1
    P3: centres = 3 (mod 4)   W window (B then next A), local centre q1
    P4: centres = 0 (mod 4)   W window, local centre q2

so V = exp(tau LL_P2) exp(tau LL_P1), W = exp(tau LL_P4) exp(tau LL_P3) and
every cell is updated once per round.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .config import DEFAULT_DISCRETE_TAU, DEFAULT_TROTTER_CONSTANT, ScheduleMode
from .errors import CheckpointError, IllConditioned, InvalidParameters
from .model import ThreeCellParams

logger = logging.getLogger(__name__)

EXPM_TOLERANCE = 1e-8
GATE_MAGIC = b"DPQCA-GATE\n"

PROJECTORS = (
    np.array([[1, 0], [0, 0]], dtype=np.complex128),
    np.array([[0, 0], [0, 1]], dtype=np.complex128),
)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=np.complex128)  # |1><0|
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=np.complex128)  # |0><1|
NUMBER = PROJECTORS[1]

# per-qubit covectors in the (i, j) interleaved layout
IDENTITY_COVECTOR = np.array([1, 0, 0, 1], dtype=np.complex128)
NUMBER_COVECTOR = np.array([0, 0, 0, 1], dtype=np.complex128)

# (partition, local centre) pairs inside the two 4-qubit windows
V_PARTITIONS = (("P1", 2), ("P2", 1))
W_PARTITIONS = (("P3", 1), ("P4", 2))
PARTITION_RESIDUES = {"P1": 2, "P2": 1, "P3": 3, "P4": 0}


# ---------------------------------------------------------------------------
# Operator helpers
# ---------------------------------------------------------------------------


def embed(op: np.ndarray, site: int, n: int, *, sparse: bool = False):
    """Single-qubit `op` on `site` of an n-qubit register (qubit 0 most significant)."""
    if not 0 <= site < n:
        raise InvalidParameters(f"Site {site} outside register of {n} qubits")
    left, right = 2**site, 2 ** (n - site - 1)
    if sparse:
        return sp.kron(sp.kron(sp.identity(left, format="csr"), sp.csr_matrix(op)), sp.identity(right), format="csr")
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def vectorize(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=np.complex128).reshape(-1)


def devectorize(vec: np.ndarray) -> np.ndarray:
    dim = math.isqrt(vec.size)
    if dim * dim != vec.size:
        raise InvalidParameters(f"Vector of length {vec.size} is not a vectorized square matrix")
    return vec.reshape(dim, dim)


def liouvillian_from(hamiltonian, jumps: Iterable, *, sparse: bool = False):
    """LL = HH + DD for a Hamiltonian and a list of (already scaled) jump operators."""
    if sparse:
        kron, eye = (lambda a, b: sp.kron(a, b, format="csr")), (lambda d: sp.identity(d, format="csr"))
        h = sp.csr_matrix(hamiltonian)
    else:
        kron, eye = np.kron, np.eye
        h = np.asarray(hamiltonian, dtype=np.complex128)
    dim = h.shape[0]
    ident = eye(dim)
    out = -1j * (kron(h, ident) - kron(ident, h.T))
    for jump in jumps:
        jump = sp.csr_matrix(jump) if sparse else np.asarray(jump, dtype=np.complex128)
        decay = jump.conj().T @ jump
        out = out + kron(jump, jump.conj()) - 0.5 * (kron(decay, ident) + kron(ident, decay.T))
    return out


def rule_terms(
    params: ThreeCellParams,
    left: int,
    centre: int,
    right: int,
    n: int,
    *,
    sparse: bool = False,
):
    """Hamiltonian and scaled jump operators of one 3-cell rule on an n-qubit register."""
    dim = 2**n
    hamiltonian = sp.csr_matrix((dim, dim), dtype=np.complex128) if sparse else np.zeros((dim, dim), np.complex128)
    jumps: list = []
    for label, entry in params.entries():
        control = embed(PROJECTORS[label.alpha], left, n, sparse=sparse) @ embed(
            PROJECTORS[label.beta], right, n, sparse=sparse
        )
        if entry.theta:
            hamiltonian = hamiltonian + entry.omega * (control @ embed(PAULI_X, centre, n, sparse=sparse))
        if entry.gamma_plus:
            jumps.append(math.sqrt(entry.gamma_plus) * (control @ embed(SIGMA_PLUS, centre, n, sparse=sparse)))
        if entry.gamma_minus:
            jumps.append(math.sqrt(entry.gamma_minus) * (control @ embed(SIGMA_MINUS, centre, n, sparse=sparse)))
    return hamiltonian, jumps


def rule_liouvillian(params: ThreeCellParams, centre: int, n: int, *, sparse: bool = False):
    """Doubled-space generator of the rule centred on `centre` of an open n-qubit window."""
    if not 1 <= centre <= n - 2:
        raise InvalidParameters(f"Rule centre {centre} needs both neighbours inside {n} qubits")
    hamiltonian, jumps = rule_terms(params, centre - 1, centre, centre + 1, n, sparse=sparse)
    return liouvillian_from(hamiltonian, jumps, sparse=sparse)


def _site_major_perm(n: int) -> list[int]:
    perm: list[int] = []
    for q in range(n):
        perm.extend((q, n + q))
    return perm


def to_site_major(array: np.ndarray, n: int) -> np.ndarray:
    """Reorder a vectorized state (1-D) or superoperator (2-D) of n qubits to (i_0 j_0 i_1 j_1 ...)."""
    perm = _site_major_perm(n)
    if array.ndim == 1:
        return array.reshape((2,) * (2 * n)).transpose(perm).reshape(-1)
    tensor = array.reshape((2,) * (4 * n))
    full = perm + [2 * n + p for p in perm]
    return tensor.transpose(full).reshape(array.shape)


def from_site_major(array: np.ndarray, n: int) -> np.ndarray:
    inverse = np.argsort(_site_major_perm(n)).tolist()
    if array.ndim == 1:
        return array.reshape((2,) * (2 * n)).transpose(inverse).reshape(-1)
    tensor = array.reshape((2,) * (4 * n))
    full = inverse + [2 * n + p for p in inverse]
    return tensor.transpose(full).reshape(array.shape)


def identity_covector(n: int) -> np.ndarray:
    """<<I| over n qubits in the site-major layout."""
    out = np.ones(1, dtype=np.complex128)
    for _ in range(n):
        out = np.kron(out, IDENTITY_COVECTOR)
    return out


# ---------------------------------------------------------------------------
# Matrix exponential
# ---------------------------------------------------------------------------


def expm(matrix: np.ndarray, t: float = 1.0, *, check: bool = True) -> np.ndarray:
    """exp(matrix * t) by scaling and squaring with a Pade approximant.

    With `check` the result is compared against the square of exp(matrix * t / 2);
    a relative mismatch above EXPM_TOLERANCE raises IllConditioned.
    """
    a = np.asarray(matrix, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidParameters(f"expm needs a square matrix, got shape {a.shape}")
    if not math.isfinite(t):
        raise InvalidParameters(f"expm needs a finite time, got {t}")
    result = scipy.linalg.expm(a * t)
    if not np.all(np.isfinite(result)):
        raise IllConditioned(f"Matrix exponential overflowed (t={t}, norm={np.linalg.norm(a):.3g})")
    if check and t != 0:
        half = scipy.linalg.expm(a * (t / 2.0))
        scale = max(1.0, float(np.linalg.norm(result, ord=np.inf)))
        error = float(np.linalg.norm(half @ half - result, ord=np.inf)) / scale
        if error > EXPM_TOLERANCE:
            raise IllConditioned(f"Matrix exponential self-consistency error {error:.3g} exceeds {EXPM_TOLERANCE:g}")
    return result


# ---------------------------------------------------------------------------
# Three-cell Liouvillian
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Vectorized3CellLiouvillian:
    """64x64 generator of one rule on (left, centre, right) in natural ordering."""

    matrix: np.ndarray
    params: ThreeCellParams

    def block(self, alpha: int, beta: int) -> np.ndarray:
        """4x4 generator of the centre qubit with the neighbours frozen in |alpha>, |beta>.

        The subspace spanned by |alpha c beta><alpha c' beta| is invariant because
        the neighbours only enter through diagonal projectors.
        """
        rows = [((alpha * 4 + c * 2 + beta) * 8) + (alpha * 4 + cp * 2 + beta) for c in (0, 1) for cp in (0, 1)]
        return self.matrix[np.ix_(rows, rows)]

    def spectrum(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)

    def trace_residual(self) -> float:
        ident = vectorize(np.eye(8))
        return float(np.max(np.abs(ident @ self.matrix)))


def build_3cell_liouvillian(params: ThreeCellParams) -> Vectorized3CellLiouvillian:
    matrix = np.asarray(rule_liouvillian(params, 1, 3), dtype=np.complex128)
    matrix.setflags(write=False)
    return Vectorized3CellLiouvillian(matrix=matrix, params=params)


# ---------------------------------------------------------------------------
# Schedule and gates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleConfig:
    mode: ScheduleMode = ScheduleMode.CONTINUOUS
    tau: float | None = None
    trotter_constant: float = DEFAULT_TROTTER_CONSTANT
    partitions: tuple[str, ...] = ("P1", "P2", "P3", "P4")

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", ScheduleMode(self.mode))
        if self.tau is not None and not self.tau > 0:
            raise InvalidParameters(f"tau must be > 0, got {self.tau}")
        if self.trotter_constant <= 0:
            raise InvalidParameters(f"Trotter constant must be > 0, got {self.trotter_constant}")
        if tuple(self.partitions) != ("P1", "P2", "P3", "P4"):
            raise InvalidParameters(f"Unsupported partition order {self.partitions}")

    def tau_for(self, p: float | None) -> float:
        """Layer duration; continuous mode keeps tau^2 p (1 - p) = C, capped at tau = 1."""
        if self.tau is not None:
            return float(self.tau)
        if self.mode == ScheduleMode.DISCRETE:
            return DEFAULT_DISCRETE_TAU
        if p is None:
            raise InvalidParameters("Continuous schedule without explicit tau needs a site-DP p")
        variance = max(p * (1.0 - p), self.trotter_constant)
        return math.sqrt(self.trotter_constant / variance)

    def time_per_round(self, p: float | None) -> float:
        if self.mode == ScheduleMode.DISCRETE:
            return 1.0
        return len(self.partitions) * self.tau_for(p)

    def to_dict(self, p: float | None = None) -> dict[str, object]:
        data: dict[str, object] = {
            "mode": self.mode.value,
            "tau": self.tau,
            "trotter_constant": self.trotter_constant,
            "partitions": list(self.partitions),
        }
        try:
            data["effective_tau"] = self.tau_for(p)
        except InvalidParameters:
            pass
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ScheduleConfig":
        return cls(
            mode=ScheduleMode(data.get("mode", ScheduleMode.CONTINUOUS.value)),
            tau=data.get("tau"),
            trotter_constant=float(data.get("trotter_constant", DEFAULT_TROTTER_CONSTANT)),
        )


@dataclass(frozen=True, eq=False)
class SuperOperatorGate:
    """exp(tau LL) products over a 4-qubit window.

    `matrix` is in natural ordering (256x256); `tensor` is the site-major
    two-coarse-site view with axes (out_A, out_B, in_A, in_B), each of size 16.
    """

    matrix: np.ndarray
    tau: float
    provenance: tuple[str, ...]
    params_digest: str = ""
    qubits: int = 4
    tensor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=np.complex128)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        # two-qubit coarse sites of dimension 16 when the window splits evenly
        shape = (16,) * self.qubits if self.qubits % 2 == 0 else (4,) * (2 * self.qubits)
        tensor = to_site_major(matrix, self.qubits).reshape(shape)
        tensor.setflags(write=False)
        object.__setattr__(self, "tensor", tensor)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Apply to a window density matrix (natural ordering)."""
        return devectorize(self.matrix @ vectorize(rho))

    def trace_residual(self) -> float:
        ident = vectorize(np.eye(2**self.qubits))
        return float(np.max(np.abs(ident @ self.matrix - ident)))

    @classmethod
    def identity(cls, qubits: int = 4) -> "SuperOperatorGate":
        return cls(matrix=np.eye(4**qubits), tau=0.0, provenance=("identity",), qubits=qubits)


def single_partition_gate(params: ThreeCellParams, tau: float, centre: int, *, qubits: int = 4) -> SuperOperatorGate:
    """exp(tau LL) of one rule centred on `centre` inside a `qubits`-wide window."""
    if tau <= 0:
        raise InvalidParameters(f"tau must be > 0, got {tau}")
    generator = np.asarray(rule_liouvillian(params, centre, qubits))
    return SuperOperatorGate(
        matrix=expm(generator, tau),
        tau=tau,
        provenance=(f"rule@q{centre}",),
        params_digest=params.digest(),
        qubits=qubits,
    )


def _window_gate(params: ThreeCellParams, tau: float, partitions: Sequence[tuple[str, int]]) -> SuperOperatorGate:
    matrix = np.eye(256, dtype=np.complex128)
    for _, centre in partitions:
        # later partitions act after earlier ones
        matrix = expm(np.asarray(rule_liouvillian(params, centre, 4)), tau) @ matrix
    return SuperOperatorGate(
        matrix=matrix,
        tau=tau,
        provenance=tuple(name for name, _ in partitions),
        params_digest=params.digest(),
    )


_GATE_CACHE: dict[tuple[str, float], tuple[SuperOperatorGate, SuperOperatorGate]] = {}
_GATE_CACHE_LOCK = threading.Lock()


def clear_gate_cache() -> None:
    with _GATE_CACHE_LOCK:
        _GATE_CACHE.clear()


def build_round_gates(
    params: ThreeCellParams, schedule: ScheduleConfig | None = None
) -> tuple[SuperOperatorGate, SuperOperatorGate]:
    """V (A-B bonds, P1 then P2) and W (B-A bonds, P3 then P4) for one round."""
    schedule = schedule or ScheduleConfig()
    tau = schedule.tau_for(params.p)
    key = (params.digest(), tau)
    with _GATE_CACHE_LOCK:
        cached = _GATE_CACHE.get(key)
    if cached is not None:
        return cached

    logger.debug("Building round gates tau=%.6g digest=%s", tau, key[0][:12])
    gates = (_window_gate(params, tau, V_PARTITIONS), _window_gate(params, tau, W_PARTITIONS))
    with _GATE_CACHE_LOCK:
        _GATE_CACHE[key] = gates
    return gates


# ---------------------------------------------------------------------------
# Binary dump
# ---------------------------------------------------------------------------


def export_gate(gate: SuperOperatorGate, path: Path | str, *, extra: dict | None = None) -> Path:
    """Write a JSON header line followed by the row-major complex128 matrix."""
    path = Path(path)
    header = {
        "dims": list(gate.matrix.shape),
        "tau": gate.tau,
        "params_digest": gate.params_digest,
        "provenance": list(gate.provenance),
        "qubits": gate.qubits,
        "ordering": "natural",
        "dtype": "complex128",
    }
    if extra:
        header.update(extra)
    with path.open("wb") as handle:
        handle.write(GATE_MAGIC)
        handle.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        handle.write(np.ascontiguousarray(gate.matrix, dtype="<c16").tobytes())
    return path


def load_gate(path: Path | str) -> SuperOperatorGate:
    path = Path(path)
    try:
        with path.open("rb") as handle:
            if handle.readline() != GATE_MAGIC:
                raise CheckpointError(f"{path} is not a gate dump")
            header = json.loads(handle.readline().decode("utf-8"))
            payload = handle.read()
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"Could not read gate dump {path}") from exc

    rows, cols = header["dims"]
    data = np.frombuffer(payload, dtype="<c16")
    if data.size != rows * cols:
        raise CheckpointError(f"Gate dump {path} holds {data.size} entries, header says {rows}x{cols}")
    return SuperOperatorGate(
        matrix=data.reshape(rows, cols),
        tau=float(header["tau"]),
        provenance=tuple(header.get("provenance", ())),
        params_digest=header.get("params_digest", ""),
        qubits=int(header.get("qubits", 4)),
    )


__all__ = [
    "IDENTITY_COVECTOR",
    "NUMBER_COVECTOR",
    "PARTITION_RESIDUES",
    "ScheduleConfig",
    "SuperOperatorGate",
    "Vectorized3CellLiouvillian",
    "build_3cell_liouvillian",
    "build_round_gates",
    "clear_gate_cache",
    "embed",
    "export_gate",
    "expm",
    "from_site_major",
    "identity_covector",
    "liouvillian_from",
    "load_gate",
    "rule_liouvillian",
    "rule_terms",
    "single_partition_gate",
    "to_site_major",
    "vectorize",
    "devectorize",
]
