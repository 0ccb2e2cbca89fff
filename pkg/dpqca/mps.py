"""
Operator-space matrix product states of the vectorized density matrix.

Every MPS site is a coarse site of two qubits whose physical index runs over
the 16 values (i_0 j_0 i_1 j_1) of the site-major vectorization. Tensors have
axes (left bond, physical, right bond).

The infinite state keeps the two-site unit cell in Vidal form

    ... lambda_BA  Gamma_A  lambda_AB  Gamma_B  lambda_BA ...

and is brought back to canonical form after every gate layer: the dominant
fixed points of the transfer maps over one bond fix a gauge in which both
bonds are Schmidt decompositions of the operator-space vector. Tensors are
kept at unit 2-norm; the trace functional is applied when observables are
read (see `dpqca.observables`).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .config import TruncationMode
from .errors import BondOverflow, CheckpointError, InvalidDensityMatrix, InvalidParameters, RegaugeFailure, SVDFailure
from .superop import IDENTITY_COVECTOR, SuperOperatorGate, from_site_major, vectorize

logger = logging.getLogger(__name__)

PHYS_DIM = 16
SITE_IDENTITY = np.kron(IDENTITY_COVECTOR, IDENTITY_COVECTOR)
# relative floor below which Schmidt values count as exact zeros
SCHMIDT_FLOOR = 1e-13
# largest bond for which transfer-map fixed points are found by dense diagonalisation
DENSE_EIG_BOND = 16
CANONICAL_TOLERANCE = 1e-8
# Schmidt values of the outer bond below this fraction are cut before inversion
INVERSE_FLOOR = 1e-10


def _check_local_density(rho: np.ndarray, *, tol: float = 1e-10) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (2, 2):
        raise InvalidDensityMatrix(f"Local density matrix must be 2x2, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise InvalidDensityMatrix("Local density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise InvalidDensityMatrix(f"Local density matrix has trace {np.trace(rho).real:.6g}, expected 1")
    return rho


def coarse_product_vector(rho: np.ndarray) -> np.ndarray:
    """Site-major vectorization of rho (x) rho on one coarse site."""
    local = vectorize(_check_local_density(rho))
    return np.kron(local, local)


# ---------------------------------------------------------------------------
# SVD and truncation
# ---------------------------------------------------------------------------


def safe_svd(matrix: np.ndarray, *, bond: str = "") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD with a fallback to the slower but more robust LAPACK driver."""
    try:
        return scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesdd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        logger.warning("gesdd failed on bond %s (%s); retrying with gesvd", bond or "?", exc)
        try:
            return scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc2:
            raise SVDFailure(f"SVD failed on bond {bond or '?'} with block shape {matrix.shape}") from exc2


def truncation_rank(
    singular_values: np.ndarray,
    max_bond: int | None,
    cutoff: float = 0.0,
    mode: TruncationMode = TruncationMode.FIXED,
) -> int:
    """Number of Schmidt values to keep.

    Exact zeros are always dropped. In TOLERANCE mode the smallest rank whose
    discarded relative weight stays below `cutoff` is used, capped at max_bond.
    A degenerate multiplet straddling the cut is dropped as a whole when that
    leaves at least one value.
    """
    s = singular_values
    if s.size == 0 or s[0] <= 0:
        return 1
    keep = int(np.count_nonzero(s > SCHMIDT_FLOOR * s[0]))
    if mode == TruncationMode.TOLERANCE and cutoff > 0:
        weights = s**2 / np.sum(s**2)
        # tail[k] = weight discarded when keeping k values
        tail = np.concatenate([np.cumsum(weights[::-1])[::-1], [0.0]])
        keep = min(keep, int(np.argmax(tail <= cutoff)))
    if max_bond is not None and keep > max_bond:
        keep = max_bond
        edge = s[keep - 1]
        if abs(s[keep] - edge) <= 1e-10 * s[0]:
            start = keep - 1
            while start > 0 and abs(s[start - 1] - edge) <= 1e-10 * s[0]:
                start -= 1
            if start > 0:
                keep = start
    return max(1, keep)


def discarded_weight(singular_values: np.ndarray, keep: int) -> float:
    total = float(np.sum(singular_values**2))
    if total == 0:
        return 0.0
    return float(np.sum(singular_values[keep:] ** 2)) / total


# ---------------------------------------------------------------------------
# Transfer-map fixed points
# ---------------------------------------------------------------------------


def _hermitian_fixed_point(vector: np.ndarray, dim: int) -> np.ndarray:
    mat = vector.reshape(dim, dim)
    trace = np.trace(mat)
    if abs(trace) > 0:
        mat = mat * (abs(trace) / trace)
    return 0.5 * (mat + mat.conj().T)


def _dominant_fixed_point(ops: np.ndarray, *, side: str) -> tuple[complex, np.ndarray]:
    """Dominant eigenpair of X -> sum_s A_s X A_s^dag (right) or A_s^dag X A_s (left).

    `ops` has shape (d, D, D).
    """
    dim = ops.shape[1]
    if dim <= DENSE_EIG_BOND:
        if side == "right":
            transfer = np.einsum("sij,skl->ikjl", ops, ops.conj()).reshape(dim * dim, dim * dim)
        else:
            transfer = np.einsum("sji,slk->ikjl", ops.conj(), ops).reshape(dim * dim, dim * dim)
        values, vectors = scipy.linalg.eig(transfer)
        k = int(np.argmax(np.abs(values)))
        return values[k], _hermitian_fixed_point(vectors[:, k], dim)

    if side == "right":

        def matvec(v: np.ndarray) -> np.ndarray:
            x = v.reshape(dim, dim)
            y = np.tensordot(ops, x, axes=(2, 0))
            return np.tensordot(y, ops.conj(), axes=([0, 2], [0, 2])).reshape(-1)

    else:

        def matvec(v: np.ndarray) -> np.ndarray:
            x = v.reshape(dim, dim)
            y = np.tensordot(x, ops, axes=(1, 1))  # (j, s, k)
            return np.tensordot(ops.conj(), y, axes=([0, 1], [1, 0])).reshape(-1)

    operator = spla.LinearOperator((dim * dim, dim * dim), matvec=matvec, dtype=np.complex128)
    start = np.eye(dim, dtype=np.complex128).reshape(-1) / np.sqrt(dim)
    try:
        values, vectors = spla.eigs(operator, k=1, which="LM", v0=start)
    except spla.ArpackNoConvergence:
        logger.warning("ARPACK did not converge on a %d-dim bond (%s); retrying with a larger basis", dim, side)
        try:
            values, vectors = spla.eigs(operator, k=1, which="LM", v0=start, ncv=min(dim * dim - 2, 60), maxiter=20000)
        except spla.ArpackNoConvergence as exc:
            raise RegaugeFailure(f"No {side} fixed point for bond dimension {dim}") from exc
    return values[0], _hermitian_fixed_point(vectors[:, 0], dim)


def _factor_psd(mat: np.ndarray, *, left: bool) -> tuple[np.ndarray, np.ndarray]:
    """mat = X X^dag (right) or Y^dag Y (left); returns the factor and its pseudo-inverse."""
    w, u = np.linalg.eigh(mat)
    if w[-1] <= 0:
        raise RegaugeFailure("Transfer fixed point is not positive")
    keep = w > SCHMIDT_FLOOR * w[-1]
    w, u = w[keep], u[:, keep]
    root = np.sqrt(w)
    if left:
        factor = root[:, None] * u.conj().T  # Y, shape (k, D)
        pinv = u / root[None, :]  # (D, k)
    else:
        factor = u * root[None, :]  # X, shape (D, k)
        pinv = (u / root[None, :]).conj().T  # (k, D)
    return factor, pinv


def _canonical_split(
    gamma: np.ndarray,
    lam_out: np.ndarray,
    max_bond: int | None,
    *,
    bond: str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
    """Canonical form of a merged two-site tensor over its outer bond, then re-split.

    gamma has shape (D, 16, 16, D) and lam_out length D. Returns
    (lam_out', gamma_left, lam_mid, gamma_right, discarded weight of the re-split).
    """
    dim = lam_out.size
    merged = gamma.reshape(dim, PHYS_DIM * PHYS_DIM, dim)
    right_ops = np.transpose(merged, (1, 0, 2)) * lam_out[None, None, :]
    left_ops = lam_out[None, :, None] * np.transpose(merged, (1, 0, 2))
    eta, v_right = _dominant_fixed_point(right_ops, side="right")
    _, v_left = _dominant_fixed_point(left_ops, side="left")

    x, x_pinv = _factor_psd(v_right, left=False)
    y, y_pinv = _factor_psd(v_left, left=True)
    u, lam_new, wh = safe_svd((y * lam_out[None, :]) @ x, bond=bond)
    # 1/lambda enters the re-split below
    keep = max(1, int(np.count_nonzero(lam_new > INVERSE_FLOOR * lam_new[0])))
    u, lam_new, wh = u[:, :keep], lam_new[:keep], wh[:keep]

    left_map = wh @ x_pinv
    right_map = y_pinv @ u
    gamma_new = np.tensordot(np.tensordot(left_map, merged, axes=(1, 0)), right_map, axes=(2, 0))
    norm = float(np.linalg.norm(lam_new))
    lam_new = lam_new / norm
    gamma_new *= norm / np.sqrt(abs(eta))

    # re-split the middle bond
    r = lam_new.size
    theta = lam_new[:, None, None, None] * gamma_new.reshape(r, PHYS_DIM, PHYS_DIM, r) * lam_new[None, None, None, :]
    u2, s2, vh2 = safe_svd(theta.reshape(r * PHYS_DIM, PHYS_DIM * r), bond=bond)
    keep2 = truncation_rank(s2, max_bond)
    lost = discarded_weight(s2, keep2)
    s2 = s2[:keep2]
    lam_mid = s2 / np.linalg.norm(s2)
    gamma_left = u2[:, :keep2].reshape(r, PHYS_DIM, keep2) / lam_new[:, None, None]
    gamma_right = vh2[:keep2].reshape(keep2, PHYS_DIM, r) / lam_new[None, None, :]
    return lam_new, gamma_left, lam_mid, gamma_right, lost


def _identity_block(theta: np.ndarray) -> np.ndarray:
    """Contract both physical legs of a (Dl, 16, 16, Dr) block with <<I|."""
    return np.einsum("iabj,a,b->ij", theta, SITE_IDENTITY, SITE_IDENTITY)


# ---------------------------------------------------------------------------
# Infinite MPS
# ---------------------------------------------------------------------------


@dataclass
class TruncationReport:
    """Per-layer truncation record of one round (layer 0 = V on A-B, layer 1 = W on B-A)."""

    discarded: list[float] = field(default_factory=list)
    trace_drift: list[float] = field(default_factory=list)
    max_bond: int = 1

    @property
    def total_discarded(self) -> float:
        return float(sum(self.discarded))

    @property
    def max_trace_drift(self) -> float:
        return float(max(self.trace_drift, default=0.0))

    def summary(self) -> dict[str, float | int]:
        return {
            "discarded_weight": self.total_discarded,
            "trace_drift": self.max_trace_drift,
            "max_bond": self.max_bond,
        }


@dataclass
class InfiniteMPS:
    gamma_a: np.ndarray
    lambda_ab: np.ndarray
    gamma_b: np.ndarray
    lambda_ba: np.ndarray
    max_bond: int = 64
    svd_cutoff: float = 0.0
    truncation: TruncationMode = TruncationMode.FIXED
    round: int = 0

    def __post_init__(self) -> None:
        if self.max_bond < 1:
            raise BondOverflow(f"Maximum bond dimension must be >= 1, got {self.max_bond}")
        self.truncation = TruncationMode(self.truncation)

    @property
    def bond_dims(self) -> tuple[int, int]:
        return int(self.lambda_ab.size), int(self.lambda_ba.size)

    def copy(self) -> "InfiniteMPS":
        return replace(
            self,
            gamma_a=self.gamma_a.copy(),
            lambda_ab=self.lambda_ab.copy(),
            gamma_b=self.gamma_b.copy(),
            lambda_ba=self.lambda_ba.copy(),
        )

    def cell_tensor(self) -> np.ndarray:
        """lambda_BA Gamma_A lambda_AB Gamma_B with shape (D_BA, 16, 16, D_BA)."""
        left = self.lambda_ba[:, None, None] * self.gamma_a * self.lambda_ab[None, None, :]
        return np.tensordot(left, self.gamma_b, axes=(2, 0))

    def canonical_residual(self) -> float:
        """Largest deviation from left/right orthonormality of the Gamma-lambda pairs."""
        worst = 0.0
        for lam_l, gamma, lam_r in (
            (self.lambda_ba, self.gamma_a, self.lambda_ab),
            (self.lambda_ab, self.gamma_b, self.lambda_ba),
        ):
            right = np.einsum("asb,b,csb->ac", gamma, lam_r**2, gamma.conj())
            left = np.einsum("a,asb,asc->bc", lam_l**2, gamma.conj(), gamma)
            worst = max(
                worst,
                float(np.max(np.abs(right - np.eye(right.shape[0])))),
                float(np.max(np.abs(left - np.eye(left.shape[0])))),
            )
        return worst

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {
            "gamma_a": self.gamma_a,
            "lambda_ab": self.lambda_ab,
            "gamma_b": self.gamma_b,
            "lambda_ba": self.lambda_ba,
        }


def init_product_state(
    local_density_matrix: np.ndarray,
    *,
    max_bond: int = 64,
    svd_cutoff: float = 0.0,
    truncation: TruncationMode | str = TruncationMode.FIXED,
) -> InfiniteMPS:
    """Bond-dimension-1 state with every qubit in `local_density_matrix`."""
    site = coarse_product_vector(local_density_matrix)
    site = site / np.linalg.norm(site)
    one = np.ones(1)
    return InfiniteMPS(
        gamma_a=site.reshape(1, PHYS_DIM, 1).copy(),
        lambda_ab=one.copy(),
        gamma_b=site.reshape(1, PHYS_DIM, 1).copy(),
        lambda_ba=one.copy(),
        max_bond=max_bond,
        svd_cutoff=svd_cutoff,
        truncation=TruncationMode(truncation),
    )


def _bond_layer(
    lam_out: np.ndarray,
    gamma_left: np.ndarray,
    lam_mid: np.ndarray,
    gamma_right: np.ndarray,
    gate: SuperOperatorGate,
    state: InfiniteMPS,
    *,
    bond: str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float, float]:
    left = lam_out[:, None, None] * gamma_left * lam_mid[None, None, :]
    theta = np.tensordot(left, gamma_right * lam_out[None, None, :], axes=(2, 0))
    theta = np.tensordot(theta, gate.tensor, axes=([1, 2], [2, 3])).transpose(0, 2, 3, 1)
    dl, dr = theta.shape[0], theta.shape[3]

    u, s, vh = safe_svd(theta.reshape(dl * PHYS_DIM, PHYS_DIM * dr), bond=bond)
    keep = truncation_rank(s, state.max_bond, state.svd_cutoff, state.truncation)
    lost = discarded_weight(s, keep)
    u, s, vh = u[:, :keep], s[:keep], vh[:keep]

    before = _identity_block(theta)
    after = np.einsum(
        "iak,a,k,kbj,b->ij",
        u.reshape(dl, PHYS_DIM, keep),
        SITE_IDENTITY,
        s,
        vh.reshape(keep, PHYS_DIM, dr),
        SITE_IDENTITY,
    )
    scale = float(np.linalg.norm(before))
    drift = float(np.linalg.norm(after - before)) / scale if scale > 0 else 0.0

    new_mid = s / np.linalg.norm(s)
    new_left = u.reshape(dl, PHYS_DIM, keep) / lam_out[:, None, None]
    new_right = vh.reshape(keep, PHYS_DIM, dr) / lam_out[None, None, :]
    merged = np.tensordot(new_left * new_mid[None, None, :], new_right, axes=(2, 0))
    lam_out2, g_left, lam_mid2, g_right, regauge_lost = _canonical_split(merged, lam_out, state.max_bond, bond=bond)
    if regauge_lost > SCHMIDT_FLOOR:
        # truncating the middle bond breaks the gauge: regauge over it once more
        across = np.tensordot(g_right * lam_out2[None, None, :], g_left, axes=(2, 0))
        lam_mid2, g_right, lam_out2, g_left, settle_lost = _canonical_split(
            across, lam_mid2, state.max_bond, bond=bond
        )
        regauge_lost += settle_lost
    return lam_out2, g_left, lam_mid2, g_right, lost + regauge_lost, drift


def apply_gate_pair(
    state: InfiniteMPS, V: SuperOperatorGate, W: SuperOperatorGate
) -> tuple[InfiniteMPS, TruncationReport]:
    """One round: V on every A-B bond, then W on every B-A bond."""
    for gate in (V, W):
        if gate.tensor.shape != (PHYS_DIM,) * 4:
            raise InvalidParameters(f"Gate tensor shape {gate.tensor.shape} does not match d={PHYS_DIM}")

    report = TruncationReport()
    lam_ba, gamma_a, lam_ab, gamma_b, lost, drift = _bond_layer(
        state.lambda_ba, state.gamma_a, state.lambda_ab, state.gamma_b, V, state, bond="AB"
    )
    report.discarded.append(lost)
    report.trace_drift.append(drift)

    lam_ab, gamma_b, lam_ba, gamma_a, lost, drift = _bond_layer(
        lam_ab, gamma_b, lam_ba, gamma_a, W, state, bond="BA"
    )
    report.discarded.append(lost)
    report.trace_drift.append(drift)
    report.max_bond = max(lam_ab.size, lam_ba.size)

    new_state = replace(
        state,
        gamma_a=gamma_a,
        lambda_ab=lam_ab,
        gamma_b=gamma_b,
        lambda_ba=lam_ba,
        round=state.round + 1,
    )
    logger.debug(
        "round=%d bonds=%s discarded=%.3g drift=%.3g",
        new_state.round,
        new_state.bond_dims,
        report.total_discarded,
        report.max_trace_drift,
    )
    return new_state, report


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    state: InfiniteMPS,
    path: Path | str,
    *,
    params_digest: str = "",
    schedule: dict | None = None,
    extra: dict | None = None,
) -> Path:
    path = Path(path)
    header = {
        "d": PHYS_DIM,
        "D": state.max_bond,
        "round": state.round,
        "params_digest": params_digest,
        "schedule": schedule or {},
        "svd_cutoff": state.svd_cutoff,
        "truncation": state.truncation.value,
    }
    if extra:
        header.update(extra)
    with path.open("wb") as handle:
        np.savez(handle, header=np.array(json.dumps(header, sort_keys=True)), **state.to_arrays())
    return path


def load_checkpoint(path: Path | str) -> tuple[InfiniteMPS, dict]:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            arrays = {key: np.array(data[key]) for key in ("gamma_a", "lambda_ab", "gamma_b", "lambda_ba")}
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"Could not read checkpoint {path}") from exc
    if header.get("d") != PHYS_DIM:
        raise CheckpointError(f"Checkpoint {path} has physical dimension {header.get('d')}, expected {PHYS_DIM}")
    state = InfiniteMPS(
        **arrays,
        max_bond=int(header["D"]),
        svd_cutoff=float(header.get("svd_cutoff", 0.0)),
        truncation=TruncationMode(header.get("truncation", TruncationMode.FIXED.value)),
        round=int(header["round"]),
    )
    return state, header


# ---------------------------------------------------------------------------
# Finite open chain
# ---------------------------------------------------------------------------


@dataclass
class FiniteMPS:
    """Open chain of N coarse sites (2N qubits) with a tracked orthogonality centre."""

    tensors: list[np.ndarray]
    max_bond: int | None = None
    svd_cutoff: float = 0.0
    truncation: TruncationMode = TruncationMode.FIXED
    center: int = 0
    round: int = 0

    def __post_init__(self) -> None:
        if self.max_bond is not None and self.max_bond < 1:
            raise BondOverflow(f"Maximum bond dimension must be >= 1, got {self.max_bond}")
        if len(self.tensors) < 1:
            raise InvalidParameters("FiniteMPS needs at least one site")
        self.truncation = TruncationMode(self.truncation)

    @classmethod
    def from_product(
        cls,
        local_density_matrix: np.ndarray,
        n_sites: int,
        *,
        max_bond: int | None = None,
        svd_cutoff: float = 0.0,
    ) -> "FiniteMPS":
        site = coarse_product_vector(local_density_matrix)
        site = site / np.linalg.norm(site)
        tensors = [site.reshape(1, PHYS_DIM, 1).copy() for _ in range(n_sites)]
        return cls(tensors=tensors, max_bond=max_bond, svd_cutoff=svd_cutoff)

    @classmethod
    def from_site_vectors(cls, vectors: Sequence[np.ndarray], **kwargs) -> "FiniteMPS":
        tensors = []
        for vec in vectors:
            vec = np.asarray(vec, dtype=np.complex128)
            tensors.append((vec / np.linalg.norm(vec)).reshape(1, PHYS_DIM, 1))
        return cls(tensors=tensors, **kwargs)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_sites

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def _move_center(self, target: int) -> None:
        while self.center < target:
            t = self.tensors[self.center]
            dl, d, dr = t.shape
            q, r = np.linalg.qr(t.reshape(dl * d, dr))
            self.tensors[self.center] = q.reshape(dl, d, q.shape[1])
            self.tensors[self.center + 1] = np.tensordot(r, self.tensors[self.center + 1], axes=(1, 0))
            self.center += 1
        while self.center > target:
            t = self.tensors[self.center]
            dl, d, dr = t.shape
            q, r = np.linalg.qr(t.reshape(dl, d * dr).T)
            self.tensors[self.center] = q.T.reshape(q.shape[1], d, dr)
            self.tensors[self.center - 1] = np.tensordot(self.tensors[self.center - 1], r.T, axes=(2, 0))
            self.center -= 1
        norm = np.linalg.norm(self.tensors[self.center])
        if norm > 0:
            self.tensors[self.center] = self.tensors[self.center] / norm

    def apply_two_site(self, gate: SuperOperatorGate, site: int) -> float:
        """Apply `gate` on coarse sites (site, site + 1); returns the discarded weight."""
        if not 0 <= site < self.n_sites - 1:
            raise InvalidParameters(f"Bond ({site}, {site + 1}) outside chain of {self.n_sites} sites")
        self._move_center(site)
        a, b = self.tensors[site], self.tensors[site + 1]
        theta = np.tensordot(a, b, axes=(2, 0))
        theta = np.tensordot(theta, gate.tensor, axes=([1, 2], [2, 3])).transpose(0, 2, 3, 1)
        dl, dr = theta.shape[0], theta.shape[3]
        u, s, vh = safe_svd(theta.reshape(dl * PHYS_DIM, PHYS_DIM * dr), bond=f"{site}-{site + 1}")
        keep = truncation_rank(s, self.max_bond, self.svd_cutoff, self.truncation)
        lost = discarded_weight(s, keep)
        s = s[:keep] / np.linalg.norm(s[:keep])
        self.tensors[site] = u[:, :keep].reshape(dl, PHYS_DIM, keep)
        self.tensors[site + 1] = (s[:, None] * vh[:keep]).reshape(keep, PHYS_DIM, dr)
        self.center = site + 1
        return lost

    def apply_round(self, V: SuperOperatorGate, W: SuperOperatorGate) -> TruncationReport:
        """V on bonds (0,1), (2,3), ... then W on bonds (1,2), (3,4), ..."""
        report = TruncationReport()
        for gate, first in ((V, 0), (W, 1)):
            lost = 0.0
            for site in range(first, self.n_sites - 1, 2):
                lost += self.apply_two_site(gate, site)
            report.discarded.append(lost)
            report.trace_drift.append(0.0)
        report.max_bond = max(self.bond_dims, default=1)
        self.round += 1
        return report

    def schmidt_values(self, bond: int) -> np.ndarray:
        """Normalized Schmidt values across the cut between sites `bond` and `bond + 1`."""
        if not 0 <= bond < self.n_sites - 1:
            raise InvalidParameters(f"Bond {bond} outside chain of {self.n_sites} sites")
        self._move_center(bond)
        t = self.tensors[bond]
        s = scipy.linalg.svdvals(t.reshape(t.shape[0] * PHYS_DIM, t.shape[2]))
        s = s[s > SCHMIDT_FLOOR * s[0]] if s.size and s[0] > 0 else s
        return s / np.linalg.norm(s)

    def canonical_residual(self) -> float:
        worst = 0.0
        for i, t in enumerate(self.tensors):
            if i < self.center:
                gram = np.einsum("asb,asc->bc", t.conj(), t)
            elif i > self.center:
                gram = np.einsum("asb,csb->ac", t, t.conj())
            else:
                continue
            worst = max(worst, float(np.max(np.abs(gram - np.eye(gram.shape[0])))))
        return worst

    def to_site_major_vector(self) -> np.ndarray:
        out = self.tensors[0]
        for t in self.tensors[1:]:
            out = np.tensordot(out, t, axes=(out.ndim - 1, 0))
        return out.reshape(-1)

    def to_dense(self) -> np.ndarray:
        """Full density matrix over 2N qubits (natural ordering), trace normalised."""
        n = self.n_qubits
        vec = from_site_major(self.to_site_major_vector(), n)
        rho = vec.reshape(2**n, 2**n)
        trace = np.trace(rho)
        if abs(trace) == 0:
            raise InvalidDensityMatrix("Chain has zero trace")
        return rho / trace


__all__ = [
    "FiniteMPS",
    "InfiniteMPS",
    "PHYS_DIM",
    "SITE_IDENTITY",
    "TruncationReport",
    "apply_gate_pair",
    "coarse_product_vector",
    "discarded_weight",
    "init_product_state",
    "load_checkpoint",
    "safe_svd",
    "save_checkpoint",
    "truncation_rank",
]
