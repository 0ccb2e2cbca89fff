"""Round-by-round evolution of MPS states with observable recording and checkpoints."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol

import numpy as np
from tqdm import tqdm

from .errors import CheckpointError, InvalidParameters
from .logging_hooks import LoggingHook
from .mps import (
    CANONICAL_TOLERANCE,
    FiniteMPS,
    InfiniteMPS,
    TruncationReport,
    apply_gate_pair,
    load_checkpoint,
    save_checkpoint,
)
from .observables import TrajectoryRecord, TrajectorySeries, measure
from .superop import SuperOperatorGate

logger = logging.getLogger(__name__)

ACTIVE = np.array([[0, 0], [0, 1]], dtype=np.complex128)


class EvolutionHook(Protocol):
    def on_start(self, *, rounds: int, metadata: Mapping[str, Any] | None = None) -> None: ...

    def on_round(self, *, round_index: int, record: Mapping[str, Any]) -> None: ...

    def on_finish(self, *, rounds: int, record: Mapping[str, Any] | None = None) -> None: ...


def _advance(
    state: InfiniteMPS | FiniteMPS, V: SuperOperatorGate, W: SuperOperatorGate
) -> tuple[InfiniteMPS | FiniteMPS, TruncationReport]:
    if isinstance(state, FiniteMPS):
        return state, state.apply_round(V, W)
    return apply_gate_pair(state, V, W)


def _bond_of(state: InfiniteMPS | FiniteMPS) -> int:
    if isinstance(state, FiniteMPS):
        return max(state.bond_dims, default=1)
    return max(state.bond_dims)


def make_record(
    state: InfiniteMPS | FiniteMPS,
    round_index: int,
    t: float,
    *,
    discarded: float = 0.0,
    drift: float = 0.0,
) -> TrajectoryRecord:
    values = measure(state)
    return TrajectoryRecord(
        round=round_index,
        t=t,
        n=values["n"],
        S=values["S"],
        C1=values["C1"],
        concurrence=values["concurrence"],
        trace_drift=drift,
        discarded_weight=discarded,
        max_bond=_bond_of(state),
    )


def evolve(
    state: InfiniteMPS | FiniteMPS,
    gates: tuple[SuperOperatorGate, SuperOperatorGate],
    rounds: int,
    *,
    hooks: Iterable[EvolutionHook] | None = None,
    stride: int = 1,
    time_per_round: float = 1.0,
    progress: bool = False,
    checkpoint: Path | str | None = None,
    checkpoint_every: int = 0,
    resume: Path | str | None = None,
    params_digest: str = "",
    schedule: dict | None = None,
    metadata: Mapping[str, Any] | None = None,
) -> tuple[InfiniteMPS | FiniteMPS, TrajectorySeries]:
    """Apply `rounds` rounds of (V, W) and record observables every `stride` rounds.

    Round 0 is recorded for a fresh start. The trace drift of a record is the
    largest per-layer drift since the previous record; the discarded weight is
    their sum. With `resume` the state is read back from a checkpoint whose
    params digest must match, and evolution continues from its round counter.
    """
    if rounds < 0:
        raise InvalidParameters(f"rounds must be >= 0, got {rounds}")
    if stride < 1:
        raise InvalidParameters(f"stride must be >= 1, got {stride}")
    if (checkpoint or resume) and isinstance(state, FiniteMPS):
        raise InvalidParameters("Checkpoints are only supported for the infinite chain")
    V, W = gates
    hooks = list(hooks) if hooks is not None else [LoggingHook()]

    series = TrajectorySeries(metadata=dict(metadata or {}))
    series.metadata.setdefault("time_per_round", time_per_round)
    series.metadata.setdefault("params_digest", params_digest)

    if resume is not None:
        state, header = load_checkpoint(resume)
        stored = header.get("params_digest", "")
        if params_digest and stored and stored != params_digest:
            raise CheckpointError(f"Checkpoint {resume} was written for params {stored[:12]}, not {params_digest[:12]}")
        logger.info("Resuming from %s at round %d", resume, state.round)
    start = state.round

    for hook in hooks:
        hook.on_start(rounds=rounds, metadata=series.metadata)
    if start == 0:
        first = make_record(state, 0, 0.0)
        series.append(first)
        for hook in hooks:
            hook.on_round(round_index=0, record=vars(first))

    discarded, drift = 0.0, 0.0
    for r in tqdm(range(start + 1, rounds + 1), desc="evolve", disable=not progress):
        state, report = _advance(state, V, W)
        discarded += report.total_discarded
        drift = max(drift, report.max_trace_drift)

        if r % stride == 0 or r == rounds:
            record = make_record(state, r, r * time_per_round, discarded=discarded, drift=drift)
            series.append(record)
            discarded, drift = 0.0, 0.0
            for hook in hooks:
                hook.on_round(round_index=r, record=vars(record))
            if isinstance(state, InfiniteMPS):
                residual = state.canonical_residual()
                if residual > CANONICAL_TOLERANCE:
                    logger.warning("round=%d canonical residual %.3g exceeds %.0e", r, residual, CANONICAL_TOLERANCE)

        if checkpoint is not None and checkpoint_every and r % checkpoint_every == 0:
            assert isinstance(state, InfiniteMPS)
            save_checkpoint(state, checkpoint, params_digest=params_digest, schedule=schedule)

    if checkpoint is not None and isinstance(state, InfiniteMPS):
        save_checkpoint(state, checkpoint, params_digest=params_digest, schedule=schedule)
    final = vars(series.final) if len(series) else None
    for hook in hooks:
        hook.on_finish(rounds=rounds, record=final)
    return state, series


def finite_evolve(
    n_sites: int,
    gates: tuple[SuperOperatorGate, SuperOperatorGate],
    rounds: int,
    *,
    local_density_matrix: np.ndarray | None = None,
    max_bond: int | None = None,
    **kwargs: Any,
) -> tuple[FiniteMPS, TrajectorySeries]:
    """Open chain of `n_sites` coarse sites started from a product state (all active by default)."""
    rho = ACTIVE if local_density_matrix is None else local_density_matrix
    state = FiniteMPS.from_product(rho, n_sites, max_bond=max_bond)
    final, series = evolve(state, gates, rounds, **kwargs)
    assert isinstance(final, FiniteMPS)
    return final, series
