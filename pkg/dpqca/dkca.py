"""
Classical Domany-Kinzel cellular automaton on a periodic ring.

Cells alternate between the even and the odd sublattice; an updated cell
becomes active with probability x, y or z depending on how many of its two
neighbours (which belong to the other sublattice) are active. Updates start
with the even cells.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from tqdm import tqdm

from .errors import InvalidParameters
from .model import DKCARule, dp_site_rule

logger = logging.getLogger(__name__)


@dataclass
class DKCALattice:
    cells: np.ndarray
    time: int = 0
    parity: int = 0
    rng_seed: int = 0
    rng: np.random.Generator = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        if self.cells.ndim != 1 or self.cells.size % 2 or self.cells.size == 0:
            raise InvalidParameters(f"Lattice length must be even and positive, got {self.cells.size}")
        if np.any(self.cells > 1):
            raise InvalidParameters("Cells must be 0 or 1")
        if self.rng is None:
            self.rng = np.random.default_rng(self.rng_seed)

    @classmethod
    def new(
        cls,
        length: int,
        *,
        seed: int | np.random.SeedSequence = 0,
        initial: str | float = "full",
    ) -> "DKCALattice":
        """Fresh lattice; `initial` is "full" or a Bernoulli activation density in (0, 1]."""
        if isinstance(seed, np.random.SeedSequence):
            rng = np.random.default_rng(seed)
            seed_value = int(seed.generate_state(1, dtype=np.uint64)[0])
        else:
            rng = np.random.default_rng(seed)
            seed_value = int(seed)
        if length <= 0 or length % 2:
            raise InvalidParameters(f"Lattice length must be even and positive, got {length}")
        if initial == "full":
            cells = np.ones(length, dtype=np.uint8)
        else:
            density = float(initial)
            if not 0.0 < density <= 1.0:
                raise InvalidParameters(f"Initial density must be in (0, 1], got {initial}")
            cells = (rng.random(length) < density).astype(np.uint8)
        return cls(cells=cells, rng_seed=seed_value, rng=rng)

    @property
    def length(self) -> int:
        return int(self.cells.size)

    def density(self) -> float:
        return float(self.cells.mean())

    def is_absorbed(self) -> bool:
        return not self.cells.any()

    def copy(self) -> "DKCALattice":
        return DKCALattice(
            cells=self.cells.copy(), time=self.time, parity=self.parity, rng_seed=self.rng_seed, rng=self.rng
        )


def dk_step_uniforms(lattice: DKCALattice, rule: DKCARule, uniforms: np.ndarray) -> DKCALattice:
    """Update the current sublattice in place from externally supplied uniforms.

    Sharing `uniforms` between lattices run under different site rules gives the
    monotone coupling: the lattice with the larger p stays pointwise above.
    """
    cells = lattice.cells
    idx = np.arange(lattice.parity, cells.size, 2)
    if uniforms.shape != idx.shape:
        raise InvalidParameters(f"Expected {idx.size} uniforms, got {uniforms.shape}")
    active = cells[idx - 1].astype(np.intp) + cells[(idx + 1) % cells.size]
    cells[idx] = uniforms < rule.table()[active]
    lattice.parity ^= 1
    lattice.time += 1
    return lattice


def dk_step(lattice: DKCALattice, rule: DKCARule) -> DKCALattice:
    """One half-step: the current sublattice is redrawn, the other one is left alone."""
    return dk_step_uniforms(lattice, rule, lattice.rng.random(lattice.length // 2))


@dataclass
class DensityTrace:
    rounds: np.ndarray
    mean_density: np.ndarray
    stderr: np.ndarray
    n_seeds: int
    length: int
    seed: int
    rule: DKCARule

    def curve(self) -> tuple[np.ndarray, np.ndarray]:
        """(t, n) with t the round index; used by the critical-point analysis."""
        return self.rounds.astype(np.float64), self.mean_density

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["round", "mean_density", "stderr"])
            for r, n, e in zip(self.rounds, self.mean_density, self.stderr):
                writer.writerow([int(r), repr(float(n)), repr(float(e))])
        return path

    @classmethod
    def from_csv(cls, path: Path | str, *, rule: DKCARule | None = None) -> "DensityTrace":
        with Path(path).open(newline="") as handle:
            rows = list(csv.DictReader(handle))
        return cls(
            rounds=np.array([int(row["round"]) for row in rows]),
            mean_density=np.array([float(row["mean_density"]) for row in rows]),
            stderr=np.array([float(row.get("stderr") or 0.0) for row in rows]),
            n_seeds=0,
            length=0,
            seed=0,
            rule=rule or DKCARule(0.0, 0.0, 0.0),
        )

    def metadata(self) -> dict[str, object]:
        return {
            "rule": {"x": self.rule.x, "y": self.rule.y, "z": self.rule.z},
            "n_seeds": self.n_seeds,
            "length": self.length,
            "seed": self.seed,
        }


def _run_member(
    rule: DKCARule,
    length: int,
    rounds: int,
    initial: str | float,
    seed: np.random.SeedSequence,
) -> np.ndarray:
    lattice = DKCALattice.new(length, seed=seed, initial=initial)
    densities = np.zeros(rounds + 1)
    densities[0] = lattice.density()
    for r in range(1, rounds + 1):
        dk_step(lattice, rule)
        dk_step(lattice, rule)
        densities[r] = lattice.density()
        if rule.x == 0.0 and lattice.is_absorbed():
            # absorbing state is permanent; the remaining entries stay 0
            break
    return densities


def dk_density_trace(
    rule: DKCARule,
    length: int,
    rounds: int,
    n_seeds: int,
    *,
    seed: int = 0,
    initial: str | float = "full",
    workers: int = 1,
    progress: bool = False,
) -> DensityTrace:
    """Ensemble-averaged density per full (even + odd) round, round 0 included."""
    if length <= 0 or length % 2:
        raise InvalidParameters(f"Lattice length must be even and positive, got {length}")
    if rounds < 1 or n_seeds < 1:
        raise InvalidParameters("rounds and n_seeds must be >= 1")

    children = np.random.SeedSequence(seed).spawn(n_seeds)
    runs = np.zeros((n_seeds, rounds + 1))
    if workers > 1 and n_seeds > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_member, rule, length, rounds, initial, child) for child in children]
            for i, future in enumerate(tqdm(futures, desc="dkca", disable=not progress)):
                runs[i] = future.result()
    else:
        for i, child in enumerate(tqdm(children, desc="dkca", disable=not progress)):
            runs[i] = _run_member(rule, length, rounds, initial, child)

    mean = runs.mean(axis=0)
    stderr = runs.std(axis=0, ddof=1) / math.sqrt(n_seeds) if n_seeds > 1 else np.zeros(rounds + 1)
    logger.info(
        "DKCA rule=(%g, %g, %g) L=%d rounds=%d seeds=%d final density=%.4g",
        rule.x,
        rule.y,
        rule.z,
        length,
        rounds,
        n_seeds,
        mean[-1],
    )
    return DensityTrace(
        rounds=np.arange(rounds + 1),
        mean_density=mean,
        stderr=stderr,
        n_seeds=n_seeds,
        length=length,
        seed=seed,
        rule=rule,
    )


def site_rule_sweep(
    ps: Sequence[float],
    length: int,
    rounds: int,
    n_seeds: int,
    *,
    seed: int = 0,
    workers: int = 1,
    progress: bool = False,
) -> list[tuple[float, DensityTrace]]:
    """One density trace per site-DP probability, in ascending p."""
    out: list[tuple[float, DensityTrace]] = []
    for p in sorted(ps):
        trace = dk_density_trace(
            dp_site_rule(p), length, rounds, n_seeds, seed=seed, workers=workers, progress=progress
        )
        out.append((p, trace))
    return out
