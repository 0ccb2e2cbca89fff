"""
Model parameters of the three-cell rule and the classical DKCA rule.

Basis convention: |1> is the active (occupied) state, |0> the empty one, and
the occupation operator is n = |1><1|. The raising operator is sigma+ = |1><0|
and the lowering operator sigma- = |0><1| (no factor 2), so gamma+/- are the
plain excitation/decay rates of the centre cell.

Given a target steady occupation p for a neighborhood, the excitation rate is

    gamma+ = p gamma- / (1 - p)                                        (Omega = 0)
    gamma+ = [(2p - 1) gamma- + sqrt(gamma-^2 - 16 Omega^2 (1 - 3p + 2p^2))] / (2 (1 - p))

with Omega = theta / 2 the amplitude of the conditional X drive.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from env_support import read_key_value_file, write_key_value_file

from .config import RatePreset
from .errors import DegenerateP, InvalidParameters, NegativeDiscriminant


@dataclass(frozen=True, slots=True)
class NeighborhoodLabel:
    alpha: int
    beta: int

    def __post_init__(self) -> None:
        if self.alpha not in (0, 1) or self.beta not in (0, 1):
            raise InvalidParameters(f"Neighborhood bits must be 0/1, got ({self.alpha}, {self.beta})")

    @property
    def code(self) -> str:
        return f"{self.alpha}{self.beta}"

    @property
    def index(self) -> int:
        return 2 * self.alpha + self.beta

    @classmethod
    def all(cls) -> tuple["NeighborhoodLabel", ...]:
        return tuple(cls(a, b) for a in (0, 1) for b in (0, 1))

    @classmethod
    def from_code(cls, code: str) -> "NeighborhoodLabel":
        code = code.strip()
        if len(code) != 2 or any(ch not in "01" for ch in code):
            raise InvalidParameters(f"Invalid neighborhood label '{code}'")
        return cls(int(code[0]), int(code[1]))

    def __str__(self) -> str:
        return self.code


LABELS = NeighborhoodLabel.all()
LABEL_CODES = tuple(label.code for label in LABELS)


def _quad(values: object, name: str) -> tuple[float, float, float, float]:
    items = tuple(float(v) for v in values)  # type: ignore[union-attr]
    if len(items) != 4:
        raise InvalidParameters(f"{name} needs one value per neighborhood (4), got {len(items)}")
    return items  # type: ignore[return-value]


@dataclass(frozen=True, slots=True)
class RateEntry:
    """Rates of a single neighborhood; the unit the steady-state formulas act on."""

    p: float
    theta: float
    gamma_minus: float
    gamma_plus: float

    @property
    def omega(self) -> float:
        return self.theta / 2.0

    def discriminant(self) -> float:
        return self.gamma_minus**2 - 16.0 * self.omega**2 * (1.0 - 3.0 * self.p + 2.0 * self.p**2)


@dataclass(frozen=True)
class ThreeCellParams:
    """Per-neighborhood targets and rates, stored in label order 00, 01, 10, 11."""

    targets: tuple[float, float, float, float]
    theta: tuple[float, float, float, float]
    gamma_minus: tuple[float, float, float, float]
    gamma_plus: tuple[float, float, float, float]
    p: float | None = None
    omega: float = 0.0
    preset: str = "custom"
    _digest: str = field(default="", init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("targets", "theta", "gamma_minus", "gamma_plus"):
            object.__setattr__(self, name, _quad(getattr(self, name), name))

    def entry(self, label: NeighborhoodLabel | str) -> RateEntry:
        if isinstance(label, str):
            label = NeighborhoodLabel.from_code(label)
        i = label.index
        return RateEntry(self.targets[i], self.theta[i], self.gamma_minus[i], self.gamma_plus[i])

    def entries(self) -> Iterator[tuple[NeighborhoodLabel, RateEntry]]:
        for label in LABELS:
            yield label, self.entry(label)

    def validate(self) -> "ThreeCellParams":
        for label, entry in self.entries():
            values = (entry.p, entry.theta, entry.gamma_minus, entry.gamma_plus)
            if not all(math.isfinite(v) for v in values):
                raise InvalidParameters(f"Non-finite rate in neighborhood {label}")
            if not 0.0 <= entry.p <= 1.0:
                raise InvalidParameters(f"Target p_{label}={entry.p} outside [0, 1]")
            if entry.theta < 0 or entry.gamma_plus < 0:
                raise InvalidParameters(f"Negative rate or amplitude in neighborhood {label}")
            if entry.gamma_minus <= 0:
                raise InvalidParameters(f"gamma-_{label} must be > 0, got {entry.gamma_minus}")
            if entry.theta != 0:
                disc = entry.discriminant()
                if disc < 0:
                    raise NegativeDiscriminant(entry.p, entry.omega, entry.gamma_minus, disc)
        zero = self.entry("00")
        if zero.p == 0 and (zero.gamma_plus != 0 or zero.theta != 0):
            raise InvalidParameters("Absorbing neighborhood 00 with p_00 = 0 needs gamma+_00 = theta_00 = 0")
        return self

    @property
    def is_absorbing(self) -> bool:
        zero = self.entry("00")
        return zero.gamma_plus == 0 and zero.theta == 0

    @property
    def is_classical(self) -> bool:
        return all(t == 0 for t in self.theta)

    def digest(self) -> str:
        """Stable SHA-256 of the rate table, used in gate and checkpoint headers."""
        if not self._digest:
            payload = json.dumps(
                {
                    "targets": [repr(v) for v in self.targets],
                    "theta": [repr(v) for v in self.theta],
                    "gamma_minus": [repr(v) for v in self.gamma_minus],
                    "gamma_plus": [repr(v) for v in self.gamma_plus],
                },
                sort_keys=True,
            )
            object.__setattr__(self, "_digest", hashlib.sha256(payload.encode("utf-8")).hexdigest())
        return self._digest

    def to_mapping(self) -> dict[str, str]:
        values: dict[str, str] = {
            "preset": self.preset,
            "p": "" if self.p is None else repr(self.p),
            "omega": repr(self.omega),
        }
        for name, quad in (
            ("target", self.targets),
            ("gamma_minus", self.gamma_minus),
            ("gamma_plus", self.gamma_plus),
            ("theta", self.theta),
        ):
            for code, value in zip(LABEL_CODES, quad):
                values[f"{name}.{code}"] = repr(value)
        return values

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "ThreeCellParams":
        """Inverse of `to_mapping`; also accepts `gamma_minus=[a,b,c,d]` list form."""

        def quad(name: str, default: float | None = None) -> tuple[float, ...]:
            if name in values:
                raw = values[name].strip().strip("[]")
                return _quad([v for v in raw.split(",") if v.strip()], name)
            items: list[float] = []
            for code in LABEL_CODES:
                key = f"{name}.{code}"
                if key not in values:
                    if default is None:
                        raise InvalidParameters(f"Missing key '{key}' in parameter file")
                    items.append(default)
                else:
                    items.append(float(values[key]))
            return tuple(items)

        raw_p = values.get("p", "").strip()
        params = cls(
            targets=quad("target", default=float("nan")),
            theta=quad("theta", default=0.0),
            gamma_minus=quad("gamma_minus"),
            gamma_plus=quad("gamma_plus"),
            p=float(raw_p) if raw_p else None,
            omega=float(values.get("omega", "0") or 0.0),
            preset=values.get("preset", "custom") or "custom",
        )
        if any(math.isnan(t) for t in params.targets):
            params = replace(params, targets=_implied_targets(params))
        return params.validate()

    def save(self, path: Path | str) -> Path:
        return write_key_value_file(path, self.to_mapping(), header="three-cell rate table (labels 00 01 10 11)")

    @classmethod
    def load(cls, path: Path | str) -> "ThreeCellParams":
        return cls.from_mapping(read_key_value_file(path))


def _implied_targets(params: ThreeCellParams) -> tuple[float, ...]:
    return tuple(
        _stationary(params.theta[i] / 2.0, params.gamma_minus[i], params.gamma_plus[i]).rho11 for i in range(4)
    )


@dataclass(frozen=True, slots=True)
class SteadyState3Cell:
    """Centre-site stationary state for one frozen neighborhood.

    rho00/rho11 are the empty/active populations and rho01 = <0|rho|1>.
    """

    rho00: float
    rho11: float
    rho01: complex

    @property
    def rho10(self) -> complex:
        return self.rho01.conjugate()

    def matrix(self) -> np.ndarray:
        return np.array([[self.rho00, self.rho01], [self.rho10, self.rho11]], dtype=np.complex128)


@dataclass(frozen=True, slots=True)
class DKCARule:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidParameters(f"DKCA probability {name}={value} outside [0, 1]")

    @property
    def is_directed_percolation(self) -> bool:
        return self.x == 0.0

    def probability(self, left: int, right: int) -> float:
        """p(1 | left, right)."""
        return (self.x, self.y, self.y, self.z)[2 * left + right]

    def table(self) -> np.ndarray:
        """Activation probabilities indexed by (left + right), i.e. [x, y, z]."""
        return np.array([self.x, self.y, self.z], dtype=np.float64)


def solve_gamma_plus(p: float, omega: float, gamma_minus: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise InvalidParameters(f"p={p} outside [0, 1]")
    if p == 1.0:
        raise DegenerateP("p = 1 requires an unbounded excitation rate")
    if gamma_minus <= 0:
        raise InvalidParameters(f"gamma- must be > 0, got {gamma_minus}")
    if omega == 0:
        return p * gamma_minus / (1.0 - p)

    disc = gamma_minus**2 - 16.0 * omega**2 * (1.0 - 3.0 * p + 2.0 * p**2)
    if disc < 0:
        raise NegativeDiscriminant(p, omega, gamma_minus, disc)
    gamma_plus = ((2.0 * p - 1.0) * gamma_minus + math.sqrt(disc)) / (2.0 * (1.0 - p))
    if gamma_plus < 0:
        # Only for p < 4 Omega^2 / (gamma-^2 + 8 Omega^2): the drive alone keeps n above p.
        raise InvalidParameters(
            f"Target p={p} is below the occupation the drive omega={omega} sustains (gamma+={gamma_plus:.3g})"
        )
    return gamma_plus


def physical_omega_bound(p: float, gamma_minus: float = 1.0) -> float:
    """Largest Omega with a non-negative discriminant (inf for p >= 1/2)."""
    c = 1.0 - 3.0 * p + 2.0 * p**2
    if c <= 0:
        return math.inf
    return gamma_minus / (4.0 * math.sqrt(c))


def closed_form_coherence(p: float, omega: float, gamma_minus: float) -> complex:
    """<0|rho|1> of the stationary centre site in terms of the target p."""
    if omega == 0:
        return 0j
    disc = gamma_minus**2 - 16.0 * omega**2 * (1.0 - 3.0 * p + 2.0 * p**2)
    if disc < 0:
        raise NegativeDiscriminant(p, omega, gamma_minus, disc)
    return 1j / (4.0 * omega) * (gamma_minus - math.sqrt(disc))


def steady_state_3cell(entry: RateEntry) -> SteadyState3Cell:
    """Stationary centre-site state of one neighborhood block.

    Solved from the rates themselves, so it also covers tables whose gamma+
    did not come from `solve_gamma_plus`.
    """
    if entry.theta != 0 and entry.discriminant() < 0:
        raise NegativeDiscriminant(entry.p, entry.omega, entry.gamma_minus, entry.discriminant())
    return _stationary(entry.omega, entry.gamma_minus, entry.gamma_plus)


def _stationary(omega: float, gamma_minus: float, gamma_plus: float) -> SteadyState3Cell:
    total = gamma_plus + gamma_minus
    if total <= 0:
        raise InvalidParameters("Neighborhood without any rate has no unique steady state")
    if omega == 0:
        rho11 = gamma_plus / total
        return SteadyState3Cell(rho00=1.0 - rho11, rho11=rho11, rho01=0j)

    rho11 = (gamma_plus * total + 4.0 * omega**2) / (total**2 + 8.0 * omega**2)
    rho00 = 1.0 - rho11
    rho01 = -2j * omega * (rho11 - rho00) / total
    return SteadyState3Cell(rho00=rho00, rho11=rho11, rho01=complex(rho01))


def dp_site_rule(p: float) -> DKCARule:
    return DKCARule(0.0, p, p)


def dp_bond_rule(q: float) -> DKCARule:
    return DKCARule(0.0, q, q * (2.0 - q))


def rates_from_rule(
    rule: DKCARule,
    omega: float = 0.0,
    preset: RatePreset | str = RatePreset.TABLE,
) -> ThreeCellParams:
    """Map a DKCA rule to rates; the drive acts on the 11 neighborhood only."""
    preset = RatePreset(preset)
    targets = (rule.x, rule.y, rule.y, rule.z)
    thetas = (0.0, 0.0, 0.0, 2.0 * omega)
    gamma_minus: list[float] = []
    gamma_plus: list[float] = []
    for target, theta in zip(targets, thetas):
        decay = 1.0 - target if preset == RatePreset.TABLE else 1.0
        if decay <= 0:
            raise DegenerateP(f"Target occupation {target} needs gamma- = 0 under the '{preset.value}' preset")
        gamma_minus.append(decay)
        gamma_plus.append(solve_gamma_plus(target, theta / 2.0, decay))
    return ThreeCellParams(
        targets=targets,
        theta=thetas,
        gamma_minus=tuple(gamma_minus),
        gamma_plus=tuple(gamma_plus),
        p=float(rule.y) if rule.y == rule.z else None,
        omega=float(omega),
        preset=preset.value,
    ).validate()


def dp_quantum_rates(p: float, omega: float = 0.0) -> ThreeCellParams:
    """Site-DP rates: gamma-_00 = 1, gamma+_00 = 0, gamma-_{01,10,11} = 1 - p."""
    return rates_from_rule(dp_site_rule(p), omega, RatePreset.TABLE)


def unit_decay_rates(p: float, omega: float = 0.0) -> ThreeCellParams:
    """Site-DP rates with gamma- = 1 on every neighborhood."""
    return rates_from_rule(dp_site_rule(p), omega, RatePreset.UNIT_DECAY)


def preset_rates(preset: RatePreset | str, p: float, omega: float = 0.0) -> ThreeCellParams:
    return rates_from_rule(dp_site_rule(p), omega, preset)


def params_digest(params: ThreeCellParams) -> str:
    return params.digest()
