"""Parameter sweeps of the infinite chain over a grid of site-DP probabilities."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from tqdm import tqdm

from .analysis import DEFAULT_WINDOW, fit_delta, locate_critical
from .config import FitMethod, RatePreset, ScheduleMode, TruncationMode
from .errors import InvalidParameters, QCAError
from .evolution import ACTIVE, evolve
from .logging_hooks import LoggingHook
from .model import preset_rates
from .mps import init_product_state
from .observables import TrajectorySeries, write_long_csv
from .superop import ScheduleConfig, build_round_gates

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepConfig:
    ps: tuple[float, ...]
    omega: float = 0.0
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    max_bond: int = 64
    rounds: int = 400
    preset: RatePreset = RatePreset.TABLE
    output_dir: Path | None = None
    stride: int = 1
    svd_cutoff: float = 0.0
    truncation: TruncationMode = TruncationMode.FIXED
    window: float = DEFAULT_WINDOW
    method: FitMethod = FitMethod.POWER_LAW

    def __post_init__(self) -> None:
        ps = tuple(float(p) for p in self.ps)
        if not ps:
            raise InvalidParameters("Sweep grid is empty")
        if list(ps) != sorted(ps):
            raise InvalidParameters(f"Sweep grid must be sorted, got {ps}")
        if self.max_bond < 1:
            raise InvalidParameters(f"D must be >= 1, got {self.max_bond}")
        if self.rounds < 1:
            raise InvalidParameters(f"rounds must be >= 1, got {self.rounds}")
        object.__setattr__(self, "ps", ps)
        object.__setattr__(self, "preset", RatePreset(self.preset))
        object.__setattr__(self, "truncation", TruncationMode(self.truncation))
        object.__setattr__(self, "method", FitMethod(self.method))
        if self.output_dir is not None:
            object.__setattr__(self, "output_dir", Path(self.output_dir))

    @classmethod
    def from_mapping(cls, values: Mapping[str, str], **overrides: Any) -> "SweepConfig":
        """Build from a key/value config file; keyword overrides win."""
        schedule = ScheduleConfig(
            mode=ScheduleMode(values.get("mode", ScheduleMode.CONTINUOUS.value)),
            tau=float(values["tau"]) if values.get("tau") else None,
            trotter_constant=float(values.get("trotter_constant", ScheduleConfig.trotter_constant)),
        )
        kwargs: dict[str, Any] = {
            "ps": tuple(float(v) for v in values.get("ps", "").strip("[]").split(",") if v.strip()),
            "omega": float(values.get("omega", 0.0)),
            "schedule": schedule,
            "max_bond": int(values.get("D", 64)),
            "rounds": int(values.get("rounds", 400)),
            "preset": values.get("preset", RatePreset.TABLE.value),
            "stride": int(values.get("stride", 1)),
            "svd_cutoff": float(values.get("svd_cutoff", 0.0)),
            "truncation": values.get("truncation", TruncationMode.FIXED.value),
            "window": float(values.get("window", DEFAULT_WINDOW)),
            "method": values.get("method", FitMethod.POWER_LAW.value),
        }
        if values.get("output_dir"):
            kwargs["output_dir"] = Path(values["output_dir"])
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    def metadata(self) -> dict[str, Any]:
        return {
            "omega": self.omega,
            "D": self.max_bond,
            "rounds": self.rounds,
            "preset": self.preset.value,
            "truncation": self.truncation.value,
            "svd_cutoff": self.svd_cutoff,
            "schedule": self.schedule.to_dict(),
        }


def run_point(config: SweepConfig, p: float, *, progress: bool = False) -> TrajectorySeries:
    """One infinite-chain trajectory from the fully active product state."""
    params = preset_rates(config.preset, p, config.omega)
    gates = build_round_gates(params, config.schedule)
    state = init_product_state(
        ACTIVE, max_bond=config.max_bond, svd_cutoff=config.svd_cutoff, truncation=config.truncation
    )
    metadata = {
        **config.metadata(),
        "p": p,
        "mode": config.schedule.mode.value,
        "tau": gates[0].tau,
        "schedule": config.schedule.to_dict(p),
    }
    _, series = evolve(
        state,
        gates,
        config.rounds,
        hooks=[LoggingHook(name=f"p={p:g}", every=max(1, config.rounds // 10))],
        stride=config.stride,
        time_per_round=config.schedule.time_per_round(p),
        progress=progress,
        params_digest=params.digest(),
        metadata=metadata,
    )
    return series


def _run_point_safe(config: SweepConfig, p: float) -> tuple[TrajectorySeries | None, str | None]:
    try:
        return run_point(config, p), None
    except QCAError as exc:
        logger.error("Sweep point p=%g failed: %s", p, exc)
        return None, f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # e.g. LinAlgError from the SVD backend
        logger.exception("Sweep point p=%g crashed", p)
        return None, f"{type(exc).__name__}: {exc}"


@dataclass
class SweepResult:
    config: SweepConfig
    series: list[TrajectorySeries | None]
    failures: dict[float, str] = field(default_factory=dict)
    runtime: float = 0.0

    def completed(self) -> list[tuple[float, TrajectorySeries]]:
        return [(p, s) for p, s in zip(self.config.ps, self.series) if s is not None]

    def summary(self) -> dict[str, Any]:
        """p_c, delta at the grid point closest to p_c, final observables and failures."""
        out: dict[str, Any] = {
            "config": {**self.config.metadata(), "ps": list(self.config.ps)},
            "runtime_seconds": self.runtime,
            "failures": {repr(p): msg for p, msg in self.failures.items()},
            "final": {
                repr(p): {"n": s.final.n, "S": s.final.S, "C1": s.final.C1, "concurrence": s.final.concurrence}
                for p, s in self.completed()
            },
            "p_c": None,
            "fit": None,
        }
        done = self.completed()
        try:
            p_c = locate_critical(done, window=self.config.window)
        except QCAError as exc:
            out["p_c_error"] = str(exc)
            return out
        out["p_c"] = p_c
        nearest_p, nearest = min(done, key=lambda item: abs(item[0] - p_c))
        try:
            fit = fit_delta(nearest, window=self.config.window, method=self.config.method, p_c=p_c)
            out["fit"] = {**fit.to_dict(), "grid_p": nearest_p}
        except QCAError as exc:
            out["fit_error"] = str(exc)
        return out

    def write(self, output_dir: Path | str) -> Path:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        for p, series in self.completed():
            series.to_csv(output_dir / f"trajectory_p{p:.4f}.csv")
        write_long_csv([s for _, s in self.completed()], output_dir / "long.csv")
        summary_path = output_dir / "summary.json"
        summary_path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True, default=_json_default) + "\n")
        return summary_path


def _json_default(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Not JSON serializable: {type(value).__name__}")


def sweep(config: SweepConfig, *, workers: int = 1, progress: bool = False) -> SweepResult:
    """Run every grid point; failed points are recorded and the sweep continues."""
    started = time.perf_counter()
    results: list[TrajectorySeries | None] = [None] * len(config.ps)
    failures: dict[float, str] = {}
    logger.info("Sweep over %d points (omega=%g, D=%d, rounds=%d)", len(config.ps), config.omega, config.max_bond, config.rounds)

    if workers > 1 and len(config.ps) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_point_safe, config, p) for p in config.ps]
            for i, future in enumerate(tqdm(futures, desc="sweep", disable=not progress)):
                try:
                    results[i], error = future.result()
                except Exception as exc:  # worker died or the result could not be unpickled
                    logger.error("Sweep point p=%g lost: %s", config.ps[i], exc)
                    results[i], error = None, f"{type(exc).__name__}: {exc}"
                if error:
                    failures[config.ps[i]] = error
    else:
        for i, p in enumerate(tqdm(config.ps, desc="sweep", disable=not progress)):
            results[i], error = _run_point_safe(config, p)
            if error:
                failures[p] = error

    result = SweepResult(config=config, series=results, failures=failures, runtime=time.perf_counter() - started)
    if config.output_dir is not None:
        result.write(config.output_dir)
    logger.info("Sweep finished in %.1fs with %d failures", result.runtime, len(failures))
    return result


def with_output(config: SweepConfig, output_dir: Path | str) -> SweepConfig:
    return replace(config, output_dir=Path(output_dir))
