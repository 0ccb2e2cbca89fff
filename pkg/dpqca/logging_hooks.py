"""
Logging hook that traces evolution lifecycle events.

`evolve`, `finite_evolve` and `sweep` accept any object with the `on_start`,
`on_round` and `on_finish` methods below; this one is installed by default so
runs launched from `tools/qca_cli.py` always leave a trace of bond growth,
discarded weight and trace drift. All payload access is guarded so the hook
never breaks an evolution.
"""

from __future__ import annotations

import logging
from typing import Any, Mapping

TRACE_DRIFT_WARNING = 1e-6


def _configure_default_logging(logger: logging.Logger) -> None:
    """Ensure the logger has a sane handler when run standalone."""
    if logger.handlers:
        return
    handler = logging.StreamHandler()
    formatter = logging.Formatter(
        "[%(asctime)s] %(levelname)s %(name)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    handler.setFormatter(formatter)
    logger.addHandler(handler)
    logger.propagate = False
    root_level = logging.getLogger().level
    logger.setLevel(root_level if root_level != logging.NOTSET else logging.INFO)


def configure_logging(level: str | int | None = None) -> logging.Logger:
    """Configure the package logger once; CLI entry points call this."""
    logger = logging.getLogger("dpqca")
    _configure_default_logging(logger)
    if level is not None:
        logger.setLevel(level.upper() if isinstance(level, str) else level)
    return logger


class LoggingHook:
    """Lightweight hook that logs evolution start, rounds and finish."""

    def __init__(
        self,
        logger: logging.Logger | None = None,
        *,
        name: str | None = None,
        every: int = 1,
    ) -> None:
        self.name = name or "evolution"
        self.every = max(1, every)
        self.logger = logger or logging.getLogger("dpqca.evolution")
        _configure_default_logging(self.logger)

    def on_start(self, *, rounds: int, metadata: Mapping[str, Any] | None = None) -> None:
        self.logger.info("Starting %s rounds=%d metadata=%s", self.name, rounds, dict(metadata or {}))

    def on_round(self, *, round_index: int, record: Mapping[str, Any]) -> None:
        drift = float(record.get("trace_drift", 0.0) or 0.0)
        if drift > TRACE_DRIFT_WARNING:
            self.logger.warning(
                "%s round=%d trace drift %.3g exceeds %.0e", self.name, round_index, drift, TRACE_DRIFT_WARNING
            )
        if round_index % self.every:
            return
        self.logger.debug(
            "%s round=%d n=%.6g S=%.6g bond=%s discarded=%.3g",
            self.name,
            round_index,
            float(record.get("n", float("nan"))),
            float(record.get("S", float("nan"))),
            record.get("max_bond"),
            float(record.get("discarded_weight", 0.0) or 0.0),
        )

    def on_finish(self, *, rounds: int, record: Mapping[str, Any] | None = None) -> None:
        final = dict(record or {})
        self.logger.info("Finished %s rounds=%d final n=%s", self.name, rounds, final.get("n"))
