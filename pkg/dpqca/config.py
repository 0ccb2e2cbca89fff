from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from env_support import get_env_value


class ScheduleMode(str, Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"


class RatePreset(str, Enum):
    # gamma-_00 = 1, gamma- = 1 - p on the other neighborhoods
    TABLE = "table"
    # gamma- = 1 on every neighborhood
    UNIT_DECAY = "unit_decay"


class FitMethod(str, Enum):
    POWER_LAW = "power-law"
    EXPONENTIAL = "exponential"


class TruncationMode(str, Enum):
    FIXED = "fixed"
    TOLERANCE = "tolerance"


DEFAULT_TROTTER_CONSTANT = 0.0025
DEFAULT_DISCRETE_TAU = 10.0


@dataclass
class RunSettings:
    output_dir: Path
    threads: int = 1
    seed: int = 12345
    log_level: str = "INFO"
    progress: bool = False


def load_settings(env_path: Path | None = None) -> RunSettings:
    """QCA_* settings from the environment, falling back to the .env file at `env_path`."""

    def setting(key: str, default: str) -> str:
        return get_env_value(key, env_path=env_path) or default

    threads = int(setting("QCA_THREADS", "1"))
    if threads < 1:
        raise ValueError(f"QCA_THREADS must be >= 1, got {threads}")

    return RunSettings(
        output_dir=Path(setting("QCA_OUTPUT_DIR", "runs")),
        threads=threads,
        seed=int(setting("QCA_SEED", "12345")),
        log_level=setting("QCA_LOG_LEVEL", "INFO").upper(),
        progress=setting("QCA_PROGRESS", "0").lower() in {"1", "true", "yes"},
    )
