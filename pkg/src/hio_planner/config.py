from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from .errors import ConfigError


@dataclass(frozen=True)
class Settings:
    # Worker cap for sweeps and oracle enumeration.
    threads: int
    log_level: str = "INFO"
    # Root for persisted runs and plans.
    runtime_dir: Path = Path("runtime")


def _parse_threads(raw: Optional[str]) -> int:
    default = os.cpu_count() or 1
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"HIO_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigError(f"HIO_THREADS must be >= 1, got {value}")
    return value


def load_settings(*, use_dotenv: bool = True) -> Settings:
    if use_dotenv:
        load_dotenv()
    return Settings(
        threads=_parse_threads(os.getenv("HIO_THREADS")),
        log_level=os.getenv("HIO_LOG_LEVEL", "INFO").upper(),
        runtime_dir=Path(os.getenv("HIO_RUNTIME_DIR", "runtime")),
    )


def configure_logging(settings: Settings) -> None:
    logging.basicConfig(
        level=getattr(logging, settings.log_level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
