"""Process-level settings modeled with Pydantic for type safety."""
from __future__ import annotations

import os
from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic import BaseSettings, Field, validator


class Settings(BaseSettings):
    threads: Optional[int] = Field(None, env="NETDIFF_THREADS")
    output_dir: Path = Field(Path("out"), env="NETDIFF_OUT")
    slow_tests: bool = Field(False, env="NETDIFF_SLOW")
    log_level: str = Field("INFO", env="LOG_LEVEL")

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False

    @validator("threads", pre=True)
    def _blank_threads(cls, value: Optional[str]) -> Optional[str]:
        if value in ("", None):
            return None
        return value

    @validator("threads")
    def _positive_threads(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 1:
            raise ValueError("NETDIFF_THREADS must be a positive integer")
        return value

    @validator("log_level")
    def _known_level(cls, value: str) -> str:
        level = value.strip().upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown LOG_LEVEL {value!r}")
        return level

    @property
    def default_threads(self) -> int:
        return self.threads or os.cpu_count() or 1


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return singleton settings instance."""
    return Settings()
