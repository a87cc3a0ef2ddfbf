from functools import lru_cache
from typing import Optional

from pydantic import BaseSettings, validator

LOG_LEVELS = ("off", "info", "debug")


class Settings(BaseSettings):
    """
    Process-wide configuration.
    Values come from WARMSWAP_* environment variables or a .env file in the
    working directory; CLI flags override them.
    """
    log: str = "info"
    listen: str = "127.0.0.1:7070"
    http: Optional[str] = None
    stream_batch_pages: int = 256
    stream_delay_ms: float = 0.0
    stats_file: Optional[str] = None

    class Config:
        env_prefix = "WARMSWAP_"
        env_file = ".env"

    @validator("log")
    def _known_level(cls, v: str) -> str:
        v = v.strip().lower()
        if v not in LOG_LEVELS:
            raise ValueError(f"log must be one of {', '.join(LOG_LEVELS)}")
        return v

    @validator("stream_batch_pages")
    def _batch_bounds(cls, v: int) -> int:
        if not 1 <= v <= 256:
            raise ValueError("stream_batch_pages must be within 1..256")
        return v

    @validator("stream_delay_ms")
    def _non_negative_delay(cls, v: float) -> float:
        if v < 0:
            raise ValueError("stream_delay_ms must be >= 0")
        return v


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
