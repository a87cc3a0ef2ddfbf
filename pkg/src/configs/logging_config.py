import logging
from typing import Optional

from src.configs.settings import get_settings

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

_LEVELS = {
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def setup_logging(level: Optional[str] = None) -> None:
    """Configure root logging from `level` or WARMSWAP_LOG (off|info|debug)."""
    name = (level or get_settings().log).strip().lower()
    if name == "off":
        logging.disable(logging.CRITICAL)
        return

    logging.disable(logging.NOTSET)
    logging.basicConfig(
        level=_LEVELS.get(name, logging.INFO),
        format=LOG_FORMAT,
        force=True,
    )
