import logging
from typing import Optional

from app.core.config import settings


def setup_logging(level: Optional[str] = None) -> None:
    """Настройка корневого логгера из DDOS_AE_LOG_LEVEL"""
    level_name = (level or settings.LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format=settings.LOG_FORMAT,
        force=True,
    )
