# app/core/logging.py
import logging
import sys
from app.core.config import settings

def setup_logging():
    """Configure structured logging for the application"""
    # Create logger
    logger = logging.getLogger("tailsift")
    logger.setLevel(getattr(logging, settings.LOG_LEVEL))

    # Avoid duplicate handlers when the module is re-imported in worker processes
    if not logger.handlers:
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(getattr(logging, settings.LOG_LEVEL))
        console_handler.setFormatter(logging.Formatter(settings.LOG_FORMAT))
        logger.addHandler(console_handler)

    return logger

def set_verbose(verbose: bool) -> None:
    """Switch the shared logger between INFO and DEBUG"""
    level = logging.DEBUG if verbose else getattr(logging, settings.LOG_LEVEL)
    logger.setLevel(level)
    for handler in logger.handlers:
        handler.setLevel(level)

# Create logger instance
logger = setup_logging()
