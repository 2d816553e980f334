import logging
import os

from ssm_prune.settings import get_log_dir, get_log_level


def setup_logging(name, log_dir=None):
    """Setup logging configuration"""
    log_dir = log_dir or get_log_dir()
    os.makedirs(log_dir, exist_ok=True)
    log_filename = os.path.join(log_dir, f"{name}.log")

    logging.basicConfig(
        level=getattr(logging, get_log_level()),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_filename, encoding='utf-8'),
            logging.StreamHandler()  # Also log to console
        ],
        force=True  # Force reconfiguration if logging was already configured
    )

    logger = logging.getLogger("ssm_prune")
    logger.info(f"Logging initialized. Log file: {log_filename}")
    return logger
