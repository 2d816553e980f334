from dotenv import load_dotenv
import colorama
from colorama import Fore
import os

from ssm_prune.errors import ConfigError

colorama.init(autoreset=True)

load_dotenv()

DEFAULT_LOG_DIR = "logs"
DEFAULT_LOG_LEVEL = "INFO"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _read_int(key, minimum=None):
    raw = os.getenv(key)
    if raw is None or raw.strip() == "":
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {value}")
    return value


# ---------------- Seed ---------------- #
def get_seed_override():
    """Seed from ALIGNED_SCAN_SEED, or None when unset"""
    return _read_int("ALIGNED_SCAN_SEED", minimum=0)


# ---------------- Lane parallelism ---------------- #
def get_threads():
    threads = _read_int("ALIGNED_SCAN_THREADS", minimum=1)
    return 1 if threads is None else threads


# ---------------- Logging ---------------- #
def get_log_dir():
    return os.getenv("ALIGNED_SCAN_LOG_DIR") or DEFAULT_LOG_DIR


def get_log_level():
    level = (os.getenv("ALIGNED_SCAN_LOG_LEVEL") or DEFAULT_LOG_LEVEL).upper()
    if level not in LOG_LEVELS:
        raise ConfigError(f"ALIGNED_SCAN_LOG_LEVEL must be one of {LOG_LEVELS}, got {level!r}")
    return level


# ---------------- Main Check ---------------- #
if __name__ == "__main__":
    print(Fore.CYAN + "Resolved settings:")
    seed = get_seed_override()
    print(Fore.LIGHTBLUE_EX + f" - ALIGNED_SCAN_SEED: {seed if seed is not None else '(config seed)'}")
    print(Fore.LIGHTBLUE_EX + f" - ALIGNED_SCAN_THREADS: {get_threads()}")
    print(Fore.LIGHTBLUE_EX + f" - ALIGNED_SCAN_LOG_DIR: {get_log_dir()}")
    print(Fore.LIGHTBLUE_EX + f" - ALIGNED_SCAN_LOG_LEVEL: {get_log_level()}")
    print(Fore.GREEN + "✅ Settings OK")
