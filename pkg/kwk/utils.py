"""
Utility Functions

Common utilities for logging, progress tracking, and formatting
"""

import hashlib
import logging
import os
import sys
from typing import Iterable, Optional

import numpy as np
from tqdm import tqdm
from colorama import Fore, Style, init

# Initialize colorama
init(autoreset=True)


def setup_logging(verbose: bool = False, debug: bool = False):
    """Setup logging configuration"""
    if debug:
        level = logging.DEBUG
    elif verbose:
        level = logging.INFO
    else:
        level = logging.WARNING

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stderr)
        ],
        force=True,
    )


def print_info(message: str):
    """Print info message with formatting"""
    print(f"{Fore.CYAN}[*]{Style.RESET_ALL} {message}", file=sys.stderr)


def print_success(message: str):
    """Print success message with formatting"""
    print(f"{Fore.GREEN}[+]{Style.RESET_ALL} {message}", file=sys.stderr)


def print_error(message: str):
    """Print error message with formatting"""
    print(f"{Fore.RED}[!]{Style.RESET_ALL} {message}", file=sys.stderr)


def print_warning(message: str):
    """Print warning message with formatting"""
    print(f"{Fore.YELLOW}[!] WARNING:{Style.RESET_ALL} {message}", file=sys.stderr)


def format_time(seconds: float) -> str:
    """Format time duration"""
    if seconds < 60:
        return f"{seconds:.2f}s"
    elif seconds < 3600:
        minutes = int(seconds // 60)
        secs = seconds % 60
        return f"{minutes}m {secs:.1f}s"
    else:
        hours = int(seconds // 3600)
        minutes = int((seconds % 3600) // 60)
        secs = seconds % 60
        return f"{hours}h {minutes}m {secs:.1f}s"


def thread_limit(default: Optional[int] = None) -> int:
    """Worker cap for experiment plans, from KWK_THREADS"""
    raw = os.environ.get("KWK_THREADS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            logging.getLogger(__name__).warning("Ignoring non-integer KWK_THREADS=%r", raw)
        else:
            if value >= 1:
                return value
    if default is not None:
        return default
    return max(1, min(4, os.cpu_count() or 1))


def digest_arrays(arrays: Iterable[np.ndarray]) -> str:
    """SHA-256 over the raw little-endian bytes of the given arrays"""
    h = hashlib.sha256()
    for arr in arrays:
        a = np.ascontiguousarray(arr, dtype="<f8")
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def digest_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class ProgressBar:
    """Simple progress bar wrapper"""

    def __init__(self, total: int, description: str = "Processing", unit: str = "steps",
                 enabled: bool = True):
        self.pbar = tqdm(total=total, desc=description, unit=unit, disable=not enabled,
                         file=sys.stderr, leave=False)

    def update(self, n: int = 1):
        """Update progress bar"""
        self.pbar.update(n)

    def close(self):
        """Close progress bar"""
        self.pbar.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
