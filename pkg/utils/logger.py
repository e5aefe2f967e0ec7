"""
Logging and output formatting utilities for dialpath.

This module provides the logging used by every component:
- Colored console output with different message types
- Verbose and non-verbose modes
- Run configuration and per-epoch metric reporting
- Progress bar support with tqdm for training and evaluation loops

All messages go to stderr; stdout is reserved for JSON/JSONL results.
"""

import json
import sys
from typing import Dict, Mapping, Optional, TextIO

from tqdm import tqdm


class Colors:
    """ANSI color codes for console output."""
    GREEN = '\033[92m'
    RED = '\033[91m'
    YELLOW = '\033[93m'
    BLUE = '\033[94m'
    CYAN = '\033[96m'
    WHITE = '\033[97m'
    BOLD = '\033[1m'
    END = '\033[0m'


class NoColors:
    """Empty color codes used when coloring is disabled."""
    GREEN = RED = YELLOW = BLUE = CYAN = WHITE = BOLD = END = ''


class Logger:
    """Handles all logging and output formatting for the application."""

    def __init__(self, verbose: bool = False, use_colors: bool = True,
                 stream: Optional[TextIO] = None):
        """
        Initialize the logger.

        Args:
            verbose: Whether to run in verbose mode
            use_colors: Whether to use colored output
            stream: Destination stream (default: stderr)
        """
        self.verbose_mode = verbose
        self.use_colors = use_colors
        self.colors = Colors() if use_colors else NoColors()
        self.stream = stream if stream is not None else sys.stderr
        self.progress_bar = None

    def _write(self, message: str):
        """Write a message, keeping an active progress bar at the bottom."""
        if self.progress_bar is not None:
            self.progress_bar.write(message, file=self.stream)
        else:
            print(message, file=self.stream, flush=True)

    def log_info(self, message: str):
        """Print an informational message in blue."""
        if self.verbose_mode:
            self._write(f"{self.colors.BLUE}[INFO]{self.colors.END} {message}")

    def log_success(self, message: str, important: bool = False):
        """
        Print a success message in green.

        Args:
            message: Text to print
            important: Also print in non-verbose mode
        """
        if self.verbose_mode or important:
            self._write(f"{self.colors.GREEN}[OK]{self.colors.END} {message}")

    def log_warning(self, message: str):
        """Print a warning message in yellow (always shown)."""
        self._write(f"{self.colors.YELLOW}[WARN]{self.colors.END} {message}")

    def log_error(self, message: str):
        """Print an error message in red (always shown)."""
        self._write(f"{self.colors.RED}[ERROR]{self.colors.END} {message}")

    def log_debug(self, message: str):
        """Print a debug message in cyan."""
        if self.verbose_mode:
            self._write(f"{self.colors.CYAN}[DEBUG]{self.colors.END} {message}")

    def log_section(self, message: str):
        """Print a section header."""
        if self.verbose_mode:
            self._write(f"\n{self.colors.BOLD}{self.colors.WHITE}[SECTION]{self.colors.END} {message}")
            self._write("-" * (len(message) + 10))

    def log_config(self, values: Mapping[str, str]):
        """
        Log the full effective configuration of a run.

        Always printed, so that a run can be replayed from its log alone.

        Args:
            values: Flat key/value configuration including the seed
        """
        payload = json.dumps(dict(sorted(values.items())), sort_keys=True)
        self._write(f"{self.colors.BOLD}[CONFIG]{self.colors.END} {payload}")

    def log_metrics(self, label: str, metrics: Dict[str, float]):
        """Print one line of numeric metrics."""
        if not self.verbose_mode:
            return
        parts = " ".join(f"{key}={value:.4f}" for key, value in metrics.items())
        self._write(f"{self.colors.CYAN}[METRIC]{self.colors.END} {label} {parts}")

    def create_progress_bar(self, total: int, description: str = "Processing",
                            unit: str = "step") -> Optional[tqdm]:
        """Create and return a progress bar instance (verbose mode only)."""
        if not self.verbose_mode:
            return None
        self.progress_bar = tqdm(
            total=total,
            desc=description,
            unit=unit,
            bar_format='{desc}: {percentage:3.0f}%|{bar}| {n_fmt}/{total_fmt} [{elapsed}<{remaining}]',
            ncols=80,
            leave=True,
            file=self.stream,
            dynamic_ncols=False,
            position=0,
        )
        return self.progress_bar

    def update_progress(self, description: Optional[str] = None, count: int = 1):
        """Update progress bar with optional description."""
        if self.progress_bar is not None:
            if description:
                self.progress_bar.set_description(description)
            self.progress_bar.update(count)

    def close_progress_bar(self):
        """Close the progress bar if it exists."""
        if self.progress_bar is not None:
            self.progress_bar.close()
            self.progress_bar = None
