"""
Utility modules for dialpath.

This package contains utility functions and classes including:
- Logging and output formatting
- Binary array container for checkpoints and visual grids
- JSON/JSONL result writing
"""

from .logger import Logger
from .container import read_container, write_container
from .output_writer import OutputWriter

__all__ = ['Logger', 'OutputWriter', 'read_container', 'write_container']
