"""
Configuration modules for dialpath.

This package contains configuration management including:
- Flat key = value configuration file parsing with built-in defaults
- DIALPATH_SEED environment override
- Typed graph, span, model, training and synthetic-corpus records
"""

from .config_manager import DEFAULTS, ConfigManager

__all__ = ['ConfigManager', 'DEFAULTS']
