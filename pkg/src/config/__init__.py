"""
Configuration Package

Environment knobs (settings) and the validated run configuration (run_config).
"""

from src.config.settings import log_level, progress_enabled, slow_tests_enabled, sweep_threads

__all__ = ["log_level", "progress_enabled", "slow_tests_enabled", "sweep_threads"]
