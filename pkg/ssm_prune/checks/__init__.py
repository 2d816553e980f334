"""Numbered verification suites run in order by ``run_checks``."""
