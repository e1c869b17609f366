"""Worst-case cyber-physical attack synthesis and time-to-failure assessment."""

__version__ = "0.1.0"
